//! Modified Bessel functions of the first kind in log space.
//!
//! Everything here works with integer orders, which is all the Skellam pmf
//! needs. Small arguments use the power series directly. Larger arguments use
//! a backward recurrence on the ratio `I_k / I_{k-1}`, normalised through the
//! generating-function identity `I_0(x) + 2 * sum_{k>=1} I_k(x) = e^x`. The
//! recurrence is a contraction in the backward direction, so every ratio comes
//! out with a few ulps of relative error and the normalisation never leaves
//! log space.

use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};

/// Arguments at or below this use the power series.
const SERIES_CUTOFF: f64 = 30.0;

/// Largest order the recurrence will walk through.
const MAX_ORDER: u64 = 100_000_000;

/// Accumulated log-ratio past the highest requested order before the
/// recurrence is seeded. The seed error shrinks like `exp(-2 * margin)`.
const SEED_MARGIN: f64 = 40.0;

/// Which of the two Amos/Ruiz-Antolin bounds to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaKind {
    /// `delta_0`, the lower bound seed.
    Lower,
    /// `delta_2`, the upper bound seed.
    Upper,
}

impl DeltaKind {
    fn alpha(self) -> f64 {
        match self {
            DeltaKind::Lower => 0.0,
            DeltaKind::Upper => 2.0,
        }
    }
}

/// `delta_a(nu, x) = (nu - 1/2)/x + (nu + (a-1)/2) / (2x sqrt((nu + (a-1)/2)^2 + x^2))`
///
/// `arcsinh(delta_0) <= log I_{nu-1}(x) - log I_nu(x) <= arcsinh(delta_2)` for
/// `nu >= 1/2`.
pub fn delta_bound(kind: DeltaKind, order: f64, x: f64) -> Result<f64> {
    if !(order >= 0.5) {
        return Err(invalid("order", format!("must be >= 1/2, got {order}")));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid("x", format!("must be positive and finite, got {x}")));
    }
    Ok(delta_unchecked(kind.alpha(), order, x))
}

#[inline]
fn delta_unchecked(alpha: f64, order: f64, x: f64) -> f64 {
    let shifted = order + 0.5 * (alpha - 1.0);
    (order - 0.5) / x + shifted / (2.0 * x * shifted.hypot(x))
}

fn check_argument(x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(invalid("x", format!("must be finite, got {x}")));
    }
    if x < 0.0 {
        return Err(invalid("x", format!("must be non-negative, got {x}")));
    }
    Ok(())
}

fn check_order(order: u64) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::BesselRange(format!(
            "order {order} above supported maximum {MAX_ORDER}"
        )));
    }
    Ok(())
}

/// `log I_|order|(x)`.
///
/// Returns `-inf` at `x = 0` for non-zero orders.
pub fn log_bessel_i(order: i64, x: f64) -> Result<f64> {
    check_argument(x)?;
    let order = order.unsigned_abs();
    check_order(order)?;
    if x == 0.0 {
        return Ok(if order == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if x <= SERIES_CUTOFF {
        return Ok(log_bessel_series(order, x));
    }
    Ok(x + Sweep::run(order, x, order).log_scaled)
}

/// `log(e^{-x} I_|order|(x))`, which stays O(log x) for large arguments.
pub fn log_bessel_i_scaled(order: i64, x: f64) -> Result<f64> {
    check_argument(x)?;
    let order = order.unsigned_abs();
    check_order(order)?;
    if x == 0.0 {
        return Ok(if order == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if x <= SERIES_CUTOFF {
        return Ok(log_bessel_series(order, x) - x);
    }
    Ok(Sweep::run(order, x, order).log_scaled)
}

/// `log(I_{order-1}(x) / I_order(x))`, always non-negative.
///
/// Negative orders must be folded by the caller through `I_{-v} = I_v`.
pub fn log_bessel_ratio(order: i64, x: f64) -> Result<f64> {
    if order < 1 {
        return Err(invalid("order", format!("must be >= 1, got {order}")));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid("x", format!("must be positive and finite, got {x}")));
    }
    let order = order as u64;
    check_order(order)?;
    let mut recurrence = RatioRecurrence::new(x, start_order(order, x));
    let mut last = 0.0;
    while recurrence.next_order() >= order {
        last = recurrence.step();
    }
    Ok(last)
}

/// Power series `(x/2)^v / v! * sum_m (x^2/4)^m / (m! (m+v)!)` in log space.
fn log_bessel_series(order: u64, x: f64) -> f64 {
    let nu = order as f64;
    let quarter_sq = 0.25 * x * x;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut m = 1.0_f64;
    loop {
        term *= quarter_sq / (m * (m + nu));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        m += 1.0;
    }
    nu * (0.5 * x).ln() - ln_gamma(nu + 1.0) + sum.ln()
}

/// Order at which the backward recurrence is seeded so that the ratios at
/// orders `<= order` are exact to working precision.
fn start_order(order: u64, x: f64) -> u64 {
    let mut n = order.max(1);
    let mut acc = 0.0;
    while acc < SEED_MARGIN {
        n += 1;
        acc += delta_unchecked(0.0, n as f64, x).asinh();
    }
    n
}

/// Backward recurrence on `r_k = I_k / I_{k-1}`:
/// `r_k = 1 / (2k/x + r_{k+1})`.
///
/// While `r` is small it is carried directly; once it passes one half the
/// complement `u = 1 - r` is carried instead so that log-ratios close to zero
/// keep their relative precision.
struct RatioRecurrence {
    x: f64,
    /// Order whose ratio the next `step` produces.
    k: u64,
    ratio: f64,
    complement: f64,
    near_one: bool,
}

impl RatioRecurrence {
    fn new(x: f64, start: u64) -> Self {
        let seed = (-delta_unchecked(2.0, (start + 1) as f64, x).asinh()).exp();
        let near_one = seed > 0.5;
        RatioRecurrence {
            x,
            k: start,
            ratio: seed,
            complement: 1.0 - seed,
            near_one,
        }
    }

    fn next_order(&self) -> u64 {
        self.k
    }

    /// Advances one order down and returns `log(I_{k-1}/I_k)` for the order
    /// just processed.
    fn step(&mut self) -> f64 {
        let two_k_over_x = 2.0 * self.k as f64 / self.x;
        let log_ratio = if self.near_one {
            // 1/r_k = 1 + (2k/x - u_{k+1})
            let excess = two_k_over_x - self.complement;
            self.complement = excess / (1.0 + excess);
            self.ratio = 1.0 - self.complement;
            excess.ln_1p()
        } else {
            let inv = two_k_over_x + self.ratio;
            self.ratio = 1.0 / inv;
            self.complement = 1.0 - self.ratio;
            if self.ratio > 0.5 {
                self.near_one = true;
            }
            inv.ln()
        };
        self.k -= 1;
        log_ratio
    }

    fn ratio(&self) -> f64 {
        self.ratio
    }
}

/// One backward pass from the seed order down to order 1.
struct Sweep {
    log_scaled: f64,
}

impl Sweep {
    /// Returns `log(e^{-x} I_order(x))`; `max_order` only widens the seed.
    fn run(order: u64, x: f64, max_order: u64) -> Sweep {
        let mut rec = RatioRecurrence::new(x, start_order(max_order.max(order), x));
        // tail = sum_{j>=k} prod_{i=k}^{j} r_i, built from the top down.
        let mut tail = 0.0_f64;
        let mut down = Neumaier::default();
        while rec.next_order() >= 1 {
            let k = rec.next_order();
            let q = rec.step();
            tail = rec.ratio() * (1.0 + tail);
            if k <= order {
                down.add(q);
            }
        }
        let log_i0 = -(2.0 * tail).ln_1p();
        Sweep {
            log_scaled: log_i0 - down.sum(),
        }
    }
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `log(e^{-x} I_k(x))` and `log(I_{k-1}(x)/I_k(x))` for every order in
/// `0..=max_order`, from a single backward pass.
#[derive(Clone, Debug)]
pub struct BesselTable {
    x: f64,
    log_scaled: Vec<f64>,
    log_ratio: Vec<f64>,
}

impl BesselTable {
    pub fn new(x: f64, max_order: u64) -> Result<Self> {
        check_argument(x)?;
        check_order(max_order)?;
        let len = max_order as usize + 1;
        if x == 0.0 {
            let mut log_scaled = vec![f64::NEG_INFINITY; len];
            log_scaled[0] = 0.0;
            return Ok(BesselTable {
                x,
                log_scaled,
                log_ratio: vec![f64::INFINITY; len],
            });
        }

        let mut log_ratio = vec![0.0; len];
        let mut rec = RatioRecurrence::new(x, start_order(max_order, x));
        let mut tail = 0.0_f64;
        while rec.next_order() >= 1 {
            let k = rec.next_order() as usize;
            let q = rec.step();
            tail = rec.ratio() * (1.0 + tail);
            if k < len {
                log_ratio[k] = q;
            }
        }

        let mut log_scaled = Vec::with_capacity(len);
        let mut acc = Neumaier::default();
        acc.add(if x <= SERIES_CUTOFF {
            log_bessel_series(0, x) - x
        } else {
            -(2.0 * tail).ln_1p()
        });
        log_scaled.push(acc.sum());
        for q in &log_ratio[1..] {
            acc.add(-q);
            log_scaled.push(acc.sum());
        }
        Ok(BesselTable {
            x,
            log_scaled,
            log_ratio,
        })
    }

    pub fn argument(&self) -> f64 {
        self.x
    }

    pub fn max_order(&self) -> u64 {
        (self.log_scaled.len() - 1) as u64
    }

    /// `log(e^{-x} I_|order|(x))`, or `None` past the table.
    pub fn log_scaled(&self, order: i64) -> Option<f64> {
        self.log_scaled.get(order.unsigned_abs() as usize).copied()
    }

    /// `log I_|order|(x)`.
    pub fn log_value(&self, order: i64) -> Option<f64> {
        self.log_scaled(order).map(|v| v + self.x)
    }

    /// `log(I_{order-1}(x) / I_order(x))` for `order >= 1`.
    pub fn log_ratio(&self, order: u64) -> Option<f64> {
        if order == 0 {
            return None;
        }
        self.log_ratio.get(order as usize).copied()
    }

    /// `log(I_a(x) / I_b(x))` for arbitrary signed orders, built from the
    /// stored consecutive ratios rather than a difference of large logs.
    pub fn log_quotient(&self, a: i64, b: i64) -> Option<f64> {
        let (a, b) = (a.unsigned_abs(), b.unsigned_abs());
        if a.max(b) > self.max_order() {
            return None;
        }
        if self.x == 0.0 {
            return Some(self.log_scaled[a as usize] - self.log_scaled[b as usize]);
        }
        let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let span = (hi - lo) as usize;
        if span > 64 {
            return Some(self.log_scaled[a as usize] - self.log_scaled[b as usize]);
        }
        let sum: f64 = self.log_ratio[lo as usize + 1..=hi as usize].iter().sum();
        Some(sign * sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: power series summed in log space with factorials
    /// accumulated term by term (no gamma function involved).
    fn series_oracle(order: u64, x: f64) -> f64 {
        let nu = order as f64;
        let log_half = (0.5 * x).ln();
        let log_fact_nu: f64 = (1..=order).map(|k| (k as f64).ln()).sum();
        let mut log_terms = Vec::new();
        let mut lt = nu * log_half - log_fact_nu;
        let mut m = 0u64;
        loop {
            log_terms.push(lt);
            m += 1;
            lt += 2.0 * log_half - (m as f64).ln() - ((m + order) as f64).ln();
            let peak = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lt < peak - 45.0 && (m as f64) > 0.5 * x {
                break;
            }
        }
        let peak = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        peak + log_terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln()
    }

    fn assert_log_close(got: f64, want: f64, rel: f64) {
        let tol = rel * want.abs().max(1.0);
        assert!((got - want).abs() <= tol, "got {got}, want {want}, tol {tol}");
    }

    #[test]
    fn trivial_arguments() {
        assert_eq!(log_bessel_i(0, 0.0).unwrap(), 0.0);
        assert_eq!(log_bessel_i(3, 0.0).unwrap(), f64::NEG_INFINITY);
        assert!(log_bessel_i(0, -1.0).is_err());
        assert!(log_bessel_i(0, f64::NAN).is_err());
        assert!(log_bessel_i(0, f64::INFINITY).is_err());
    }

    #[test]
    fn small_argument_values() {
        // log I_0(1); the series oracle gives 0.23591435850717864...
        assert_log_close(log_bessel_i(0, 1.0).unwrap(), 0.235_914_358_507_178_65, 1e-14);
        assert_log_close(series_oracle(0, 1.0), 0.235_914_358_507_178_65, 1e-14);
        assert_eq!(log_bessel_i(-3, 2.0).unwrap(), log_bessel_i(3, 2.0).unwrap());
        assert_log_close(log_bessel_i(3, 2.0).unwrap(), -1.547_684_707_754_703_8, 1e-13);
        assert_log_close(log_bessel_i(5, 0.1).unwrap(), -19.765_736_456_285_266, 1e-13);
    }

    #[test]
    fn reference_values_across_regimes() {
        // Reference values from a 40-digit evaluation.
        let cases: &[(i64, f64, f64)] = &[
            (0, 30.0, 27.384_701_433_171_935_8),
            (10, 30.0, 25.705_719_808_152_329_4),
            (0, 31.0, 28.368_167_462_366_413_5),
            (0, 100.0, 96.779_732_689_943_583_7),
            (50, 100.0, 84.466_243_435_178_782_5),
            (300, 100.0, -233.103_539_512_775_343),
            (0, 1e4, 9_994.475_903_781_432_30),
            (1000, 1e4, 9_944.514_958_153_076_99),
            (15000, 1e4, 100.489_344_478_151_928),
            (0, 1e6, 999_992.173_306_312_813),
            (1, 1e6, 999_992.173_305_812_813),
        ];
        for &(order, x, want) in cases {
            assert_log_close(log_bessel_i(order, x).unwrap(), want, 1e-12);
        }
    }

    #[test]
    fn matches_series_oracle_on_grid() {
        for &x in &[0.5f64, 7.0, 29.0, 30.5, 45.0, 200.0, 1500.0] {
            let max = (x + 50.0 * x.sqrt() + 50.0) as u64;
            let table = BesselTable::new(x, max).unwrap();
            for order in (0..=max).step_by(7) {
                // The oracle accumulates its own rounding over a few thousand
                // terms, so near the zero crossing of log I the comparison is
                // against an absolute floor of 1e-11.
                let want = series_oracle(order, x);
                let tol = 1e-12 * want.abs().max(10.0);
                let got = log_bessel_i(order as i64, x).unwrap();
                assert!((got - want).abs() <= tol, "x={x} order={order}: {got} vs {want}");
                let got = table.log_value(order as i64).unwrap();
                assert!((got - want).abs() <= tol, "x={x} order={order}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn ratio_values() {
        // log(I_0(2)/I_1(2)) from the series oracle.
        let want = series_oracle(0, 2.0) - series_oracle(1, 2.0);
        assert!((want - 0.359_859_067_936_796_54).abs() < 1e-12);
        assert!((log_bessel_ratio(1, 2.0).unwrap() - want).abs() < 1e-14);
        let far = log_bessel_ratio(1, 1e6).unwrap();
        assert!(far > 0.0 && far < 1e-5);
        // continued fraction at 40 digits
        assert!((far - 5.000_002_500_002_291_7e-7).abs() < 1e-18);
        assert!(log_bessel_ratio(0, 1.0).is_err());
        assert!(log_bessel_ratio(1, 0.0).is_err());
    }

    #[test]
    fn ratio_bracket_and_monotonicity() {
        for &x in &[0.5, 1.0, 2.0, 10.0, 100.0, 1e4] {
            let mut prev = 0.0;
            for nu in 1..=64i64 {
                let r = log_bessel_ratio(nu, x).unwrap();
                let lo = delta_bound(DeltaKind::Lower, nu as f64, x).unwrap().asinh();
                let hi = delta_bound(DeltaKind::Upper, nu as f64, x).unwrap().asinh();
                assert!(lo <= r && r <= hi, "nu={nu} x={x}: {lo} <= {r} <= {hi}");
                assert!(r >= prev);
                prev = r;
            }
        }
    }

    #[test]
    fn table_agrees_with_scalar_paths() {
        let table = BesselTable::new(250.0, 600).unwrap();
        for order in [0i64, 1, 17, 250, 599] {
            let scalar = log_bessel_i_scaled(order, 250.0).unwrap();
            assert_log_close(table.log_scaled(order).unwrap(), scalar, 1e-13);
            assert_eq!(table.log_scaled(-order), table.log_scaled(order));
        }
        for order in 1..600u64 {
            let r = log_bessel_ratio(order as i64, 250.0).unwrap();
            assert!((table.log_ratio(order).unwrap() - r).abs() <= 1e-14 * r.max(1e-3));
        }
        assert!((table.log_quotient(3, 5).unwrap()
            - (table.log_scaled(3).unwrap() - table.log_scaled(5).unwrap()))
        .abs()
            < 1e-12);
    }

    #[test]
    fn strictly_decreasing_in_order() {
        for &x in &[0.3f64, 5.0, 64.0, 900.0] {
            let top = x.ceil() as i64 + 50;
            let mut prev = f64::INFINITY;
            for nu in 0..=top {
                let v = log_bessel_i(nu, x).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn delta_bound_values() {
        assert_eq!(delta_bound(DeltaKind::Lower, 0.5, 1.0).unwrap(), 0.0);
        let d2 = delta_bound(DeltaKind::Upper, 1.0, 10.0).unwrap();
        let want = 0.05 + 1.5 / (20.0 * (1.5f64 * 1.5 + 100.0).sqrt());
        assert!((d2 - want).abs() < 1e-16);
        assert!((d2 - 0.057_416_9).abs() < 1e-6);
        assert!(delta_bound(DeltaKind::Upper, 0.4, 1.0).is_err());
        assert!(delta_bound(DeltaKind::Upper, 1.0, 0.0).is_err());
    }

    #[test]
    fn delta_bound_inequalities() {
        for &x in &[0.25, 1.0, 3.0, 10.0, 1e3] {
            for i in 0..200 {
                let nu = 0.5 + 0.37 * i as f64;
                let d0 = delta_bound(DeltaKind::Lower, nu, x).unwrap();
                let d2 = delta_bound(DeltaKind::Upper, nu, x).unwrap();
                let base = (nu - 0.5) / x;
                assert!(d0 >= base);
                let cap = (base * (1.0 + 0.5 / x) + 0.5 / (x * x)).min(base + 0.5 / x);
                assert!(d2 <= cap * (1.0 + 1e-15));
                assert!(d2 - d0 <= 0.5 / x * (1.0 / x).min(1.0) * (1.0 + 1e-15));
            }
        }
    }
}

//! Privacy loss distributions for the scalar Skellam mechanism.
//!
//! Losses are placed on a uniform grid and always rounded up, so every
//! `delta(eps)` read off a discretised distribution bounds the true value from
//! above. Mass that is cut from the upper tail goes to the `+inf` atom; mass
//! cut from the lower tail is moved up onto the lowest retained grid point.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::function::erf::erfc;

use crate::bessel::BesselTable;
use crate::error::{invalid, Error, Result};
use crate::skellam::window_radius;

/// Discretisation and resource limits for PLD construction and composition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PldConfig {
    /// Spacing of the privacy-loss grid.
    pub grid_spacing: f64,
    /// Per-round probability mass allowed outside the enumerated window.
    pub tail_mass: f64,
    /// Tail mass dropped on each side after every convolution.
    pub truncation_mass: f64,
    /// Largest FFT length, in grid points.
    pub max_transform_len: usize,
}

impl Default for PldConfig {
    fn default() -> Self {
        PldConfig {
            grid_spacing: 1e-4,
            tail_mass: 1e-12,
            truncation_mass: 1e-15,
            max_transform_len: 1 << 30,
        }
    }
}

impl PldConfig {
    fn validate(&self) -> Result<()> {
        if !(self.grid_spacing > 0.0) || !self.grid_spacing.is_finite() {
            return Err(invalid("grid_spacing", "must be positive and finite"));
        }
        if !(self.tail_mass > 0.0 && self.tail_mass <= 1e-6) {
            return Err(invalid("tail_mass", "must lie in (0, 1e-6]"));
        }
        if !(self.truncation_mass >= 0.0 && self.truncation_mass < 1e-6) {
            return Err(invalid("truncation_mass", "must lie in [0, 1e-6)"));
        }
        Ok(())
    }
}

/// Distribution of the privacy loss on a uniform grid, plus an atom at `+inf`.
///
/// `masses[i]` sits at loss `(i - origin_index) * grid_spacing`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyLossDistribution {
    grid_spacing: f64,
    origin_index: i64,
    masses: Vec<f64>,
    infinite_mass: f64,
}

impl PrivacyLossDistribution {
    /// Builds a distribution from grid indices and masses. Non-positive
    /// spacing, negative masses or a total outside `1 +- 1e-9` are rejected.
    pub fn from_grid(
        grid_spacing: f64,
        origin_index: i64,
        masses: Vec<f64>,
        infinite_mass: f64,
    ) -> Result<Self> {
        if !(grid_spacing > 0.0) {
            return Err(invalid("grid_spacing", "must be positive"));
        }
        if masses.is_empty() && infinite_mass < 1.0 {
            return Err(invalid("masses", "empty grid with finite mass missing"));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) || !(0.0..=1.0).contains(&infinite_mass) {
            return Err(invalid("masses", "must be non-negative"));
        }
        let total = masses.iter().sum::<f64>() + infinite_mass;
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("masses", format!("total mass {total} is not 1")));
        }
        Ok(PrivacyLossDistribution {
            grid_spacing,
            origin_index,
            masses,
            infinite_mass,
        })
    }

    /// All mass at zero loss.
    pub fn identity(grid_spacing: f64) -> Self {
        PrivacyLossDistribution {
            grid_spacing,
            origin_index: 0,
            masses: vec![1.0],
            infinite_mass: 0.0,
        }
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn origin_index(&self) -> i64 {
        self.origin_index
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn infinite_mass(&self) -> f64 {
        self.infinite_mass
    }

    pub fn loss_at(&self, i: usize) -> f64 {
        (i as i64 - self.origin_index) as f64 * self.grid_spacing
    }

    /// `(loss, mass)` pairs of the finite part.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.masses.iter().enumerate().map(|(i, &m)| (self.loss_at(i), m))
    }

    pub fn finite_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mean of the finite part, conditioned on the loss being finite.
    pub fn mean(&self) -> f64 {
        self.points().map(|(z, m)| z * m).sum::<f64>() / self.finite_mass()
    }

    /// Variance of the finite part, conditioned on the loss being finite.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.points().map(|(z, m)| (z - mean).powi(2) * m).sum::<f64>() / self.finite_mass()
    }
}

/// PLD of `Sk(shift, mu)` against `Sk(0, mu)`.
///
/// The outcome `X` is drawn from the shifted distribution, with mass
/// `e^{-mu} I_{X-shift}(mu)` at loss `log I_{X-shift}(mu) - log I_X(mu)`.
/// The window around `shift` is the narrowest symmetric one that leaves at
/// most `config.tail_mass` outside; that remainder goes to `+inf`.
pub fn skellam_pld(shift: u64, mu: f64, config: &PldConfig) -> Result<PrivacyLossDistribution> {
    config.validate()?;
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(invalid("mu", format!("must be positive and finite, got {mu}")));
    }
    let h = config.grid_spacing;
    if shift == 0 {
        return Ok(PrivacyLossDistribution::identity(h));
    }
    let shift = shift as i64;
    let full = window_radius(mu);
    let table = BesselTable::new(mu, (full + shift) as u64)?;
    let mass_at = |offset: i64| table.log_scaled(offset).unwrap().exp();

    // Shrink the window from the outside while the discarded tails stay
    // within budget.
    let mut radius = full;
    let mut dropped = 0.0;
    while radius > 0 {
        let edge = 2.0 * mass_at(radius);
        if dropped + edge > config.tail_mass {
            break;
        }
        dropped += edge;
        radius -= 1;
    }

    let mut indexed = Vec::with_capacity(2 * radius as usize + 1);
    for offset in -radius..=radius {
        let x = shift + offset;
        let loss = table.log_quotient(x - shift, x).unwrap();
        let index = (loss / h).ceil() as i64;
        indexed.push((index, mass_at(offset)));
    }
    let lowest = indexed.iter().map(|p| p.0).min().unwrap();
    let highest = indexed.iter().map(|p| p.0).max().unwrap();
    let mut masses = vec![0.0; (highest - lowest + 1) as usize];
    for (index, mass) in indexed {
        masses[(index - lowest) as usize] += mass;
    }
    let total: f64 = masses.iter().sum();
    // The enumerated window plus the dropped tails sums to one up to the
    // rounding in the Bessel sweep; whatever is left over is assigned to +inf.
    let infinite_mass = (1.0 - total).max(dropped);
    Ok(PrivacyLossDistribution {
        grid_spacing: h,
        origin_index: -lowest,
        masses,
        infinite_mass,
    })
}

/// `rounds`-fold self-composition by FFT convolution, using binary
/// exponentiation so that the grid only ever spans the retained support.
pub fn pld_compose(
    pld: &PrivacyLossDistribution,
    rounds: u64,
    config: &PldConfig,
) -> Result<PrivacyLossDistribution> {
    if rounds == 0 {
        return Err(invalid("rounds", "must be at least 1"));
    }
    let mut result: Option<PrivacyLossDistribution> = None;
    let mut power = pld.clone();
    let mut remaining = rounds;
    let mut planner = FftPlanner::new();
    loop {
        if remaining & 1 == 1 {
            result = Some(match result {
                None => power.clone(),
                Some(acc) => convolve_pld(&acc, &power, config, &mut planner)?,
            });
        }
        remaining >>= 1;
        if remaining == 0 {
            break;
        }
        power = convolve_pld(&power, &power, config, &mut planner)?;
    }
    Ok(result.unwrap())
}

/// Composition of two (possibly different) distributions on the same grid.
pub fn pld_convolve(
    a: &PrivacyLossDistribution,
    b: &PrivacyLossDistribution,
    config: &PldConfig,
) -> Result<PrivacyLossDistribution> {
    convolve_pld(a, b, config, &mut FftPlanner::new())
}

fn convolve_pld(
    a: &PrivacyLossDistribution,
    b: &PrivacyLossDistribution,
    config: &PldConfig,
    planner: &mut FftPlanner<f64>,
) -> Result<PrivacyLossDistribution> {
    if (a.grid_spacing - b.grid_spacing).abs() > 1e-15 * a.grid_spacing {
        return Err(invalid("grid_spacing", "composed distributions use different grids"));
    }
    let mut masses = convolve(&a.masses, &b.masses, config.max_transform_len, planner)?;
    let mut origin_index = a.origin_index + b.origin_index;
    let mut infinite_mass = a.infinite_mass + b.infinite_mass - a.infinite_mass * b.infinite_mass;

    // Upper tail to +inf.
    let mut upper = 0.0;
    while masses.len() > 1 {
        let last = *masses.last().unwrap();
        if upper + last >= config.truncation_mass {
            break;
        }
        upper += last;
        masses.pop();
    }
    infinite_mass += upper;

    // Lower tail folded up onto the first retained point.
    let mut lower = 0.0;
    let mut cut = 0;
    while cut + 1 < masses.len() && lower + masses[cut] < config.truncation_mass {
        lower += masses[cut];
        cut += 1;
    }
    if cut > 0 {
        masses.drain(..cut);
        masses[0] += lower;
        origin_index -= cut as i64;
    }

    Ok(PrivacyLossDistribution {
        grid_spacing: a.grid_spacing,
        origin_index,
        masses,
        infinite_mass: infinite_mass.min(1.0),
    })
}

fn convolve(
    a: &[f64],
    b: &[f64],
    cap: usize,
    planner: &mut FftPlanner<f64>,
) -> Result<Vec<f64>> {
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return Ok(out);
    }
    let len = out_len.next_power_of_two();
    if len > cap {
        return Err(Error::TransformTooLarge { len, cap });
    }
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut fa: Vec<Complex<f64>> = a.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fa.resize(len, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fb.resize(len, Complex::new(0.0, 0.0));
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inverse.process(&mut fa);
    let norm = 1.0 / len as f64;
    Ok(fa[..out_len].iter().map(|c| (c.re * norm).max(0.0)).collect())
}

/// `delta(eps) = P(Z = inf) + E[(1 - e^{eps - Z})_+]`.
pub fn pld_delta(pld: &PrivacyLossDistribution, epsilon: f64) -> f64 {
    let finite: f64 = pld
        .points()
        .filter(|(z, _)| *z > epsilon)
        .map(|(z, m)| -m * (epsilon - z).exp_m1())
        .sum();
    (pld.infinite_mass + finite).clamp(0.0, 1.0)
}

/// Smallest non-negative `eps` with `pld_delta(pld, eps) <= delta`, resolved
/// to 1e-4 relative; the returned value always satisfies the target.
pub fn pld_epsilon(pld: &PrivacyLossDistribution, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if pld.infinite_mass >= delta {
        return Err(Error::NoFiniteEpsilon {
            infinite_mass: pld.infinite_mass,
            delta,
        });
    }
    if pld_delta(pld, 0.0) <= delta {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    // Above the largest finite loss only the +inf atom remains.
    let mut hi = pld.loss_at(pld.masses.len() - 1).max(pld.grid_spacing);
    while hi - lo > 1e-4 * hi && hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if pld_delta(pld, mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Tight `delta(eps)` of the Gaussian mechanism with noise `sigma`:
/// `Phi(D/(2s) - eps s/D) - e^eps Phi(-D/(2s) - eps s/D)`.
pub fn analytic_gaussian_delta(epsilon: f64, l2_sensitivity: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if !(l2_sensitivity > 0.0) {
        return Err(invalid("l2_sensitivity", "must be positive"));
    }
    let a = l2_sensitivity / (2.0 * sigma);
    let b = epsilon * sigma / l2_sensitivity;
    let head = normal_cdf(a - b);
    let tail = (epsilon + normal_cdf(-a - b).ln()).exp();
    Ok((head - tail).clamp(0.0, 1.0))
}

/// Smallest `sigma` whose analytic-Gaussian `delta(eps)` is at most `delta`,
/// with the achieved delta within 1e-4 relative of the target.
pub fn calibrate_gaussian_sigma(epsilon: f64, delta: f64, l2_sensitivity: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(invalid("epsilon", "must be non-negative"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let at = |s: f64| analytic_gaussian_delta(epsilon, l2_sensitivity, s);
    let (mut lo, mut hi) = (1e-12 * l2_sensitivity, l2_sensitivity);
    while at(hi)? > delta {
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 * l2_sensitivity {
            return Err(Error::Unachievable(format!("no sigma reaches delta {delta}")));
        }
    }
    if at(lo)? <= delta {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if at(mid)? <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
        let achieved = at(hi)?;
        if (delta - achieved) <= 1e-4 * delta && hi / lo < 1.0 + 1e-12 + 1e-4 {
            break;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdp::{default_orders, rdp_to_dp, Mechanism, MechanismSpec, RdpCurve};
    use crate::skellam::{skellam_log_pmf, SkellamParams};

    /// `sum_x max(0, P1(x) - e^eps P0(x))` straight from the pmfs.
    fn hockey_stick_oracle(shift: i64, mu: f64, eps: f64, radius: i64) -> f64 {
        let p0 = SkellamParams::new(0, mu).unwrap();
        let p1 = SkellamParams::new(shift, mu).unwrap();
        (-radius..=radius + shift)
            .map(|x| {
                let a = skellam_log_pmf(x, &p1).unwrap().exp();
                let b = skellam_log_pmf(x, &p0).unwrap().exp();
                (a - eps.exp() * b).max(0.0)
            })
            .sum()
    }

    fn coarse() -> PldConfig {
        PldConfig {
            grid_spacing: 1e-3,
            ..PldConfig::default()
        }
    }

    #[test]
    fn construction_is_normalised() {
        for &(shift, mu) in &[(1u64, 1.0), (2, 25.0), (1, 1e4), (5, 300.0)] {
            let pld = skellam_pld(shift, mu, &PldConfig::default()).unwrap();
            let total = pld.finite_mass() + pld.infinite_mass();
            assert!((total - 1.0).abs() <= 1e-12, "{total}");
            assert!(pld.infinite_mass() <= 1e-12 + 1e-15);
            assert!(pld.masses().iter().all(|&m| m >= 0.0));
        }
    }

    #[test]
    fn degenerate_shift_is_identity() {
        let pld = skellam_pld(0, 3.0, &PldConfig::default()).unwrap();
        assert_eq!(pld_delta(&pld, 0.0), 0.0);
        assert_eq!(pld_epsilon(&pld, 1e-9).unwrap(), 0.0);
        assert!((pld_delta(&pld, -std::f64::consts::LN_2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mass_concentrates_at_large_mu() {
        let pld = skellam_pld(1, 1e4, &PldConfig::default()).unwrap();
        let near: f64 = pld.points().filter(|(z, _)| z.abs() <= 0.04).map(|(_, m)| m).sum();
        assert!(near >= 0.99, "{near}");
    }

    #[test]
    fn mean_is_a_kl_divergence_below_the_ceiling() {
        for &(shift, mu) in &[(1u64, 2.0), (1, 50.0), (3, 40.0)] {
            let pld = skellam_pld(shift, mu, &PldConfig { grid_spacing: 1e-6, ..PldConfig::default() }).unwrap();
            let d = shift as f64;
            let ceiling = d * d / (2.0 * mu) + ((d * d + 6.0 * d) / (4.0 * mu * mu)).min(3.0 * d / (2.0 * mu));
            let mean = pld.mean();
            assert!(mean >= 0.0 && mean <= ceiling, "mean {mean} ceiling {ceiling}");
        }
    }

    #[test]
    fn delta_matches_brute_force_and_is_pessimistic() {
        let pld = skellam_pld(1, 1.0, &PldConfig { grid_spacing: 1e-8, ..PldConfig::default() }).unwrap();
        let want = hockey_stick_oracle(1, 1.0, 1.0, 60);
        let got = pld_delta(&pld, 1.0);
        assert!((got - want).abs() < 1e-9 && got >= want, "{got} vs {want}");

        for &(shift, mu) in &[(1i64, 3.0), (2, 20.0), (1, 100.0)] {
            let pld = skellam_pld(shift as u64, mu, &coarse()).unwrap();
            for &eps in &[0.0, 0.05, 0.3, 1.0] {
                let exact = hockey_stick_oracle(shift, mu, eps, 400);
                assert!(pld_delta(&pld, eps) >= exact - 1e-15);
            }
        }
    }

    #[test]
    fn delta_is_monotone_and_bounded() {
        let pld = skellam_pld(2, 7.0, &coarse()).unwrap();
        let mut prev = 1.0;
        for i in -50..200 {
            let d = pld_delta(&pld, i as f64 * 0.02);
            assert!((0.0..=1.0).contains(&d) && d <= prev);
            prev = d;
        }
    }

    fn direct_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                out[i + j] += a[i] * b[j];
            }
        }
        out
    }

    #[test]
    fn two_fold_matches_direct_convolution() {
        let pld = skellam_pld(1, 25.0, &coarse()).unwrap();
        let config = PldConfig { truncation_mass: 0.0, ..coarse() };
        let two = pld_compose(&pld, 2, &config).unwrap();
        let want = direct_convolution(pld.masses(), pld.masses());
        assert_eq!(two.masses().len(), want.len());
        assert_eq!(two.origin_index(), 2 * pld.origin_index());
        for (g, w) in two.masses().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
        let once = pld_compose(&pld, 1, &config).unwrap();
        assert_eq!(once, pld);
    }

    #[test]
    fn composition_adds_means_and_variances() {
        let pld = skellam_pld(1, 10.0, &coarse()).unwrap();
        for &t in &[3u64, 17, 64] {
            let composed = pld_compose(&pld, t, &coarse()).unwrap();
            let tf = t as f64;
            assert!((composed.mean() - tf * pld.mean()).abs() <= 1e-9 * tf * pld.mean());
            assert!((composed.variance() - tf * pld.variance()).abs() <= 1e-9 * tf * pld.variance());
            let total = composed.finite_mass() + composed.infinite_mass();
            assert!((total - 1.0).abs() <= 1e-12);
            let expect_inf = 1.0 - (1.0 - pld.infinite_mass()).powi(t as i32);
            assert!(composed.infinite_mass() >= expect_inf * (1.0 - 1e-9));
        }
    }

    #[test]
    fn transform_cap_is_enforced() {
        let pld = skellam_pld(1, 25.0, &coarse()).unwrap();
        let config = PldConfig { max_transform_len: 1 << 10, ..coarse() };
        assert!(matches!(
            pld_compose(&pld, 4, &config),
            Err(Error::TransformTooLarge { .. })
        ));
    }

    #[test]
    fn epsilon_inverse_query() {
        let pld = skellam_pld(1, 9.0, &coarse()).unwrap();
        let composed = pld_compose(&pld, 10, &coarse()).unwrap();
        for &delta in &[1e-2, 1e-4, 1e-6] {
            let eps = pld_epsilon(&composed, delta).unwrap();
            assert!(pld_delta(&composed, eps) <= delta);
            assert!(pld_delta(&composed, eps * (1.0 - 2e-4)) > delta);
        }
        let heavy = PrivacyLossDistribution::from_grid(0.1, 0, vec![0.5], 0.5).unwrap();
        assert!(matches!(
            pld_epsilon(&heavy, 0.1),
            Err(Error::NoFiniteEpsilon { .. })
        ));
    }

    #[test]
    fn pld_is_below_rdp_conversion() {
        let pld = skellam_pld(1, 100.0, &PldConfig::default()).unwrap();
        let composed = pld_compose(&pld, 100, &PldConfig::default()).unwrap();
        let eps_pld = pld_epsilon(&composed, 1e-6).unwrap();
        let spec = MechanismSpec::scalar(1.0, 100.0).unwrap();
        let curve = RdpCurve::for_mechanism(Mechanism::Skellam, &spec, &default_orders())
            .unwrap()
            .repeated(100);
        let eps_rdp = rdp_to_dp(&curve, 1e-6).unwrap().epsilon;
        assert!(eps_pld <= eps_rdp, "{eps_pld} > {eps_rdp}");
    }

    #[test]
    fn analytic_gaussian_values() {
        let d = analytic_gaussian_delta(1.0, 1.0, 1.0).unwrap();
        // Phi(-0.5) - e Phi(-1.5) = 0.30853753872598688 - e * 0.066807201268858057
        let want = 0.308_537_538_725_986_88 - std::f64::consts::E * 0.066_807_201_268_858_057;
        assert!((d - want).abs() < 1e-10 && (d - 0.126_936).abs() < 2e-6, "{d} vs {want}");
        let tv = analytic_gaussian_delta(0.0, 1.0, 2.0).unwrap();
        assert!((tv - (normal_cdf(0.25) - normal_cdf(-0.25))).abs() < 1e-15);
        assert!(analytic_gaussian_delta(0.5, 1.0, 1e6).unwrap() < 1e-9);
        let mut prev = 1.0;
        for i in 0..60 {
            let v = analytic_gaussian_delta(i as f64 * 0.25, 1.0, 0.8).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn gaussian_calibration_residual() {
        for &(eps, delta) in &[(1.0, 1e-5), (3.0, 1e-4), (10.0, 1e-4), (0.1, 1e-6)] {
            let sigma = calibrate_gaussian_sigma(eps, delta, 10.0).unwrap();
            let achieved = analytic_gaussian_delta(eps, 10.0, sigma).unwrap();
            assert!(achieved <= delta && achieved >= delta * (1.0 - 1e-3), "{eps}: {achieved}");
        }
    }
}

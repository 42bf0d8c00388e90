//! The symmetric Skellam distribution `Sk(shift, mu)`: pmf, sampling and the
//! exact Rényi divergence between shifted copies.

use rand::Rng;

use crate::bessel::{log_bessel_i_scaled, BesselTable};
use crate::error::{invalid, Error, Result};
use crate::poisson::Poisson;

/// Largest half-width the divergence window may grow to.
const MAX_WINDOW: i64 = 50_000_000;

/// Location and variance of a Skellam distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkellamParams {
    pub shift: i64,
    pub variance: f64,
}

impl SkellamParams {
    pub fn new(shift: i64, variance: f64) -> Result<Self> {
        if !variance.is_finite() || !(variance > 0.0) {
            return Err(invalid(
                "variance",
                format!("must be positive and finite, got {variance}"),
            ));
        }
        Ok(SkellamParams { shift, variance })
    }
}

/// Half-width `ceil(mu + 20 sqrt(mu) + 20)` that holds all but a negligible
/// fraction of `Sk(0, mu)`.
pub fn window_radius(mu: f64) -> i64 {
    (mu + 20.0 * mu.sqrt() + 20.0).ceil() as i64
}

/// `log P(X = k) = -mu + log I_{k - shift}(mu)`.
pub fn skellam_log_pmf(k: i64, params: &SkellamParams) -> Result<f64> {
    let offset = k
        .checked_sub(params.shift)
        .ok_or(Error::Overflow("offsetting Skellam support"))?;
    log_bessel_i_scaled(offset, params.variance)
}

/// Log pmf over a window `|k - shift| <= radius`, sharing one Bessel sweep.
#[derive(Clone, Debug)]
pub struct SkellamPmf {
    params: SkellamParams,
    table: BesselTable,
}

impl SkellamPmf {
    pub fn new(params: SkellamParams, radius: u64) -> Result<Self> {
        let table = BesselTable::new(params.variance, radius)?;
        Ok(SkellamPmf { params, table })
    }

    pub fn params(&self) -> SkellamParams {
        self.params
    }

    pub fn radius(&self) -> i64 {
        self.table.max_order() as i64
    }

    /// `None` outside the window.
    pub fn log_pmf(&self, k: i64) -> Option<f64> {
        self.table.log_scaled(k - self.params.shift)
    }

    pub fn bessel(&self) -> &BesselTable {
        &self.table
    }
}

/// `count` independent draws from `Sk(0, variance)`, each the difference of
/// two Poisson(variance / 2) variates.
pub fn sample_skellam<R: Rng + ?Sized>(
    variance: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<i64>> {
    if !variance.is_finite() || !(variance > 0.0) {
        return Err(invalid(
            "variance",
            format!("must be positive and finite, got {variance}"),
        ));
    }
    let poisson = Poisson::new(0.5 * variance)?;
    (0..count)
        .map(|_| {
            let a = i64::try_from(poisson.sample(rng)).map_err(|_| Error::Overflow("sampling"))?;
            let b = i64::try_from(poisson.sample(rng)).map_err(|_| Error::Overflow("sampling"))?;
            a.checked_sub(b).ok_or(Error::Overflow("differencing Poisson draws"))
        })
        .collect()
}

/// Numeric `D_alpha(Sk(shift, mu) || Sk(0, mu))` by direct summation.
///
/// The window starts at `[-R, alpha * shift + R]` with `R = window_radius(mu)`
/// and doubles until both edge terms are below `e^-40` of the total and
/// decreasing outward, which leaves an unsummed remainder far below 1e-14.
pub fn renyi_divergence_exact(alpha: u32, shift: i64, variance: f64) -> Result<f64> {
    if alpha < 2 {
        return Err(invalid("alpha", format!("must be an integer >= 2, got {alpha}")));
    }
    if shift < 0 {
        return Err(invalid("shift", format!("must be non-negative, got {shift}")));
    }
    SkellamParams::new(0, variance)?;
    if shift == 0 {
        return Ok(0.0);
    }

    let a = alpha as f64;
    let tilt = (alpha as i64)
        .checked_mul(shift)
        .ok_or(Error::Overflow("alpha * shift"))?;
    let mut radius = window_radius(variance);
    loop {
        if radius > MAX_WINDOW {
            return Err(Error::BesselRange(format!(
                "divergence window exceeded {MAX_WINDOW} at alpha={alpha}, shift={shift}, mu={variance}"
            )));
        }
        let lo = -radius;
        let hi = tilt + radius;
        let max_order = (hi - lo) as u64;
        let table = BesselTable::new(variance, max_order)?;
        let log_term = |x: i64| -> f64 {
            let lp = table.log_scaled(x - shift).unwrap();
            lp + (a - 1.0) * table.log_quotient(x - shift, x).unwrap()
        };
        let terms: Vec<f64> = (lo..=hi).map(log_term).collect();
        let total = log_sum_exp(&terms);
        let n = terms.len();
        let settled = terms[0] < total - 40.0
            && terms[n - 1] < total - 40.0
            && terms[0] < terms[1]
            && terms[n - 1] < terms[n - 2];
        if settled {
            return Ok((total / (a - 1.0)).max(0.0));
        }
        radius *= 2;
    }
}

/// `Phi_{X,alpha,shift}(mu) = log( I_{X-s}/I_{X-alpha s} * (I_{X-s}/I_X)^(alpha-1) )`.
pub fn phi(x: i64, alpha: u32, shift: i64, variance: f64) -> Result<f64> {
    if alpha < 2 {
        return Err(invalid("alpha", format!("must be an integer >= 2, got {alpha}")));
    }
    SkellamParams::new(0, variance)?;
    let far = (alpha as i64)
        .checked_mul(shift)
        .and_then(|t| x.checked_sub(t))
        .ok_or(Error::Overflow("X - alpha * shift"))?;
    let near = x.checked_sub(shift).ok_or(Error::Overflow("X - shift"))?;
    let max_order = [far, near, x].iter().map(|v| v.unsigned_abs()).max().unwrap();
    let table = BesselTable::new(variance, max_order)?;
    let first = table.log_quotient(near, far).unwrap();
    let second = table.log_quotient(near, x).unwrap();
    Ok(first + (alpha as f64 - 1.0) * second)
}

/// Ceiling on `Phi`:
/// `a(a-1)s^2/(2mu) + min((2a-1)(a-1)s^2/(4mu^2) + 3(a-1)|s|/(2mu^2), 3(a-1)|s|/(2mu))`.
pub fn phi_ceiling(alpha: u32, shift: i64, variance: f64) -> f64 {
    let a = alpha as f64;
    let s = shift as f64;
    let mu = variance;
    a * (a - 1.0) * s * s / (2.0 * mu)
        + ((2.0 * a - 1.0) * (a - 1.0) * s * s / (4.0 * mu * mu)
            + 3.0 * (a - 1.0) * s.abs() / (2.0 * mu * mu))
            .min(3.0 * (a - 1.0) * s.abs() / (2.0 * mu))
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return peak;
    }
    peak + values.iter().map(|v| (v - peak).exp()).sum::<f64>().ln()
}

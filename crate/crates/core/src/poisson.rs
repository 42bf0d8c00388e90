//! Exact Poisson variates.
//!
//! Small rates use inversion by sequential search. Rates of 10 and above use
//! Hörmann's transformed rejection with squeeze (PTRS), with the acceptance
//! test evaluated through Loader's saddle-point form of the log pmf so that it
//! stays accurate for rates up to 1e13.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};

/// Largest supported rate.
pub const MAX_RATE: f64 = 1e13;

const INVERSION_CUTOFF: f64 = 10.0;

/// Draws one Poisson(`rate`) variate.
pub fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64> {
    Poisson::new(rate).map(|p| p.sample(rng))
}

/// A validated Poisson sampler with its per-rate constants precomputed.
#[derive(Clone, Copy, Debug)]
pub struct Poisson {
    rate: f64,
    method: Method,
}

#[derive(Clone, Copy, Debug)]
enum Method {
    Inversion { p0: f64 },
    Ptrs(Ptrs),
}

#[derive(Clone, Copy, Debug)]
struct Ptrs {
    b: f64,
    a: f64,
    log_inv_alpha: f64,
    vr: f64,
}

impl Poisson {
    pub fn new(rate: f64) -> Result<Self> {
        if !rate.is_finite() || !(rate > 0.0) {
            return Err(invalid("rate", format!("must be positive and finite, got {rate}")));
        }
        if rate > MAX_RATE {
            return Err(Error::RateTooLarge(rate));
        }
        let method = if rate < INVERSION_CUTOFF {
            Method::Inversion { p0: (-rate).exp() }
        } else {
            let b = 0.931 + 2.53 * rate.sqrt();
            let a = -0.059 + 0.024_83 * b;
            let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
            let vr = 0.9277 - 3.6224 / (b - 2.0);
            Method::Ptrs(Ptrs {
                b,
                a,
                log_inv_alpha: inv_alpha.ln(),
                vr,
            })
        };
        Ok(Poisson { rate, method })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.method {
            Method::Inversion { p0 } => self.sample_inversion(p0, rng),
            Method::Ptrs(ref c) => self.sample_ptrs(c, rng),
        }
    }

    fn sample_inversion<R: Rng + ?Sized>(&self, p0: f64, rng: &mut R) -> u64 {
        'restart: loop {
            let u: f64 = rng.random();
            let mut k = 0u64;
            let mut p = p0;
            let mut cdf = p0;
            while u > cdf {
                k += 1;
                p *= self.rate / k as f64;
                cdf += p;
                // The cdf saturated below u through rounding; draw again.
                if p == 0.0 {
                    continue 'restart;
                }
            }
            return k;
        }
    }

    fn sample_ptrs<R: Rng + ?Sized>(&self, c: &Ptrs, rng: &mut R) -> u64 {
        loop {
            let u = rng.random::<f64>() - 0.5;
            let v: f64 = rng.random();
            let us = 0.5 - u.abs();
            let k = ((2.0 * c.a / us + c.b) * u + self.rate + 0.43).floor();
            if us >= 0.07 && v <= c.vr {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = v.ln() + c.log_inv_alpha - (c.a / (us * us) + c.b).ln();
            if lhs <= log_poisson_pmf(k as u64, self.rate) {
                return k as u64;
            }
        }
    }
}

/// `log P(K = k)` for `K ~ Poisson(rate)`, via `-stirlerr(k) - bd0(k, rate) -
/// log(2 pi k)/2`, which avoids the cancellation in `k log(rate) - rate - log k!`.
pub fn log_poisson_pmf(k: u64, rate: f64) -> f64 {
    if k == 0 {
        return -rate;
    }
    let x = k as f64;
    -stirling_error(x) - deviance_term(x, rate) - 0.5 * (2.0 * std::f64::consts::PI * x).ln()
}

/// `log(x!) - [(x + 1/2) log x - x + log sqrt(2 pi)]`.
fn stirling_error(x: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if x <= 15.0 {
        let half_log_two_pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        return ln_gamma(x + 1.0) - (x + 0.5) * x.ln() + x - half_log_two_pi;
    }
    let xx = x * x;
    if x > 500.0 {
        (S0 - S1 / xx) / x
    } else if x > 80.0 {
        (S0 - (S1 - S2 / xx) / xx) / x
    } else if x > 35.0 {
        (S0 - (S1 - (S2 - S3 / xx) / xx) / xx) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / xx) / xx) / xx) / xx) / x
    }
}

/// `x log(x/m) + m - x`, by series when `x` is close to `m`.
fn deviance_term(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                return next;
            }
            s = next;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

//! Real-to-integer encoding: clipping, randomized Hadamard rotation and
//! conditional stochastic rounding.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::{derive_rng, Domain};

/// Default rounding bias `beta = e^{-1/2}`.
pub const DEFAULT_ROUNDING_BIAS: f64 = 0.606_530_659_712_633_4;

/// Default cap on conditional-rounding attempts.
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

// Largest magnitude that is rounded; beyond this neighbouring floats are
// already integers and sums of a few thousand of them could overflow i64.
const ROUNDING_LIMIT: f64 = 4.0e18;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizerConfig {
    pub clip_norm: f64,
    pub scale: f64,
    pub rounding_bias: f64,
    pub padded_dim: usize,
    pub sign_seed: u64,
    pub max_attempts: usize,
}

impl QuantizerConfig {
    pub fn new(clip_norm: f64, scale: f64, padded_dim: usize, sign_seed: u64) -> Result<Self> {
        let config = QuantizerConfig {
            clip_norm,
            scale,
            rounding_bias: DEFAULT_ROUNDING_BIAS,
            padded_dim,
            sign_seed,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_rounding_bias(mut self, beta: f64) -> Result<Self> {
        self.rounding_bias = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) || !self.clip_norm.is_finite() {
            return Err(invalid("clip_norm", "must be positive and finite"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(invalid("scale", "must be positive and finite"));
        }
        if !(self.rounding_bias > 0.0 && self.rounding_bias < 1.0) {
            return Err(invalid("rounding_bias", "must lie in (0, 1)"));
        }
        if !self.padded_dim.is_power_of_two() {
            return Err(invalid("padded_dim", "must be a power of two"));
        }
        if self.max_attempts == 0 {
            return Err(invalid("max_attempts", "must be at least 1"));
        }
        Ok(())
    }

    /// Squared-norm ceiling accepted by [`conditional_round`].
    pub fn norm_bound(&self) -> f64 {
        rounded_norm_bound(self.scale * self.clip_norm, self.padded_dim, self.rounding_bias)
    }
}

/// Output of [`conditional_round`].
#[derive(Clone, Debug, PartialEq)]
pub struct RoundedVector {
    pub values: Vec<i64>,
    pub norm_bound: f64,
    pub attempts: usize,
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scales `x` down to norm `c` if it is longer.
pub fn clip_l2(x: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return Err(invalid("clip_norm", "must be positive"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("x", "entries must be finite"));
    }
    let norm = l2_norm(x);
    if norm <= c {
        return Ok(x.to_vec());
    }
    let factor = c / norm;
    Ok(x.iter().map(|v| v * factor).collect())
}

/// Smallest power of two that is at least `dim`.
pub fn padded_dim(dim: usize) -> usize {
    dim.max(1).next_power_of_two()
}

/// Copy of `x` extended with zeros to length `d`.
pub fn zero_pad(x: &[f64], d: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    out.resize(d.max(x.len()), 0.0);
    out
}

/// The shared diagonal of `+-1` entries for `sign_seed`.
pub fn rotation_signs(sign_seed: u64, d: usize) -> Vec<f64> {
    let mut rng = derive_rng(sign_seed, Domain::Signs, 0, 0);
    let mut signs = Vec::with_capacity(d);
    while signs.len() < d {
        let word: u64 = rng.random();
        for bit in 0..64.min(d - signs.len()) {
            signs.push(if (word >> bit) & 1 == 1 { -1.0 } else { 1.0 });
        }
    }
    signs
}

/// In-place unnormalised fast Walsh-Hadamard transform.
fn fwht(x: &mut [f64]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for block in x.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
}

fn check_len(d: usize) -> Result<()> {
    if d == 0 || !d.is_power_of_two() {
        return Err(invalid("x", format!("length {d} is not a power of two")));
    }
    Ok(())
}

/// `H D x / sqrt(d)` with `D` drawn from `sign_seed`.
pub fn randomized_hadamard(x: &[f64], sign_seed: u64) -> Result<Vec<f64>> {
    check_len(x.len())?;
    let signs = rotation_signs(sign_seed, x.len());
    hadamard_with_signs(x, &signs)
}

/// `D H y / sqrt(d)`, the inverse of [`randomized_hadamard`] for the same seed.
pub fn inverse_randomized_hadamard(y: &[f64], sign_seed: u64) -> Result<Vec<f64>> {
    check_len(y.len())?;
    let signs = rotation_signs(sign_seed, y.len());
    inverse_hadamard_with_signs(y, &signs)
}

/// Forward rotation with an explicit sign vector.
pub fn hadamard_with_signs(x: &[f64], signs: &[f64]) -> Result<Vec<f64>> {
    check_len(x.len())?;
    if signs.len() != x.len() {
        return Err(invalid("signs", "length differs from the input"));
    }
    let mut out: Vec<f64> = x.iter().zip(signs).map(|(v, s)| v * s).collect();
    fwht(&mut out);
    let norm = 1.0 / (x.len() as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= norm);
    Ok(out)
}

/// Inverse rotation with an explicit sign vector.
pub fn inverse_hadamard_with_signs(y: &[f64], signs: &[f64]) -> Result<Vec<f64>> {
    check_len(y.len())?;
    if signs.len() != y.len() {
        return Err(invalid("signs", "length differs from the input"));
    }
    let mut out = y.to_vec();
    fwht(&mut out);
    let norm = 1.0 / (y.len() as f64).sqrt();
    out.iter_mut().zip(signs).for_each(|(v, s)| *v *= norm * s);
    Ok(out)
}

/// Rounds each entry up with probability equal to its fractional part.
pub fn stochastic_round<R: Rng + ?Sized>(x: &[f64], rng: &mut R) -> Result<Vec<i64>> {
    x.iter()
        .map(|&v| {
            if !v.is_finite() || v.abs() > ROUNDING_LIMIT {
                return Err(Error::Overflow("rounding to integers"));
            }
            let floor = v.floor();
            let frac = v - floor;
            let up = frac > 0.0 && rng.random::<f64>() < frac;
            Ok(floor as i64 + up as i64)
        })
        .collect()
}

/// `min((sc + sqrt d)^2, (sc)^2 + d/4 + sqrt(2 ln(1/beta)) (sc + sqrt(d)/2))`.
pub fn rounded_norm_bound(scaled_clip: f64, d: usize, beta: f64) -> f64 {
    let d = d as f64;
    let root_d = d.sqrt();
    let loose = (scaled_clip + root_d).powi(2);
    let tight = scaled_clip * scaled_clip
        + d / 4.0
        + (2.0 * (1.0 / beta).ln()).sqrt() * (scaled_clip + root_d / 2.0);
    loose.min(tight)
}

/// Repeats stochastic rounding of the already-scaled `x` until the squared
/// norm is within `config.norm_bound()`.
pub fn conditional_round<R: Rng + ?Sized>(
    x: &[f64],
    config: &QuantizerConfig,
    rng: &mut R,
) -> Result<RoundedVector> {
    config.validate()?;
    if x.len() != config.padded_dim {
        return Err(invalid("x", "length differs from padded_dim"));
    }
    let norm_bound = config.norm_bound();
    for attempt in 1..=config.max_attempts {
        let values = stochastic_round(x, rng)?;
        let sq: f64 = values.iter().map(|&v| (v as f64) * (v as f64)).sum();
        if sq <= norm_bound {
            return Ok(RoundedVector {
                values,
                norm_bound,
                attempts: attempt,
            });
        }
    }
    Err(Error::RoundingExhausted(config.max_attempts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn random_vec(rng: &mut ChaCha20Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Dense `H_d` by the Sylvester recursion.
    fn dense_hadamard(d: usize) -> Vec<Vec<f64>> {
        let mut h = vec![vec![1.0]];
        while h.len() < d {
            let n = h.len();
            let mut next = vec![vec![0.0; 2 * n]; 2 * n];
            for i in 0..n {
                for j in 0..n {
                    next[i][j] = h[i][j];
                    next[i][j + n] = h[i][j];
                    next[i + n][j] = h[i][j];
                    next[i + n][j + n] = -h[i][j];
                }
            }
            h = next;
        }
        h
    }

    #[test]
    fn clipping() {
        let c = clip_l2(&[3.0, 4.0], 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        assert_eq!(clip_l2(&[0.3, 0.4], 1.0).unwrap(), vec![0.3, 0.4]);
        assert_eq!(clip_l2(&[0.0; 4], 1.0).unwrap(), vec![0.0; 4]);
        assert!(clip_l2(&[f64::NAN], 1.0).is_err());
        assert!(clip_l2(&[1.0, f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn hadamard_small_cases() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = [1.0, 1.0];
        let y = hadamard_with_signs(&[1.0, 0.0], &plus).unwrap();
        assert!((y[0] - s).abs() < 1e-15 && (y[1] - s).abs() < 1e-15);
        let x = inverse_hadamard_with_signs(&[s, s], &plus).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert!(randomized_hadamard(&[1.0, 2.0, 3.0], 0).is_err());
        assert!(randomized_hadamard(&[], 0).is_err());
    }

    #[test]
    fn matches_dense_matrix() {
        let d = 16;
        let h = dense_hadamard(d);
        let signs = rotation_signs(5, d);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = random_vec(&mut rng, d);
        let got = randomized_hadamard(&x, 5).unwrap();
        for i in 0..d {
            let want: f64 = (0..d).map(|j| h[i][j] * signs[j] * x[j]).sum::<f64>() / 4.0;
            assert!((got[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_is_not_an_involution() {
        let signs = [1.0, -1.0, -1.0, 1.0];
        let x = [1.0, 2.0, 3.0, 4.0];
        let twice =
            inverse_hadamard_with_signs(&inverse_hadamard_with_signs(&x, &signs).unwrap(), &signs).unwrap();
        // D H x / 2 = [5, 1, 2, 0], applied again gives [4, -3, -2, 1]
        let want = [4.0, -3.0, -2.0, 1.0];
        for (g, w) in twice.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!(twice.iter().zip(&x).any(|(a, b)| (a - b).abs() > 0.1));
    }

    #[test]
    fn rotation_is_isometric_and_invertible() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for &d in &[2usize, 64, 1024, 1 << 14] {
            let x = random_vec(&mut rng, d);
            let y = randomized_hadamard(&x, d as u64).unwrap();
            assert!((l2_norm(&y) - l2_norm(&x)).abs() <= 1e-9 * l2_norm(&x));
            let back = inverse_randomized_hadamard(&y, d as u64).unwrap();
            assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-9));
        }
    }

    #[test]
    fn inverse_is_linear() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (y1, y2) = (random_vec(&mut rng, 32), random_vec(&mut rng, 32));
        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| 2.5 * a + b).collect();
        let lhs = inverse_randomized_hadamard(&combo, 1).unwrap();
        let (a, b) = (
            inverse_randomized_hadamard(&y1, 1).unwrap(),
            inverse_randomized_hadamard(&y2, 1).unwrap(),
        );
        for i in 0..32 {
            assert!((lhs[i] - (2.5 * a[i] + b[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn rounding_frequencies() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let n = 1_000_000;
        let ups = (0..n)
            .filter(|_| stochastic_round(&[42.3], &mut rng).unwrap()[0] == 43)
            .count();
        let sd = (0.21f64 / n as f64).sqrt();
        assert!((ups as f64 / n as f64 - 0.3).abs() <= 3.3 * sd);

        let total: i64 = (0..n).map(|_| stochastic_round(&[0.25], &mut rng).unwrap()[0]).sum();
        let sd = (0.1875f64 / n as f64).sqrt();
        assert!((total as f64 / n as f64 - 0.25).abs() <= 3.3 * sd);

        assert_eq!(stochastic_round(&[-3.0, 7.0, 0.0], &mut rng).unwrap(), vec![-3, 7, 0]);
        let neg = stochastic_round(&[-1.5], &mut rng).unwrap()[0];
        assert!(neg == -2 || neg == -1);
        assert!(stochastic_round(&[1e19], &mut rng).is_err());
    }

    #[test]
    fn norm_bound_values() {
        let b = rounded_norm_bound(10.0, 16, DEFAULT_ROUNDING_BIAS);
        assert!((b - 116.0).abs() < 1e-12);
        let near_one = rounded_norm_bound(10.0, 16, 1.0 - 1e-15);
        assert!((near_one - 104.0).abs() < 1e-6);
        for &(sc, d) in &[(0.1, 1024usize), (5.0, 4), (1e4, 1 << 14)] {
            assert!(rounded_norm_bound(sc, d, 0.1) <= (sc + (d as f64).sqrt()).powi(2));
        }
        assert!((DEFAULT_ROUNDING_BIAS - (-0.5f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn integer_input_accepted_immediately() {
        let config = QuantizerConfig::new(10.0, 1.0, 4, 0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let r = conditional_round(&[3.0, -4.0, 0.0, 5.0], &config, &mut rng).unwrap();
        assert_eq!(r.values, vec![3, -4, 0, 5]);
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn exhaustion_is_reported() {
        let mut config = QuantizerConfig::new(1.0, 1.0, 4, 0).unwrap();
        config.max_attempts = 3;
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        // Far outside the clip radius, so no rounding can satisfy the bound.
        assert_eq!(
            conditional_round(&[50.5, 50.5, 50.5, 50.5], &config, &mut rng),
            Err(Error::RoundingExhausted(3))
        );
    }

    #[test]
    fn acceptance_rate_meets_the_guarantee() {
        let d = 256;
        let config = QuantizerConfig::new(1.0, 30.0, d, 0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let trials = 10_000;
        let mut first_try = 0;
        for _ in 0..trials {
            let g = random_vec(&mut rng, d);
            let r = 30.0 / l2_norm(&g);
            let x: Vec<f64> = g.iter().map(|v| v * r).collect();
            let out = conditional_round(&x, &config, &mut rng).unwrap();
            let sq: f64 = out.values.iter().map(|&v| (v * v) as f64).sum();
            assert!(sq <= out.norm_bound);
            first_try += (out.attempts == 1) as usize;
        }
        let beta = DEFAULT_ROUNDING_BIAS;
        let floor = 1.0 - beta - 3.3 * (beta * (1.0 - beta) / trials as f64).sqrt();
        assert!(first_try as f64 / trials as f64 >= floor);
    }
}

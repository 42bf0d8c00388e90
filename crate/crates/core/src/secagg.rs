//! Distributed Skellam aggregation over an ideal modular-sum functionality.
//!
//! Clients clip, scale, rotate, round, add their share of the Skellam noise
//! and wrap into `Z_{2^b}`. The server sees only the modular sum, maps it back
//! to signed integers, unscales and unrotates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantize::{
    clip_l2, conditional_round, inverse_randomized_hadamard, padded_dim, randomized_hadamard,
    zero_pad, QuantizerConfig, DEFAULT_MAX_ATTEMPTS, DEFAULT_ROUNDING_BIAS,
};
use crate::skellam::sample_skellam;

pub const MIN_BIT_WIDTH: u32 = 8;
pub const MAX_BIT_WIDTH: u32 = 64;

/// How the field-size constraint determines the scale `s`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleRule {
    /// `2^b = 2k s sqrt(c^2 n^2/d + n/(4 s^2) + mu)`: the bound is applied to
    /// the scaled aggregate that actually lives in the field.
    #[default]
    Consistent,
    /// `2^b = 2k sqrt(c^2 n^2/d + n/(4 s^2) + mu)` taken literally.
    AsPrinted,
}

/// Parameters shared by every client and the server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAggregationConfig")]
pub struct AggregationConfig {
    pub clip_norm: f64,
    pub bit_width: u32,
    /// Unscaled variance of the aggregate noise; zero disables noise.
    pub central_variance: f64,
    pub num_clients: usize,
    pub bound_multiplier: f64,
    pub rounding_bias: f64,
    /// Length of the client vectors before padding.
    pub dim: usize,
    pub padded_dim: usize,
    pub scale: f64,
    pub sign_seed: u64,
    pub scale_rule: ScaleRule,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAggregationConfig {
    clip_norm: f64,
    bit_width: u32,
    central_variance: f64,
    num_clients: usize,
    #[serde(default = "default_bound_multiplier")]
    bound_multiplier: f64,
    #[serde(default = "default_rounding_bias")]
    rounding_bias: f64,
    dim: usize,
    #[serde(default)]
    padded_dim: Option<usize>,
    #[serde(default)]
    scale: Option<f64>,
    #[serde(default)]
    sign_seed: u64,
    #[serde(default)]
    scale_rule: ScaleRule,
}

fn default_bound_multiplier() -> f64 {
    3.0
}

fn default_rounding_bias() -> f64 {
    DEFAULT_ROUNDING_BIAS
}

impl TryFrom<RawAggregationConfig> for AggregationConfig {
    type Error = Error;

    fn try_from(raw: RawAggregationConfig) -> Result<Self> {
        let mut config = AggregationConfig::new(
            raw.clip_norm,
            raw.bit_width,
            raw.central_variance,
            raw.num_clients,
            raw.dim,
            raw.bound_multiplier,
            raw.sign_seed,
        )?
        .with_rounding_bias(raw.rounding_bias)?
        .with_scale_rule(raw.scale_rule)?;
        if let Some(d) = raw.padded_dim {
            if d != config.padded_dim {
                return Err(invalid(
                    "padded_dim",
                    format!("expected {} for dim {}", config.padded_dim, config.dim),
                ));
            }
        }
        if let Some(s) = raw.scale {
            if (s - config.scale).abs() > 1e-9 * config.scale {
                return Err(invalid(
                    "scale",
                    format!("{s} is not the solved scale {}", config.scale),
                ));
            }
            config.scale = s;
        }
        Ok(config)
    }
}

impl AggregationConfig {
    /// Full configuration with `padded_dim` and `scale` derived from the rest.
    pub fn new(
        clip_norm: f64,
        bit_width: u32,
        central_variance: f64,
        num_clients: usize,
        dim: usize,
        bound_multiplier: f64,
        sign_seed: u64,
    ) -> Result<Self> {
        let mut config = AggregationConfig {
            clip_norm,
            bit_width,
            central_variance,
            num_clients,
            bound_multiplier,
            rounding_bias: DEFAULT_ROUNDING_BIAS,
            dim,
            padded_dim: padded_dim(dim),
            scale: 1.0,
            sign_seed,
            scale_rule: ScaleRule::Consistent,
        };
        config.validate()?;
        config.resolve_scale()?;
        Ok(config)
    }

    pub fn with_rounding_bias(mut self, beta: f64) -> Result<Self> {
        self.rounding_bias = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_scale_rule(mut self, rule: ScaleRule) -> Result<Self> {
        self.scale_rule = rule;
        self.resolve_scale()?;
        Ok(self)
    }

    /// Same configuration at a different central variance, with the scale
    /// solved again.
    pub fn with_central_variance(mut self, mu: f64) -> Result<Self> {
        self.central_variance = mu;
        self.validate()?;
        self.resolve_scale()?;
        Ok(self)
    }

    fn resolve_scale(&mut self) -> Result<()> {
        self.scale = solve_scale_with(
            self.clip_norm,
            self.num_clients,
            self.padded_dim,
            self.central_variance,
            self.bound_multiplier,
            self.bit_width,
            self.scale_rule,
        )?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) || !self.clip_norm.is_finite() {
            return Err(invalid("clip_norm", "must be positive and finite"));
        }
        if !(MIN_BIT_WIDTH..=MAX_BIT_WIDTH).contains(&self.bit_width) {
            return Err(invalid("bit_width", format!("must lie in [8, 64], got {}", self.bit_width)));
        }
        if !(self.central_variance >= 0.0) || !self.central_variance.is_finite() {
            return Err(invalid("central_variance", "must be non-negative and finite"));
        }
        if self.num_clients == 0 {
            return Err(invalid("num_clients", "must be at least 1"));
        }
        if !(self.bound_multiplier > 0.0) {
            return Err(invalid("bound_multiplier", "must be positive"));
        }
        if !(self.rounding_bias > 0.0 && self.rounding_bias < 1.0) {
            return Err(invalid("rounding_bias", "must lie in (0, 1)"));
        }
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if !self.padded_dim.is_power_of_two() || self.padded_dim < self.dim {
            return Err(invalid("padded_dim", "must be a power of two no smaller than dim"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(invalid("scale", "must be positive and finite"));
        }
        Ok(())
    }

    pub fn quantizer(&self) -> Result<QuantizerConfig> {
        let q = QuantizerConfig {
            clip_norm: self.clip_norm,
            scale: self.scale,
            rounding_bias: self.rounding_bias,
            padded_dim: self.padded_dim,
            sign_seed: self.sign_seed,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        };
        q.validate()?;
        Ok(q)
    }

    /// Variance of each client's local noise, in scaled units.
    pub fn client_noise_variance(&self) -> f64 {
        self.scale * self.scale * self.central_variance / self.num_clients as f64
    }

    pub fn modulus(&self) -> u128 {
        1u128 << self.bit_width
    }
}

/// Scale `s` for the dimensionally consistent field constraint.
pub fn solve_scale(c: f64, n: usize, d: usize, mu: f64, k: f64, b: u32) -> Result<f64> {
    solve_scale_with(c, n, d, mu, k, b, ScaleRule::Consistent)
}

/// Scale `s` under the chosen [`ScaleRule`]; both are closed-form in `s^2`.
pub fn solve_scale_with(
    c: f64,
    n: usize,
    d: usize,
    mu: f64,
    k: f64,
    b: u32,
    rule: ScaleRule,
) -> Result<f64> {
    if !(c > 0.0) || n == 0 || d == 0 || !(mu >= 0.0) || !(k > 0.0) {
        return Err(invalid("scale inputs", "c, n, d, k must be positive and mu non-negative"));
    }
    let (n, d) = (n as f64, d as f64);
    let half_range = 2f64.powi(b as i32) / (2.0 * k);
    let a = half_range * half_range;
    let signal = c * c * n * n / d;
    let s2 = match rule {
        ScaleRule::Consistent => {
            let room = a - n / 4.0;
            if !(room > 0.0) {
                return Err(Error::InfeasibleScale(format!(
                    "2^{b} cannot hold the rounding error of {n} clients at k = {k}"
                )));
            }
            room / (signal + mu)
        }
        ScaleRule::AsPrinted => {
            let room = a - signal - mu;
            if !(room > 0.0) {
                return Err(Error::InfeasibleScale(format!(
                    "signal and noise exceed 2^{b} / 2k before scaling"
                )));
            }
            n / (4.0 * room)
        }
    };
    Ok(s2.sqrt())
}

/// Residual `lhs / rhs - 1` of the scale equation at `s`.
pub fn scale_residual(c: f64, n: usize, d: usize, mu: f64, k: f64, b: u32, s: f64, rule: ScaleRule) -> f64 {
    let (n, d) = (n as f64, d as f64);
    let sigma = (c * c * n * n / d + n / (4.0 * s * s) + mu).sqrt();
    let rhs = match rule {
        ScaleRule::Consistent => 2.0 * k * s * sigma,
        ScaleRule::AsPrinted => 2.0 * k * sigma,
    };
    2f64.powi(b as i32) / rhs - 1.0
}

/// Elements of `Z_{2^b}`, one per coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldVector {
    values: Vec<u64>,
    bit_width: u32,
}

impl FieldVector {
    pub fn new(values: Vec<u64>, bit_width: u32) -> Result<Self> {
        check_bit_width(bit_width)?;
        if let Some(&v) = values.iter().find(|&&v| (v as u128) >= (1u128 << bit_width)) {
            return Err(Error::OutOfField { value: v, bit_width });
        }
        Ok(FieldVector { values, bit_width })
    }

    /// Reduces signed integers modulo `2^b`.
    pub fn from_signed(values: &[i64], bit_width: u32) -> Result<Self> {
        check_bit_width(bit_width)?;
        let m = 1i128 << bit_width;
        let values = values.iter().map(|&v| (v as i128).rem_euclid(m) as u64).collect();
        Ok(FieldVector { values, bit_width })
    }

    pub fn zeros(len: usize, bit_width: u32) -> Result<Self> {
        FieldVector::new(vec![0; len], bit_width)
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Centred integer representatives of every coordinate.
    pub fn to_signed(&self) -> Vec<i64> {
        self.values
            .iter()
            .map(|&v| signed_decode(v, self.bit_width).unwrap())
            .collect()
    }
}

fn check_bit_width(b: u32) -> Result<()> {
    if !(MIN_BIT_WIDTH..=MAX_BIT_WIDTH).contains(&b) {
        return Err(invalid("bit_width", format!("must lie in [8, 64], got {b}")));
    }
    Ok(())
}

/// Maps `v` in `[0, 2^b)` to `[-2^(b-1), 2^(b-1))`.
pub fn signed_decode(v: u64, b: u32) -> Result<i64> {
    check_bit_width(b)?;
    let m = 1i128 << b;
    let v = v as i128;
    if v >= m {
        return Err(Error::OutOfField { value: v as u64, bit_width: b });
    }
    Ok(if v >= m / 2 { (v - m) as i64 } else { v as i64 })
}

/// Encodes one client vector into the field.
pub fn client_encode<R: Rng + ?Sized>(
    x: &[f64],
    config: &AggregationConfig,
    rng: &mut R,
) -> Result<FieldVector> {
    config.validate()?;
    if x.len() != config.dim {
        return Err(invalid("x", format!("length {} differs from dim {}", x.len(), config.dim)));
    }
    let clipped = clip_l2(x, config.clip_norm)?;
    let scaled: Vec<f64> = clipped.iter().map(|v| v * config.scale).collect();
    let rotated = randomized_hadamard(&zero_pad(&scaled, config.padded_dim), config.sign_seed)?;
    let mut values = conditional_round(&rotated, &config.quantizer()?, rng)?.values;
    if config.central_variance > 0.0 {
        let noise = sample_skellam(config.client_noise_variance(), values.len(), rng)?;
        for (v, e) in values.iter_mut().zip(noise) {
            *v = v.checked_add(e).ok_or(Error::Overflow("adding local noise"))?;
        }
    }
    FieldVector::from_signed(&values, config.bit_width)
}

/// Coordinate-wise sum modulo `2^b`.
pub fn secure_sum(messages: &[FieldVector], b: u32) -> Result<FieldVector> {
    check_bit_width(b)?;
    let first = messages.first().ok_or_else(|| invalid("messages", "no messages to sum"))?;
    let len = first.len();
    if messages.iter().any(|m| m.bit_width != b) {
        return Err(Error::FieldMismatch("bit width"));
    }
    if messages.iter().any(|m| m.len() != len) {
        return Err(Error::FieldMismatch("length"));
    }
    let mask = (1u128 << b) - 1;
    let mut acc = vec![0u128; len];
    for m in messages {
        for (a, &v) in acc.iter_mut().zip(&m.values) {
            *a = (*a + v as u128) & mask;
        }
    }
    Ok(FieldVector {
        values: acc.into_iter().map(|v| v as u64).collect(),
        bit_width: b,
    })
}

/// Estimate of the sum of the clipped client vectors.
pub fn server_decode(
    z: &FieldVector,
    config: &AggregationConfig,
    expected_clients: usize,
) -> Result<Vec<f64>> {
    config.validate()?;
    if expected_clients != config.num_clients {
        return Err(invalid(
            "expected_clients",
            format!("{expected_clients} differs from the configured {}", config.num_clients),
        ));
    }
    if z.bit_width != config.bit_width {
        return Err(Error::FieldMismatch("bit width"));
    }
    if z.len() != config.padded_dim {
        return Err(Error::FieldMismatch("length"));
    }
    let unscaled: Vec<f64> = z.to_signed().iter().map(|&v| v as f64 / config.scale).collect();
    let mut out = inverse_randomized_hadamard(&unscaled, config.sign_seed)?;
    out.truncate(config.dim);
    Ok(out)
}

/// Runs every client, the modular sum and the server decode.
pub fn aggregate<R: Rng>(
    clients: &[Vec<f64>],
    config: &AggregationConfig,
    mut client_rng: impl FnMut(usize) -> R,
) -> Result<Vec<f64>> {
    let messages = clients
        .iter()
        .enumerate()
        .map(|(i, x)| client_encode(x, config, &mut client_rng(i)))
        .collect::<Result<Vec<_>>>()?;
    let z = secure_sum(&messages, config.bit_width)?;
    server_decode(&z, config, clients.len())
}

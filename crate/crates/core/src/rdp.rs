//! Rényi-DP accounting for the Skellam mechanism and its Gaussian baselines.
//!
//! The closed forms here are valid for integer orders only. Curves are
//! carried on an explicit order grid and converted to `(eps, delta)` by
//! minimising `eps(a) + log(1/(a delta))/(a-1) + log(1 - 1/a)` over that grid.

use crate::error::{invalid, Error, Result};

/// Default order grid `{2, 3, ..., 256}`.
pub fn default_orders() -> Vec<u32> {
    (2..=256).collect()
}

/// Sensitivities, noise variance and quantization scale of one invocation.
///
/// `l1_sensitivity`, `l2_sensitivity` and `variance` are in unscaled units;
/// the noise actually added to the scaled integers has variance
/// `scale^2 * variance`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MechanismSpec {
    pub l1_sensitivity: f64,
    pub l2_sensitivity: f64,
    pub variance: f64,
    pub scale: f64,
}

impl MechanismSpec {
    pub fn new(l1_sensitivity: f64, l2_sensitivity: f64, variance: f64, scale: f64) -> Result<Self> {
        let spec = MechanismSpec {
            l1_sensitivity,
            l2_sensitivity,
            variance,
            scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Integer-native data: unit scale and equal sensitivities.
    pub fn scalar(sensitivity: f64, variance: f64) -> Result<Self> {
        Self::new(sensitivity, sensitivity, variance, 1.0)
    }

    /// Fills in `l1` from `l2` and the dimension.
    pub fn from_l2(l2_sensitivity: f64, dim: u64, variance: f64, scale: f64) -> Result<Self> {
        Self::new(l1_from_l2(l2_sensitivity, dim)?, l2_sensitivity, variance, scale)
    }

    pub fn with_variance(self, variance: f64) -> Result<Self> {
        Self::new(self.l1_sensitivity, self.l2_sensitivity, variance, self.scale)
    }

    fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.l2_sensitivity) {
            return Err(invalid("l2_sensitivity", "must be positive and finite"));
        }
        if !finite_pos(self.l1_sensitivity) {
            return Err(invalid("l1_sensitivity", "must be positive and finite"));
        }
        // Holds for every vector; a small relative slack absorbs the rounding
        // in l1_from_l2 when l2 = 1.
        if self.l1_sensitivity < self.l2_sensitivity * (1.0 - 1e-12) {
            return Err(invalid("l1_sensitivity", "must be at least the l2 sensitivity"));
        }
        if !finite_pos(self.variance) {
            return Err(invalid("variance", "must be positive and finite"));
        }
        if !finite_pos(self.scale) {
            return Err(invalid("scale", "must be positive and finite"));
        }
        Ok(())
    }
}

fn check_alpha(alpha: u32) -> Result<f64> {
    if alpha < 2 {
        return Err(invalid("alpha", format!("must be an integer >= 2, got {alpha}")));
    }
    Ok(alpha as f64)
}

/// `a D^2/(2mu) + min(((2a-1)D^2 + 6D)/(4mu^2), 3D/(2mu))` for integer `D`.
pub fn skellam_rdp_scalar(alpha: u32, sensitivity: i64, mu: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if sensitivity <= 0 {
        return Err(invalid("sensitivity", format!("must be positive, got {sensitivity}")));
    }
    let d = sensitivity as f64;
    let spec = MechanismSpec::new(d, d, mu, 1.0)?;
    skellam_rdp_multidim(alpha, &spec)
}

/// `a D2^2/(2mu) + min(((2a-1)D2^2 + 6 D1)/(4mu^2), 3 D1/(2mu))`.
///
/// The scale of `spec` is ignored; use [`skellam_rdp_scaled`] for quantized
/// inputs.
pub fn skellam_rdp_multidim(alpha: u32, spec: &MechanismSpec) -> Result<f64> {
    let mut unit = *spec;
    unit.scale = 1.0;
    skellam_rdp_scaled(alpha, &unit)
}

/// `a D2^2/(2mu) + min((2a-1)D2^2/(4 s^2 mu^2) + 3 D1/(2 s^3 mu^2), 3 D1/(2 s mu))`.
///
/// At `s = 1` this is the multi-dimensional bound evaluated with the same
/// arithmetic, so the reductions hold bit for bit.
pub fn skellam_rdp_scaled(alpha: u32, spec: &MechanismSpec) -> Result<f64> {
    let a = check_alpha(alpha)?;
    spec.validate()?;
    let MechanismSpec {
        l1_sensitivity: d1,
        l2_sensitivity: d2,
        variance: mu,
        scale: s,
    } = *spec;
    let gaussian = a * d2 * d2 / (2.0 * mu);
    let fine = (2.0 * a - 1.0) * d2 * d2 / (4.0 * s * s * mu * mu) + 6.0 * d1 / (4.0 * s * s * s * mu * mu);
    let coarse = 3.0 * d1 / (2.0 * s * mu);
    Ok(gaussian + fine.min(coarse))
}

/// `a D^2/(2mu)`, for both the continuous and the discrete Gaussian.
pub fn gaussian_rdp(alpha: f64, l2_sensitivity: f64, mu: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(invalid("alpha", format!("must exceed 1, got {alpha}")));
    }
    if !(mu > 0.0) {
        return Err(invalid("mu", format!("must be positive, got {mu}")));
    }
    Ok(alpha * l2_sensitivity * l2_sensitivity / (2.0 * mu))
}

/// `D2 * min(sqrt(d), D2)`: the general `sqrt(d)` bound, or `D2^2` for integers.
pub fn l1_from_l2(l2_sensitivity: f64, dim: u64) -> Result<f64> {
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    Ok(l2_sensitivity * (dim as f64).sqrt().min(l2_sensitivity))
}

/// Which closed form produces a curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mechanism {
    Skellam,
    Gaussian,
    DiscreteGaussian,
}

/// `eps(alpha)` on an integer order grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RdpCurve {
    orders: Vec<u32>,
    epsilons: Vec<f64>,
}

impl RdpCurve {
    pub fn new(orders: Vec<u32>, epsilons: Vec<f64>) -> Result<Self> {
        if orders.is_empty() {
            return Err(invalid("orders", "curve must have at least one order"));
        }
        if orders.len() != epsilons.len() {
            return Err(invalid("epsilons", "length differs from orders"));
        }
        if orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("orders", "must be strictly increasing"));
        }
        if orders[0] < 2 {
            return Err(invalid("orders", "every order must be >= 2"));
        }
        if epsilons.iter().any(|e| !(*e >= 0.0)) {
            return Err(invalid("epsilons", "must be non-negative"));
        }
        Ok(RdpCurve { orders, epsilons })
    }

    pub fn from_fn(orders: &[u32], mut eps: impl FnMut(u32) -> Result<f64>) -> Result<Self> {
        let epsilons = orders.iter().map(|&a| eps(a)).collect::<Result<Vec<_>>>()?;
        Self::new(orders.to_vec(), epsilons)
    }

    /// Curve of one invocation of `mechanism` under `spec`.
    pub fn for_mechanism(mechanism: Mechanism, spec: &MechanismSpec, orders: &[u32]) -> Result<Self> {
        match mechanism {
            Mechanism::Skellam => Self::from_fn(orders, |a| skellam_rdp_scaled(a, spec)),
            Mechanism::Gaussian | Mechanism::DiscreteGaussian => Self::from_fn(orders, |a| {
                gaussian_rdp(a as f64, spec.l2_sensitivity, spec.variance)
            }),
        }
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.orders.iter().copied().zip(self.epsilons.iter().copied())
    }

    /// `rounds`-fold self-composition.
    pub fn repeated(&self, rounds: u64) -> RdpCurve {
        RdpCurve {
            orders: self.orders.clone(),
            epsilons: self.epsilons.iter().map(|e| e * rounds as f64).collect(),
        }
    }
}

/// Pointwise sum of curves sharing one order grid.
pub fn compose(curves: &[RdpCurve]) -> Result<RdpCurve> {
    let first = curves
        .first()
        .ok_or_else(|| invalid("curves", "nothing to compose"))?;
    if curves.iter().any(|c| c.orders != first.orders) {
        return Err(Error::MismatchedOrders);
    }
    let epsilons = (0..first.orders.len())
        .map(|i| curves.iter().map(|c| c.epsilons[i]).sum())
        .collect();
    Ok(RdpCurve {
        orders: first.orders.clone(),
        epsilons,
    })
}

/// Result of an RDP to approximate-DP conversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpConversion {
    pub epsilon: f64,
    pub order: u32,
}

/// `min_a eps(a) + log(1/(a delta))/(a-1) + log(1 - 1/a)` over the curve's grid.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<DpConversion> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let mut best = DpConversion {
        epsilon: f64::INFINITY,
        order: curve.orders[0],
    };
    for (order, eps) in curve.iter() {
        let a = order as f64;
        let value = eps + (1.0 / (a * delta)).ln() / (a - 1.0) + (-1.0 / a).ln_1p();
        if value < best.epsilon {
            best = DpConversion { epsilon: value, order };
        }
    }
    Ok(best)
}

/// Search range for [`calibrate_mu`].
pub const MU_SEARCH_RANGE: (f64, f64) = (1e-6, 1e12);

/// Smallest variance (to 0.1% relative) whose `rounds`-fold scaled-Skellam
/// curve converts to at most `target_eps` at `delta`.
///
/// Only the sensitivities and scale of `template` are used. The returned
/// value always satisfies the target; the value 0.1% below it does not,
/// unless it sits on the lower end of the search range.
pub fn calibrate_mu(
    target_eps: f64,
    delta: f64,
    template: &MechanismSpec,
    rounds: u64,
    orders: &[u32],
) -> Result<f64> {
    if !(target_eps > 0.0) {
        return Err(invalid("target_eps", format!("must be positive, got {target_eps}")));
    }
    if rounds == 0 {
        return Err(invalid("rounds", "must be at least 1"));
    }
    let eps_at = |mu: f64| -> Result<f64> {
        let spec = template.with_variance(mu)?;
        let curve = RdpCurve::for_mechanism(Mechanism::Skellam, &spec, orders)?.repeated(rounds);
        Ok(rdp_to_dp(&curve, delta)?.epsilon)
    };
    let (floor, ceiling) = MU_SEARCH_RANGE;
    if eps_at(ceiling)? > target_eps {
        return Err(Error::Unachievable(format!(
            "epsilon {target_eps} needs variance above {ceiling:e}"
        )));
    }
    if eps_at(floor)? <= target_eps {
        return Ok(floor);
    }
    let (mut lo, mut hi) = (floor.ln(), ceiling.ln());
    while hi - lo > 1e-3_f64.ln_1p() {
        let mid = 0.5 * (lo + hi);
        if eps_at(mid.exp())? <= target_eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

//! Distributed mean estimation experiments.
//!
//! Each grid point calibrates the Skellam aggregate variance to a target
//! `(eps, delta)`, runs the secure-aggregation pipeline over synthetic data on
//! the radius-`c` sphere, and compares its error with a central continuous
//! Gaussian mechanism calibrated by the analytic formula.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pld::calibrate_gaussian_sigma;
use crate::quantize::DEFAULT_ROUNDING_BIAS;
use crate::rdp::{calibrate_mu, default_orders, rdp_to_dp, Mechanism, MechanismSpec, RdpCurve};
use crate::rng::{derive_rng, Domain};
use crate::secagg::{aggregate, AggregationConfig, ScaleRule};
use crate::stats::mean_ci95;

/// `n` points drawn uniformly from the radius-`c` sphere in `dim` dimensions.
pub fn generate_sphere_data(n: usize, dim: usize, c: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 || dim == 0 {
        return Err(invalid("n, dim", "must be at least 1"));
    }
    if !(c > 0.0) {
        return Err(invalid("c", "must be positive"));
    }
    Ok((0..n)
        .map(|i| {
            let mut rng = derive_rng(seed, Domain::Data, 0, i as u64);
            loop {
                let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    break g.iter().map(|v| v * c / norm).collect();
                }
            }
        })
        .collect())
}

fn mean_vector(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len() as f64;
    let mut mean = vec![0.0; data[0].len()];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn mse(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64
}

/// Unscaled `(l1, l2)` sensitivities of the rounded client vector: its
/// squared norm is at most `B`, so `||v||_2 <= sqrt(B)` and, for integers,
/// `||v||_1 <= min(sqrt(d B), B)`.
pub fn skellam_sensitivities(config: &AggregationConfig) -> Result<(f64, f64)> {
    let bound = config.quantizer()?.norm_bound();
    let l2 = bound.sqrt();
    let l1 = (config.padded_dim as f64 * bound).sqrt().min(bound);
    Ok((l1 / config.scale, l2 / config.scale))
}

/// The mechanism seen by the accountant for a configuration.
pub fn mechanism_spec(config: &AggregationConfig) -> Result<MechanismSpec> {
    let (l1, l2) = skellam_sensitivities(config)?;
    MechanismSpec::new(l1, l2, config.central_variance.max(1e-300), config.scale)
}

/// Epsilon of one round of `config` at `delta`, from the scaled bound.
pub fn config_epsilon(config: &AggregationConfig, delta: f64) -> Result<f64> {
    let spec = mechanism_spec(config)?;
    let curve = RdpCurve::for_mechanism(Mechanism::Skellam, &spec, &default_orders())?;
    Ok(rdp_to_dp(&curve, delta)?.epsilon)
}

/// Solves for the central variance jointly with the scale it implies.
///
/// The scale shrinks as the variance grows, which raises the unscaled
/// sensitivities, so the variance is raised until it covers the requirement
/// at its own scale.
pub fn calibrate_aggregation(base: &AggregationConfig, epsilon: f64, delta: f64) -> Result<AggregationConfig> {
    let orders = default_orders();
    let mut config = base.clone().with_central_variance(0.0)?;
    let mut mu = 0.0;
    for _ in 0..200 {
        let need = calibrate_mu(epsilon, delta, &mechanism_spec(&config)?, 1, &orders)?;
        if need <= mu {
            return Ok(config);
        }
        mu = need;
        config = config.with_central_variance(mu)?;
    }
    Err(Error::Unachievable("variance and scale did not settle".into()))
}

/// Squared error per coordinate of one private mean estimate.
pub fn run_dme_trial(config: &AggregationConfig, data: &[Vec<f64>], master_seed: u64, trial: u64) -> Result<f64> {
    let mut config = config.clone();
    config.sign_seed = derive_rng(master_seed, Domain::Harness, trial, 0).random();
    let sum = aggregate(data, &config, |i| derive_rng(master_seed, Domain::Client, trial, i as u64))?;
    let n = data.len() as f64;
    let estimate: Vec<f64> = sum.iter().map(|v| v / n).collect();
    Ok(mse(&estimate, &mean_vector(data)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BaselineResult {
    pub sigma: f64,
    pub mse: f64,
    pub mse_ci95: f64,
}

/// Central Gaussian mechanism with `l2` sensitivity `c` on the sum.
pub fn run_gaussian_baseline(
    data: &[Vec<f64>],
    target_eps: f64,
    delta: f64,
    c: f64,
    trials: usize,
    seed: u64,
) -> Result<BaselineResult> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let sigma = calibrate_gaussian_sigma(target_eps, delta, c)?;
    let truth = mean_vector(data);
    let n = data.len() as f64;
    let per_trial: Vec<f64> = (0..trials as u64)
        .map(|t| {
            let mut rng = derive_rng(seed, Domain::Baseline, t, 0);
            let estimate: Vec<f64> = truth
                .iter()
                .map(|m| (m * n + sigma * rng.sample::<f64, _>(StandardNormal)) / n)
                .collect();
            mse(&estimate, &truth)
        })
        .collect();
    let (mse, mse_ci95) = mean_ci95(&per_trial);
    Ok(BaselineResult { sigma, mse, mse_ci95 })
}

/// Applies `f` to `0..count` on all available cores, keeping index order.
fn parallel_map<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(count.max(1));
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let value = f(i);
                out.lock().unwrap()[i] = Some(value);
            });
        }
    });
    out.into_inner().unwrap().into_iter().map(Option::unwrap).collect()
}

/// Values given either as a single number or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Sweep configuration read by the `dme` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmeConfig {
    pub clip_norm: f64,
    pub bit_width: OneOrMany<u32>,
    pub num_clients: OneOrMany<usize>,
    pub dim: OneOrMany<usize>,
    pub epsilon: OneOrMany<f64>,
    /// Defaults to `1/n^2` rounded down to a power of ten.
    pub delta: Option<f64>,
    pub bound_multiplier: f64,
    pub rounding_bias: f64,
    pub scale_rule: ScaleRule,
    pub trials: usize,
}

impl Default for DmeConfig {
    fn default() -> Self {
        DmeConfig {
            clip_norm: 10.0,
            bit_width: OneOrMany::Many(vec![12, 14, 16, 18, 20]),
            num_clients: OneOrMany::Many(vec![100, 1000]),
            dim: OneOrMany::Many(vec![1 << 10, 1 << 14]),
            epsilon: OneOrMany::Many(vec![1.0, 3.0, 10.0]),
            delta: None,
            bound_multiplier: 3.0,
            rounding_bias: DEFAULT_ROUNDING_BIAS,
            scale_rule: ScaleRule::Consistent,
            trials: 10,
        }
    }
}

impl DmeConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: DmeConfig =
            serde_json::from_str(text).map_err(|e| invalid("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.grid().is_empty() {
            return Err(invalid("config", "the grid is empty"));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(invalid("delta", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Grid points sorted by `(bit_width, dim, num_clients, epsilon)`.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &bit_width in &self.bit_width.to_vec() {
            for &dim in &self.dim.to_vec() {
                for &num_clients in &self.num_clients.to_vec() {
                    for &epsilon in &self.epsilon.to_vec() {
                        points.push(GridPoint {
                            bit_width,
                            dim,
                            num_clients,
                            epsilon,
                            delta: self.delta.unwrap_or_else(|| default_delta(num_clients)),
                        });
                    }
                }
            }
        }
        points.sort_by(|a, b| {
            (a.bit_width, a.dim, a.num_clients)
                .cmp(&(b.bit_width, b.dim, b.num_clients))
                .then(a.epsilon.total_cmp(&b.epsilon))
        });
        points
    }
}

/// `1/n^2` rounded down to a power of ten.
pub fn default_delta(n: usize) -> f64 {
    10f64.powf((1.0 / (n as f64 * n as f64)).log10().floor())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub bit_width: u32,
    pub dim: usize,
    pub num_clients: usize,
    pub epsilon: f64,
    pub delta: f64,
}

/// Outcome of one grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DmeReport {
    pub point: GridPoint,
    pub config: Option<AggregationConfig>,
    pub epsilon: f64,
    pub delta: f64,
    pub bit_width: u32,
    pub mse: Option<f64>,
    pub mse_ci95: Option<f64>,
    pub baseline_mse: Option<f64>,
    pub baseline_ci95: Option<f64>,
    pub baseline_sigma: Option<f64>,
    pub trials: usize,
    /// `None` when the point ran, otherwise why it could not.
    pub error: Option<String>,
}

impl DmeReport {
    pub fn mse_ratio(&self) -> Option<f64> {
        Some(self.mse? / self.baseline_mse?)
    }
}

/// Runs one grid point; pipeline failures are returned, not recorded.
pub fn run_dme_point(
    point: GridPoint,
    sweep: &DmeConfig,
    seed: u64,
) -> Result<DmeReport> {
    let data = generate_sphere_data(point.num_clients, point.dim, sweep.clip_norm, seed)?;
    let base = AggregationConfig::new(
        sweep.clip_norm,
        point.bit_width,
        0.0,
        point.num_clients,
        point.dim,
        sweep.bound_multiplier,
        0,
    )?
    .with_rounding_bias(sweep.rounding_bias)?
    .with_scale_rule(sweep.scale_rule)?;
    let config = calibrate_aggregation(&base, point.epsilon, point.delta)?;
    let per_trial = parallel_map(sweep.trials, |t| run_dme_trial(&config, &data, seed, t as u64))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let (mse, ci) = mean_ci95(&per_trial);
    let baseline = run_gaussian_baseline(&data, point.epsilon, point.delta, sweep.clip_norm, sweep.trials, seed)?;
    Ok(DmeReport {
        point,
        config: Some(config),
        epsilon: point.epsilon,
        delta: point.delta,
        bit_width: point.bit_width,
        mse: Some(mse),
        mse_ci95: Some(ci),
        baseline_mse: Some(baseline.mse),
        baseline_ci95: Some(baseline.mse_ci95),
        baseline_sigma: Some(baseline.sigma),
        trials: sweep.trials,
        error: None,
    })
}

/// Every grid point in order; a failing point is reported and skipped.
pub fn run_dme_sweep(sweep: &DmeConfig, seed: u64) -> Result<Vec<DmeReport>> {
    sweep.validate()?;
    Ok(sweep
        .grid()
        .into_iter()
        .map(|point| {
            run_dme_point(point, sweep, seed).unwrap_or_else(|e| DmeReport {
                point,
                config: None,
                epsilon: point.epsilon,
                delta: point.delta,
                bit_width: point.bit_width,
                mse: None,
                mse_ci95: None,
                baseline_mse: None,
                baseline_ci95: None,
                baseline_sigma: None,
                trials: sweep.trials,
                error: Some(e.to_string()),
            })
        })
        .collect())
}

/// One CSV line of the sweep output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmeRow {
    pub method: String,
    pub bit_width: u32,
    pub dim: usize,
    pub num_clients: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub central_variance: Option<f64>,
    pub scale: Option<f64>,
    pub mse: Option<f64>,
    pub mse_ci95: Option<f64>,
    pub trials: usize,
    pub error: Option<String>,
}

/// Two rows per report: `skellam` then `gaussian`.
pub fn report_rows(reports: &[DmeReport]) -> Vec<DmeRow> {
    let mut rows = Vec::with_capacity(2 * reports.len());
    for r in reports {
        let p = r.point;
        let row = |method: &str, variance, scale, mse, ci| DmeRow {
            method: method.to_string(),
            bit_width: p.bit_width,
            dim: p.dim,
            num_clients: p.num_clients,
            epsilon: p.epsilon,
            delta: p.delta,
            central_variance: variance,
            scale,
            mse,
            mse_ci95: ci,
            trials: r.trials,
            error: r.error.clone(),
        };
        let cfg = r.config.as_ref();
        rows.push(row(
            "skellam",
            cfg.map(|c| c.central_variance),
            cfg.map(|c| c.scale),
            r.mse,
            r.mse_ci95,
        ));
        rows.push(row(
            "gaussian",
            r.baseline_sigma.map(|s| s * s),
            None,
            r.baseline_mse,
            r.baseline_ci95,
        ));
    }
    rows
}

pub fn write_csv<W: Write>(reports: &[DmeReport], out: W) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in report_rows(reports) {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Full configuration, seed and results, written next to the CSV.
#[derive(Serialize)]
pub struct Sidecar<'a> {
    pub seed: u64,
    pub config: &'a DmeConfig,
    pub streams: &'static str,
    pub reports: &'a [DmeReport],
}

pub const STREAM_NOTE: &str = "ChaCha20 keyed by (seed, domain, trial) with the client index as stream id; \
domains: data=1, client=2, baseline=3, signs=4, sample=5, harness=6";

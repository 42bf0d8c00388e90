//! Cross-module numeric checks behind the `verify` command.

use serde::Serialize;

use crate::bessel::{delta_bound, log_bessel_ratio, DeltaKind};
use crate::error::Result;
use crate::pld::{pld_compose, pld_epsilon, skellam_pld, PldConfig};
use crate::rdp::{default_orders, rdp_to_dp, skellam_rdp_scalar, Mechanism, MechanismSpec, RdpCurve};
use crate::rng::{derive_rng, Domain};
use crate::skellam::{phi, phi_ceiling, renyi_divergence_exact, sample_skellam};
use crate::stats::skellam_chi_square;

/// Outcome of one suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub violations: usize,
    /// First violation, or a summary figure when there is none.
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub quick: bool,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

#[derive(Default)]
struct Tally {
    checks: usize,
    violations: usize,
    first: Option<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.first.is_none() {
                self.first = Some(what());
            }
        }
    }

    fn finish(self, name: &'static str, summary: String) -> SuiteResult {
        SuiteResult {
            name,
            passed: self.violations == 0,
            checks: self.checks,
            violations: self.violations,
            detail: self.first.unwrap_or(summary),
        }
    }
}

fn slack(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

/// Numeric Renyi divergence never exceeds the closed-form scalar bound.
pub fn divergence_bound_suite(quick: bool) -> Result<SuiteResult> {
    let (alphas, shifts, mus): (&[u32], &[i64], &[f64]) = if quick {
        (&[2, 8, 64], &[1, 4], &[4.0, 100.0])
    } else {
        (&[2, 4, 8, 16, 32, 64], &[1, 2, 4, 8], &[4.0, 16.0, 100.0, 1e4])
    };
    let mut tally = Tally::default();
    let mut tightest = f64::INFINITY;
    for &alpha in alphas {
        for &shift in shifts {
            for &mu in mus {
                let exact = renyi_divergence_exact(alpha, shift, mu)?;
                let bound = skellam_rdp_scalar(alpha, shift, mu)?;
                tightest = tightest.min(bound - exact);
                tally.check(exact <= bound + slack(bound), || {
                    format!("alpha={alpha} shift={shift} mu={mu}: {exact} > {bound}")
                });
            }
        }
    }
    Ok(tally.finish("divergence_bound", format!("smallest gap {tightest:.3e}")))
}

/// `Phi` never exceeds its ceiling over `X` in `[-5 a s, 5 a s]`.
pub fn phi_ceiling_suite(quick: bool) -> Result<SuiteResult> {
    let (alphas, shifts, mus): (&[u32], &[i64], &[f64]) = if quick {
        (&[2, 8], &[1, 4], &[10.0, 1e3])
    } else {
        (&[2, 3, 4, 8], &[1, 2, 4], &[10.0, 50.0, 1e3])
    };
    let mut tally = Tally::default();
    for &alpha in alphas {
        for &shift in shifts {
            for &mu in mus {
                let ceiling = phi_ceiling(alpha, shift, mu);
                let reach = 5 * alpha as i64 * shift;
                for x in -reach..=reach {
                    let value = phi(x, alpha, shift, mu)?;
                    tally.check(value <= ceiling + slack(ceiling), || {
                        format!("X={x} alpha={alpha} shift={shift} mu={mu}: {value} > {ceiling}")
                    });
                }
            }
        }
    }
    Ok(tally.finish("phi_ceiling", "no violations".into()))
}

/// `asinh(delta_0) <= log(I_{v-1}/I_v) <= asinh(delta_2)` for every order
/// touched by the `Phi` grid.
pub fn ratio_bracket_suite(quick: bool) -> Result<SuiteResult> {
    let (alphas, shifts, mus): (&[u32], &[i64], &[f64]) = if quick {
        (&[2, 8], &[1, 4], &[10.0, 1e3])
    } else {
        (&[2, 3, 4, 8], &[1, 2, 4], &[10.0, 50.0, 1e3])
    };
    let mut tally = Tally::default();
    for &alpha in alphas {
        for &shift in shifts {
            for &mu in mus {
                let top = 6 * alpha as i64 * shift;
                for nu in 1..=top {
                    let r = log_bessel_ratio(nu, mu)?;
                    let lo = delta_bound(DeltaKind::Lower, nu as f64, mu)?.asinh();
                    let hi = delta_bound(DeltaKind::Upper, nu as f64, mu)?.asinh();
                    tally.check(lo <= r + slack(r) && r <= hi + slack(hi), || {
                        format!("nu={nu} mu={mu}: {lo} <= {r} <= {hi} fails")
                    });
                }
            }
        }
    }
    Ok(tally.finish("ratio_bracket", "no violations".into()))
}

/// Composed PLD epsilon stays at or below the RDP conversion.
pub fn pld_vs_rdp_suite(quick: bool) -> Result<SuiteResult> {
    let rounds: &[u64] = if quick { &[1, 30] } else { &[1, 30, 1000] };
    let delta = 1e-6;
    let config = PldConfig::default();
    let mut tally = Tally::default();
    let mut largest = 0.0f64;
    for &mu in &[25.0, 100.0] {
        let single = skellam_pld(1, mu, &config)?;
        let spec = MechanismSpec::scalar(1.0, mu)?;
        let curve = RdpCurve::for_mechanism(Mechanism::Skellam, &spec, &default_orders())?;
        for &t in rounds {
            let eps_pld = pld_epsilon(&pld_compose(&single, t, &config)?, delta)?;
            let eps_rdp = rdp_to_dp(&curve.repeated(t), delta)?.epsilon;
            largest = largest.max(eps_pld / eps_rdp);
            tally.check(eps_pld.is_finite() && eps_rdp.is_finite() && eps_pld <= eps_rdp, || {
                format!("mu={mu} T={t}: pld {eps_pld} vs rdp {eps_rdp}")
            });
        }
    }
    Ok(tally.finish("pld_vs_rdp", format!("largest pld/rdp ratio {largest:.4}")))
}

/// Sums of ten `Sk(0, 1)` draws fit `Sk(0, 10)`.
pub fn closure_suite(quick: bool, seed: u64) -> Result<SuiteResult> {
    let trials = if quick { 100_000 } else { 1_000_000 };
    let mut rng = derive_rng(seed, Domain::Sample, 0, 0);
    let draws = sample_skellam(1.0, 10 * trials, &mut rng)?;
    let sums: Vec<i64> = draws.chunks(10).map(|c| c.iter().sum()).collect();
    let test = skellam_chi_square(&sums, 10.0, 5.0)?;
    let mut tally = Tally::default();
    tally.check(test.p_value > 1e-3, || {
        format!("chi2 {:.2} on {} dof, p {:.2e}", test.statistic, test.dof, test.p_value)
    });
    Ok(tally.finish("closure", format!("chi2 {:.2} on {} dof, p {:.3}", test.statistic, test.dof, test.p_value)))
}

/// Runs every suite; an evaluation error counts as a failed suite.
pub fn run_all(quick: bool) -> VerifyReport {
    let runs: Vec<(&'static str, Result<SuiteResult>)> = vec![
        ("divergence_bound", divergence_bound_suite(quick)),
        ("phi_ceiling", phi_ceiling_suite(quick)),
        ("ratio_bracket", ratio_bracket_suite(quick)),
        ("pld_vs_rdp", pld_vs_rdp_suite(quick)),
        ("closure", closure_suite(quick, 0)),
    ];
    let suites: Vec<SuiteResult> = runs
        .into_iter()
        .map(|(name, r)| {
            r.unwrap_or_else(|e| SuiteResult {
                name,
                passed: false,
                checks: 0,
                violations: 1,
                detail: e.to_string(),
            })
        })
        .collect();
    VerifyReport {
        quick,
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

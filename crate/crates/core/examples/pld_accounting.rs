//! Tight accounting for the scalar Skellam mechanism by privacy loss
//! distributions, next to the RDP conversion of the same composition.

use skellam::pld::{pld_compose, pld_delta, pld_epsilon, skellam_pld, PldConfig};
use skellam::rdp::{default_orders, rdp_to_dp, Mechanism, MechanismSpec, RdpCurve};

fn main() -> anyhow::Result<()> {
    let config = PldConfig::default();
    let delta = 1e-6;
    println!("  mu  rounds   eps_pld    eps_rdp");
    for &mu in &[25.0, 100.0] {
        let single = skellam_pld(1, mu, &config)?;
        let curve = RdpCurve::for_mechanism(
            Mechanism::Skellam,
            &MechanismSpec::scalar(1.0, mu)?,
            &default_orders(),
        )?;
        for &rounds in &[1u64, 30, 1000] {
            let composed = pld_compose(&single, rounds, &config)?;
            let eps_pld = pld_epsilon(&composed, delta)?;
            let eps_rdp = rdp_to_dp(&curve.repeated(rounds), delta)?.epsilon;
            println!("{mu:>4}  {rounds:>6}   {eps_pld:<9.4}  {eps_rdp:.4}");
        }
    }

    let pld = skellam_pld(1, 1.0, &config)?;
    println!("single release at mu = 1:");
    for eps in [0.0, 0.5, 1.0, 2.0] {
        println!("  delta({eps}) = {:.6e}", pld_delta(&pld, eps));
    }
    Ok(())
}

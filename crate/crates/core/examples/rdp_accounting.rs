//! RDP curves of the Skellam and Gaussian mechanisms, their (eps, delta)
//! conversion under composition, and calibration of the Skellam variance.

use skellam::rdp::{
    calibrate_mu, default_orders, l1_from_l2, rdp_to_dp, Mechanism, MechanismSpec, RdpCurve,
};

fn main() -> anyhow::Result<()> {
    let orders = default_orders();
    let delta = 1e-5;

    println!("scalar query, sensitivity 1, 100 rounds");
    println!("    mu     skellam_eps   gaussian_eps");
    for &mu in &[10.0, 100.0, 1_000.0, 10_000.0] {
        let spec = MechanismSpec::scalar(1.0, mu)?;
        let sk = RdpCurve::for_mechanism(Mechanism::Skellam, &spec, &orders)?.repeated(100);
        let ga = RdpCurve::for_mechanism(Mechanism::Gaussian, &spec, &orders)?.repeated(100);
        println!(
            "{mu:>7}   {:<12.5}  {:<12.5}",
            rdp_to_dp(&sk, delta)?.epsilon,
            rdp_to_dp(&ga, delta)?.epsilon
        );
    }

    // A d-dimensional vector query with L2 sensitivity 1, scaled by s before
    // integer noise is added.
    let dim = 1 << 16;
    let scale = 64.0;
    let template = MechanismSpec::new(l1_from_l2(1.0, dim)?, 1.0, 1.0, scale)?;
    for &target in &[1.0, 3.0, 10.0] {
        let mu = calibrate_mu(target, delta, &template, 1, &orders)?;
        let sigma2_rdp = calibrate_gaussian_rdp(target, delta, &orders)?;
        println!("eps {target:>4}: skellam mu {mu:.5}  gaussian (rdp) sigma^2 {sigma2_rdp:.5}");
    }
    Ok(())
}

fn calibrate_gaussian_rdp(target: f64, delta: f64, orders: &[u32]) -> anyhow::Result<f64> {
    let (mut lo, mut hi) = (1e-6f64, 1e6f64);
    while hi / lo > 1.0001 {
        let mid = (lo * hi).sqrt();
        let spec = MechanismSpec::scalar(1.0, mid)?;
        let curve = RdpCurve::for_mechanism(Mechanism::Gaussian, &spec, orders)?;
        if rdp_to_dp(&curve, delta)?.epsilon <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

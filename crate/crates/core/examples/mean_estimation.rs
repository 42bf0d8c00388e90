//! Private mean estimation with distributed Skellam noise against a central
//! analytic-Gaussian baseline at the same (eps, delta), across bit widths.

use skellam::dme::{run_dme_sweep, DmeConfig, OneOrMany};

fn main() -> anyhow::Result<()> {
    let sweep = DmeConfig {
        clip_norm: 10.0,
        bit_width: OneOrMany::Many(vec![12, 14, 16, 18, 20]),
        num_clients: OneOrMany::One(100),
        dim: OneOrMany::One(1024),
        epsilon: OneOrMany::One(10.0),
        delta: Some(1e-4),
        trials: 10,
        ..DmeConfig::default()
    };
    println!("bits  mu          scale        skellam_mse   gaussian_mse  ratio");
    for r in run_dme_sweep(&sweep, 2021)? {
        match (&r.config, r.mse, r.baseline_mse) {
            (Some(c), Some(m), Some(g)) => println!(
                "{:>4}  {:<10.4}  {:<11.3}  {:<12.4e}  {:<12.4e}  {:.3}",
                r.bit_width, c.central_variance, c.scale, m, g, m / g
            ),
            _ => println!("{:>4}  {}", r.bit_width, r.error.unwrap_or_default()),
        }
    }
    Ok(())
}

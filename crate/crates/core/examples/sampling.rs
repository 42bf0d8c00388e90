//! Draw from the symmetric Skellam distribution and compare the empirical
//! histogram with the exact pmf.

use skellam::rng::{derive_rng, Domain};
use skellam::skellam::{sample_skellam, skellam_log_pmf, SkellamParams};
use skellam::stats::{mean_and_variance, skellam_chi_square};

fn main() -> anyhow::Result<()> {
    let variance = 5.0;
    let count = 1_000_000;
    let mut rng = derive_rng(7, Domain::Sample, 0, 0);
    let draws = sample_skellam(variance, count, &mut rng)?;

    let params = SkellamParams::new(0, variance)?;
    println!("  k   empirical   exact");
    for k in -6..=6 {
        let seen = draws.iter().filter(|&&d| d == k).count() as f64 / count as f64;
        let exact = skellam_log_pmf(k, &params)?.exp();
        println!("{k:>3}   {seen:.6}    {exact:.6}");
    }

    let as_f64: Vec<f64> = draws.iter().map(|&d| d as f64).collect();
    let (mean, var) = mean_and_variance(&as_f64);
    let fit = skellam_chi_square(&draws, variance, 5.0)?;
    println!("mean {mean:.5}, variance {var:.5} (target {variance})");
    println!("chi-square {:.2} on {} dof, p = {:.3}", fit.statistic, fit.dof, fit.p_value);

    // Very large variances stay exact: each draw is a difference of Poissons.
    let big = sample_skellam(1e12, 3, &mut rng)?;
    println!("three draws at variance 1e12: {big:?}");
    Ok(())
}

//! Turning a real vector into integers: clip, pad, rotate, then round
//! conditionally so the integer vector carries a certified norm bound.

use rand::Rng;
use rand_distr::StandardNormal;
use skellam::quantize::{
    clip_l2, conditional_round, inverse_randomized_hadamard, l2_norm, padded_dim,
    randomized_hadamard, zero_pad, QuantizerConfig,
};
use skellam::rng::{derive_rng, Domain};

fn main() -> anyhow::Result<()> {
    let mut rng = derive_rng(1, Domain::Data, 0, 0);
    let x: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let (clip, scale, seed) = (5.0, 40.0, 99);

    let clipped = clip_l2(&x, clip)?;
    let d = padded_dim(x.len());
    let scaled: Vec<f64> = zero_pad(&clipped, d).iter().map(|v| v * scale).collect();
    let rotated = randomized_hadamard(&scaled, seed)?;
    let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    println!("input norm {:.3}, clipped to {:.3}, padded {} -> {d}", l2_norm(&x), l2_norm(&clipped), x.len());
    println!("largest coordinate before rotation {:.2}, after {:.2}", peak(&scaled), peak(&rotated));

    let config = QuantizerConfig::new(clip, scale, d, seed)?;
    let mut round_rng = derive_rng(1, Domain::Client, 0, 0);
    let rounded = conditional_round(&rotated, &config, &mut round_rng)?;
    let sq: i64 = rounded.values.iter().map(|v| v * v).sum();
    println!(
        "rounded squared norm {sq} <= bound {:.1} after {} attempt(s)",
        rounded.norm_bound, rounded.attempts
    );

    let back: Vec<f64> = rounded.values.iter().map(|&v| v as f64).collect();
    let restored = inverse_randomized_hadamard(&back, seed)?;
    let err: f64 = restored[..x.len()]
        .iter()
        .zip(&clipped)
        .map(|(r, c)| (r / scale - c).powi(2))
        .sum();
    println!("reconstruction squared error {err:.3e} (rounding alone, d/(4 s^2) = {:.3e})", d as f64 / (4.0 * scale * scale));
    Ok(())
}

//! Clients encode noisy integer vectors into Z_{2^b}; the server only sees
//! their modular sum and decodes it back into an estimate of the real sum.

use skellam::dme::generate_sphere_data;
use skellam::rng::{derive_rng, Domain};
use skellam::secagg::{client_encode, secure_sum, server_decode, AggregationConfig};

fn main() -> anyhow::Result<()> {
    let (n, dim, clip) = (50, 200, 1.0);
    let config = AggregationConfig::new(clip, 16, 0.5, n, dim, 3.0, 4242)?;
    println!(
        "b = {}, padded d = {}, scale s = {:.3}, per-client noise variance {:.3}",
        config.bit_width,
        config.padded_dim,
        config.scale,
        config.client_noise_variance()
    );

    let data = generate_sphere_data(n, dim, clip, 3)?;
    let messages = data
        .iter()
        .enumerate()
        .map(|(i, x)| client_encode(x, &config, &mut derive_rng(3, Domain::Client, 0, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    println!("first client's first field elements: {:?}", &messages[0].values()[..6]);

    let z = secure_sum(&messages, config.bit_width)?;
    let estimate = server_decode(&z, &config, n)?;

    let truth: Vec<f64> = (0..dim).map(|j| data.iter().map(|x| x[j]).sum()).collect();
    let mse = estimate.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / dim as f64;
    let expected = n as f64 / (4.0 * config.scale * config.scale) + config.central_variance;
    println!("per-coordinate squared error of the sum {mse:.4} (about {expected:.4} expected)");
    Ok(())
}

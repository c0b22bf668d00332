//! Dynamic agent attention in isolation: window importance scores start at
//! exactly 1 (plain agent attention) and reweighting changes the output.

use gfrrn::attention::{window_partition, AttentionConfig, Daa};
use gfrrn::nn::{Init, ParamBuilder};
use gfrrn::params::ParamStore;
use gfrrn::tensor::Tensor;
use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = AttentionConfig {
        channels: 16,
        heads: 4,
        window: (4, 4),
        n_agents: 4,
    };
    let mut store = ParamStore::new();
    let mut pb = ParamBuilder::new(&mut store, 7);
    let daa = Daa::new(&mut pb, "daa", cfg, Init::Kaiming);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Tensor::constant(ArrayD::from_shape_fn(IxDyn(&[1, 16, 12, 12]), |_| {
        rng.gen::<f64>()
    }));
    let (tokens, grid) = window_partition(&x, cfg.window).unwrap();
    println!(
        "12x12 map -> {} windows of {} tokens",
        grid.num_windows(),
        cfg.window.0 * cfg.window.1
    );

    let scores = daa.scores(&tokens);
    println!("importance scores at init: {:?}", scores.to_array().iter().collect::<Vec<_>>());

    let y_plain = daa.forward(&tokens).unwrap();
    let forced = Tensor::constant(ArrayD::from_shape_fn(IxDyn(&[grid.num_windows(), 1]), |d| {
        if d[0] == 0 { 0.2 } else { 1.8 }
    }));
    let y_forced = daa.forward_with_scores(&tokens, &forced).unwrap();
    let diff = y_plain
        .to_array()
        .iter()
        .zip(y_forced.to_array().iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    println!("max output change after forcing scores to 0.2/1.8: {diff:.4}");
}

//! End-to-end inference: run the full network on a synthetic mixture and
//! write the predicted transmission/reflection/residual layers as PNGs.

use gfrrn::img::Image;
use gfrrn::labels::{synthesize_mixture, SynthesisParams};
use gfrrn::network::{Gfrrn, NetworkConfig};
use gfrrn::params::ParamStore;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smooth_image(n: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array3::from_shape_fn((n, n, 3), |_| rng.gen::<f64>());
    Image::from_clipped(gfrrn::labels::lowpass_2d(&noise, 1.5).unwrap())
}

fn main() {
    let t = smooth_image(48, 1);
    let r = smooth_image(48, 2);
    let (i, _) = synthesize_mixture(&t, &r, &SynthesisParams::sample(3), 1.5).unwrap();

    let mut store = ParamStore::new();
    let model = Gfrrn::new(&mut store, NetworkConfig::tiny(), 4);
    let out = model.forward(&i.to_tensor()).unwrap();

    let dir = std::env::temp_dir().join("gfrrn_inference");
    std::fs::create_dir_all(&dir).unwrap();
    i.save_png(&dir.join("input.png")).unwrap();
    Image::from_tensor_clipped(&out.t_hat).save_png(&dir.join("t_hat.png")).unwrap();
    Image::from_tensor_clipped(&out.r_hat).save_png(&dir.join("r_hat.png")).unwrap();

    // training drives I - (T̂ + R̂ + N̂) toward zero; untrained it is large
    let recon = out.t_hat.add(&out.r_hat).add(&out.n_hat);
    let err = recon
        .to_array()
        .iter()
        .zip(i.to_tensor().to_array().iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / (48.0 * 48.0 * 3.0);
    println!("untrained net, mean |I - (T̂+R̂+N̂)| = {err:.4}");
    println!("layers written to {}", dir.display());

    // the importance map used by the weight-inspection tooling
    let map = model.wie_importance_map(&i.to_tensor()).unwrap();
    let mv = map.to_array();
    let (lo, hi) = mv
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    println!("window importance scores span [{lo:.3}, {hi:.3}] (1 = neutral at init)");
}

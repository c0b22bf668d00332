//! Train a tiny model for a handful of steps on synthetic data, checkpoint
//! it, and resume — the full training loop in miniature.

use gfrrn::config::{ModelConfig, TrainSettings};
use gfrrn::img::Image;
use gfrrn::train::{ReflectionLabelKind, Trainer};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_image(n: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(Array3::from_shape_fn((n, n, 3), |_| rng.gen())).unwrap()
}

fn main() {
    let model = ModelConfig {
        channels: vec![8, 16],
        depths: vec![1, 1],
        heads: 2,
        window: 4,
        mlp_ratio: 2,
        decoder_k: 1,
        decoder_heads: 2,
        decoder_window: 4,
        n_agents: 4,
        ..ModelConfig::default()
    };
    let train = TrainSettings {
        learning_rate: 1e-3,
        image_size: 16,
        seed: 11,
        ..TrainSettings::default()
    };
    let sources: Vec<_> = (0..2)
        .map(|i| (rand_image(16, 20 + i), rand_image(16, 30 + i)))
        .collect();

    let out_dir = std::env::temp_dir().join("gfrrn_train_tiny");
    let mut tr = Trainer::new(&model, &train).unwrap();
    let hist = tr
        .fit(&sources, 2, 0, 12, ReflectionLabelKind::Unified, 1.0, Some(&out_dir))
        .unwrap();
    println!(
        "{}/{} trainable parameters",
        hist.trainable_params, hist.total_params
    );
    for row in &hist.rows {
        println!(
            "step {:>2}  content {:.4}  exclusion {:.6}  perceptual {:.4}  recon {:.4}  total {:.4}",
            row.step, row.content, row.exclusion, row.perceptual, row.reconstruction, row.total
        );
    }

    // resume from the first checkpoint and keep going
    let mut resumed = Trainer::new(&model, &train).unwrap();
    let epoch = resumed.load_checkpoint(&hist.checkpoints[0]).unwrap();
    let hist2 = resumed
        .fit(&sources, 1, epoch + 1, 12, ReflectionLabelKind::Unified, 1.0, None)
        .unwrap();
    println!(
        "resumed from epoch {epoch}: next total {:.4} (matches the uninterrupted run)",
        hist2.rows.last().unwrap().total
    );
    println!("checkpoints and metrics.csv in {}", out_dir.display());
}

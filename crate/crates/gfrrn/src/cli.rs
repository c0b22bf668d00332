//! Command-line front end: dataset synthesis, label generation, training,
//! evaluation, filter analysis, and checkpoint inspection.
//!
//! Exit codes: 0 on success, 1 on a validation error (bad flags, bad
//! config, malformed inputs), 2 on a runtime failure.

use crate::config::Config;
use crate::dataset::{write_label_cache, DatasetManifest};
use crate::error::Error;
use crate::eval::evaluate_dataset;
use crate::frequency::{build_mask, impulse_response, ringing_metric, FrequencyMask, MaskKind, MaskParams};
use crate::img::Image;
use crate::labels::{default_label_sigma, generate_unified_labels, lowpass_2d, synthesize_mixture, SynthesisParams};
use crate::params::TuningMode;
use crate::train::{ReflectionLabelKind, Trainer};
use clap::{Parser, Subcommand, ValueEnum};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "gfrrn", about = "Gap-free single-image reflection removal", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of <pair>/I.png + T.png directories
    Synth {
        /// Output dataset root
        #[arg(long)]
        out: PathBuf,
        /// Number of pairs to generate
        #[arg(long, default_value_t = 4)]
        pairs: usize,
        /// Square image size in pixels
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Base RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decompose one I/T pair into the three supervision labels
    Labels {
        /// Directory holding I.png and T.png
        #[arg(long = "in")]
        input: PathBuf,
        /// Low-pass sigma in pixels (default scales with image size)
        #[arg(long)]
        sigma: Option<f64>,
        /// Output directory for the label files
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset of I/T pairs
    Train {
        /// TOML config; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset root of <pair>/I.png + T.png directories
        #[arg(long)]
        data_root: PathBuf,
        /// Override the tuning mode from the config
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Total optimizer steps (rounded up to whole epochs)
        #[arg(long)]
        steps: Option<usize>,
        /// Which reflection label to train against
        #[arg(long, value_enum, default_value_t = LabelArg::Unified)]
        label_kind: LabelArg,
        /// Checkpoint to resume from
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Directory for checkpoints and metrics.csv
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset, reporting PSNR/SSIM per pair
    Eval {
        /// TOML config; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset root (scanned for <pair>/I.png + T.png)
        #[arg(long, conflicts_with = "manifest")]
        data_root: Option<PathBuf>,
        /// Explicit manifest file (pair_id,i_path,t_path lines)
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Trained checkpoint; untrained weights when omitted
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory for report.csv and report.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare Gaussian and rectangular low-pass masks by ringing
    AnalyzeFilters {
        /// Frequency-grid size (size x size)
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Output directory for the CSV and surface plots
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a checkpoint's window-importance scores over an image
    InspectWeights {
        /// TOML config; must match the checkpoint
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trained checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input PNG
        #[arg(long)]
        image: PathBuf,
        /// Output directory for importance.png and importance.csv
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Frozen,
    Fft,
    Mona,
}

impl From<ModeArg> for TuningMode {
    fn from(m: ModeArg) -> TuningMode {
        match m {
            ModeArg::Frozen => TuningMode::Frozen,
            ModeArg::Fft => TuningMode::Fft,
            ModeArg::Mona => TuningMode::Mona,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    Unified,
    Difference,
}

impl From<LabelArg> for ReflectionLabelKind {
    fn from(k: LabelArg) -> ReflectionLabelKind {
        match k {
            LabelArg::Unified => ReflectionLabelKind::Unified,
            LabelArg::Difference => ReflectionLabelKind::Difference,
        }
    }
}

/// Parse args and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) | Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Synth { out, pairs, size, seed } => synth(&out, pairs, size, seed),
        Command::Labels { input, sigma, out } => labels(&input, sigma, &out),
        Command::Train {
            config,
            data_root,
            mode,
            steps,
            label_kind,
            resume,
            out_dir,
        } => train(config, &data_root, mode, steps, label_kind, resume, &out_dir),
        Command::Eval {
            config,
            data_root,
            manifest,
            checkpoint,
            out,
        } => eval(config, data_root, manifest, checkpoint, &out),
        Command::AnalyzeFilters { size, out } => analyze_filters(size, &out),
        Command::InspectWeights {
            config,
            checkpoint,
            image,
            out,
        } => inspect_weights(config, &checkpoint, &image, &out),
    }
}

fn load_config(path: Option<PathBuf>) -> Result<Config, Error> {
    match path {
        Some(p) => Config::load(&p),
        None => Ok(Config::default()),
    }
}

/// Smooth noise blended with an oriented sinusoid: enough structure for
/// gradients and enough variety across seeds.
fn procedural_image(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array3::from_shape_fn((size, size, 3), |_| rng.gen::<f64>());
    let smooth = lowpass_2d(&noise, (size as f64 / 24.0).max(0.5)).expect("sigma > 0");
    let lo = smooth.iter().cloned().fold(f64::MAX, f64::min);
    let hi = smooth.iter().cloned().fold(f64::MIN, f64::max);
    let span = (hi - lo).max(1e-12);
    let (fx, fy) = (rng.gen_range(2.0..8.0), rng.gen_range(2.0..8.0));
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let pixels = Array3::from_shape_fn((size, size, 3), |(y, x, c)| {
        let base = (smooth[[y, x, c]] - lo) / span;
        let s = (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) / size as f64 + phase)
            .sin()
            * 0.5
            + 0.5;
        0.65 * base + 0.35 * s
    });
    Image::from_clipped(pixels)
}

fn synth(out: &std::path::Path, pairs: usize, size: usize, seed: u64) -> Result<(), Error> {
    if pairs == 0 {
        return Err(Error::invalid("synth: --pairs must be at least 1"));
    }
    if size < 8 {
        return Err(Error::invalid("synth: --size must be at least 8"));
    }
    std::fs::create_dir_all(out)?;
    for idx in 0..pairs as u64 {
        let t = procedural_image(size, seed ^ (idx * 2 + 1));
        let r = procedural_image(size, seed ^ (idx * 2 + 2));
        let params = SynthesisParams::sample(seed ^ (idx << 32));
        let sigma = default_label_sigma(size, size);
        let (i, _) = synthesize_mixture(&t, &r, &params, sigma)?;
        let dir = out.join(format!("pair_{idx:03}"));
        std::fs::create_dir_all(&dir)?;
        i.save_png(&dir.join("I.png"))?;
        t.save_png(&dir.join("T.png"))?;
    }
    let manifest = DatasetManifest::scan(out)?;
    manifest.save(&out.join("manifest.csv"))?;
    println!("wrote {} pairs under {}", pairs, out.display());
    Ok(())
}

fn labels(input: &std::path::Path, sigma: Option<f64>, out: &std::path::Path) -> Result<(), Error> {
    let i = Image::load_png(&input.join("I.png"))?;
    let t = Image::load_png(&input.join("T.png"))?;
    let sigma = sigma.unwrap_or_else(|| default_label_sigma(i.height(), i.width()));
    let triplet = generate_unified_labels(&i, &t, sigma)?;
    write_label_cache(out, &triplet)?;
    println!(
        "wrote transmission.png, reflection.png, residual.png to {} (sigma {:.3}, reconstruction error {:.3e})",
        out.display(),
        sigma,
        triplet.reconstruction_error(&i)
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    config: Option<PathBuf>,
    data_root: &std::path::Path,
    mode: Option<ModeArg>,
    steps: Option<usize>,
    label_kind: LabelArg,
    resume: Option<PathBuf>,
    out_dir: &std::path::Path,
) -> Result<(), Error> {
    let mut cfg = load_config(config)?;
    if let Some(m) = mode {
        cfg.model.tuning_mode = m.into();
    }
    let manifest = DatasetManifest::scan(data_root)?;
    let mut pairs = Vec::new();
    for e in &manifest.entries {
        pairs.push(manifest.load_pair(e)?);
    }
    let steps = steps.unwrap_or(cfg.train.epochs * pairs.len());
    if steps == 0 {
        return Err(Error::invalid("train: zero steps requested"));
    }
    let epochs = steps.div_ceil(pairs.len());
    let sigma = default_label_sigma(pairs[0].0.height(), pairs[0].0.width());

    let mut trainer = Trainer::new(&cfg.model, &cfg.train)?;
    let start_epoch = match resume {
        Some(ckpt) => trainer.load_checkpoint(&ckpt)? + 1,
        None => 0,
    };
    let (trainable, total) = trainer.store.count_elements();
    println!(
        "{} pairs, {epochs} epochs ({} steps), {trainable}/{total} trainable parameters",
        pairs.len(),
        epochs * pairs.len()
    );
    let history = trainer.fit_pairs(
        &pairs,
        epochs,
        start_epoch,
        label_kind.into(),
        sigma,
        Some(out_dir),
    )?;
    let last = history.rows.last().expect("at least one step ran");
    println!(
        "final step {}: total loss {:.6} (metrics.csv and {} checkpoints in {})",
        last.step,
        last.total,
        history.checkpoints.len(),
        out_dir.display()
    );
    Ok(())
}

fn eval(
    config: Option<PathBuf>,
    data_root: Option<PathBuf>,
    manifest: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    out: &std::path::Path,
) -> Result<(), Error> {
    let cfg = load_config(config)?;
    let manifest = match (manifest, data_root) {
        (Some(m), _) => DatasetManifest::load(&m)?,
        (None, Some(root)) => DatasetManifest::scan(&root)?,
        (None, None) => return Err(Error::invalid("eval: need --data-root or --manifest")),
    };
    let mut trainer = Trainer::new(&cfg.model, &cfg.train)?;
    match checkpoint {
        Some(ckpt) => {
            trainer.load_checkpoint(&ckpt)?;
        }
        None => eprintln!("warning: no --checkpoint, evaluating untrained weights"),
    }
    let report = evaluate_dataset(&manifest, &trainer.model)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;
    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    println!(
        "{} pairs: avg PSNR {:.3} dB, avg SSIM {:.5} (report.csv, report.json in {})",
        report.rows.len(),
        report.avg_psnr_db,
        report.avg_ssim,
        out.display()
    );
    Ok(())
}

/// Normalize a surface to [0, 1] and write it as a grayscale PNG.
fn save_surface(grid: &Array2<f64>, path: &std::path::Path) -> Result<(), Error> {
    let lo = grid.iter().cloned().fold(f64::MAX, f64::min);
    let hi = grid.iter().cloned().fold(f64::MIN, f64::max);
    let span = (hi - lo).max(1e-300);
    let (h, w) = grid.dim();
    let pixels = Array3::from_shape_fn((h, w, 3), |(y, x, _)| (grid[[y, x]] - lo) / span);
    Image::from_clipped(pixels).save_png(path)
}

fn analyze_filters(size: usize, out: &std::path::Path) -> Result<(), Error> {
    if size < 8 {
        return Err(Error::invalid("analyze-filters: --size must be at least 8"));
    }
    std::fs::create_dir_all(out)?;
    let mut csv = String::from("kind,param_x,param_y,ringing,min_h,max_h\n");
    let mut analyze = |mask: &FrequencyMask| -> Result<(), Error> {
        let h = impulse_response(mask);
        let mn = h.iter().cloned().fold(f64::MAX, f64::min);
        let mx = h.iter().cloned().fold(f64::MIN, f64::max);
        let (kind, px, py) = match (mask.kind, mask.params) {
            (MaskKind::Gaussian, MaskParams::Sigmas { x, y }) => ("gaussian", x, y),
            (MaskKind::Rectangular, MaskParams::Cutoffs { x, y }) => ("rectangular", x, y),
            _ => unreachable!("build_mask enforces kind/params agreement"),
        };
        csv.push_str(&format!(
            "{kind},{px},{py},{:.6e},{:.6e},{:.6e}\n",
            ringing_metric(mask)?,
            mn,
            mx
        ));
        Ok(())
    };
    for s in [0.02, 0.04, 0.06, 0.08, 0.12] {
        let mask = build_mask(MaskKind::Gaussian, (size, size), MaskParams::Sigmas { x: s, y: s })?;
        analyze(&mask)?;
    }
    for c in [0.1, 0.15, 0.2, 0.3, 0.4] {
        let mask = build_mask(
            MaskKind::Rectangular,
            (size, size),
            MaskParams::Cutoffs { x: c, y: c },
        )?;
        analyze(&mask)?;
    }
    std::fs::write(out.join("ringing.csv"), csv)?;

    let gauss = build_mask(
        MaskKind::Gaussian,
        (size, size),
        MaskParams::Sigmas { x: 0.06, y: 0.06 },
    )?;
    let rect = build_mask(
        MaskKind::Rectangular,
        (size, size),
        MaskParams::Cutoffs { x: 0.25, y: 0.25 },
    )?;
    save_surface(&gauss.grid, &out.join("gaussian_mask.png"))?;
    save_surface(&impulse_response(&gauss), &out.join("gaussian_impulse.png"))?;
    save_surface(&rect.grid, &out.join("rectangular_mask.png"))?;
    save_surface(&impulse_response(&rect), &out.join("rectangular_impulse.png"))?;
    println!("wrote ringing.csv and 4 surface plots to {}", out.display());
    Ok(())
}

fn inspect_weights(
    config: Option<PathBuf>,
    checkpoint: &std::path::Path,
    image: &std::path::Path,
    out: &std::path::Path,
) -> Result<(), Error> {
    let cfg = load_config(config)?;
    let mut trainer = Trainer::new(&cfg.model, &cfg.train)?;
    trainer.load_checkpoint(checkpoint)?;
    let img = Image::load_png(image)?;
    let map = trainer.model.wie_importance_map(&img.to_tensor())?;
    let mv = map.value();
    let s = map.shape();
    let (h, w) = (s[2], s[3]);

    std::fs::create_dir_all(out)?;
    let mut csv = String::new();
    for y in 0..h {
        let row: Vec<String> = (0..w).map(|x| format!("{:.6}", mv[[0, 0, y, x]])).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    std::fs::write(out.join("importance.csv"), csv)?;

    // scores live in (0, 2): map 0 -> blue, 1 -> white, 2 -> red
    let pixels = Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        let v = (mv[[0, 0, y, x]] / 2.0).clamp(0.0, 1.0);
        match c {
            0 => (2.0 * v).min(1.0),
            2 => (2.0 * (1.0 - v)).min(1.0),
            _ => 1.0 - 2.0 * (v - 0.5).abs(),
        }
    });
    Image::from_clipped(pixels).save_png(&out.join("importance.png"))?;
    println!("wrote importance.png and importance.csv to {}", out.display());
    Ok(())
}

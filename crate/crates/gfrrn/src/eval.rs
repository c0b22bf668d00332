//! Dataset evaluation: run a restorer over every manifest pair and score
//! T̂ against T. Read-only over datasets and checkpoints.

use crate::dataset::DatasetManifest;
use crate::error::Result;
use crate::img::Image;
use crate::metrics::{psnr, ssim, MetricsReport, PairMetrics};
use crate::network::Gfrrn;

/// Evaluate an arbitrary restorer (image -> estimated transmission).
pub fn evaluate_dataset_with<F>(manifest: &DatasetManifest, mut restore: F) -> Result<MetricsReport>
where
    F: FnMut(&Image) -> Result<Image>,
{
    let mut rows = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let (i, t) = manifest.load_pair(entry)?;
        let t_hat = restore(&i)?;
        rows.push(PairMetrics {
            pair_id: entry.pair_id.clone(),
            psnr_db: psnr(&t_hat, &t)?,
            ssim: ssim(&t_hat, &t)?,
        });
    }
    Ok(MetricsReport::from_rows(rows))
}

/// Evaluate a trained model; padding/cropping is handled by the forward
/// pass itself.
pub fn evaluate_dataset(manifest: &DatasetManifest, model: &Gfrrn) -> Result<MetricsReport> {
    evaluate_dataset_with(manifest, |i| {
        let out = model.forward(&i.to_tensor())?;
        Ok(Image::from_tensor_clipped(&out.t_hat))
    })
}

//! Dataset to encoded PNG images, optionally through the training transforms.

use std::path::PathBuf;

use signenc::encoder::encode;
use signenc::landmarks::{write_slm, DatasetManifest, SlmHeader};
use signenc::seed::sample_epoch_seed;
use signenc::transforms::{augment, compute_target, uniformize, AugmentParams};
use signenc::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct EncodeOptions {
    pub dataset: PathBuf,
    pub out: PathBuf,
    /// Run seed for augmentation; augmentation is off when absent.
    pub augment_seed: Option<u64>,
    pub epoch: usize,
    /// Uniformize to the target computed over the whole dataset.
    pub uniformize: bool,
    /// Also write the transformed landmarks as `.slm` next to each image.
    pub landmarks: bool,
    pub limit: Option<usize>,
}

/// Writes `<out>/<signer>/<label>/<take>.png`; returns the number of images.
pub fn encode_dataset(opts: &EncodeOptions) -> Result<usize> {
    let manifest = DatasetManifest::open(&opts.dataset)?;
    let plan = if opts.uniformize {
        Some(compute_target(&manifest)?)
    } else {
        None
    };
    let limit = opts.limit.unwrap_or(usize::MAX);
    let mut written = 0;
    for entry in manifest.samples.iter().take(limit) {
        let sample = manifest.load_sample(&opts.dataset, entry)?;
        let mut seq = sample.sequence.clone();
        if let Some(run_seed) = opts.augment_seed {
            let params = AugmentParams::default().with_seed(sample_epoch_seed(run_seed, opts.epoch, &sample.id()));
            seq = augment(&seq, &params)?;
        }
        if let Some(plan) = &plan {
            seq = uniformize(&seq, plan)?;
        }
        let stem = opts.out.join(&sample.signer).join(&sample.label).join(sample.take.to_string());
        let dir = stem.parent().expect("joined path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        encode(&seq)?.save_png(&stem.with_extension("png"))?;
        if opts.landmarks {
            let header = SlmHeader {
                label: Some(sample.label.clone()),
                signer: Some(sample.signer.clone()),
                take: Some(sample.take),
                ..SlmHeader::for_sequence(&seq)
            };
            write_slm(&stem.with_extension("slm"), &header, &seq)?;
        }
        written += 1;
    }
    log::info!("encoded {written} samples into {}", opts.out.display());
    Ok(written)
}

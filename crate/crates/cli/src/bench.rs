//! Single-sequence inference latency: encode, resize and predict.

use std::path::PathBuf;
use std::time::Instant;

use signenc::classifier::ModelState;
use signenc::encoder::{encode, resize};
use signenc::landmarks::{DatasetManifest, LandmarkSequence};
use signenc::metrics::LatencyStats;
use signenc::transforms::{uniformize, UniformizationPlan};
use signenc::{Error, Result};

use crate::synth::{synth_take, SyntheticSpec};

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub model: PathBuf,
    /// Source of sequences; synthetic gestures when absent.
    pub dataset: Option<PathBuf>,
    pub sequences: usize,
    pub frames: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            model: PathBuf::new(),
            dataset: None,
            sequences: 200,
            frames: 60,
            warmup: 5,
            seed: 0,
        }
    }
}

/// `opts.sequences` sequences of exactly `opts.frames` frames.
pub fn bench_sequences(opts: &BenchOptions) -> Result<Vec<LandmarkSequence>> {
    if opts.sequences == 0 || opts.frames == 0 {
        return Err(Error::Argument("benchmark needs at least one sequence of one frame".into()));
    }
    match &opts.dataset {
        Some(root) => {
            let manifest = DatasetManifest::open(root)?;
            if manifest.samples.is_empty() {
                return Err(Error::Argument(format!("{} has no samples", root.display())));
            }
            let plan = UniformizationPlan { target_frames: opts.frames };
            let loaded = manifest
                .samples
                .iter()
                .take(opts.sequences)
                .map(|e| uniformize(&manifest.load_sample(root, e)?.sequence, &plan))
                .collect::<Result<Vec<_>>>()?;
            Ok(loaded.iter().cycle().take(opts.sequences).cloned().collect())
        }
        None => {
            let spec = SyntheticSpec {
                seed: opts.seed,
                ..SyntheticSpec::default()
            };
            (0..opts.sequences)
                .map(|i| synth_take(&spec, i % spec.classes, i / spec.classes % spec.signers, i, opts.frames))
                .collect()
        }
    }
}

/// Times each sequence separately after `warmup` untimed passes.
pub fn bench(state: &ModelState, seqs: &[LandmarkSequence], warmup: usize) -> Result<LatencyStats> {
    if seqs.is_empty() {
        return Err(Error::Argument("no sequences to benchmark".into()));
    }
    let size = state.input_size();
    let once = |s: &LandmarkSequence| -> Result<()> {
        state.predict(&resize(&encode(s)?, size))?;
        Ok(())
    };
    for s in seqs.iter().cycle().take(warmup) {
        once(s)?;
    }
    let mut samples = Vec::with_capacity(seqs.len());
    for s in seqs {
        let t0 = Instant::now();
        once(s)?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    Ok(LatencyStats::from_samples(samples).expect("non-empty"))
}

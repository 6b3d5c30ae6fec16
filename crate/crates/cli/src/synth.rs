//! Synthetic gesture datasets.
//!
//! Every class moves the right hand along one motif from a fixed library
//! (circle, vertical wave, horizontal wave, diagonal sweep, hold-then-move),
//! cycled over classes; classes past the fifth reuse a motif at a higher
//! frequency. The rest of the skeleton stays still. Each signer has its own
//! body position and scale, and each (class, signer) pair its own amplitude
//! and phase. Takes of one pair differ only in frame count and noise, since
//! the motif is a function of normalized time.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use signenc::landmarks::{
    write_slm, DatasetManifest, LandmarkFrame, LandmarkSequence, ManifestEntry, SlmHeader, BODY_KEEP_COUNT,
    FACE_POINTS, HAND_POINTS, LANDMARK_COUNT, MANIFEST_FILE,
};
use signenc::{seed, Error, Result};

pub const MOTIFS: [&str; 5] = ["circle", "vertical-wave", "horizontal-wave", "diagonal-sweep", "hold-then-move"];

const FACE_OFFSET: usize = BODY_KEEP_COUNT;
const LEFT_HAND: usize = FACE_OFFSET + FACE_POINTS;
const RIGHT_HAND: usize = LEFT_HAND + HAND_POINTS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub signers: usize,
    pub takes: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Standard deviation of additive coordinate noise, in normalized units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            signers: 6,
            takes: 5,
            min_frames: 40,
            max_frames: 80,
            noise: 0.01,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.signers == 0 || self.takes == 0 {
            return Err(Error::Argument("classes, signers and takes must be at least 1".into()));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return Err(Error::Argument(format!(
                "invalid frame range {}..={}",
                self.min_frames, self.max_frames
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Argument(format!("noise must be non-negative, got {}", self.noise)));
        }
        Ok(())
    }
}

pub fn class_label(class: usize) -> String {
    format!("{class:02}-{}", MOTIFS[class % MOTIFS.len()])
}

pub fn signer_name(signer: usize) -> String {
    format!("s{:02}", signer + 1)
}

/// Displacement of the right hand at normalized time `s` in `[0, 1]`.
fn motif(class: usize, s: f64, amp: f64, phase: f64) -> [f64; 2] {
    let k = (1 + class / MOTIFS.len()) as f64;
    let a = 0.12 * amp;
    let w = TAU * k * s + phase;
    match class % MOTIFS.len() {
        0 => [a * w.cos(), a * w.sin()],
        1 => [0.0, a * w.sin()],
        2 => [a * w.sin(), 0.0],
        3 => {
            let u = 2.0 * ((k * s + phase / TAU).fract()) - 1.0;
            [a * u, a * u]
        }
        _ => {
            let u = ((s - 0.5) * 2.0).clamp(0.0, 1.0);
            let u = (k * u).min(1.0);
            [a * (2.0 * u - 1.0), -a * u]
        }
    }
}

struct Signer {
    offset: [f64; 2],
    scale: f64,
}

fn template_frame(class: usize, s: f64, signer: &Signer, amp: f64, phase: f64) -> Vec<[f64; 2]> {
    let mut pts = vec![[0.0; 2]; LANDMARK_COUNT];
    // Body in keep-set order: nose, neck, shoulders/elbows/wrists, hips, eyes, ears.
    let body: [[f64; 2]; BODY_KEEP_COUNT] = [
        [0.50, 0.22],
        [0.50, 0.34],
        [0.40, 0.35],
        [0.36, 0.50],
        [0.38, 0.62],
        [0.60, 0.35],
        [0.64, 0.50],
        [0.62, 0.64],
        [0.44, 0.70],
        [0.56, 0.70],
        [0.48, 0.20],
        [0.52, 0.20],
        [0.46, 0.21],
        [0.54, 0.21],
    ];
    pts[..BODY_KEEP_COUNT].copy_from_slice(&body);
    for (i, p) in pts[FACE_OFFSET..LEFT_HAND].iter_mut().enumerate() {
        let t = i as f64 / FACE_POINTS as f64 * TAU;
        *p = [0.50 + 0.05 * t.cos(), 0.21 + 0.065 * t.sin()];
    }
    let hand = |center: [f64; 2], out: &mut [[f64; 2]]| {
        out[0] = center;
        for (i, p) in out[1..].iter_mut().enumerate() {
            let finger = (i / 4) as f64;
            let joint = (i % 4 + 1) as f64;
            *p = [center[0] + (finger - 2.0) * 0.008, center[1] - joint * 0.01];
        }
    };
    hand([0.62, 0.66], &mut pts[LEFT_HAND..RIGHT_HAND]);
    let d = motif(class, s, amp, phase);
    let right = [0.40 + d[0], 0.52 + d[1]];
    hand(right, &mut pts[RIGHT_HAND..]);
    pts[4] = right;
    pts[3] = [(pts[2][0] + right[0]) / 2.0, (pts[2][1] + right[1]) / 2.0 + 0.03];
    for p in &mut pts {
        for (c, o) in p.iter_mut().zip(signer.offset) {
            *c = 0.5 + (*c - 0.5) * signer.scale + o;
        }
    }
    pts
}

/// One take: `frames` samples of the (class, signer) template plus noise.
pub fn synth_take(spec: &SyntheticSpec, class: usize, signer: usize, take: usize, frames: usize) -> Result<LandmarkSequence> {
    let mut rng = seed::rng(seed::derive(spec.seed, &[1, signer as u64]));
    let who = Signer {
        offset: [rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03)],
        scale: rng.gen_range(0.9..1.1),
    };
    let mut rng = seed::rng(seed::derive(spec.seed, &[2, class as u64, signer as u64]));
    let amp = rng.gen_range(0.85..1.15);
    let phase = rng.gen_range(-0.25..0.25);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rng = seed::rng(seed::derive(spec.seed, &[3, class as u64, signer as u64, take as u64]));
    let out = (0..frames)
        .map(|t| {
            let s = if frames > 1 { t as f64 / (frames - 1) as f64 } else { 0.0 };
            let coords = template_frame(class, s, &who, amp, phase)
                .into_iter()
                .map(|[x, y]| {
                    let mut jitter = || if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    [(x + jitter()).clamp(0.0, 1.0), (y + jitter()).clamp(0.0, 1.0)]
                })
                .collect();
            LandmarkFrame::from_coords(coords)
        })
        .collect();
    LandmarkSequence::new(
        out,
        30.0,
        format!("{}/{}/{}", signer_name(signer), class_label(class), take + 1),
    )
}

/// Writes `<out>/<signer>/<label>/<take>.slm` for every sample plus the manifest.
pub fn generate(spec: &SyntheticSpec, out: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let mut entries = Vec::new();
    for signer in 0..spec.signers {
        for class in 0..spec.classes {
            for take in 0..spec.takes {
                let mut rng = seed::rng(seed::derive(spec.seed, &[4, class as u64, signer as u64, take as u64]));
                let frames = rng.gen_range(spec.min_frames..=spec.max_frames);
                let seq = synth_take(spec, class, signer, take, frames)?;
                let (label, who) = (class_label(class), signer_name(signer));
                let rel = format!("{who}/{label}/{}.slm", take + 1);
                let header = SlmHeader {
                    label: Some(label.clone()),
                    signer: Some(who.clone()),
                    take: Some(take as u32 + 1),
                    ..SlmHeader::for_sequence(&seq)
                };
                write_slm(&out.join(&rel), &header, &seq)?;
                entries.push(ManifestEntry {
                    path: rel,
                    label,
                    signer: who,
                    take: take as u32 + 1,
                    frames,
                });
            }
        }
    }
    let manifest = DatasetManifest::from_entries(entries)?;
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_takes_share_a_template() {
        let spec = SyntheticSpec {
            noise: 0.0,
            ..SyntheticSpec::default()
        };
        let a = synth_take(&spec, 2, 1, 0, 41).unwrap();
        let b = synth_take(&spec, 2, 1, 3, 41).unwrap();
        assert_eq!(a.frames(), b.frames());
        let c = synth_take(&spec, 2, 1, 3, 61).unwrap();
        assert_eq!(a.frames()[0], c.frames()[0]);
        assert_eq!(a.frames()[40], c.frames()[60]);
        assert_eq!(a.frames()[20], c.frames()[30]);
    }

    #[test]
    fn classes_move_differently() {
        let spec = SyntheticSpec {
            noise: 0.0,
            ..SyntheticSpec::default()
        };
        let seqs: Vec<_> = (0..5).map(|c| synth_take(&spec, c, 0, 0, 30).unwrap()).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(seqs[i].frames()[10].coords, seqs[j].frames()[10].coords);
            }
        }
    }

    #[test]
    fn coordinates_stay_normalized() {
        let spec = SyntheticSpec {
            noise: 0.2,
            classes: 10,
            ..SyntheticSpec::default()
        };
        for c in 0..10 {
            let s = synth_take(&spec, c, 0, 0, 20).unwrap();
            for f in s.frames() {
                assert!(f.coords.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SyntheticSpec { classes: 0, ..SyntheticSpec::default() },
            SyntheticSpec { min_frames: 9, max_frames: 8, ..SyntheticSpec::default() },
            SyntheticSpec { noise: -1.0, ..SyntheticSpec::default() },
        ] {
            assert!(spec.validate().is_err());
        }
    }
}

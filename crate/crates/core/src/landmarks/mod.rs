//! Landmark ingestion: pose-estimator keypoints to normalized landmark
//! sequences, plus the on-disk formats used by the rest of the pipeline.

mod layout;
mod manifest;
mod openpose;
mod segment;
mod slm;

pub use layout::{
    BodyKeepSet, BODY_KEEP_COUNT, BODY_POINTS, DEFAULT_BODY_KEEP, FACE_POINTS, HAND_POINTS,
    LANDMARK_COUNT,
};
pub use manifest::{build_manifest, DatasetManifest, ManifestEntry, MANIFEST_FILE};
pub use openpose::{parse_keypoint_file, select_landmarks, Keypoint, LandmarkSelector, RawKeypointFrame};
pub use segment::{read_annotations, segment_takes, SegmentAnnotation, DEFAULT_SEGMENT_PAD};
pub use slm::{decode_slm, encode_slm, read_slm, read_slm_header, write_slm, SlmHeader, SLM_MAGIC};

use crate::{Error, Result};

/// Landmark coordinates for one frame. Coordinates are normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub coords: Vec<[f64; 2]>,
    /// `true` where the source keypoint had positive confidence.
    pub valid: Vec<bool>,
}

impl LandmarkFrame {
    /// A frame whose landmarks are all valid.
    pub fn from_coords(coords: Vec<[f64; 2]>) -> Self {
        let valid = vec![true; coords.len()];
        Self { coords, valid }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// An ordered run of frames with identical landmark layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSequence {
    frames: Vec<LandmarkFrame>,
    pub fps: f64,
    pub source_id: String,
}

impl LandmarkSequence {
    /// Checks `T >= 1` and that every frame has the same landmark count.
    pub fn new(frames: Vec<LandmarkFrame>, fps: f64, source_id: impl Into<String>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Shape("a landmark sequence needs at least one frame".into()))?;
        let landmarks = first.len();
        if landmarks == 0 {
            return Err(Error::Shape("frames must contain at least one landmark".into()));
        }
        for (j, f) in frames.iter().enumerate() {
            if f.coords.len() != landmarks || f.valid.len() != landmarks {
                return Err(Error::Shape(format!(
                    "frame {j} has {} landmarks, expected {landmarks}",
                    f.coords.len()
                )));
            }
        }
        Ok(Self {
            frames,
            fps,
            source_id: source_id.into(),
        })
    }

    /// Builds a sequence from freshly selected frames, filling invalid
    /// landmarks with the previous frame's value (or the origin when no
    /// earlier value exists). Validity flags are left untouched.
    pub fn from_selected(
        mut frames: Vec<LandmarkFrame>,
        fps: f64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        for j in 0..frames.len() {
            let (done, rest) = frames.split_at_mut(j);
            let prev = done.last();
            let cur = &mut rest[0];
            for i in 0..cur.coords.len() {
                if !cur.valid[i] {
                    cur.coords[i] = match prev {
                        Some(p) if i < p.coords.len() => p.coords[i],
                        _ => [0.0, 0.0],
                    };
                }
            }
        }
        Self::new(frames, fps, source_id)
    }

    pub fn frames(&self) -> &[LandmarkFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<LandmarkFrame> {
        self.frames
    }

    /// Frame count `T`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Landmark count `L`.
    pub fn landmarks(&self) -> usize {
        self.frames[0].len()
    }

    /// Returns a copy with the same metadata and new frames.
    pub fn with_frames(&self, frames: Vec<LandmarkFrame>) -> Result<Self> {
        Self::new(frames, self.fps, self.source_id.clone())
    }

    pub fn map_coords(&self, mut f: impl FnMut(usize, [f64; 2]) -> [f64; 2]) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|fr| LandmarkFrame {
                coords: fr.coords.iter().enumerate().map(|(i, &p)| f(i, p)).collect(),
                valid: fr.valid.clone(),
            })
            .collect();
        Self {
            frames,
            fps: self.fps,
            source_id: self.source_id.clone(),
        }
    }
}

/// One labeled sign performance.
#[derive(Debug, Clone, PartialEq)]
pub struct SignSample {
    pub sequence: LandmarkSequence,
    pub label: String,
    pub signer: String,
    pub take: u32,
}

impl SignSample {
    pub fn id(&self) -> String {
        sample_id(&self.signer, &self.label, self.take)
    }
}

/// Stable identifier `<signer>/<label>/<take>`.
pub fn sample_id(signer: &str, label: &str, take: u32) -> String {
    format!("{signer}/{label}/{take}")
}

//! OpenPose per-frame JSON (`*_keypoints.json`) ingestion.

use serde::Deserialize;

use super::layout::{BodyKeepSet, BODY_POINTS, FACE_POINTS, HAND_POINTS, LANDMARK_COUNT};
use super::LandmarkFrame;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// Keypoints of a single person in one frame, as emitted by the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RawKeypointFrame {
    pub body: Vec<Keypoint>,
    pub face: Vec<Keypoint>,
    pub left_hand: Vec<Keypoint>,
    pub right_hand: Vec<Keypoint>,
    pub frame_index: usize,
    /// Set when the document contained no person.
    pub missing: bool,
}

impl RawKeypointFrame {
    /// All-zero frame flagged as missing.
    pub fn empty(frame_index: usize) -> Self {
        Self {
            body: vec![Keypoint::default(); BODY_POINTS],
            face: vec![Keypoint::default(); FACE_POINTS],
            left_hand: vec![Keypoint::default(); HAND_POINTS],
            right_hand: vec![Keypoint::default(); HAND_POINTS],
            frame_index,
            missing: true,
        }
    }

    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn confidence_sum(&self) -> f64 {
        [&self.body, &self.face, &self.left_hand, &self.right_hand]
            .iter()
            .flat_map(|part| part.iter())
            .map(|k| k.confidence)
            .sum()
    }
}

#[derive(Deserialize)]
struct Document {
    people: Vec<Person>,
}

#[derive(Deserialize)]
struct Person {
    #[serde(default)]
    pose_keypoints_2d: Vec<f64>,
    #[serde(default)]
    face_keypoints_2d: Vec<f64>,
    #[serde(default)]
    hand_left_keypoints_2d: Vec<f64>,
    #[serde(default)]
    hand_right_keypoints_2d: Vec<f64>,
}

fn byte_offset(doc: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    if line > 1 {
        let mut seen = 1;
        for (i, &b) in doc.iter().enumerate() {
            if b == b'\n' {
                seen += 1;
                if seen == line {
                    offset = i + 1;
                    break;
                }
            }
        }
    }
    (offset + column.saturating_sub(1)).min(doc.len())
}

fn triples(field: &str, values: &[f64], points: usize) -> Result<Vec<Keypoint>> {
    if values.is_empty() {
        // part not detected or not requested from the estimator
        return Ok(vec![Keypoint::default(); points]);
    }
    if values.len() != 3 * points {
        return Err(Error::Schema {
            field: field.to_string(),
            message: format!("expected {} values ({points} triples), found {}", 3 * points, values.len()),
        });
    }
    values
        .chunks_exact(3)
        .enumerate()
        .map(|(i, c)| {
            if !c.iter().all(|v| v.is_finite()) {
                return Err(Error::Schema {
                    field: field.to_string(),
                    message: format!("non-finite value in keypoint {i}"),
                });
            }
            if !(0.0..=1.0).contains(&c[2]) {
                return Err(Error::Schema {
                    field: field.to_string(),
                    message: format!("confidence {} of keypoint {i} outside [0, 1]", c[2]),
                });
            }
            Ok(Keypoint {
                x: c[0],
                y: c[1],
                confidence: c[2],
            })
        })
        .collect()
}

/// Parses one OpenPose frame document and returns the keypoints of the
/// person with the largest total confidence.
pub fn parse_keypoint_file(bytes: &[u8]) -> Result<RawKeypointFrame> {
    let doc: Document = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut best: Option<RawKeypointFrame> = None;
    for person in &doc.people {
        let frame = RawKeypointFrame {
            body: triples("pose_keypoints_2d", &person.pose_keypoints_2d, BODY_POINTS)?,
            face: triples("face_keypoints_2d", &person.face_keypoints_2d, FACE_POINTS)?,
            left_hand: triples("hand_left_keypoints_2d", &person.hand_left_keypoints_2d, HAND_POINTS)?,
            right_hand: triples(
                "hand_right_keypoints_2d",
                &person.hand_right_keypoints_2d,
                HAND_POINTS,
            )?,
            frame_index: 0,
            missing: false,
        };
        // ties keep the earlier person
        if best
            .as_ref()
            .is_none_or(|b| frame.confidence_sum() > b.confidence_sum())
        {
            best = Some(frame);
        }
    }
    Ok(best.unwrap_or_else(|| RawKeypointFrame::empty(0)))
}

/// Picks the canonical 126 landmarks and normalizes them by frame size.
#[derive(Debug, Clone, Copy, Default)]
pub struct LandmarkSelector {
    pub body_keep: BodyKeepSet,
}

impl LandmarkSelector {
    pub fn new(body_keep: BodyKeepSet) -> Self {
        Self { body_keep }
    }

    pub fn select(&self, frame: &RawKeypointFrame, frame_width: f64, frame_height: f64) -> Result<LandmarkFrame> {
        if !(frame_width > 0.0 && frame_height > 0.0) || !frame_width.is_finite() || !frame_height.is_finite() {
            return Err(Error::Argument(format!(
                "frame dimensions must be positive, got {frame_width}x{frame_height}"
            )));
        }
        let body = self.body_keep.indices().iter().map(|&i| &frame.body[i]);
        let points = body
            .chain(frame.face.iter())
            .chain(frame.left_hand.iter())
            .chain(frame.right_hand.iter());
        let mut coords = Vec::with_capacity(LANDMARK_COUNT);
        let mut valid = Vec::with_capacity(LANDMARK_COUNT);
        for k in points {
            coords.push([
                (k.x / frame_width).clamp(0.0, 1.0),
                (k.y / frame_height).clamp(0.0, 1.0),
            ]);
            valid.push(k.confidence > 0.0);
        }
        if coords.len() != LANDMARK_COUNT {
            return Err(Error::Shape(format!(
                "raw frame produced {} landmarks, expected {LANDMARK_COUNT}",
                coords.len()
            )));
        }
        Ok(LandmarkFrame { coords, valid })
    }
}

/// [`LandmarkSelector::select`] with the default body keep-set.
pub fn select_landmarks(frame: &RawKeypointFrame, frame_width: f64, frame_height: f64) -> Result<LandmarkFrame> {
    LandmarkSelector::default().select(frame, frame_width, frame_height)
}

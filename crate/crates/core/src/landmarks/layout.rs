//! Canonical landmark ordering.
//!
//! | canonical index | source                                   |
//! |-----------------|------------------------------------------|
//! | 0..14           | BODY_25 points listed in the keep-set    |
//! | 14..84          | face points 0..70 (68 contour + 2 pupils) |
//! | 84..105         | left hand points 0..21                   |
//! | 105..126        | right hand points 0..21                  |

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const BODY_POINTS: usize = 25;
pub const FACE_POINTS: usize = 70;
pub const HAND_POINTS: usize = 21;
pub const BODY_KEEP_COUNT: usize = 14;
pub const LANDMARK_COUNT: usize = BODY_KEEP_COUNT + FACE_POINTS + 2 * HAND_POINTS;

pub(crate) const FACE_OFFSET: usize = BODY_KEEP_COUNT;
pub(crate) const LEFT_HAND_OFFSET: usize = FACE_OFFSET + FACE_POINTS;
pub(crate) const RIGHT_HAND_OFFSET: usize = LEFT_HAND_OFFSET + HAND_POINTS;

/// Nose, neck, shoulders, elbows, wrists, both side hips, eyes and ears.
///
/// The five face-located body points (nose, eyes, ears) are all kept; the
/// legs, feet and mid-hip are dropped.
pub const DEFAULT_BODY_KEEP: [usize; BODY_KEEP_COUNT] =
    [0, 1, 2, 3, 4, 5, 6, 7, 9, 12, 15, 16, 17, 18];

// BODY_25 left/right pairs.
const BODY_MIRROR: [(usize, usize); 10] = [
    (2, 5),
    (3, 6),
    (4, 7),
    (9, 12),
    (10, 13),
    (11, 14),
    (15, 16),
    (17, 18),
    (19, 22),
    (20, 23),
];

// 68-point contour plus pupils.
const FACE_MIRROR: [(usize, usize); 30] = [
    (0, 16),
    (1, 15),
    (2, 14),
    (3, 13),
    (4, 12),
    (5, 11),
    (6, 10),
    (7, 9),
    (17, 26),
    (18, 25),
    (19, 24),
    (20, 23),
    (21, 22),
    (31, 35),
    (32, 34),
    (36, 45),
    (37, 44),
    (38, 43),
    (39, 42),
    (40, 47),
    (41, 46),
    (48, 54),
    (49, 53),
    (50, 52),
    (55, 59),
    (56, 58),
    (60, 64),
    (61, 63),
    (65, 67),
    (68, 69),
];

/// The 14 BODY_25 indices kept from each frame, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BodyKeepSet([usize; BODY_KEEP_COUNT]);

impl BodyKeepSet {
    pub fn new(indices: &[usize]) -> Result<Self> {
        if indices.len() != BODY_KEEP_COUNT {
            return Err(Error::Argument(format!(
                "body keep-set needs {BODY_KEEP_COUNT} indices, got {}",
                indices.len()
            )));
        }
        let mut seen = [false; BODY_POINTS];
        for &i in indices {
            if i >= BODY_POINTS {
                return Err(Error::Argument(format!("body index {i} out of range 0..{BODY_POINTS}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Argument(format!("body index {i} listed twice")));
            }
        }
        let mut out = [0; BODY_KEEP_COUNT];
        out.copy_from_slice(indices);
        Ok(Self(out))
    }

    pub fn indices(&self) -> &[usize; BODY_KEEP_COUNT] {
        &self.0
    }

    /// For each canonical index, the canonical index of its left/right
    /// counterpart (itself when unpaired or when the partner was dropped).
    pub fn mirror_permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..LANDMARK_COUNT).collect();
        let pos = |b: usize| self.0.iter().position(|&k| k == b);
        for &(a, b) in &BODY_MIRROR {
            if let (Some(pa), Some(pb)) = (pos(a), pos(b)) {
                perm[pa] = pb;
                perm[pb] = pa;
            }
        }
        for &(a, b) in &FACE_MIRROR {
            perm[FACE_OFFSET + a] = FACE_OFFSET + b;
            perm[FACE_OFFSET + b] = FACE_OFFSET + a;
        }
        for h in 0..HAND_POINTS {
            perm[LEFT_HAND_OFFSET + h] = RIGHT_HAND_OFFSET + h;
            perm[RIGHT_HAND_OFFSET + h] = LEFT_HAND_OFFSET + h;
        }
        perm
    }
}

impl Default for BodyKeepSet {
    fn default() -> Self {
        Self(DEFAULT_BODY_KEEP)
    }
}

impl TryFrom<Vec<usize>> for BodyKeepSet {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<BodyKeepSet> for Vec<usize> {
    fn from(k: BodyKeepSet) -> Self {
        k.0.to_vec()
    }
}

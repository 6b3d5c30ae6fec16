//! Landmark-space augmentation and frame-count uniformization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::landmarks::{BodyKeepSet, DatasetManifest, LandmarkSequence, LANDMARK_COUNT};
use crate::{seed, Error, Result};

/// Sampling ranges for one rigid per-sample transform.
///
/// Rotation is drawn from `[-rotation_deg, rotation_deg]`, scale from
/// `[1 - zoom, 1 + zoom]`, each translation component from
/// `[-translate, translate]`, and the flip fires with probability `flip_prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    pub zoom: f64,
    pub translate: f64,
    pub flip_prob: f64,
    /// Also exchange left/right landmark identities when flipping.
    pub swap_lr: bool,
    /// Layout used to pair left/right landmarks for `swap_lr`.
    #[serde(default)]
    pub body_keep: BodyKeepSet,
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rotation_deg: 10.0,
            zoom: 0.1,
            translate: 0.05,
            flip_prob: 0.5,
            swap_lr: false,
            body_keep: BodyKeepSet::default(),
            seed: 0,
        }
    }
}

impl AugmentParams {
    /// Ranges that always draw the identity transform.
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            zoom: 0.0,
            translate: 0.0,
            flip_prob: 0.0,
            swap_lr: false,
            body_keep: BodyKeepSet::default(),
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.rotation_deg, self.zoom, self.translate, self.flip_prob]
            .iter()
            .all(|v| v.is_finite());
        if !finite
            || self.rotation_deg < 0.0
            || !(0.0..1.0).contains(&self.zoom)
            || self.translate < 0.0
            || !(0.0..=1.0).contains(&self.flip_prob)
        {
            return Err(Error::Argument(format!("invalid augmentation parameters {self:?}")));
        }
        Ok(())
    }

    /// Samples the concrete transform for this seed.
    pub fn draw(&self) -> Result<AugmentDraw> {
        self.validate()?;
        let mut rng = seed::rng(self.seed);
        let mut sym = |r: f64| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
        let angle_deg = sym(self.rotation_deg);
        let scale = 1.0 + sym(self.zoom);
        let dx = sym(self.translate);
        let dy = sym(self.translate);
        let flip = self.flip_prob > 0.0 && rng.gen_bool(self.flip_prob);
        Ok(AugmentDraw {
            angle_deg,
            scale,
            dx,
            dy,
            flip,
            swap_lr: self.swap_lr,
            body_keep: self.body_keep,
        })
    }
}

/// A sampled transform: `p' = c + s R(angle) (p - c) + (dx, dy)` about
/// `c = (0.5, 0.5)`, with the optional mirror `x <- 1 - x` applied first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub angle_deg: f64,
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
    pub flip: bool,
    pub swap_lr: bool,
    pub body_keep: BodyKeepSet,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self {
            angle_deg: 0.0,
            scale: 1.0,
            dx: 0.0,
            dy: 0.0,
            flip: false,
            swap_lr: false,
            body_keep: BodyKeepSet::default(),
        }
    }

    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        let [mut x, mut y] = p;
        if self.flip {
            x = 1.0 - x;
        }
        if self.angle_deg != 0.0 || self.scale != 1.0 {
            let (sin, cos) = self.angle_deg.to_radians().sin_cos();
            let (u, v) = (x - 0.5, y - 0.5);
            x = 0.5 + self.scale * (cos * u - sin * v);
            y = 0.5 + self.scale * (sin * u + cos * v);
        }
        x += self.dx;
        y += self.dy;
        [x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)]
    }

    /// Applies the same transform to every frame.
    pub fn apply(&self, seq: &LandmarkSequence) -> LandmarkSequence {
        let moved = seq.map_coords(|_, p| self.apply_point(p));
        if !(self.flip && self.swap_lr) || seq.landmarks() != LANDMARK_COUNT {
            return moved;
        }
        let perm = self.body_keep.mirror_permutation();
        let frames = moved
            .frames()
            .iter()
            .map(|f| {
                let mut g = f.clone();
                for (i, &j) in perm.iter().enumerate() {
                    g.coords[i] = f.coords[j];
                    g.valid[i] = f.valid[j];
                }
                g
            })
            .collect();
        moved.with_frames(frames).expect("permutation keeps shape")
    }
}

/// Draws one transform from `params` and applies it to the whole sequence.
pub fn augment(seq: &LandmarkSequence, params: &AugmentParams) -> Result<LandmarkSequence> {
    Ok(params.draw()?.apply(seq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformizationPlan {
    pub target_frames: usize,
}

/// Mean frame count, rounded half up, at least 1.
pub fn compute_target_from_lengths(lengths: impl IntoIterator<Item = usize>) -> Result<UniformizationPlan> {
    let (mut n, mut sum) = (0u128, 0u128);
    for l in lengths {
        n += 1;
        sum += l as u128;
    }
    if n == 0 {
        return Err(Error::Argument("cannot uniformize over an empty sample set".into()));
    }
    let target = ((2 * sum + n) / (2 * n)).max(1) as usize;
    Ok(UniformizationPlan { target_frames: target })
}

pub fn compute_target(manifest: &DatasetManifest) -> Result<UniformizationPlan> {
    compute_target_from_lengths(manifest.samples.iter().map(|s| s.frames))
}

/// Frame indices kept when shrinking `t` frames to `target`:
/// `round(k (t - 1) / (target - 1))`, half up.
pub fn shrink_indices(t: usize, target: usize) -> Vec<usize> {
    if target <= 1 {
        return vec![0];
    }
    let (num, den) = (t - 1, target - 1);
    (0..target).map(|k| (2 * k * num + den) / (2 * den)).collect()
}

pub fn uniformize(seq: &LandmarkSequence, plan: &UniformizationPlan) -> Result<LandmarkSequence> {
    let target = plan.target_frames;
    if target == 0 {
        return Err(Error::Argument("target frame count must be positive".into()));
    }
    let frames = seq.frames();
    let t = frames.len();
    let out = match t.cmp(&target) {
        std::cmp::Ordering::Equal => return Ok(seq.clone()),
        std::cmp::Ordering::Less => {
            let mut v = frames.to_vec();
            v.resize(target, frames[t - 1].clone());
            v
        }
        std::cmp::Ordering::Greater => shrink_indices(t, target)
            .into_iter()
            .map(|i| frames[i].clone())
            .collect(),
    };
    seq.with_frames(out)
}

//! Landmark sequence to image encoding.
//!
//! For a sequence of `T` frames and `L` landmarks, the x- and y-coordinates
//! form two `L x T` matrices. Each is folded into an `L x T/3 x 3` tensor
//! where pixel `(i, j)` channel `k` holds frame `3j + k`, and the two tensors
//! are placed side by side: x on the left, y on the right. The result is an
//! RGB image of `L` rows and `2T/3` columns, quantized to `0..=255`.
//!
//! Sequences whose length is not a multiple of three are padded by repeating
//! the final frame; the original length travels with the image so
//! [`decode`] can drop the padding again.

use std::path::Path;

use crate::landmarks::{LandmarkFrame, LandmarkSequence};
use crate::{Error, Result};

/// Spatial size of the network input.
pub const INPUT_SIZE: usize = 224;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols x 3`.
    pub pixels: Vec<u8>,
    pub t_original: usize,
    pub t_padded: usize,
}

impl EncodedImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let o = (row * self.cols + col) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.cols as u32, self.rows as u32, self.pixels.clone())
            .expect("pixel buffer matches dimensions")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb_image()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::Format(other.to_string()),
            })
    }
}

/// Resized, `[0, 1]`-scaled image ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInput {
    /// Channel-major `3 x size x size`.
    pub pixels: Vec<f32>,
    pub size: usize,
    pub source_id: String,
    /// Set when a source dimension exceeded `size`, i.e. information was lost.
    pub downscaled: bool,
}

/// Smallest multiple of three `>= t`.
pub fn padded_len(t: usize) -> usize {
    t.div_ceil(3) * 3
}

/// `round(v * 255)` with ties away from zero.
pub fn quantize(v: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("value {v} outside [0, 1]")));
    }
    Ok((v * 255.0).round() as u8)
}

pub fn encode(seq: &LandmarkSequence) -> Result<EncodedImage> {
    let frames = seq.frames();
    let rows = seq.landmarks();
    let t = frames.len();
    let t_padded = padded_len(t);
    let half = t_padded / 3;
    let cols = 2 * half;
    let mut pixels = vec![0u8; rows * cols * 3];
    for (j, f) in frames.iter().enumerate() {
        if f.coords.len() != rows {
            return Err(Error::Shape(format!(
                "frame {j} has {} landmarks, expected {rows}",
                f.coords.len()
            )));
        }
    }
    // frame index for temporal slot s, repeating the last frame as padding
    let frame_at = |s: usize| &frames[s.min(t - 1)];
    for s in 0..t_padded {
        let f = frame_at(s);
        let (col, k) = (s / 3, s % 3);
        for (i, p) in f.coords.iter().enumerate() {
            let x = quantize(p[0]).map_err(|e| domain_ctx(e, s.min(t - 1), i))?;
            let y = quantize(p[1]).map_err(|e| domain_ctx(e, s.min(t - 1), i))?;
            pixels[(i * cols + col) * 3 + k] = x;
            pixels[(i * cols + half + col) * 3 + k] = y;
        }
    }
    Ok(EncodedImage {
        id: seq.source_id.clone(),
        rows,
        cols,
        pixels,
        t_original: t,
        t_padded,
    })
}

fn domain_ctx(e: Error, frame: usize, landmark: usize) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("frame {frame}, landmark {landmark}: {m}")),
        other => other,
    }
}

/// Inverse of [`encode`] up to quantization; padding frames are dropped.
pub fn decode(img: &EncodedImage) -> Result<LandmarkSequence> {
    if !img.cols.is_multiple_of(2) {
        return Err(Error::Format(format!("encoded image has odd width {}", img.cols)));
    }
    if !img.t_padded.is_multiple_of(3) || img.cols != 2 * img.t_padded / 3 {
        return Err(Error::Format(format!(
            "width {} inconsistent with {} padded frames",
            img.cols, img.t_padded
        )));
    }
    if img.t_original == 0 || img.t_original > img.t_padded || img.t_padded - img.t_original > 2 {
        return Err(Error::Format(format!(
            "original length {} inconsistent with padded length {}",
            img.t_original, img.t_padded
        )));
    }
    if img.rows == 0 || img.pixels.len() != img.rows * img.cols * 3 {
        return Err(Error::Format("pixel buffer does not match dimensions".into()));
    }
    let half = img.cols / 2;
    let frames = (0..img.t_original)
        .map(|s| {
            let (col, k) = (s / 3, s % 3);
            let coords = (0..img.rows)
                .map(|i| {
                    let x = img.pixels[(i * img.cols + col) * 3 + k];
                    let y = img.pixels[(i * img.cols + half + col) * 3 + k];
                    [f64::from(x) / 255.0, f64::from(y) / 255.0]
                })
                .collect();
            LandmarkFrame::from_coords(coords)
        })
        .collect();
    LandmarkSequence::new(frames, 0.0, img.id.clone())
}

pub fn resize_to_input(img: &EncodedImage) -> NetworkInput {
    resize(img, INPUT_SIZE)
}

// Source coordinate and blend weight for each output position, with corner
// pixel centers mapped onto corner pixel centers.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    (0..dst)
        .map(|o| {
            if src == 1 || dst == 1 {
                return (0, 0, 0.0);
            }
            let pos = (o * (src - 1)) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (pos - lo as f64) as f32)
        })
        .collect()
}

/// Bilinear resize to `size x size`, then division by 255.
pub fn resize(img: &EncodedImage, size: usize) -> NetworkInput {
    let ys = axis_taps(img.rows, size);
    let xs = axis_taps(img.cols, size);
    let plane = size * size;
    let mut pixels = vec![0f32; 3 * plane];
    let at = |r: usize, c: usize, ch: usize| f32::from(img.pixels[(r * img.cols + c) * 3 + ch]);
    for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
            for ch in 0..3 {
                let (a, b) = (at(y0, x0, ch), at(y0, x1, ch));
                let (c, d) = (at(y1, x0, ch), at(y1, x1, ch));
                let top = a + wx * (b - a);
                let bottom = c + wx * (d - c);
                pixels[ch * plane + oy * size + ox] = (top + wy * (bottom - top)) / 255.0;
            }
        }
    }
    NetworkInput {
        pixels,
        size,
        source_id: img.id.clone(),
        downscaled: img.rows > size || img.cols > size,
    }
}

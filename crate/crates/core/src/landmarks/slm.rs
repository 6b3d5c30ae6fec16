//! `slm-v1` landmark files.
//!
//! ```text
//! magic     6 bytes   "slm-v1"
//! hlen      u32 LE    length of the JSON header
//! header    hlen      JSON object, see SlmHeader
//! coords    T*L*2 f64 LE, frame-major, (x, y) interleaved
//! validity  ceil(T*L/8) bytes, bit k (LSB first) = landmark k of the flattened T*L grid
//! ```

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LandmarkFrame, LandmarkSequence};
use crate::{Error, Result};

pub const SLM_MAGIC: &[u8; 6] = b"slm-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlmHeader {
    pub format: String,
    pub source_id: String,
    pub fps: f64,
    pub frames: usize,
    pub landmarks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub take: Option<u32>,
}

impl SlmHeader {
    pub fn for_sequence(seq: &LandmarkSequence) -> Self {
        Self {
            format: "slm-v1".into(),
            source_id: seq.source_id.clone(),
            fps: seq.fps,
            frames: seq.len(),
            landmarks: seq.landmarks(),
            label: None,
            signer: None,
            take: None,
        }
    }
}

pub fn encode_slm(header: &SlmHeader, seq: &LandmarkSequence) -> Result<Vec<u8>> {
    if header.frames != seq.len() || header.landmarks != seq.landmarks() {
        return Err(Error::Shape(format!(
            "header says {}x{}, sequence is {}x{}",
            header.frames,
            header.landmarks,
            seq.len(),
            seq.landmarks()
        )));
    }
    let json = serde_json::to_vec(header).expect("header serializes");
    let cells = seq.len() * seq.landmarks();
    let mut out = Vec::with_capacity(10 + json.len() + cells * 16 + cells.div_ceil(8));
    out.extend_from_slice(SLM_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for f in seq.frames() {
        for p in &f.coords {
            out.extend_from_slice(&p[0].to_le_bytes());
            out.extend_from_slice(&p[1].to_le_bytes());
        }
    }
    let mut bits = vec![0u8; cells.div_ceil(8)];
    for (k, v) in seq.frames().iter().flat_map(|f| f.valid.iter()).enumerate() {
        if *v {
            bits[k / 8] |= 1 << (k % 8);
        }
    }
    out.extend_from_slice(&bits);
    Ok(out)
}

fn split_header(bytes: &[u8]) -> Result<(SlmHeader, &[u8])> {
    if bytes.len() < 10 || &bytes[..6] != SLM_MAGIC {
        return Err(Error::Format("missing slm-v1 magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body = &bytes[10..];
    if body.len() < hlen {
        return Err(Error::Format("truncated slm header".into()));
    }
    let header: SlmHeader = serde_json::from_slice(&body[..hlen])
        .map_err(|e| Error::Format(format!("bad slm header: {e}")))?;
    if header.format != "slm-v1" {
        return Err(Error::Format(format!("unsupported landmark format `{}`", header.format)));
    }
    Ok((header, &body[hlen..]))
}

pub fn decode_slm(bytes: &[u8]) -> Result<(SlmHeader, LandmarkSequence)> {
    let (header, payload) = split_header(bytes)?;
    let cells = header
        .frames
        .checked_mul(header.landmarks)
        .ok_or_else(|| Error::Format("slm dimensions overflow".into()))?;
    let coord_bytes = cells * 16;
    if payload.len() != coord_bytes + cells.div_ceil(8) {
        return Err(Error::Format(format!(
            "slm payload is {} bytes, expected {}",
            payload.len(),
            coord_bytes + cells.div_ceil(8)
        )));
    }
    let (coords, bits) = payload.split_at(coord_bytes);
    let mut values = coords
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut frames = Vec::with_capacity(header.frames);
    for j in 0..header.frames {
        let mut f = LandmarkFrame {
            coords: Vec::with_capacity(header.landmarks),
            valid: Vec::with_capacity(header.landmarks),
        };
        for i in 0..header.landmarks {
            let x = values.next().unwrap();
            let y = values.next().unwrap();
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(Error::Format(format!("coordinate ({x}, {y}) outside [0, 1] at frame {j}")));
            }
            f.coords.push([x, y]);
            let k = j * header.landmarks + i;
            f.valid.push(bits[k / 8] & (1 << (k % 8)) != 0);
        }
        frames.push(f);
    }
    let seq = LandmarkSequence::new(frames, header.fps, header.source_id.clone())?;
    Ok((header, seq))
}

pub fn write_slm(path: &Path, header: &SlmHeader, seq: &LandmarkSequence) -> Result<()> {
    let bytes = encode_slm(header, seq)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_slm(path: &Path) -> Result<(SlmHeader, LandmarkSequence)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_slm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads only the magic and JSON header.
pub fn read_slm_header(path: &Path) -> Result<SlmHeader> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut prefix = [0u8; 10];
    file.read_exact(&mut prefix).map_err(|e| Error::io(path, e))?;
    let hlen = u32::from_le_bytes(prefix[6..10].try_into().unwrap()) as usize;
    let mut buf = prefix.to_vec();
    buf.resize(10 + hlen, 0);
    file.read_exact(&mut buf[10..]).map_err(|e| Error::io(path, e))?;
    split_header(&buf).map(|(h, _)| h)
}

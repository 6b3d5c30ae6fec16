//! Splitting multi-take recordings into single-sign samples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LandmarkSequence, SignSample};
use crate::{Error, Result};

/// Frames kept before and after each annotated sign.
pub const DEFAULT_SEGMENT_PAD: usize = 15;

/// One annotated sign inside a recording; frame bounds are inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub video_id: String,
    pub sign_label: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Reads a `video_id,sign_label,start_frame,end_frame` CSV.
pub fn read_annotations(path: &Path) -> Result<Vec<SegmentAnnotation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let expected = ["video_id", "sign_label", "start_frame", "end_frame"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Format(format!(
            "{}: header must be `{}`",
            path.display(),
            expected.join(",")
        )));
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<SegmentAnnotation>() {
        let a = row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if a.start_frame > a.end_frame {
            return Err(Error::Format(format!(
                "{}: annotation for `{}` starts after it ends ({} > {})",
                path.display(),
                a.video_id,
                a.start_frame,
                a.end_frame
            )));
        }
        out.push(a);
    }
    Ok(out)
}

/// Cuts one sample per annotation out of `video`, widened by `pad` frames on
/// both sides and clamped to the recording. Takes are numbered from 1 in
/// annotation order.
///
/// The outer error covers precondition violations; each annotation gets its
/// own result so one bad range does not discard the rest.
pub fn segment_takes(
    video: &LandmarkSequence,
    signer: &str,
    annotations: &[SegmentAnnotation],
    pad: usize,
) -> Result<Vec<Result<SignSample>>> {
    if annotations
        .windows(2)
        .any(|w| w[0].start_frame > w[1].start_frame)
    {
        return Err(Error::Argument("annotations must be sorted by start_frame".into()));
    }
    let total = video.len();
    let frames = video.frames();
    Ok(annotations
        .iter()
        .enumerate()
        .map(|(n, a)| {
            if a.start_frame > a.end_frame {
                return Err(Error::Argument(format!(
                    "annotation {n} of `{}` has start {} after end {}",
                    a.video_id, a.start_frame, a.end_frame
                )));
            }
            if a.start_frame >= total {
                return Err(Error::Argument(format!(
                    "annotation {n} of `{}` ({}..={}) lies outside the {total}-frame recording",
                    a.video_id, a.start_frame, a.end_frame
                )));
            }
            let first = a.start_frame.saturating_sub(pad);
            let last = (a.end_frame + pad).min(total - 1);
            let take = n as u32 + 1;
            let sequence = LandmarkSequence::new(
                frames[first..=last].to_vec(),
                video.fps,
                format!("{}#{take}", a.video_id),
            )?;
            Ok(SignSample {
                sequence,
                label: a.sign_label.clone(),
                signer: signer.to_string(),
                take,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::LandmarkFrame;
    use super::*;

    fn video(t: usize) -> LandmarkSequence {
        // frame j carries x = j / 1000 so the cut is visible
        let frames = (0..t)
            .map(|j| LandmarkFrame::from_coords(vec![[j as f64 / 1000.0, 0.5]]))
            .collect();
        LandmarkSequence::new(frames, 30.0, "rec").unwrap()
    }

    fn ann(start: usize, end: usize) -> SegmentAnnotation {
        SegmentAnnotation {
            video_id: "rec".into(),
            sign_label: "sign".into(),
            start_frame: start,
            end_frame: end,
        }
    }

    fn span(s: &SignSample) -> (usize, usize) {
        let f = s.sequence.frames();
        let idx = |fr: &LandmarkFrame| (fr.coords[0][0] * 1000.0).round() as usize;
        (idx(&f[0]), idx(f.last().unwrap()))
    }

    #[test]
    fn padded_interval() {
        let out = segment_takes(&video(100), "s1", &[ann(30, 50)], 15).unwrap();
        let s = out[0].as_ref().unwrap();
        assert_eq!(s.sequence.len(), 51);
        assert_eq!(span(s), (15, 65));
    }

    #[test]
    fn clamps_at_edges() {
        let out = segment_takes(&video(100), "s1", &[ann(5, 10), ann(90, 99)], 15).unwrap();
        assert_eq!(span(out[0].as_ref().unwrap()), (0, 25));
        assert_eq!(span(out[1].as_ref().unwrap()), (75, 99));
        assert_eq!(out[1].as_ref().unwrap().take, 2);
    }

    #[test]
    fn zero_pad_is_exact() {
        let out = segment_takes(&video(100), "s1", &[ann(30, 50)], 0).unwrap();
        assert_eq!(span(out[0].as_ref().unwrap()), (30, 50));
    }

    #[test]
    fn out_of_range_annotation_does_not_block_others() {
        let out = segment_takes(&video(40), "s1", &[ann(10, 20), ann(45, 60)], 15).unwrap();
        assert!(out[0].is_ok());
        assert!(out[1].is_err());
    }

    #[test]
    fn unsorted_annotations_rejected() {
        assert!(segment_takes(&video(100), "s1", &[ann(30, 50), ann(10, 20)], 15).is_err());
    }

    #[test]
    fn frame_count_formula_holds() {
        let t = 80;
        let v = video(t);
        for start in (0..t).step_by(7) {
            for len in [0, 3, 20, 100] {
                for pad in [0, 5, 15] {
                    let end = start + len;
                    let out = segment_takes(&v, "s", &[ann(start, end)], pad).unwrap();
                    let expect = (end + pad).min(t - 1) - start.saturating_sub(pad) + 1;
                    assert_eq!(out[0].as_ref().unwrap().sequence.len(), expect);
                }
            }
        }
    }

    #[test]
    fn reads_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "video_id,sign_label,start_frame,end_frame\nv1,hello,3,9\nv1,bye,20,31\n").unwrap();
        let a = read_annotations(&p).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].sign_label, "bye");
        std::fs::write(&p, "video,label,s,e\nv1,hello,3,9\n").unwrap();
        assert!(read_annotations(&p).is_err());
        assert!(matches!(read_annotations(&dir.path().join("none.csv")), Err(Error::NotFound(_))));
    }
}

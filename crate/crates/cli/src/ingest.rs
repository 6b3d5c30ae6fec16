//! Keypoint-JSON trees to landmark files.
//!
//! Input layout: `<root>/<signer>/<label>/<recording>/*.json`, one OpenPose
//! file per frame in file-name order. Without annotations each recording is
//! one sample. With an annotation CSV, recording `<signer>/<label>/<recording>`
//! is cut into takes and each take is labeled by its annotation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use signenc::landmarks::{
    parse_keypoint_file, read_annotations, segment_takes, write_slm, BodyKeepSet, DatasetManifest, LandmarkSelector,
    LandmarkSequence, ManifestEntry, SegmentAnnotation, SignSample, SlmHeader, DEFAULT_SEGMENT_PAD, MANIFEST_FILE,
};
use signenc::{Error, Result};

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub root: PathBuf,
    pub out: PathBuf,
    pub annotations: Option<PathBuf>,
    /// Pixel size of the source video, used to normalize coordinates.
    pub frame_width: f64,
    pub frame_height: f64,
    pub fps: f64,
    pub pad: usize,
    pub body_keep: BodyKeepSet,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            root: PathBuf::new(),
            out: PathBuf::new(),
            annotations: None,
            frame_width: 640.0,
            frame_height: 480.0,
            fps: 30.0,
            pad: DEFAULT_SEGMENT_PAD,
            body_keep: BodyKeepSet::default(),
        }
    }
}

#[derive(Debug)]
pub struct IngestSummary {
    pub manifest: DatasetManifest,
    pub recordings: usize,
    /// `(recording or file, message)` for every failure.
    pub failures: Vec<(String, String)>,
}

fn subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if !name.starts_with('.') && e.path().is_dir() {
            out.push((name, e.path()));
        }
    }
    // Numeric names in numeric order, then the rest lexicographically.
    out.sort_by(|a, b| match (a.0.parse::<u64>(), b.0.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.0.cmp(&b.0),
    });
    Ok(out)
}

fn read_recording(dir: &Path, video_id: &str, opts: &IngestOptions) -> Result<LandmarkSequence> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Argument(format!("{video_id}: no keypoint files")));
    }
    let selector = LandmarkSelector::new(opts.body_keep);
    let frames = files
        .iter()
        .map(|f| {
            let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
            let raw = parse_keypoint_file(&bytes).map_err(|e| Error::Argument(format!("{}: {e}", f.display())))?;
            selector
                .select(&raw, opts.frame_width, opts.frame_height)
                .map_err(|e| Error::Argument(format!("{}: {e}", f.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    LandmarkSequence::from_selected(frames, opts.fps, video_id)
}

pub fn ingest(opts: &IngestOptions) -> Result<IngestSummary> {
    if !opts.root.is_dir() {
        return Err(Error::NotFound(opts.root.clone()));
    }
    let mut by_video: BTreeMap<String, Vec<SegmentAnnotation>> = BTreeMap::new();
    if let Some(path) = &opts.annotations {
        for a in read_annotations(path)? {
            by_video.entry(a.video_id.clone()).or_default().push(a);
        }
        for list in by_video.values_mut() {
            list.sort_by_key(|a| a.start_frame);
        }
    }

    let mut samples: Vec<SignSample> = Vec::new();
    let mut failures = Vec::new();
    let mut recordings = 0;
    for (signer, signer_dir) in subdirs(&opts.root)? {
        for (label, label_dir) in subdirs(&signer_dir)? {
            for (rec, rec_dir) in subdirs(&label_dir)? {
                recordings += 1;
                let video_id = format!("{signer}/{label}/{rec}");
                let video = match read_recording(&rec_dir, &video_id, opts) {
                    Ok(v) => v,
                    Err(e) => {
                        failures.push((video_id, e.to_string()));
                        continue;
                    }
                };
                if opts.annotations.is_none() {
                    samples.push(SignSample {
                        sequence: video,
                        label: label.clone(),
                        signer: signer.clone(),
                        take: 0,
                    });
                    continue;
                }
                let Some(anns) = by_video.get(&video_id) else {
                    failures.push((video_id.clone(), format!("no annotation for video_id `{video_id}`")));
                    continue;
                };
                match segment_takes(&video, &signer, anns, opts.pad) {
                    Ok(takes) => {
                        for t in takes {
                            match t {
                                Ok(s) => samples.push(s),
                                Err(e) => failures.push((video_id.clone(), e.to_string())),
                            }
                        }
                    }
                    Err(e) => failures.push((video_id.clone(), e.to_string())),
                }
            }
        }
    }

    // Takes are numbered from 1 per (signer, label) in discovery order.
    let mut counters: BTreeMap<(String, String), u32> = BTreeMap::new();
    let mut entries = Vec::new();
    for mut s in samples {
        let n = counters.entry((s.signer.clone(), s.label.clone())).or_insert(0);
        *n += 1;
        s.take = *n;
        let rel = format!("{}/{}/{}.slm", s.signer, s.label, s.take);
        let header = SlmHeader {
            label: Some(s.label.clone()),
            signer: Some(s.signer.clone()),
            take: Some(s.take),
            ..SlmHeader::for_sequence(&s.sequence)
        };
        write_slm(&opts.out.join(&rel), &header, &s.sequence)?;
        entries.push(ManifestEntry {
            path: rel,
            frames: s.sequence.len(),
            label: s.label,
            signer: s.signer,
            take: s.take,
        });
    }
    for (what, msg) in &failures {
        log::error!("{what}: {msg}");
    }
    if entries.is_empty() {
        return Err(Error::Manifest(format!(
            "no samples ingested from {} ({} failures)",
            opts.root.display(),
            failures.len()
        )));
    }
    let manifest = DatasetManifest::from_entries(entries)?;
    manifest.save(&opts.out.join(MANIFEST_FILE))?;
    Ok(IngestSummary {
        manifest,
        recordings,
        failures,
    })
}

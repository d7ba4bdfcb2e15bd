//! Identity labels attached to tracker output, frame by frame.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::foa::Direction;
use crate::track::Track;

/// One source track with a label (and the similarity that produced it) per
/// frame. Positions and activity are copied from the tracker untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineTrack {
    pub track_id: usize,
    pub directions: Vec<Direction>,
    pub active: Vec<bool>,
    pub labels: Vec<Option<String>>,
    pub similarity: Vec<Option<f64>>,
}

impl TimelineTrack {
    pub fn unlabeled(track: &Track) -> Self {
        Self {
            track_id: track.track_id,
            directions: track.directions.clone(),
            active: track.active.clone(),
            labels: vec![None; track.len()],
            similarity: vec![None; track.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Labels the active frames of `frames`.
    pub fn assign(&mut self, frames: std::ops::Range<usize>, label: &str, similarity: Option<f64>) {
        for f in frames {
            if self.active[f] {
                self.labels[f] = Some(label.to_string());
                self.similarity[f] = similarity;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReassignedTimeline {
    pub tracks: Vec<TimelineTrack>,
}

impl ReassignedTimeline {
    pub fn unlabeled(tracks: &[Track]) -> Self {
        Self {
            tracks: tracks.iter().map(TimelineTrack::unlabeled).collect(),
        }
    }

    /// No reassignment: every active frame carries its branch name.
    pub fn baseline(tracks: &[Track]) -> Self {
        let mut tl = Self::unlabeled(tracks);
        for t in &mut tl.tracks {
            let label = branch_label(t.track_id);
            let n = t.len();
            t.assign(0..n, &label, None);
        }
        tl
    }

    pub fn frames(&self) -> usize {
        self.tracks.first().map(TimelineTrack::len).unwrap_or(0)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "frame_index",
            "source_track_id",
            "identity_label",
            "similarity",
        ])?;
        for f in 0..self.frames() {
            for t in &self.tracks {
                wtr.write_record([
                    f.to_string(),
                    t.track_id.to_string(),
                    t.labels[f].clone().unwrap_or_default(),
                    t.similarity[f]
                        .map(|s| format!("{s:.6}"))
                        .unwrap_or_default(),
                ])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<timeline>", e))
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    /// Reads labels written by [`ReassignedTimeline::write_to`] and attaches
    /// them to `tracks`, which supply positions and activity.
    pub fn read_from<R: Read>(input: R, tracks: &[Track], source: &str) -> Result<Self> {
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            message,
        };
        let mut tl = Self::unlabeled(tracks);
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| err(format!("missing column '{name}'")))
        };
        let (cf, ct, cl, cs) = (
            col("frame_index")?,
            col("source_track_id")?,
            col("identity_label")?,
            col("similarity")?,
        );
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let get = |c: usize| rec.get(c).map(str::trim).unwrap_or("");
            let frame: usize = get(cf)
                .parse()
                .map_err(|e| err(format!("line {line}: bad frame_index: {e}")))?;
            let id: usize = get(ct)
                .parse()
                .map_err(|e| err(format!("line {line}: bad source_track_id: {e}")))?;
            let t = tl
                .tracks
                .iter_mut()
                .find(|t| t.track_id == id)
                .ok_or_else(|| err(format!("line {line}: unknown track {id}")))?;
            if frame >= t.len() {
                return Err(err(format!(
                    "line {line}: frame {frame} beyond track length {}",
                    t.len()
                )));
            }
            let label = get(cl);
            if !label.is_empty() {
                if !t.active[frame] {
                    return Err(err(format!("line {line}: label on inactive frame {frame}")));
                }
                t.labels[frame] = Some(label.to_string());
            }
            let sim = get(cs);
            if !sim.is_empty() {
                t.similarity[frame] = Some(
                    sim.parse()
                        .map_err(|e| err(format!("line {line}: bad similarity: {e}")))?,
                );
            }
        }
        Ok(tl)
    }

    pub fn read(path: impl AsRef<Path>, tracks: &[Track]) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file, tracks, &path.display().to_string())
    }
}

pub fn branch_label(track_id: usize) -> String {
    format!("branch{track_id}")
}

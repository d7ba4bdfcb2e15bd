//! Frame-indexed tracks and their CSV representation.
//!
//! Both ground truth and simulated tracker output use the same layout:
//! `frame_index,track_id,azimuth_deg,elevation_deg,active`, frame-major.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::foa::Direction;

/// One speaker's (or one tracker branch's) per-frame direction and activity.
///
/// Directions are defined on every frame; on inactive frames they carry the
/// last known position.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: usize,
    pub directions: Vec<Direction>,
    pub active: Vec<bool>,
}

impl Track {
    pub fn new(track_id: usize, directions: Vec<Direction>, active: Vec<bool>) -> Result<Self> {
        if directions.len() != active.len() {
            return Err(Error::Mismatch(format!(
                "track {track_id}: {} directions, {} activity flags",
                directions.len(),
                active.len()
            )));
        }
        Ok(Self {
            track_id,
            directions,
            active,
        })
    }

    pub fn inactive(track_id: usize, frames: usize) -> Self {
        Self {
            track_id,
            directions: vec![Direction::default(); frames],
            active: vec![false; frames],
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active_frames(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

const COLUMNS: [&str; 5] = [
    "frame_index",
    "track_id",
    "azimuth_deg",
    "elevation_deg",
    "active",
];

pub fn write_tracks_to<W: Write>(out: W, tracks: &[Track]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(COLUMNS)?;
    let frames = tracks.iter().map(Track::len).max().unwrap_or(0);
    for f in 0..frames {
        for t in tracks {
            let d = t.directions[f];
            wtr.write_record([
                f.to_string(),
                t.track_id.to_string(),
                format!("{:.6}", d.azimuth_deg()),
                format!("{:.6}", d.elevation_deg()),
                u8::from(t.active[f]).to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_tracks(path: impl AsRef<Path>, tracks: &[Track]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_tracks_to(&mut buf, tracks)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_tracks(path: impl AsRef<Path>) -> Result<Vec<Track>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_tracks_from(file, &path.display().to_string())
}

pub fn read_tracks_from<R: Read>(input: R, source: &str) -> Result<Vec<Track>> {
    let parse_err = |message: String| Error::Parse {
        path: source.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(format!("missing column '{name}'")))?;
    }

    let mut tracks: Vec<Track> = Vec::new();
    let mut last_frame = 0usize;
    for (line, rec) in records.enumerate() {
        let rec = rec?;
        let line = line + 2;
        let field = |i: usize| -> Result<&str> {
            rec.get(index[i])
                .map(str::trim)
                .ok_or_else(|| parse_err(format!("line {line}: missing field '{}'", COLUMNS[i])))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?
                .parse::<f64>()
                .map_err(|e| parse_err(format!("line {line}: bad '{}': {e}", COLUMNS[i])))
        };
        let int = |i: usize| -> Result<usize> {
            field(i)?
                .parse::<usize>()
                .map_err(|e| parse_err(format!("line {line}: bad '{}': {e}", COLUMNS[i])))
        };
        let frame = int(0)?;
        let track_id = int(1)?;
        let dir = Direction::try_new(num(2)?.to_radians(), num(3)?.to_radians())
            .map_err(|e| parse_err(format!("line {line}: {e}")))?;
        let active = match field(4)? {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(parse_err(format!(
                    "line {line}: bad 'active' value '{other}'"
                )))
            }
        };
        if frame < last_frame {
            return Err(parse_err(format!(
                "line {line}: frame {frame} after frame {last_frame} (non-monotone)"
            )));
        }
        last_frame = frame;

        let track = match tracks.iter_mut().position(|t| t.track_id == track_id) {
            Some(i) => &mut tracks[i],
            None => {
                tracks.push(Track {
                    track_id,
                    directions: Vec::new(),
                    active: Vec::new(),
                });
                tracks.last_mut().expect("just pushed")
            }
        };
        if track.len() != frame {
            return Err(parse_err(format!(
                "line {line}: track {track_id} jumps to frame {frame}, expected {}",
                track.len()
            )));
        }
        track.directions.push(dir);
        track.active.push(active);
    }
    if let Some(n) = tracks.first().map(Track::len) {
        if tracks.iter().any(|t| t.len() != n) {
            return Err(parse_err("tracks cover different frame counts".into()));
        }
    }
    tracks.sort_by_key(|t| t.track_id);
    Ok(tracks)
}

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::MARKER_COUNT;
use crate::error::IoError;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub markers: [Point; MARKER_COUNT],
}

/// Marker positions of one trial at one actuation frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerTrajectory {
    pub frequency: f64,
    pub sample_rate: f64,
    pub frames: Vec<Frame>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("trajectory has no frames")]
    Empty,
    #[error("frame {0}: timestamps must strictly increase")]
    NonMonotonic(usize),
    #[error("frame {0}: non-finite marker position")]
    NonFinite(usize),
    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

impl MarkerTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.frames.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        for (i, f) in self.frames.iter().enumerate() {
            if !f.t.is_finite() || f.markers.iter().flatten().any(|v| !v.is_finite()) {
                return Err(TrajectoryError::NonFinite(i));
            }
            if i > 0 && f.t <= self.frames[i - 1].t {
                return Err(TrajectoryError::NonMonotonic(i));
            }
        }
        Ok(())
    }

    pub fn marker_track(&self, marker: usize) -> impl Iterator<Item = (f64, Point)> + '_ {
        self.frames.iter().map(move |f| (f.t, f.markers[marker]))
    }

    /// Applies `map` to every marker position.
    pub fn map_points(&self, mut map: impl FnMut(Point) -> Point) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|f| Frame {
                t: f.t,
                markers: f.markers.map(&mut map),
            })
            .collect();
        Self {
            frequency: self.frequency,
            sample_rate: self.sample_rate,
            frames,
        }
    }

    /// Linear resampling of every marker onto `times`. Times outside the
    /// recorded span are clamped to the first/last frame.
    pub fn resample(&self, times: &[f64]) -> Self {
        let frames = times
            .iter()
            .map(|&t| {
                let idx = self.frames.partition_point(|f| f.t <= t);
                let markers = if idx == 0 {
                    self.frames[0].markers
                } else if idx == self.frames.len() {
                    self.frames[idx - 1].markers
                } else {
                    let (a, b) = (&self.frames[idx - 1], &self.frames[idx]);
                    let w = (t - a.t) / (b.t - a.t);
                    std::array::from_fn(|m| {
                        [
                            a.markers[m][0] + w * (b.markers[m][0] - a.markers[m][0]),
                            a.markers[m][1] + w * (b.markers[m][1] - a.markers[m][1]),
                        ]
                    })
                };
                Frame { t, markers }
            })
            .collect();
        let sample_rate = if times.len() >= 2 {
            1.0 / (times[1] - times[0])
        } else {
            self.sample_rate
        };
        Self {
            frequency: self.frequency,
            sample_rate,
            frames,
        }
    }

    pub fn csv_header() -> String {
        let mut h = String::from("t");
        for m in 0..MARKER_COUNT {
            let _ = write!(h, ",m{m}x,m{m}y");
        }
        h
    }

    /// CSV with 9 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header();
        out.push('\n');
        for f in &self.frames {
            out.push_str(&sig9(f.t));
            for p in &f.markers {
                out.push(',');
                out.push_str(&sig9(p[0]));
                out.push(',');
                out.push_str(&sig9(p[1]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, frequency: f64, sample_rate: f64, origin: &Path) -> Result<Self, TrajectoryError> {
        let err = |line: usize, message: String| TrajectoryError::Csv {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(TrajectoryError::Empty)?;
        let header: Vec<&str> = header.split(',').map(str::trim).collect();
        let expected = Self::csv_header();
        let expected: Vec<&str> = expected.split(',').collect();
        if header != expected {
            return Err(err(1, format!("header must be `{}`", expected.join(","))));
        }
        let mut frames = Vec::new();
        for (idx, line) in lines {
            let values = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(idx + 1, e.to_string()))?;
            if values.len() != 1 + 2 * MARKER_COUNT {
                return Err(err(idx + 1, format!("expected {} columns, got {}", 1 + 2 * MARKER_COUNT, values.len())));
            }
            frames.push(Frame {
                t: values[0],
                markers: std::array::from_fn(|m| [values[1 + 2 * m], values[2 + 2 * m]]),
            });
        }
        let traj = Self {
            frequency,
            sample_rate,
            frames,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn file_name(frequency: f64) -> String {
        format!("freq_{}Hz.csv", format_frequency(frequency))
    }

    pub fn write_csv(&self, dir: &Path) -> Result<PathBuf, IoError> {
        let path = dir.join(Self::file_name(self.frequency));
        crate::io::write_atomic(&path, self.to_csv().as_bytes())?;
        Ok(path)
    }

    pub fn read_csv(dir: &Path, frequency: f64, sample_rate: f64) -> Result<Self, TrajectoryError> {
        let path = dir.join(Self::file_name(frequency));
        let text = fs::read_to_string(&path).map_err(|e| IoError::new(&path, e))?;
        Self::from_csv(&text, frequency, sample_rate, &path)
    }
}

/// Two decimals, e.g. `0.50`, `1.25`, matching the frequency grid.
pub fn format_frequency(f: f64) -> String {
    format!("{f:.2}")
}

/// `%.9g`-style formatting.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..9).contains(&exp) {
        let s = format!("{v:.8e}");
        // trim mantissa zeros: 1.50000000e-6 -> 1.5e-6
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{e}")
    } else {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    }
}

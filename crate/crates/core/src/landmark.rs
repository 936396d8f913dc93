//! Landmark frames, gesture classes and the capture/stream text formats.
//!
//! One frame is one NDJSON line:
//!
//! ```text
//! {"t":1234,"hand":"R","conf":0.98,"pts":[[0.5,0.5,0],...21 entries]}
//! ```
//!
//! A capture file is a `{"label":"<class>"}` line followed by exactly
//! [`CAPTURE_FRAMES`] frame lines. Coordinates are written with 6 significant
//! digits.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Keypoints per hand in the MediaPipe scheme.
pub const NUM_KEYPOINTS: usize = 21;

/// Frames per labeled capture.
pub const CAPTURE_FRAMES: usize = 30;

/// File extension of capture files inside a dataset directory.
pub const CAPTURE_EXTENSION: &str = "capture";

/// Wire text of the hand-lost marker line.
pub const HAND_LOST_LINE: &str = r#"{"event":"hand_lost"}"#;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("malformed frame: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema error: expected {NUM_KEYPOINTS} points, got {0}")]
    PointCount(usize),
    #[error("range error: non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("range error: detection confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("unknown stream event {0:?}")]
    UnknownEvent(String),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Frame {
        path: PathBuf,
        line: usize,
        #[source]
        source: FrameError,
    },
    #[error("{path}: bad capture header: {message}")]
    Header { path: PathBuf, message: String },
    #[error("{path}: unknown label {label:?}")]
    UnknownLabel { path: PathBuf, label: String },
    #[error("{path}: expected {CAPTURE_FRAMES} frames, found {found}")]
    FrameCount { path: PathBuf, found: usize },
    #[error("{path}:{line}: timestamp decreases")]
    Timestamp { path: PathBuf, line: usize },
}

/// One keypoint in normalized image coordinates with relative depth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Landmark {
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl Landmark {
    pub const fn new(x: f32, y: f32, z: f32) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Handedness {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

/// A single timestamped detection of one hand.
///
/// Always holds exactly [`NUM_KEYPOINTS`] finite points and a confidence in
/// `[0, 1]`; the only way to build one is through [`HandFrame::new`] or the
/// parser, both of which validate.
#[derive(Debug, Clone, PartialEq)]
pub struct HandFrame {
    timestamp_ms: u64,
    handedness: Handedness,
    detection_confidence: f32,
    points: [Landmark; NUM_KEYPOINTS],
}

impl HandFrame {
    pub fn new(
        timestamp_ms: u64,
        handedness: Handedness,
        detection_confidence: f32,
        points: [Landmark; NUM_KEYPOINTS],
    ) -> Result<Self, FrameError> {
        if !(0.0..=1.0).contains(&detection_confidence) {
            return Err(FrameError::Confidence(detection_confidence as f64));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(FrameError::NonFinite(i));
        }
        Ok(Self {
            timestamp_ms,
            handedness,
            detection_confidence,
            points,
        })
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    pub fn handedness(&self) -> Handedness {
        self.handedness
    }

    pub fn detection_confidence(&self) -> f32 {
        self.detection_confidence
    }

    pub fn points(&self) -> &[Landmark; NUM_KEYPOINTS] {
        &self.points
    }

    /// Same frame with a different timestamp.
    pub fn with_timestamp(&self, timestamp_ms: u64) -> Self {
        Self {
            timestamp_ms,
            ..self.clone()
        }
    }

    /// Serialize to one NDJSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        let mut s = String::with_capacity(640);
        s.push_str("{\"t\":");
        s.push_str(&self.timestamp_ms.to_string());
        s.push_str(match self.handedness {
            Handedness::Left => ",\"hand\":\"L\"",
            Handedness::Right => ",\"hand\":\"R\"",
        });
        s.push_str(",\"conf\":");
        s.push_str(&format_sig6(self.detection_confidence));
        s.push_str(",\"pts\":[");
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push('[');
            s.push_str(&format_sig6(p.x));
            s.push(',');
            s.push_str(&format_sig6(p.y));
            s.push(',');
            s.push_str(&format_sig6(p.z));
            s.push(']');
        }
        s.push_str("]}");
        s
    }
}

/// Shortest decimal text of `v` rounded to 6 significant digits.
pub fn format_sig6(v: f32) -> String {
    let rounded: f64 = format!("{:.5e}", v)
        .parse()
        .expect("scientific formatting always parses");
    // normalize -0 so the text stays canonical
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFrame {
    t: u64,
    hand: Handedness,
    conf: f64,
    pts: Vec<[f64; 3]>,
}

impl TryFrom<WireFrame> for HandFrame {
    type Error = FrameError;

    fn try_from(w: WireFrame) -> Result<Self, FrameError> {
        if w.pts.len() != NUM_KEYPOINTS {
            return Err(FrameError::PointCount(w.pts.len()));
        }
        let mut points = [Landmark::default(); NUM_KEYPOINTS];
        for (i, ([x, y, z], slot)) in w.pts.into_iter().zip(points.iter_mut()).enumerate() {
            let lm = Landmark::new(x as f32, y as f32, z as f32);
            if !lm.is_finite() {
                return Err(FrameError::NonFinite(i));
            }
            *slot = lm;
        }
        let conf = w.conf as f32;
        if !(0.0..=1.0).contains(&w.conf) {
            return Err(FrameError::Confidence(w.conf));
        }
        HandFrame::new(w.t, w.hand, conf, points)
    }
}

/// Parse one NDJSON frame record.
pub fn parse_frame(line: &str) -> Result<HandFrame, FrameError> {
    let wire: WireFrame = serde_json::from_str(line.trim_end_matches(['\r', '\n']))?;
    wire.try_into()
}

/// One record of a frame stream: a frame or a hand-lost marker.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamItem {
    Frame(HandFrame),
    HandLost,
}

impl StreamItem {
    pub fn to_json_line(&self) -> String {
        match self {
            StreamItem::Frame(f) => f.to_json_line(),
            StreamItem::HandLost => HAND_LOST_LINE.to_string(),
        }
    }
}

/// Parse one line of a frame stream (frame record or `{"event":"hand_lost"}`).
pub fn parse_stream_line(line: &str) -> Result<StreamItem, FrameError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let value: serde_json::Value = serde_json::from_str(line)?;
    if let Some(event) = value.get("event") {
        return match event.as_str() {
            Some("hand_lost") => Ok(StreamItem::HandLost),
            _ => Err(FrameError::UnknownEvent(event.to_string())),
        };
    }
    let wire: WireFrame = serde_json::from_value(value)?;
    Ok(StreamItem::Frame(wire.try_into()?))
}

/// The 11 gesture classes. The integer encoding is the model's output index
/// and is part of the weight-file format; it must never change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureClass {
    AirConditioning = 0,
    Curtains = 1,
    Windows = 2,
    Lights = 3,
    Toggle = 4,
    IncreaseIntensity = 5,
    DecreaseIntensity = 6,
    ColorBlue = 7,
    ColorRed = 8,
    ColorWhite = 9,
    Neutral = 10,
}

impl GestureClass {
    pub const COUNT: usize = 11;

    pub const ALL: [GestureClass; Self::COUNT] = [
        GestureClass::AirConditioning,
        GestureClass::Curtains,
        GestureClass::Windows,
        GestureClass::Lights,
        GestureClass::Toggle,
        GestureClass::IncreaseIntensity,
        GestureClass::DecreaseIntensity,
        GestureClass::ColorBlue,
        GestureClass::ColorRed,
        GestureClass::ColorWhite,
        GestureClass::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::AirConditioning => "air_conditioning",
            GestureClass::Curtains => "curtains",
            GestureClass::Windows => "windows",
            GestureClass::Lights => "lights",
            GestureClass::Toggle => "toggle",
            GestureClass::IncreaseIntensity => "increase_intensity",
            GestureClass::DecreaseIntensity => "decrease_intensity",
            GestureClass::ColorBlue => "color_blue",
            GestureClass::ColorRed => "color_red",
            GestureClass::ColorWhite => "color_white",
            GestureClass::Neutral => "neutral",
        }
    }

    /// Frozen class order as written into weight-file headers.
    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|c| c.name()).collect()
    }
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown gesture class {0:?}")]
pub struct UnknownClass(pub String);

impl FromStr for GestureClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownClass(s.to_string()))
    }
}

/// A labeled window of exactly [`CAPTURE_FRAMES`] frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    label: GestureClass,
    frames: Vec<HandFrame>,
}

impl Capture {
    /// Returns `None` unless `frames` has exactly [`CAPTURE_FRAMES`] entries.
    pub fn new(label: GestureClass, frames: Vec<HandFrame>) -> Option<Self> {
        (frames.len() == CAPTURE_FRAMES).then_some(Self { label, frames })
    }

    pub fn label(&self) -> GestureClass {
        self.label
    }

    pub fn frames(&self) -> &[HandFrame] {
        &self.frames
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{{\"label\":\"{}\"}}", self.label.name())?;
        for f in &self.frames {
            writeln!(w, "{}", f.to_json_line())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("capture text is UTF-8")
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptureHeader {
    label: String,
}

/// Read one capture file.
pub fn read_capture(path: &Path) -> Result<Capture, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut lines = io::BufReader::new(file).lines();

    let header = match lines.next() {
        Some(line) => line.map_err(io_err)?,
        None => {
            return Err(DatasetError::Header {
                path: path.to_path_buf(),
                message: "empty file".into(),
            })
        }
    };
    let header: CaptureHeader =
        serde_json::from_str(header.trim_end()).map_err(|e| DatasetError::Header {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let label: GestureClass = header.label.parse().map_err(|_| DatasetError::UnknownLabel {
        path: path.to_path_buf(),
        label: header.label.clone(),
    })?;

    let mut frames: Vec<HandFrame> = Vec::with_capacity(CAPTURE_FRAMES);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 2;
        let frame = parse_frame(&line).map_err(|source| DatasetError::Frame {
            path: path.to_path_buf(),
            line: line_no,
            source,
        })?;
        if let Some(prev) = frames.last() {
            if frame.timestamp_ms() < prev.timestamp_ms() {
                return Err(DatasetError::Timestamp {
                    path: path.to_path_buf(),
                    line: line_no,
                });
            }
        }
        frames.push(frame);
    }
    let found = frames.len();
    Capture::new(label, frames).ok_or(DatasetError::FrameCount {
        path: path.to_path_buf(),
        found,
    })
}

/// Load every `*.capture` file of a dataset directory, in file-name order.
pub fn load_captures(dir: &Path) -> Result<Vec<Capture>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == CAPTURE_EXTENSION) {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| read_capture(p)).collect()
}

/// Write captures as `<index>_<label>.capture` files into `dir`.
pub fn write_captures(dir: &Path, captures: &[Capture]) -> Result<Vec<PathBuf>, DatasetError> {
    let io_err = |path: &Path, source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let width = captures.len().max(1).to_string().len().max(4);
    let mut written = Vec::with_capacity(captures.len());
    for (i, capture) in captures.iter().enumerate() {
        let path = dir.join(format!(
            "{i:0width$}_{}.{CAPTURE_EXTENSION}",
            capture.label().name()
        ));
        fs::write(&path, capture.to_text()).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_with_points(n: usize) -> String {
        let pts = vec!["[0.5,0.5,0.0]"; n].join(",");
        format!(r#"{{"t":10,"hand":"R","conf":0.99,"pts":[{pts}]}}"#)
    }

    #[test]
    fn parses_valid_frame() {
        let f = parse_frame(&line_with_points(21)).unwrap();
        assert_eq!(f.points()[0], Landmark::new(0.5, 0.5, 0.0));
        assert_eq!(f.handedness(), Handedness::Right);
        assert_eq!(f.timestamp_ms(), 10);
        assert!((f.detection_confidence() - 0.99).abs() < 1e-7);
    }

    #[test]
    fn rejects_wrong_point_count() {
        assert!(matches!(
            parse_frame(&line_with_points(20)),
            Err(FrameError::PointCount(20))
        ));
        assert!(matches!(
            parse_frame(&line_with_points(22)),
            Err(FrameError::PointCount(22))
        ));
    }

    #[test]
    fn rejects_malformed_and_out_of_range() {
        assert!(matches!(parse_frame("{\"t\":1"), Err(FrameError::Parse(_))));
        let huge = line_with_points(21).replacen("0.5", "1e39", 1);
        assert!(matches!(parse_frame(&huge), Err(FrameError::NonFinite(0))));
        let conf = line_with_points(21).replace("0.99", "1.5");
        assert!(matches!(parse_frame(&conf), Err(FrameError::Confidence(_))));
    }

    #[test]
    fn stream_lines() {
        assert_eq!(parse_stream_line(HAND_LOST_LINE).unwrap(), StreamItem::HandLost);
        assert!(matches!(
            parse_stream_line(&line_with_points(21)).unwrap(),
            StreamItem::Frame(_)
        ));
        assert!(matches!(
            parse_stream_line(r#"{"event":"wave"}"#),
            Err(FrameError::UnknownEvent(_))
        ));
    }

    #[test]
    fn class_encoding_is_frozen() {
        assert_eq!(GestureClass::Neutral.index(), 10);
        assert_eq!(GestureClass::AirConditioning.index(), 0);
        assert_eq!(GestureClass::ColorWhite.index(), 9);
        for (i, c) in GestureClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(GestureClass::from_index(i), Some(*c));
            assert_eq!(c.name().parse::<GestureClass>().unwrap(), *c);
        }
        assert!("jazz_hands".parse::<GestureClass>().is_err());
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.5), "0.5");
        assert_eq!(format_sig6(0.123456789), "0.123457");
        assert_eq!(format_sig6(-0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
    }
}

//! The 90×21 motion matrix: x, y and z blocks of a 30-frame window stacked
//! vertically, one column per keypoint.

use std::borrow::Borrow;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::landmark::{HandFrame, CAPTURE_FRAMES, NUM_KEYPOINTS};

pub const MATRIX_ROWS: usize = 3 * CAPTURE_FRAMES;
pub const MATRIX_COLS: usize = NUM_KEYPOINTS;
pub const MATRIX_LEN: usize = MATRIX_ROWS * MATRIX_COLS;

/// Upper end of the normalized range.
pub const NORMALIZED_MAX: f64 = 255.0;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("expected {CAPTURE_FRAMES} frames, got {0}")]
    FrameCount(usize),
    #[error("expected {MATRIX_LEN} values, got {0}")]
    Shape(usize),
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is already normalized")]
    AlreadyNormalized,
    #[error("matrix is not normalized")]
    NotNormalized,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a 21x90 binary PGM: {0}")]
    Pgm(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionMatrix {
    values: Vec<f64>,
    normalized: bool,
}

impl MotionMatrix {
    /// Lay out a 30-frame window: row `r < 30` is x of frame `r`, rows
    /// `30..60` are y, rows `60..90` are z.
    pub fn encode<F: Borrow<HandFrame>>(frames: &[F]) -> Result<Self, MatrixError> {
        if frames.len() != CAPTURE_FRAMES {
            return Err(MatrixError::FrameCount(frames.len()));
        }
        let mut values = vec![0.0; MATRIX_LEN];
        for (i, frame) in frames.iter().enumerate() {
            for (c, p) in frame.borrow().points().iter().enumerate() {
                values[i * MATRIX_COLS + c] = p.x as f64;
                values[(CAPTURE_FRAMES + i) * MATRIX_COLS + c] = p.y as f64;
                values[(2 * CAPTURE_FRAMES + i) * MATRIX_COLS + c] = p.z as f64;
            }
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Encode and normalize in one step; this is what both the trainer and
    /// the live recognizer feed to the model.
    pub fn encode_normalized<F: Borrow<HandFrame>>(frames: &[F]) -> Result<Self, MatrixError> {
        Self::encode(frames)?.normalize()
    }

    /// Wrap row-major raw values.
    pub fn from_raw(values: Vec<f64>) -> Result<Self, MatrixError> {
        if values.len() != MATRIX_LEN {
            return Err(MatrixError::Shape(values.len()));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Min-max scale all 1890 entries jointly onto `[0, 255]`.
    ///
    /// A constant matrix maps to all zeros.
    pub fn normalize(&self) -> Result<Self, MatrixError> {
        if self.normalized {
            return Err(MatrixError::AlreadyNormalized);
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite {
                row: i / MATRIX_COLS,
                col: i % MATRIX_COLS,
            });
        }
        let (min, max) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = max - min;
        let values = if range > 0.0 {
            self.values
                .iter()
                .map(|&v| (NORMALIZED_MAX * ((v - min) / range)).clamp(0.0, NORMALIZED_MAX))
                .collect()
        } else {
            vec![0.0; MATRIX_LEN]
        };
        Ok(Self {
            values,
            normalized: true,
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * MATRIX_COLS + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * MATRIX_COLS..(row + 1) * MATRIX_COLS]
    }

    /// Row-major entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest within-block variance of any column, over the three 30-row
    /// axis blocks. Zero for a perfectly static window.
    pub fn max_block_column_variance(&self) -> f64 {
        let mut worst = 0.0f64;
        for block in 0..3 {
            for c in 0..MATRIX_COLS {
                let col = (0..CAPTURE_FRAMES).map(|i| self.get(block * CAPTURE_FRAMES + i, c));
                let n = CAPTURE_FRAMES as f64;
                let mean = col.clone().sum::<f64>() / n;
                let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                worst = worst.max(var);
            }
        }
        worst
    }

    /// 8-bit grayscale pixels, row-major, `round(v)` clamped to `0..=255`.
    pub fn to_pixels(&self) -> Result<Vec<u8>, MatrixError> {
        if !self.normalized {
            return Err(MatrixError::NotNormalized);
        }
        Ok(self
            .values
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect())
    }

    /// Binary PGM (P5) image, 21 wide and 90 high.
    pub fn to_pgm(&self) -> Result<Vec<u8>, MatrixError> {
        let pixels = self.to_pixels()?;
        let mut out = format!("P5\n{MATRIX_COLS} {MATRIX_ROWS}\n255\n").into_bytes();
        out.extend_from_slice(&pixels);
        Ok(out)
    }

    pub fn export_pgm(&self, path: &Path) -> Result<(), MatrixError> {
        let bytes = self.to_pgm()?;
        fs::write(path, bytes).map_err(|source| MatrixError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Parse a 21×90 maxval-255 P5 image back into its pixel grid.
pub fn parse_pgm(bytes: &[u8]) -> Result<Vec<u8>, MatrixError> {
    // header: magic, width, height, maxval separated by whitespace; single
    // whitespace byte before the raster
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(MatrixError::Pgm("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let expected = [
        "P5".to_string(),
        MATRIX_COLS.to_string(),
        MATRIX_ROWS.to_string(),
        "255".to_string(),
    ];
    if fields != expected {
        return Err(MatrixError::Pgm(format!("header {fields:?}")));
    }
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != MATRIX_LEN {
        return Err(MatrixError::Pgm(format!(
            "raster has {} bytes, expected {MATRIX_LEN}",
            raster.len()
        )));
    }
    Ok(raster.to_vec())
}

pub fn read_pgm(path: &Path) -> Result<Vec<u8>, MatrixError> {
    let bytes = fs::read(path).map_err(|source| MatrixError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_pgm(&bytes)
}

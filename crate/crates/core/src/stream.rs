//! Sliding-window recognition over a live frame stream.
//!
//! Every arriving frame is inserted `n` times (the triplication factor) into
//! a 30-entry window, evicting the oldest entries once full. Each time the
//! window holds 30 entries it is encoded, normalized and classified; a
//! prediction at or above the confidence threshold becomes a
//! [`RecognitionEvent`] and empties the window. Losing the hand empties it
//! too.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnn::{Network, Prediction, Real};
use crate::landmark::{GestureClass, HandFrame, StreamItem, CAPTURE_FRAMES};
use crate::matrix::MotionMatrix;

pub const WINDOW_CAPACITY: usize = CAPTURE_FRAMES;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("confidence threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("triplication factor must lie in 1..={WINDOW_CAPACITY}, got {0}")]
    Triplication(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizerConfig {
    pub confidence_threshold: f64,
    pub triplication_n: usize,
    pub suppress_neutral_events: bool,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.98,
            triplication_n: 3,
            suppress_neutral_events: true,
        }
    }
}

impl RecognizerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold <= 1.0) {
            return Err(ConfigError::Threshold(self.confidence_threshold));
        }
        if !(1..=WINDOW_CAPACITY).contains(&self.triplication_n) {
            return Err(ConfigError::Triplication(self.triplication_n));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionEvent {
    pub gesture: GestureClass,
    pub confidence: f64,
    pub window_end_timestamp_ms: u64,
}

/// Identity of one window entry: arrival index of its frame and which of
/// the `n` copies it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntryId {
    pub frame_seq: u64,
    pub copy: usize,
}

#[derive(Debug, Clone)]
struct Entry {
    frame: Arc<HandFrame>,
    id: EntryId,
}

#[derive(Debug, Clone)]
pub struct WindowBuffer {
    entries: VecDeque<Entry>,
    triplication_n: usize,
    next_seq: u64,
}

impl WindowBuffer {
    pub fn new(triplication_n: usize) -> Result<Self, ConfigError> {
        if !(1..=WINDOW_CAPACITY).contains(&triplication_n) {
            return Err(ConfigError::Triplication(triplication_n));
        }
        Ok(Self {
            entries: VecDeque::with_capacity(WINDOW_CAPACITY),
            triplication_n,
            next_seq: 0,
        })
    }

    /// Append `n` copies of `frame`, evicting the oldest surplus entries.
    pub fn push(&mut self, frame: HandFrame) {
        let frame = Arc::new(frame);
        let seq = self.next_seq;
        self.next_seq += 1;
        let surplus = (self.entries.len() + self.triplication_n).saturating_sub(WINDOW_CAPACITY);
        self.entries.drain(..surplus);
        for copy in 0..self.triplication_n {
            self.entries.push_back(Entry {
                frame: Arc::clone(&frame),
                id: EntryId { frame_seq: seq, copy },
            });
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == WINDOW_CAPACITY
    }

    pub fn triplication_n(&self) -> usize {
        self.triplication_n
    }

    pub fn entry_ids(&self) -> Vec<EntryId> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn frames(&self) -> Vec<&HandFrame> {
        self.entries.iter().map(|e| e.frame.as_ref()).collect()
    }

    /// Encoded, normalized window; `None` until the buffer is full.
    pub fn matrix(&self) -> Option<MotionMatrix> {
        if !self.is_full() {
            return None;
        }
        Some(
            MotionMatrix::encode_normalized(&self.frames())
                .expect("validated frames always encode"),
        )
    }
}

/// Per-stream recognizer state. The model is passed per call and only read.
#[derive(Debug, Clone)]
pub struct StreamRecognizer {
    config: RecognizerConfig,
    buffer: WindowBuffer,
    last_prediction: Option<Prediction>,
    inferences: u64,
}

impl StreamRecognizer {
    pub fn new(config: RecognizerConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            buffer: WindowBuffer::new(config.triplication_n)?,
            config,
            last_prediction: None,
            inferences: 0,
        })
    }

    pub fn config(&self) -> &RecognizerConfig {
        &self.config
    }

    pub fn buffer(&self) -> &WindowBuffer {
        &self.buffer
    }

    /// Most recent model output, whether or not it produced an event.
    pub fn last_prediction(&self) -> Option<&Prediction> {
        self.last_prediction.as_ref()
    }

    /// Number of forward passes run so far.
    pub fn inferences(&self) -> u64 {
        self.inferences
    }

    pub fn push_frame<T: Real>(&mut self, frame: HandFrame, model: &Network<T>) -> Option<RecognitionEvent> {
        let timestamp = frame.timestamp_ms();
        self.buffer.push(frame);
        let matrix = self.buffer.matrix()?;
        let prediction = model
            .forward(&matrix)
            .expect("window matrices are always normalized");
        self.inferences += 1;
        let fire = prediction.confidence >= self.config.confidence_threshold
            && !(self.config.suppress_neutral_events && prediction.class == GestureClass::Neutral);
        let event = fire.then_some(RecognitionEvent {
            gesture: prediction.class,
            confidence: prediction.confidence,
            window_end_timestamp_ms: timestamp,
        });
        self.last_prediction = Some(prediction);
        if event.is_some() {
            self.buffer.clear();
        }
        event
    }

    pub fn hand_lost(&mut self) {
        self.buffer.clear();
    }

    pub fn handle<T: Real>(&mut self, item: StreamItem, model: &Network<T>) -> Option<RecognitionEvent> {
        match item {
            StreamItem::Frame(frame) => self.push_frame(frame, model),
            StreamItem::HandLost => {
                self.hand_lost();
                None
            }
        }
    }
}

/// Fold a whole stream through a fresh recognizer.
pub fn run_stream<T, I, E>(
    items: I,
    model: &Network<T>,
    config: &RecognizerConfig,
) -> Result<Vec<RecognitionEvent>, E>
where
    T: Real,
    I: IntoIterator<Item = Result<StreamItem, E>>,
    E: From<ConfigError>,
{
    let mut recognizer = StreamRecognizer::new(config.clone())?;
    let mut events = Vec::new();
    for item in items {
        if let Some(event) = recognizer.handle(item?, model) {
            events.push(event);
        }
    }
    Ok(events)
}

//! Hand-gesture recognition from 21-keypoint landmark streams: frame and
//! capture formats, motion-matrix encoding, a small CNN with its trainer,
//! sliding-window stream recognition, a device controller, and a synthetic
//! gesture generator.

pub mod cnn;
pub mod home;
pub mod landmark;
pub mod matrix;
pub mod stream;
pub mod synth;

pub use cnn::{ArchitectureConfig, CnnModel, Network, Prediction, Sample, TrainConfig};
pub use home::{Home, HomeState};
pub use landmark::{Capture, GestureClass, HandFrame, Landmark, StreamItem};
pub use matrix::MotionMatrix;
pub use stream::{RecognitionEvent, RecognizerConfig, StreamRecognizer};

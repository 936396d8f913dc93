//! One recognition session: recognizer plus controller over a single frame
//! stream, producing the NDJSON reply lines shared by `stream` and `serve`.

use gestr_core::home::{ActionEntry, ControllerConfig};
use gestr_core::landmark::{parse_stream_line, FrameError};
use gestr_core::stream::ConfigError;
use gestr_core::{CnnModel, Home, HomeState, RecognizerConfig, StreamItem, StreamRecognizer};
use serde::Serialize;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionConfig {
    pub recognizer: RecognizerConfig,
    pub controller: ControllerConfig,
}

#[derive(Serialize)]
struct StateLine<'a> {
    state: &'a HomeState,
}

#[derive(Serialize)]
struct EventLine<'a> {
    event: &'a ActionEntry,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
}

pub fn error_line(message: &str) -> String {
    serde_json::to_string(&ErrorLine { error: message }).expect("error line serializes")
}

pub struct Session<'m> {
    model: &'m CnnModel,
    recognizer: StreamRecognizer,
    home: Home,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m CnnModel, config: &SessionConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            model,
            recognizer: StreamRecognizer::new(config.recognizer.clone())?,
            home: Home::new(config.controller.clone()),
        })
    }

    pub fn home(&self) -> &Home {
        &self.home
    }

    pub fn state_line(&self) -> String {
        serde_json::to_string(&StateLine {
            state: self.home.state(),
        })
        .expect("state serializes")
    }

    /// Reply lines for one stream item: an event line and a state line after
    /// each recognition, nothing otherwise.
    pub fn handle(&mut self, item: StreamItem) -> Vec<String> {
        let Some(event) = self.recognizer.handle(item, self.model) else {
            return Vec::new();
        };
        let entry = self.home.handle(&event);
        let event_line = serde_json::to_string(&EventLine { event: entry }).expect("event serializes");
        vec![event_line, self.state_line()]
    }

    pub fn handle_line(&mut self, line: &str) -> Result<Vec<String>, FrameError> {
        Ok(self.handle(parse_stream_line(line)?))
    }
}

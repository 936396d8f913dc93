//! Home-automation state machine driven by recognized gestures.
//!
//! Device letters select the context device; the remaining commands act on
//! whatever device is in context. Commands that do not apply are logged as
//! rejected no-ops.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmark::GestureClass;
use crate::stream::RecognitionEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    AirConditioning,
    Curtains,
    Windows,
    Lights,
}

impl Device {
    pub const ALL: [Device; 4] = [
        Device::AirConditioning,
        Device::Curtains,
        Device::Windows,
        Device::Lights,
    ];

    pub fn for_gesture(gesture: GestureClass) -> Option<Device> {
        match gesture {
            GestureClass::AirConditioning => Some(Device::AirConditioning),
            GestureClass::Curtains => Some(Device::Curtains),
            GestureClass::Windows => Some(Device::Windows),
            GestureClass::Lights => Some(Device::Lights),
            _ => None,
        }
    }

    pub fn has_intensity(self) -> bool {
        matches!(self, Device::AirConditioning | Device::Lights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightColor {
    White,
    Blue,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchState {
    pub power: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimmerState {
    pub power: bool,
    pub intensity: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LightState {
    pub power: bool,
    pub intensity: u8,
    pub color: LightColor,
}

/// Snapshot of the simulated home. Serialized field names are stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeState {
    pub context: Option<Device>,
    pub air_conditioning: DimmerState,
    pub curtains: SwitchState,
    pub windows: SwitchState,
    pub lights: LightState,
}

impl HomeState {
    /// Everything off, no context, intensities at `initial_intensity`,
    /// white light.
    pub fn all_off(initial_intensity: u8) -> Self {
        let intensity = initial_intensity.min(100);
        Self {
            context: None,
            air_conditioning: DimmerState {
                power: false,
                intensity,
            },
            curtains: SwitchState { power: false },
            windows: SwitchState { power: false },
            lights: LightState {
                power: false,
                intensity,
                color: LightColor::White,
            },
        }
    }

    pub fn power(&self, device: Device) -> bool {
        match device {
            Device::AirConditioning => self.air_conditioning.power,
            Device::Curtains => self.curtains.power,
            Device::Windows => self.windows.power,
            Device::Lights => self.lights.power,
        }
    }

    fn power_mut(&mut self, device: Device) -> &mut bool {
        match device {
            Device::AirConditioning => &mut self.air_conditioning.power,
            Device::Curtains => &mut self.curtains.power,
            Device::Windows => &mut self.windows.power,
            Device::Lights => &mut self.lights.power,
        }
    }

    pub fn intensity(&self, device: Device) -> Option<u8> {
        match device {
            Device::AirConditioning => Some(self.air_conditioning.intensity),
            Device::Lights => Some(self.lights.intensity),
            Device::Curtains | Device::Windows => None,
        }
    }

    fn intensity_mut(&mut self, device: Device) -> Option<&mut u8> {
        match device {
            Device::AirConditioning => Some(&mut self.air_conditioning.intensity),
            Device::Lights => Some(&mut self.lights.intensity),
            Device::Curtains | Device::Windows => None,
        }
    }
}

impl Default for HomeState {
    fn default() -> Self {
        Self::all_off(ControllerConfig::default().initial_intensity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Percentage points per increase/decrease command.
    pub intensity_step: u8,
    pub initial_intensity: u8,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            intensity_step: 10,
            initial_intensity: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NeutralGesture,
    NoDeviceSelected,
    IntensityNotApplicable,
    ColorNotApplicable,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NeutralGesture => "neutral gesture carries no command",
            RejectReason::NoDeviceSelected => "no device selected",
            RejectReason::IntensityNotApplicable => "intensity not applicable",
            RejectReason::ColorNotApplicable => "color not applicable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum Change {
    Context { from: Option<Device>, to: Device },
    Power { device: Device, from: bool, to: bool },
    Intensity { device: Device, from: u8, to: u8 },
    Color { from: LightColor, to: LightColor },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEntry {
    pub timestamp_ms: u64,
    pub gesture: GestureClass,
    pub confidence: f64,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<RejectReason>,
    pub changes: Vec<Change>,
}

impl ActionEntry {
    pub fn event(&self) -> RecognitionEvent {
        RecognitionEvent {
            gesture: self.gesture,
            confidence: self.confidence,
            window_end_timestamp_ms: self.timestamp_ms,
        }
    }
}

/// Pure transition: the next state and the log entry describing it.
pub fn apply(state: &HomeState, event: &RecognitionEvent, config: &ControllerConfig) -> (HomeState, ActionEntry) {
    let mut next = state.clone();
    let outcome = transition(&mut next, event.gesture, config);
    let (accepted, reason, changes) = match outcome {
        Ok(changes) => (true, None, changes),
        Err(reason) => {
            next = state.clone();
            (false, Some(reason), Vec::new())
        }
    };
    let entry = ActionEntry {
        timestamp_ms: event.window_end_timestamp_ms,
        gesture: event.gesture,
        confidence: event.confidence,
        accepted,
        reason,
        changes,
    };
    (next, entry)
}

fn transition(
    state: &mut HomeState,
    gesture: GestureClass,
    config: &ControllerConfig,
) -> Result<Vec<Change>, RejectReason> {
    use GestureClass as G;

    if let Some(device) = Device::for_gesture(gesture) {
        let from = state.context.replace(device);
        return Ok(if from == Some(device) {
            Vec::new()
        } else {
            vec![Change::Context { from, to: device }]
        });
    }
    if gesture == G::Neutral {
        return Err(RejectReason::NeutralGesture);
    }
    let device = state.context.ok_or(RejectReason::NoDeviceSelected)?;
    match gesture {
        G::Toggle => {
            let power = state.power_mut(device);
            let from = *power;
            *power = !from;
            Ok(vec![Change::Power {
                device,
                from,
                to: !from,
            }])
        }
        G::IncreaseIntensity | G::DecreaseIntensity => {
            let level = state
                .intensity_mut(device)
                .ok_or(RejectReason::IntensityNotApplicable)?;
            let from = *level;
            let to = if gesture == G::IncreaseIntensity {
                from.saturating_add(config.intensity_step).min(100)
            } else {
                from.saturating_sub(config.intensity_step)
            };
            *level = to;
            Ok(if to == from {
                Vec::new()
            } else {
                vec![Change::Intensity { device, from, to }]
            })
        }
        G::ColorBlue | G::ColorRed | G::ColorWhite => {
            if device != Device::Lights {
                return Err(RejectReason::ColorNotApplicable);
            }
            let to = match gesture {
                G::ColorBlue => LightColor::Blue,
                G::ColorRed => LightColor::Red,
                _ => LightColor::White,
            };
            let from = std::mem::replace(&mut state.lights.color, to);
            Ok(if from == to {
                Vec::new()
            } else {
                vec![Change::Color { from, to }]
            })
        }
        G::AirConditioning | G::Curtains | G::Windows | G::Lights | G::Neutral => {
            unreachable!("handled above")
        }
    }
}

#[derive(Debug, Error)]
#[error("log timestamps must not decrease: {previous} then {next}")]
pub struct NonMonotone {
    pub previous: u64,
    pub next: u64,
}

/// Append-only record of every handled event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionLog {
    entries: Vec<ActionEntry>,
}

impl ActionLog {
    pub fn append(&mut self, entry: ActionEntry) -> Result<(), NonMonotone> {
        if let Some(last) = self.entries.last() {
            if entry.timestamp_ms < last.timestamp_ms {
                return Err(NonMonotone {
                    previous: last.timestamp_ms,
                    next: entry.timestamp_ms,
                });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[ActionEntry] {
        &self.entries
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.entries.last().map(|e| e.timestamp_ms)
    }

    /// Re-apply the accepted entries to `initial`.
    pub fn replay(&self, initial: &HomeState, config: &ControllerConfig) -> HomeState {
        self.entries
            .iter()
            .filter(|e| e.accepted)
            .fold(initial.clone(), |state, e| apply(&state, &e.event(), config).0)
    }

    pub fn to_ndjson(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entries serialize") + "\n")
            .collect()
    }
}

/// A home owning its state and log.
#[derive(Debug, Clone)]
pub struct Home {
    config: ControllerConfig,
    state: HomeState,
    log: ActionLog,
}

impl Home {
    pub fn new(config: ControllerConfig) -> Self {
        Self {
            state: HomeState::all_off(config.initial_intensity),
            config,
            log: ActionLog::default(),
        }
    }

    pub fn state(&self) -> &HomeState {
        &self.state
    }

    pub fn log(&self) -> &ActionLog {
        &self.log
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// Apply an event and log it. Event timestamps earlier than the last
    /// log entry (a restarted stream) are logged at the last timestamp.
    pub fn handle(&mut self, event: &RecognitionEvent) -> &ActionEntry {
        let (next, mut entry) = apply(&self.state, event, &self.config);
        if let Some(last) = self.log.last_timestamp() {
            entry.timestamp_ms = entry.timestamp_ms.max(last);
        }
        self.state = next;
        self.log.append(entry).expect("timestamp clamped above");
        self.log.entries().last().expect("just appended")
    }
}

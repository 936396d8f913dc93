//! Deterministic synthetic gestures.
//!
//! A 21-keypoint hand skeleton is posed by per-finger curl values, rotated
//! (roll in the image plane, yaw about the vertical axis), scaled and placed
//! in normalized image coordinates. Each class has a base pose and
//! optionally a motion: Windows rolls the hand about the wrist, Toggle opens
//! and closes the fingers, the intensity commands translate the hand up or
//! down. Every capture draws small variations of pose, placement and speed,
//! plus per-frame Gaussian jitter.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::landmark::{Capture, GestureClass, HandFrame, Handedness, Landmark, StreamItem, CAPTURE_FRAMES, NUM_KEYPOINTS};

/// Nominal camera rate.
pub const FPS: u64 = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Per-frame positional noise, normalized image units.
    pub jitter_sigma: f64,
    /// Relative speed variation: phase rate drawn from `1 ± speed_warp`.
    pub speed_warp: f64,
    /// Neutral captures per class capture.
    pub neutral_multiplier: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            jitter_sigma: 0.01,
            speed_warp: 0.2,
            neutral_multiplier: 2,
        }
    }
}

/// Finger order: thumb, index, middle, ring, pinky.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandPose {
    /// 0 = straight, 1 = fully curled.
    pub curls: [f64; 5],
    /// Extra fan-out of the fingers, degrees.
    pub spread_deg: f64,
    /// Rotation in the image plane about the wrist, degrees.
    pub roll_deg: f64,
    /// Rotation about the hand's vertical axis, degrees.
    pub yaw_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Static,
    /// Roll grows linearly by this many degrees over the gesture.
    Roll { degrees: f64 },
    /// All curls follow `closed - (closed - open) * sin(pi * phase)`.
    OpenClose { closed: f64, open: f64 },
    /// Linear wrist translation over the gesture (image units, +y is down).
    Translate { dx: f64, dy: f64 },
}

impl Motion {
    pub fn is_static(&self) -> bool {
        matches!(self, Motion::Static)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureTemplate {
    pub class: GestureClass,
    pub pose: HandPose,
    pub motion: Motion,
}

const fn pose(curls: [f64; 5], spread_deg: f64, roll_deg: f64, yaw_deg: f64) -> HandPose {
    HandPose {
        curls,
        spread_deg,
        roll_deg,
        yaw_deg,
    }
}

/// Relaxed, lowered hand positions that carry no command.
const NEUTRAL_POSES: [HandPose; 4] = [
    pose([0.3, 0.2, 0.25, 0.3, 0.35], 0.0, 150.0, 20.0),
    pose([0.5, 0.45, 0.5, 0.55, 0.6], 4.0, 175.0, -25.0),
    pose([0.1, 0.05, 0.05, 0.1, 0.1], 6.0, 200.0, 0.0),
    pose([0.7, 0.65, 0.7, 0.75, 0.8], 0.0, 165.0, 40.0),
];

impl GestureTemplate {
    /// Template of `class`; `variant` picks among the neutral poses and is
    /// ignored otherwise.
    pub fn for_class(class: GestureClass, variant: usize) -> Self {
        use GestureClass as G;
        let (pose, motion) = match class {
            G::AirConditioning => (pose([0.15, 1.0, 1.0, 1.0, 1.0], 0.0, 0.0, 0.0), Motion::Static),
            G::Curtains => (pose([0.45, 0.5, 0.5, 0.5, 0.5], 0.0, 0.0, 60.0), Motion::Static),
            G::Windows => (
                pose([0.9, 1.0, 1.0, 1.0, 0.0], 0.0, 0.0, 0.0),
                Motion::Roll { degrees: -75.0 },
            ),
            G::Lights => (pose([0.0, 0.0, 1.0, 1.0, 1.0], 15.0, 0.0, 0.0), Motion::Static),
            G::Toggle => (
                pose([0.9; 5], 0.0, 0.0, 0.0),
                Motion::OpenClose {
                    closed: 0.9,
                    open: 0.2,
                },
            ),
            G::IncreaseIntensity => (
                pose([1.0, 0.0, 0.0, 1.0, 1.0], 12.0, 0.0, 0.0),
                Motion::Translate { dx: 0.0, dy: -0.15 },
            ),
            G::DecreaseIntensity => (
                pose([1.0, 0.0, 1.0, 1.0, 1.0], 0.0, 0.0, 0.0),
                Motion::Translate { dx: 0.0, dy: 0.15 },
            ),
            G::ColorBlue => (pose([1.0, 0.0, 0.0, 0.0, 0.0], 0.0, 0.0, 0.0), Motion::Static),
            G::ColorRed => (pose([0.2, 0.0, 0.0, 1.0, 1.0], -5.0, 20.0, 0.0), Motion::Static),
            G::ColorWhite => (pose([1.0, 0.0, 0.0, 0.0, 1.0], 12.0, 0.0, 0.0), Motion::Static),
            G::Neutral => (NEUTRAL_POSES[variant % NEUTRAL_POSES.len()], Motion::Static),
        };
        Self { class, pose, motion }
    }

    pub fn neutral_variants() -> usize {
        NEUTRAL_POSES.len()
    }

    /// Keypoints at the start of the gesture, canonical placement.
    pub fn base_pose(&self) -> [Landmark; NUM_KEYPOINTS] {
        render(&self.pose, &Placement::canonical())
    }

    /// Pose and placement at `phase` in `[0, 1]`.
    fn at(&self, phase: f64, placement: &Placement, variation: &HandPose) -> [Landmark; NUM_KEYPOINTS] {
        let mut pose = *variation;
        let mut place = *placement;
        match self.motion {
            Motion::Static => {}
            Motion::Roll { degrees } => pose.roll_deg += degrees * phase,
            Motion::OpenClose { closed, open } => {
                let c = closed - (closed - open) * (PI * phase).sin();
                let offsets = variation.curls.map(|v| v - closed);
                pose.curls = offsets.map(|o| (c + o).clamp(0.0, 1.0));
            }
            Motion::Translate { dx, dy } => {
                place.cx += dx * phase;
                place.cy += dy * phase;
            }
        }
        render(&pose, &place)
    }
}

/// Wrist position and hand size in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Placement {
    cx: f64,
    cy: f64,
    scale: f64,
}

impl Placement {
    fn canonical() -> Self {
        Self {
            cx: 0.5,
            cy: 0.65,
            scale: 0.18,
        }
    }
}

struct Finger {
    base: (f64, f64),
    angle_deg: f64,
    bones: [f64; 3],
    bend_deg: [f64; 3],
    /// Spread multiplier (signed fan-out direction).
    fan: f64,
}

// Palm-length units; +X toward the thumb, +Y toward the fingers.
const FINGERS: [Finger; 5] = [
    Finger {
        base: (0.25, 0.25),
        angle_deg: 40.0,
        bones: [0.35, 0.3, 0.25],
        bend_deg: [40.0, 50.0, 60.0],
        fan: 1.5,
    },
    Finger {
        base: (0.25, 0.95),
        angle_deg: 8.0,
        bones: [0.4, 0.25, 0.2],
        bend_deg: [70.0, 95.0, 65.0],
        fan: 1.0,
    },
    Finger {
        base: (0.05, 1.0),
        angle_deg: 0.0,
        bones: [0.45, 0.28, 0.22],
        bend_deg: [70.0, 95.0, 65.0],
        fan: 0.0,
    },
    Finger {
        base: (-0.15, 0.95),
        angle_deg: -8.0,
        bones: [0.42, 0.26, 0.2],
        bend_deg: [70.0, 95.0, 65.0],
        fan: -1.0,
    },
    Finger {
        base: (-0.33, 0.85),
        angle_deg: -16.0,
        bones: [0.33, 0.2, 0.18],
        bend_deg: [70.0, 95.0, 65.0],
        fan: -1.5,
    },
];

fn render(pose: &HandPose, place: &Placement) -> [Landmark; NUM_KEYPOINTS] {
    // skeleton in hand coordinates (X, Y, Z), Z toward the camera negative
    let mut local = [[0.0f64; 3]; NUM_KEYPOINTS];
    for (f, finger) in FINGERS.iter().enumerate() {
        let angle = (finger.angle_deg + finger.fan * pose.spread_deg).to_radians();
        let dir = [angle.sin(), angle.cos(), 0.0];
        // fingers fold toward the camera; the thumb also folds across the palm
        let bend_axis = if f == 0 {
            [-std::f64::consts::FRAC_1_SQRT_2, 0.0, -std::f64::consts::FRAC_1_SQRT_2]
        } else {
            [0.0, 0.0, -1.0]
        };
        let first = if f == 0 { 1 } else { 1 + 4 * f };
        let mut p = [finger.base.0, finger.base.1, 0.0];
        // thumb: base is CMC (index 1) with three bones to MCP, IP, TIP;
        // fingers: base is MCP with three bones to PIP, DIP, TIP
        local[first] = p;
        let mut phi = 0.0;
        for j in 0..3 {
            phi += pose.curls[f].clamp(0.0, 1.0) * finger.bend_deg[j].to_radians();
            let (s, c) = phi.sin_cos();
            for a in 0..3 {
                p[a] += finger.bones[j] * (c * dir[a] + s * bend_axis[a]);
            }
            local[first + j + 1] = p;
        }
    }

    let (sy, cy) = pose.yaw_deg.to_radians().sin_cos();
    let (sr, cr) = pose.roll_deg.to_radians().sin_cos();
    std::array::from_fn(|i| {
        let [x, y, z] = local[i];
        let xr = x * cy + z * sy;
        let zr = -x * sy + z * cy;
        Landmark::new(
            (place.cx + place.scale * (xr * cr - y * sr)) as f32,
            (place.cy - place.scale * (xr * sr + y * cr)) as f32,
            (place.scale * zr) as f32,
        )
    })
}

/// Per-capture random draw: pose variation, placement and speed.
struct CaptureDraw {
    template: GestureTemplate,
    pose: HandPose,
    place: Placement,
    rate: f64,
    confidence: f32,
}

fn draw(template: GestureTemplate, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> CaptureDraw {
    let mut pose = template.pose;
    for c in &mut pose.curls {
        *c = (*c + rng.random_range(-0.05..=0.05)).clamp(0.0, 1.0);
    }
    pose.spread_deg += rng.random_range(-3.0..=3.0);
    pose.roll_deg += rng.random_range(-5.0..=5.0);
    pose.yaw_deg += rng.random_range(-5.0..=5.0);
    let canonical = Placement::canonical();
    let place = Placement {
        cx: canonical.cx + rng.random_range(-0.03..=0.03),
        cy: canonical.cy + rng.random_range(-0.03..=0.03),
        scale: canonical.scale * rng.random_range(0.92..=1.08),
    };
    let rate = if cfg.speed_warp > 0.0 {
        rng.random_range(1.0 - cfg.speed_warp..=1.0 + cfg.speed_warp)
    } else {
        1.0
    };
    CaptureDraw {
        template,
        pose,
        place,
        rate,
        confidence: rng.random_range(0.9f32..1.0),
    }
}

/// Render `n` frames of a drawn gesture, timestamps `t0, t0+33, ...`.
fn render_frames(d: &CaptureDraw, n: usize, first_frame: u64, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<HandFrame> {
    let noise = (cfg.jitter_sigma > 0.0).then(|| Normal::new(0.0, cfg.jitter_sigma).expect("valid sigma"));
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 1.0 };
            let phase = (t * d.rate).min(1.0);
            let mut points = d.template.at(phase, &d.place, &d.pose);
            if let Some(noise) = &noise {
                for p in &mut points {
                    p.x += noise.sample(rng) as f32;
                    p.y += noise.sample(rng) as f32;
                    p.z += noise.sample(rng) as f32;
                }
            }
            HandFrame::new(frame_time(first_frame + i as u64), Handedness::Right, d.confidence, points)
                .expect("synthetic frames are finite")
        })
        .collect()
}

/// Timestamp of the `k`-th frame on a 30 fps timeline.
pub fn frame_time(k: u64) -> u64 {
    (k * 1000 + FPS / 2) / FPS
}

/// `captures_per_class` captures of every class, `neutral_multiplier` times
/// as many neutral ones, in class order.
pub fn generate_dataset(seed: u64, captures_per_class: usize, neutral_multiplier: usize) -> Vec<Capture> {
    let cfg = SynthConfig {
        neutral_multiplier,
        ..SynthConfig::default()
    };
    generate_dataset_with(seed, captures_per_class, &cfg)
}

pub fn generate_dataset_with(seed: u64, captures_per_class: usize, cfg: &SynthConfig) -> Vec<Capture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class in GestureClass::ALL {
        let count = if class == GestureClass::Neutral {
            captures_per_class * cfg.neutral_multiplier
        } else {
            captures_per_class
        };
        for k in 0..count {
            let d = draw(GestureTemplate::for_class(class, k), cfg, &mut rng);
            let frames = render_frames(&d, CAPTURE_FRAMES, 0, cfg, &mut rng);
            out.push(Capture::new(class, frames).expect("30 frames rendered"));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptItem {
    Gesture(GestureClass),
    HandLost,
    /// Advance the clock without emitting frames.
    IdleMs(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOptions {
    /// How much faster than a capture a gesture is performed: each gesture
    /// is rendered in `ceil(30 / speed)` frames. With the recognizer's
    /// triplication factor equal to `speed`, one full window spans exactly
    /// one gesture.
    pub speed: usize,
    pub synth: SynthConfig,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            speed: 3,
            synth: SynthConfig::default(),
        }
    }
}

/// Render a script as a frame stream on a 30 fps timeline.
pub fn generate_stream(seed: u64, script: &[ScriptItem], opts: &StreamOptions) -> Vec<StreamItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames_per_gesture = CAPTURE_FRAMES.div_ceil(opts.speed.max(1));
    let mut frame_index = 0u64;
    let mut out = Vec::new();
    let mut variants = 0;
    for item in script {
        match *item {
            ScriptItem::Gesture(class) => {
                let variant = if class == GestureClass::Neutral {
                    variants += 1;
                    variants - 1
                } else {
                    0
                };
                let d = draw(GestureTemplate::for_class(class, variant), &opts.synth, &mut rng);
                let frames = render_frames(&d, frames_per_gesture, frame_index, &opts.synth, &mut rng);
                frame_index += frames.len() as u64;
                out.extend(frames.into_iter().map(StreamItem::Frame));
            }
            ScriptItem::HandLost => out.push(StreamItem::HandLost),
            ScriptItem::IdleMs(ms) => frame_index += ms * FPS / 1000,
        }
    }
    out
}

pub fn stream_to_ndjson(items: &[StreamItem]) -> String {
    items.iter().map(|i| i.to_json_line() + "\n").collect()
}

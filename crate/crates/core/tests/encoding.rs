use gestr_core::landmark::Handedness;
use gestr_core::matrix::{parse_pgm, read_pgm, MatrixError, MATRIX_COLS, MATRIX_LEN, MATRIX_ROWS};
use gestr_core::synth::{generate_dataset_with, GestureTemplate, SynthConfig};
use gestr_core::{HandFrame, Landmark, MotionMatrix};
use proptest::prelude::*;

fn frames_from(points: &[[(f32, f32, f32); 21]]) -> Vec<HandFrame> {
    points
        .iter()
        .enumerate()
        .map(|(i, pts)| {
            let pts = pts.map(|(x, y, z)| Landmark::new(x, y, z));
            HandFrame::new(i as u64 * 33, Handedness::Right, 0.9, pts).unwrap()
        })
        .collect()
}

fn random_frames() -> impl Strategy<Value = Vec<HandFrame>> {
    prop::collection::vec(prop::array::uniform21((-1.0..2.0f32, -1.0..2.0f32, -0.5..0.5f32)), 30)
        .prop_map(|p| frames_from(&p))
}

proptest! {
    #[test]
    fn block_layout(frames in random_frames()) {
        let m = MotionMatrix::encode(&frames).unwrap();
        prop_assert!(!m.is_normalized());
        for (f, frame) in frames.iter().enumerate() {
            for (k, p) in frame.points().iter().enumerate() {
                prop_assert_eq!(m.get(f, k), p.x as f64);
                prop_assert_eq!(m.get(30 + f, k), p.y as f64);
                prop_assert_eq!(m.get(60 + f, k), p.z as f64);
                prop_assert_eq!(m.values()[(60 + f) * MATRIX_COLS + k], p.z as f64);
            }
        }
        prop_assert_eq!(MotionMatrix::encode(&frames).unwrap(), m);
    }

    #[test]
    fn normalized_range_spans_0_to_255(frames in random_frames()) {
        let m = MotionMatrix::encode_normalized(&frames).unwrap();
        let min = m.values().iter().copied().fold(f64::INFINITY, f64::min);
        let max = m.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(min, 0.0);
        prop_assert_eq!(max, 255.0);
    }

    #[test]
    fn normalization_ignores_scale_and_offset(
        raw in prop::collection::vec(-1.0..1.0f64, MATRIX_LEN),
        a in 0.01..100.0f64,
        b in -100.0..100.0f64,
    ) {
        let m = MotionMatrix::from_raw(raw.clone()).unwrap();
        let shifted = MotionMatrix::from_raw(raw.iter().map(|v| a * v + b).collect()).unwrap();
        let (n1, n2) = (m.normalize().unwrap(), shifted.normalize().unwrap());
        for (u, v) in n1.values().iter().zip(n2.values()) {
            prop_assert!((u - v).abs() <= 1e-9, "{} vs {}", u, v);
        }
    }
}

#[test]
fn wrong_frame_count_is_rejected() {
    let frames = frames_from(&[[(0.0, 0.0, 0.0); 21]; 29]);
    assert!(MotionMatrix::encode(&frames).is_err());
}

#[test]
fn constant_frames() {
    let frames = frames_from(&[[(0.5, 0.25, 0.0); 21]; 30]);
    let m = MotionMatrix::encode(&frames).unwrap();
    for k in 0..21 {
        for r in 0..30 {
            assert_eq!(m.get(r, k), 0.5);
            assert_eq!(m.get(30 + r, k), 0.25);
            assert_eq!(m.get(60 + r, k), 0.0);
        }
    }
    assert_eq!(m.max_block_column_variance(), 0.0);
}

#[test]
fn x_ramp_is_strictly_increasing() {
    let points: Vec<[(f32, f32, f32); 21]> = (0..30).map(|i| [(i as f32 / 30.0, 0.3, 0.1); 21]).collect();
    let m = MotionMatrix::encode(&frames_from(&points)).unwrap();
    for k in 0..21 {
        for r in 1..30 {
            assert!(m.get(r, k) > m.get(r - 1, k));
        }
    }
}

#[test]
fn endpoint_and_degenerate_normalization() {
    let raw: Vec<f64> = (0..MATRIX_LEN).map(|i| (i % 2) as f64).collect();
    let n = MotionMatrix::from_raw(raw).unwrap().normalize().unwrap();
    assert!(n.values().iter().all(|v| *v == 0.0 || *v == 255.0));
    let flat = MotionMatrix::from_raw(vec![0.7; MATRIX_LEN]).unwrap().normalize().unwrap();
    assert!(flat.values().iter().all(|v| *v == 0.0));
    assert!(matches!(flat.normalize(), Err(MatrixError::AlreadyNormalized)));
}

#[test]
fn pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut state = 0x5eedu64;
    let m = gestr_testkit::random_normalized_matrix(&mut state);
    let path = dir.path().join("m.pgm");
    m.export_pgm(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"P5\n21 90\n255\n"));
    let pixels = read_pgm(&path).unwrap();
    assert_eq!(pixels.len(), MATRIX_ROWS * MATRIX_COLS);
    for (p, v) in pixels.iter().zip(m.values()) {
        assert_eq!(*p as f64, v.round());
    }
    assert_eq!(parse_pgm(&bytes).unwrap(), pixels);
    // raw matrices must be normalized first
    let raw = MotionMatrix::from_raw(vec![0.1; MATRIX_LEN]).unwrap();
    assert!(raw.to_pgm().is_err());
}

#[test]
fn zero_matrix_is_black() {
    let m = MotionMatrix::from_raw(vec![0.0; MATRIX_LEN]).unwrap().normalize().unwrap();
    assert!(m.to_pixels().unwrap().iter().all(|p| *p == 0));
}

#[test]
fn static_gestures_draw_vertical_lines() {
    let cfg = SynthConfig {
        jitter_sigma: 0.0,
        ..SynthConfig::default()
    };
    for capture in generate_dataset_with(9, 1, &cfg) {
        let m = MotionMatrix::encode_normalized(capture.frames()).unwrap();
        let pixels = m.to_pixels().unwrap();
        let uniform = (0..3).all(|block| {
            (0..MATRIX_COLS).all(|k| (0..30).all(|r| pixels[(block * 30 + r) * 21 + k] == pixels[block * 30 * 21 + k]))
        });
        let is_static = GestureTemplate::for_class(capture.label(), 0).motion.is_static();
        assert_eq!(uniform, is_static, "{}", capture.label());
    }
}

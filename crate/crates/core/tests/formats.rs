use std::collections::BTreeMap;
use std::fs;

use gestr_core::landmark::{
    format_sig6, load_captures, parse_frame, parse_stream_line, read_capture, write_captures, DatasetError, FrameError,
    Handedness, HAND_LOST_LINE,
};
use gestr_core::synth::generate_dataset;
use gestr_core::{GestureClass, HandFrame, Landmark, StreamItem};
use proptest::prelude::*;

fn line_with(points: usize) -> String {
    let pts = vec!["[0.5,0.5,0.0]"; points].join(",");
    format!(r#"{{"t":12,"hand":"R","conf":0.99,"pts":[{pts}]}}"#)
}

#[test]
fn parses_a_plain_frame() {
    let f = parse_frame(&line_with(21)).unwrap();
    assert_eq!(f.points()[0], Landmark::new(0.5, 0.5, 0.0));
    assert_eq!(f.handedness(), Handedness::Right);
    assert_eq!(f.timestamp_ms(), 12);
    assert!((f.detection_confidence() - 0.99).abs() < 1e-7);
}

#[test]
fn wrong_point_count_is_a_schema_error() {
    for n in [20, 22, 0] {
        assert!(matches!(parse_frame(&line_with(n)), Err(FrameError::PointCount(k)) if k == n));
    }
}

#[test]
fn hand_lost_marker_parses() {
    assert_eq!(parse_stream_line(HAND_LOST_LINE).unwrap(), StreamItem::HandLost);
    assert!(parse_stream_line(r#"{"event":"wave"}"#).is_err());
    assert!(matches!(parse_stream_line(&line_with(21)).unwrap(), StreamItem::Frame(_)));
}

#[test]
fn class_encoding_is_frozen() {
    let expected = [
        "air_conditioning",
        "curtains",
        "windows",
        "lights",
        "toggle",
        "increase_intensity",
        "decrease_intensity",
        "color_blue",
        "color_red",
        "color_white",
        "neutral",
    ];
    assert_eq!(GestureClass::Neutral.index(), 10);
    assert_eq!(GestureClass::AirConditioning.index(), 0);
    assert_eq!(GestureClass::ColorWhite.index(), 9);
    for (i, name) in expected.iter().enumerate() {
        let class = GestureClass::from_index(i).unwrap();
        assert_eq!(class.name(), *name);
        assert_eq!(name.parse::<GestureClass>().unwrap(), class);
    }
    assert!(GestureClass::from_index(11).is_none());
}

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![-2.0..2.0f64, -1e4..1e4f64, -1e-4..1e-4f64]
}

prop_compose! {
    fn frame_line()(
        t in 0u64..10_000_000_000,
        left in any::<bool>(),
        conf in 0.0..=1.0f64,
        pts in prop::collection::vec((coord(), coord(), coord()), 21),
    ) -> String {
        let pts: Vec<String> = pts.iter().map(|(x, y, z)| format!("[{x},{y},{z}]")).collect();
        format!(
            r#"{{"t":{t},"hand":"{}","conf":{conf},"pts":[{}]}}"#,
            if left { "L" } else { "R" },
            pts.join(",")
        )
    }
}

fn close_sig6(a: f32, b: f32) -> bool {
    a == b || (a - b).abs() as f64 <= 5e-6 * (a.abs().max(b.abs()) as f64) + f32::MIN_POSITIVE as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn frame_text_round_trip(line in frame_line()) {
        let parsed = parse_frame(&line).unwrap();
        let text = parsed.to_json_line();
        let again = parse_frame(&text).unwrap();
        // one pass through the writer reaches a fixed point
        prop_assert_eq!(again.to_json_line(), text);
        prop_assert_eq!(again.timestamp_ms(), parsed.timestamp_ms());
        prop_assert_eq!(again.handedness(), parsed.handedness());
        prop_assert!(close_sig6(again.detection_confidence(), parsed.detection_confidence()));
        for (p, q) in again.points().iter().zip(parsed.points()) {
            prop_assert!(close_sig6(p.x, q.x) && close_sig6(p.y, q.y) && close_sig6(p.z, q.z), "{:?} vs {:?}", p, q);
        }
    }

    #[test]
    fn sig6_text_is_short_and_parses_back(v in -1e6..1e6f32) {
        let s = format_sig6(v);
        let digits = s.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
        prop_assert!(digits.trim_start_matches('0').len() <= 6, "{}", s);
        let back: f32 = s.parse().unwrap();
        prop_assert!(close_sig6(back, v));
    }
}

#[test]
fn two_capture_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(1, 1, 1);
    let pick = [&data[3], &data[9]];
    for (i, c) in pick.iter().enumerate() {
        fs::write(dir.path().join(format!("take{i}.capture")), c.to_text()).unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "not a capture").unwrap();
    let loaded = load_captures(dir.path()).unwrap();
    assert_eq!(loaded.len(), 2);
    assert_eq!(loaded[0].label(), GestureClass::Lights);
    assert_eq!(loaded[1].label(), GestureClass::ColorWhite);
}

#[test]
fn short_capture_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let capture = &generate_dataset(2, 1, 1)[0];
    let text = capture.to_text();
    let short: Vec<&str> = text.lines().take(1 + 29).collect();
    let path = dir.path().join("short.capture");
    fs::write(&path, short.join("\n") + "\n").unwrap();
    let err = read_capture(&path).unwrap_err();
    assert!(matches!(err, DatasetError::FrameCount { found: 29, .. }));
    assert!(err.to_string().contains("short.capture"), "{err}");
    let err = load_captures(dir.path()).unwrap_err();
    assert!(err.to_string().contains("short.capture"));
}

#[test]
fn bad_label_and_bad_frame_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.capture");
    fs::write(&path, "{\"label\":\"wave\"}\n").unwrap();
    assert!(matches!(read_capture(&path), Err(DatasetError::UnknownLabel { .. })));
    let mut text = generate_dataset(3, 1, 1)[0].to_text();
    text.push_str(&line_with(20));
    fs::write(&path, text).unwrap();
    assert!(matches!(read_capture(&path), Err(DatasetError::Frame { line: 32, .. })));
}

#[test]
fn written_dataset_loads_with_the_same_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(4, 10, 1);
    assert_eq!(data.len(), 110);
    let paths = write_captures(dir.path(), &data).unwrap();
    assert_eq!(paths.len(), 110);
    let histogram = |cs: &[gestr_core::Capture]| {
        let mut h = BTreeMap::new();
        for c in cs {
            *h.entry(c.label().index()).or_insert(0) += 1;
        }
        h
    };
    let loaded = load_captures(dir.path()).unwrap();
    assert_eq!(histogram(&loaded), histogram(&data));
    assert!(histogram(&loaded).values().all(|n| *n == 10));
    // file contents are the canonical text form
    for (c, p) in data.iter().zip(&paths) {
        assert_eq!(fs::read_to_string(p).unwrap(), c.to_text());
    }
}

#[test]
fn frames_reject_out_of_range_values() {
    let mut pts = [Landmark::new(0.1, 0.2, 0.3); 21];
    assert!(HandFrame::new(0, Handedness::Left, 1.5, pts).is_err());
    pts[4].y = f32::NAN;
    assert!(matches!(HandFrame::new(0, Handedness::Left, 0.5, pts), Err(FrameError::NonFinite(4))));
    let line = line_with(21).replace("0.99", "1.2");
    assert!(matches!(parse_frame(&line), Err(FrameError::Confidence(_))));
}

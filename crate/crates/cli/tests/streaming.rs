mod common;

use std::fs;
use std::path::Path;

use common::{gestr, gestr_with_stdin, reference_weights, s};
use gestr_core::{GestureClass, HomeState};

fn all_classes_script() -> String {
    GestureClass::ALL
        .iter()
        .map(|c| format!("{},hand_lost", c.name()))
        .collect::<Vec<_>>()
        .join(",")
}

fn write_stream(dir: &Path, name: &str, script: &str, seed: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let out = gestr(&["gen", "--seed", seed, "--script", script, "--out", s(&path)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    path
}

fn parse(log: &str) -> Vec<serde_json::Value> {
    log.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn events(lines: &[serde_json::Value]) -> Vec<String> {
    lines
        .iter()
        .filter_map(|l| l.get("event"))
        .map(|e| e["gesture"].as_str().unwrap().to_string())
        .collect()
}

fn final_state(lines: &[serde_json::Value]) -> HomeState {
    let last = lines.iter().rev().find_map(|l| l.get("state")).unwrap();
    serde_json::from_value(last.clone()).unwrap()
}

#[test]
fn eleven_class_replay_reaches_the_hand_simulated_state() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_stream(tmp.path(), "all.ndjson", &all_classes_script(), "11");
    let weights = s(reference_weights());

    let out = gestr(&["stream", "--weights", weights, "--input", s(&input), "--suppress-neutral", "false"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let lines = parse(&out.stdout);
    let names: Vec<&str> = GestureClass::ALL.iter().map(|c| c.name()).collect();
    assert_eq!(events(&lines), names);

    // every event is followed by a state line
    assert!(lines[0].get("state").is_some());
    for pair in lines[1..].chunks(2) {
        assert!(pair[0].get("event").is_some() && pair[1].get("state").is_some());
    }

    // air conditioning, curtains, windows and lights are selected in turn;
    // toggle powers the lights, +10 then -10, then three colors ending on
    // white; neutral is rejected
    let mut expected = HomeState::all_off(50);
    expected.context = Some(gestr_core::home::Device::Lights);
    expected.lights.power = true;
    assert_eq!(final_state(&lines), expected);
    let neutral = &lines[lines.len() - 2]["event"];
    assert_eq!(neutral["accepted"], false);
    assert_eq!(neutral["reason"], "neutral_gesture");

    let suppressed = gestr(&["stream", "--weights", weights, "--input", s(&input)]);
    let lines = parse(&suppressed.stdout);
    assert_eq!(events(&lines), &names[..10]);
    assert_eq!(final_state(&lines), expected);
}

#[test]
fn replay_is_deterministic_and_matches_stdin() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_stream(tmp.path(), "s.ndjson", "lights,hand_lost,toggle,hand_lost,color_red", "4");
    let weights = s(reference_weights());
    let (log_a, log_b) = (tmp.path().join("a.ndjson"), tmp.path().join("b.ndjson"));
    let (act_a, act_b) = (tmp.path().join("a.log"), tmp.path().join("b.log"));
    for (log, act) in [(&log_a, &act_a), (&log_b, &act_b)] {
        let out = gestr(&["stream", "--weights", weights, "--input", s(&input), "--out", s(log), "--action-log", s(act)]);
        assert_eq!(out.code, 0, "{}", out.stderr);
    }
    let log = fs::read(&log_a).unwrap();
    assert_eq!(log, fs::read(&log_b).unwrap());
    assert_eq!(fs::read(&act_a).unwrap(), fs::read(&act_b).unwrap());
    assert_eq!(events(&parse(std::str::from_utf8(&log).unwrap())), ["lights", "toggle", "color_red"]);
    assert_eq!(fs::read_to_string(&act_a).unwrap().lines().count(), 3);

    let piped = gestr_with_stdin(&["stream", "--weights", weights], Some(&fs::read_to_string(&input).unwrap()));
    assert_eq!(piped.code, 0, "{}", piped.stderr);
    assert_eq!(piped.stdout.as_bytes(), log);
}

#[test]
fn empty_stream_emits_the_initial_state_once() {
    let out = gestr_with_stdin(&["stream", "--weights", s(reference_weights()), "--input", "-"], Some(""));
    assert_eq!(out.code, 0, "{}", out.stderr);
    let lines = parse(&out.stdout);
    assert_eq!(lines.len(), 1);
    assert_eq!(final_state(&lines), HomeState::all_off(50));
}

#[test]
fn malformed_stream_line_is_a_data_error_with_its_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_stream(tmp.path(), "s.ndjson", "lights", "1");
    let mut text = fs::read_to_string(&input).unwrap();
    text.push_str("{\"t\": 1, \"hand\": \"R\"}\n");
    fs::write(&input, text).unwrap();
    let out = gestr(&["stream", "--weights", s(reference_weights()), "--input", s(&input)]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains(&format!("{}:11:", s(&input))), "{}", out.stderr);
}

#[test]
fn invalid_recognizer_settings_are_usage_errors() {
    let w = s(reference_weights());
    assert_eq!(gestr_with_stdin(&["stream", "--weights", w, "--threshold", "1.5"], Some("")).code, 1);
    assert_eq!(gestr_with_stdin(&["stream", "--weights", w, "--triplication", "0"], Some("")).code, 1);
    assert_eq!(gestr_with_stdin(&["stream", "--weights", "missing.gstr"], Some("")).code, 2);
}

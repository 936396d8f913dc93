use gestr_core::home::{apply, ActionLog, ControllerConfig, Device, Home, HomeState, LightColor, RejectReason};
use gestr_core::{GestureClass, RecognitionEvent};
use proptest::prelude::*;

fn ev(gesture: GestureClass, t: u64) -> RecognitionEvent {
    RecognitionEvent {
        gesture,
        confidence: 0.99,
        window_end_timestamp_ms: t,
    }
}

#[test]
fn lighting_sequence_fixture() {
    use GestureClass as G;
    let mut home = Home::new(ControllerConfig::default());
    let initial = home.state().lights.intensity;
    let sequence = [G::Lights, G::Toggle, G::IncreaseIntensity, G::ColorWhite, G::DecreaseIntensity, G::Toggle];
    // hand trace: context L; on; 60; white; 50; off
    let trace = [
        (Some(Device::Lights), false, initial),
        (Some(Device::Lights), true, initial),
        (Some(Device::Lights), true, initial + 10),
        (Some(Device::Lights), true, initial + 10),
        (Some(Device::Lights), true, initial),
        (Some(Device::Lights), false, initial),
    ];
    for (i, (g, expect)) in sequence.iter().zip(trace).enumerate() {
        let entry = home.handle(&ev(*g, 100 * i as u64));
        assert!(entry.accepted, "{g}");
        let s = home.state();
        assert_eq!((s.context, s.lights.power, s.lights.intensity), expect, "after {g}");
    }
    let s = home.state();
    assert_eq!(s.lights.color, LightColor::White);
    assert_eq!(s.lights.intensity, 50);
    assert!(Device::ALL.iter().all(|d| !s.power(*d)));
}

#[test]
fn color_on_curtains_is_rejected() {
    let (s, _) = apply(&HomeState::default(), &ev(GestureClass::Curtains, 0), &ControllerConfig::default());
    let (next, entry) = apply(&s, &ev(GestureClass::ColorBlue, 1), &ControllerConfig::default());
    assert_eq!(next, s);
    assert!(!entry.accepted);
    assert_eq!(entry.reason, Some(RejectReason::ColorNotApplicable));
    assert_eq!(entry.reason.unwrap().to_string(), "color not applicable");
}

#[test]
fn increase_clamps_at_100() {
    let config = ControllerConfig::default();
    let mut s = HomeState::default();
    s.context = Some(Device::Lights);
    s.lights.power = true;
    s.lights.intensity = 100;
    let (next, entry) = apply(&s, &ev(GestureClass::IncreaseIntensity, 0), &config);
    assert_eq!(next.lights.intensity, 100);
    assert!(entry.accepted);
    assert!(entry.changes.is_empty());
}

#[test]
fn snapshot_field_names_are_stable() {
    let json = serde_json::to_value(HomeState::default()).unwrap();
    assert_eq!(
        json,
        serde_json::json!({
            "context": null,
            "air_conditioning": {"power": false, "intensity": 50},
            "curtains": {"power": false},
            "windows": {"power": false},
            "lights": {"power": false, "intensity": 50, "color": "white"},
        })
    );
}

#[test]
fn log_rejects_time_travel() {
    let mut log = ActionLog::default();
    let (_, a) = apply(&HomeState::default(), &ev(GestureClass::Lights, 50), &ControllerConfig::default());
    let (_, b) = apply(&HomeState::default(), &ev(GestureClass::Lights, 40), &ControllerConfig::default());
    log.append(a).unwrap();
    assert!(log.append(b).is_err());
}

fn gesture() -> impl Strategy<Value = GestureClass> {
    (0usize..11).prop_map(|i| GestureClass::from_index(i).unwrap())
}

proptest! {
    #[test]
    fn controller_properties(
        gestures in prop::collection::vec(gesture(), 0..80),
        step in 1u8..=60,
        initial in 0u8..=100,
        times in prop::collection::vec(0u64..5_000, 80),
    ) {
        let config = ControllerConfig { intensity_step: step, initial_intensity: initial };
        let mut home = Home::new(config.clone());
        for (g, t) in gestures.iter().zip(&times) {
            let before = home.state().clone();
            let entry = home.handle(&ev(*g, *t)).clone();
            let after = home.state().clone();
            prop_assert!(after.air_conditioning.intensity <= 100 && after.lights.intensity <= 100);
            // pure and deterministic
            let (again, _) = apply(&before, &ev(*g, *t), &config);
            prop_assert_eq!(&again, &after);
            if !entry.accepted {
                prop_assert_eq!(&before, &after);
                prop_assert!(entry.changes.is_empty());
            }
            if *g == GestureClass::Neutral {
                prop_assert_eq!(entry.reason, Some(RejectReason::NeutralGesture));
            }
            // colors only ever change while Lights is in context
            if before.lights.color != after.lights.color {
                prop_assert_eq!(before.context, Some(Device::Lights));
            }
            if matches!(g, GestureClass::ColorBlue | GestureClass::ColorRed | GestureClass::ColorWhite) {
                prop_assert_eq!(before.context, after.context);
            }
        }
        let entries = home.log().entries();
        prop_assert_eq!(entries.len(), gestures.len());
        prop_assert!(entries.windows(2).all(|w| w[0].timestamp_ms <= w[1].timestamp_ms));
        let replayed = home.log().replay(&HomeState::all_off(initial), &config);
        prop_assert_eq!(&replayed, home.state());
    }
}

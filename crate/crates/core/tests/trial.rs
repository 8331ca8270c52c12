use std::collections::BTreeMap;

use proptest::prelude::*;
use stickbug_core::arm::ArmMode;
use stickbug_core::bus::Message;
use stickbug_core::log::Agent;
use stickbug_core::{Engine, EventKind, ExecOrder, Scenario};

fn scenario(duration: f64) -> Scenario {
    let mut s = Scenario::default();
    s.params.trial_duration = duration;
    s
}

#[test]
fn only_pollinated_flowers_and_own_state_leave_an_arm() {
    let mut e = Engine::new(&scenario(90.0), 6, 3).unwrap().with_message_history();
    while !e.is_done() {
        e.step();
    }
    let mut broadcasts: BTreeMap<usize, usize> = BTreeMap::new();
    for env in e.message_history() {
        match &env.message {
            Message::Pollinated(p) => *broadcasts.entry(p.arm.index()).or_default() += 1,
            Message::State(s) => {
                // a target position is only published while that flower is being worked on
                if s.target.is_some() {
                    assert!(s.mode.has_target() || s.mode == ArmMode::Retreat, "{:?} carries a target", s.mode);
                }
            }
            Message::Referee(_) => {}
        }
    }
    let mut successes: BTreeMap<usize, usize> = BTreeMap::new();
    for ev in e.log().events() {
        if let (EventKind::Attempt { success: true, .. }, Agent::Arm(a)) = (&ev.kind, &ev.agent) {
            *successes.entry(a.index()).or_default() += 1;
        }
    }
    assert!(!successes.is_empty());
    // messages still in flight at the end were never delivered
    for (arm, n) in &broadcasts {
        let s = successes.get(arm).copied().unwrap_or(0);
        assert!(*n == s || *n + 1 == s, "arm {arm}: {n} broadcasts for {s} successes");
    }
    assert!(broadcasts.values().sum::<usize>() + 6 >= successes.values().sum::<usize>());
}

#[test]
fn attempts_never_trail_successes() {
    for arms in [1, 6] {
        let log = Engine::new(&scenario(120.0), arms, 9).unwrap().run();
        let (mut attempts, mut successes) = (0usize, 0usize);
        for ev in log.events() {
            match ev.kind {
                EventKind::Attempt { .. } => attempts += 1,
                EventKind::Success { .. } => successes += 1,
                _ => {}
            }
            assert!(attempts >= successes, "tick {}: {attempts} < {successes}", ev.tick);
        }
    }
}

#[test]
fn log_text_roundtrips() {
    let log = Engine::new(&scenario(60.0), 4, 2).unwrap().run();
    let text = log.to_text();
    let back = stickbug_core::EventLog::parse(&text).unwrap();
    assert_eq!(back.to_text(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn shuffled_execution_order_gives_the_same_log(seed in 0u64..1000, shuffle in any::<u64>(), arms in prop::sample::select(vec![2usize, 4, 6])) {
        let s = scenario(30.0);
        let a = Engine::new(&s, arms, seed).unwrap().run().to_text();
        let b = Engine::new(&s, arms, seed).unwrap().with_order(ExecOrder::Shuffled(shuffle)).run().to_text();
        prop_assert_eq!(a, b);
    }
}

//! GOOSE acceptance against a running-maximum model, and the tie-breaker
//! interlock under random operator toggles.

use proptest::prelude::*;
use sgcr_core::ied::{goose_accept, Acceptance, GooseMessage, Publication, Subscription, Transport, HEARTBEAT_TICKS};
use sgcr_core::sample::{sample_bundle, SampleVariant, INTERLOCK_PARTNER_CB, INTERLOCK_SOURCE_CB};
use sgcr_core::scenario::{compile_range, Range, TickRecord};
use sgcr_core::scl::AttributePath;
use sgcr_core::store::{Actor, Value};

/// Ticks within which the partner breaker must follow the source.
const MIRROR_TICKS: u64 = 11;

fn msg(stnum: u32) -> GooseMessage {
    GooseMessage {
        app_id: 7,
        dataset: "P/LLN0$DS".into(),
        stnum,
        sqnum: 0,
        t: 0,
        entries: Vec::new(),
        transport: None,
    }
}

fn publication() -> Publication {
    let member: AttributePath = "P.XCBR1.Pos.stVal".parse().unwrap();
    Publication::new("P/LLN0$GO$gcb", 7, Transport::Routable, "P/LLN0$DS", vec![member])
}

fn is_open(rec: &TickRecord, cb: &str) -> bool {
    rec.solver.as_ref().expect("solver ran").open_switches.iter().any(|s| s == cb)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn accepts_iff_not_below_running_max(stnums in prop::collection::vec(prop_oneof![0..20u32, Just(u32::MAX), any::<u32>()], 1..60)) {
        let mut sub = Subscription::new(7, "P", "P/LLN0$DS", Transport::Routable);
        let mut max = 0u32;
        for (tick, s) in stnums.into_iter().enumerate() {
            let expect = s >= max;
            if expect {
                max = s;
            }
            let got = goose_accept(&mut sub, &msg(s), tick as u64);
            prop_assert_eq!(got == Acceptance::Accepted, expect, "stnum {} against max {}", s, max);
            prop_assert_eq!(sub.last_accepted_stnum, max);
        }
    }

    #[test]
    fn publisher_stream_is_always_accepted(changes in prop::collection::vec(any::<bool>(), 1..200)) {
        let mut p = publication();
        let mut sub = Subscription::new(7, "P", "P/LLN0$DS", Transport::Routable);
        let mut state = false;
        for (tick, flip) in changes.into_iter().enumerate() {
            state ^= flip;
            let values = vec![Value::Bool(state)];
            let tick = tick as u64;
            if let Some(changed) = p.due(&values, tick) {
                let m = p.publish(values, changed, tick);
                prop_assert_eq!(goose_accept(&mut sub, &m, tick), Acceptance::Accepted);
            }
            prop_assert!(p.last_publish_tick.is_some_and(|t| tick - t < HEARTBEAT_TICKS));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    /// Random operator toggles of the source breaker; once the source has
    /// held a position for the mirror window, the partner must match it.
    #[test]
    fn partner_breaker_mirrors_source(toggles in prop::collection::vec((1..30u64, any::<bool>()), 1..6)) {
        let spec = compile_range(&sample_bundle(SampleVariant::ThreeSubstations, 150)).unwrap();
        let mut range = Range::new(&spec).unwrap();
        let control = format!("{INTERLOCK_SOURCE_CB}.Pos");
        let mut schedule = Vec::new();
        let mut at = 3;
        for (gap, closed) in toggles {
            schedule.push((at, closed));
            at += gap;
        }
        let end = at + MIRROR_TICKS + 2;
        let mut history: Vec<(bool, bool)> = Vec::new();
        for tick in 0..end {
            if let Some(&(_, closed)) = schedule.iter().find(|(t, _)| *t == tick) {
                range.operate(&control, Value::Bool(closed), Actor::Scada).unwrap();
            }
            let rec = range.step().unwrap();
            history.push((is_open(rec, INTERLOCK_SOURCE_CB), is_open(rec, INTERLOCK_PARTNER_CB)));
        }
        let opened = history.iter().any(|(s, _)| *s);
        prop_assert_eq!(opened, schedule.iter().any(|(_, closed)| !closed), "operator writes reach the breaker");
        for t in MIRROR_TICKS as usize..history.len() {
            let window = &history[t - MIRROR_TICKS as usize..=t];
            let source = window[0].0;
            if window.iter().all(|(s, _)| *s == source) {
                prop_assert_eq!(history[t].1, source, "tick {}: partner does not follow source", t);
            }
        }
    }
}

#[test]
fn wrapped_stnum_is_rejected_until_resync() {
    let mut p = publication();
    p.stnum = u32::MAX - 1;
    let mut sub = Subscription::new(7, "P", "P/LLN0$DS", Transport::Routable);
    let m = p.publish(vec![Value::Bool(true)], true, 0);
    assert_eq!(m.stnum, u32::MAX);
    assert_eq!(goose_accept(&mut sub, &m, 0), Acceptance::Accepted);
    let m = p.publish(vec![Value::Bool(false)], true, 1);
    assert_eq!(m.stnum, 1);
    assert_eq!(goose_accept(&mut sub, &m, 1), Acceptance::RejectedStale);
    let quiet = sub.resync_after_ticks;
    assert!(!sub.maybe_resync(quiet));
    assert!(sub.maybe_resync(quiet + 1));
    assert_eq!(goose_accept(&mut sub, &m, quiet + 1), Acceptance::Accepted);
}

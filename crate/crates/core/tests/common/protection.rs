//! Threshold-crossing stimuli for protection functions on the sample grid,
//! with the expected decision computed from the threshold values alone.

use sgcr_core::ied::{IedAction, ProtectionConfig, ProtectionInput, ProtectionKind, VirtualIed};
use sgcr_core::sample::{sample_bundle, SampleVariant};
use sgcr_core::scenario::{compile_range, Range, RangeSpec};
use sgcr_core::store::{Quantity, StoreSnapshot, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    None,
    Alarm,
    Trip,
}

pub fn spec() -> RangeSpec {
    compile_range(&sample_bundle(SampleVariant::ThreeSubstations, 20)).expect("sample compiles")
}

pub fn nominal(spec: &RangeSpec) -> StoreSnapshot {
    let mut r = Range::new(spec).unwrap();
    r.step().unwrap();
    (*r.snapshot()).clone()
}

pub fn config<'a>(ied: &'a VirtualIed, ln: &str) -> &'a ProtectionConfig {
    &ied.protections.iter().find(|p| p.config.ln == ln).expect("protection exists").config
}

/// Decision implied by the thresholds for stimulus `x` in threshold units.
pub fn oracle(cfg: &ProtectionConfig, x: f64) -> Expect {
    let (a, t) = thresholds(cfg);
    let under = matches!(cfg.kind, ProtectionKind::Ptuv | ProtectionKind::Pdis);
    let past = |lim: f64| if under { x < lim } else { x > lim };
    if past(t) {
        Expect::Trip
    } else if past(a) {
        Expect::Alarm
    } else {
        Expect::None
    }
}

/// (alarm, trip) levels; distance protection trips at its zone reach.
pub fn thresholds(cfg: &ProtectionConfig) -> (f64, f64) {
    let trip = match cfg.kind {
        ProtectionKind::Pdis => cfg.zone_impedance_ohm.or(cfg.trip_threshold),
        _ => cfg.trip_threshold,
    };
    (cfg.alarm_threshold.unwrap(), trip.unwrap())
}

pub fn set(snap: &mut StoreSnapshot, path: &str, raw: f64) {
    snap.values.get_mut(path).expect("point exists").value = Value::Real(raw);
}

/// Apply stimulus `x` (threshold units) for `cfg` to a copy of `base`.
pub fn stimulate(ied: &mut VirtualIed, cfg: &ProtectionConfig, base: &StoreSnapshot, x: f64, tick: u64) -> StoreSnapshot {
    let mut snap = base.clone();
    snap.tick = tick;
    let raw_of = |i: &ProtectionInput, v: f64| v / cfg.scale(i, 1.0);
    match cfg.kind {
        ProtectionKind::Ptoc | ProtectionKind::Ptov | ProtectionKind::Ptuv => {
            for i in &cfg.monitored {
                set(&mut snap, i.physical.as_deref().unwrap(), raw_of(i, x));
            }
        }
        ProtectionKind::Pdis => {
            let current = 200.0;
            for i in &cfg.monitored {
                let v = if i.quantity == Some(Quantity::Current) { current } else { x * current };
                set(&mut snap, i.physical.as_deref().unwrap(), raw_of(i, v));
            }
        }
        ProtectionKind::Pdif => {
            let local = 100.0;
            for i in &cfg.monitored {
                set(&mut snap, i.physical.as_deref().unwrap(), raw_of(i, local));
            }
            let partner = cfg.partner.as_ref().unwrap().to_string();
            ied.remote.insert(partner.clone(), Value::Real(local - x));
            ied.remote_tick.insert(partner, tick);
        }
        _ => unreachable!(),
    }
    snap
}

/// Scan `ied` through `xs` and return the (alarms, trips) of `ln` with the
/// stimulus at which each happened.
pub fn drive(ied: &mut VirtualIed, ln: &str, base: &StoreSnapshot, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cfg = config(ied, ln).clone();
    let (mut alarms, mut trips) = (Vec::new(), Vec::new());
    for (k, &x) in xs.iter().enumerate() {
        let tick = 10 + k as u64;
        let snap = stimulate(ied, &cfg, base, x, tick);
        for a in ied.scan_cycle(&snap, tick).actions {
            match a {
                IedAction::Alarm { ln: l } if l == ln => alarms.push(x),
                IedAction::Trip { ln: l, .. } if l == ln => trips.push(x),
                _ => {}
            }
        }
    }
    (alarms, trips)
}

pub const CASES: [(&str, &str, f64, f64); 5] = [
    ("S3_IED3", "PTOC1", 50.0, 450.0),
    ("S3_IED3", "PTOV1", 1.0, 1.25),
    ("S3_IED3", "PTUV1", 1.0, 0.70),
    ("S1_IED22", "PDIS1", 200.0, 5.0),
    ("S1_IED22", "PDIF1", 0.0, 100.0),
];

pub fn check_case(spec: &RangeSpec, base: &StoreSnapshot, ied: &str, ln: &str, xs: &[f64]) -> Result<(), String> {
    let mut dev = spec.ied(ied).unwrap().clone();
    let cfg = config(&dev, ln).clone();
    let (alarms, trips) = drive(&mut dev, ln, base, xs);
    if alarms.len() != 1 || trips.len() != 1 {
        return Err(format!("{ied} {ln}: alarms at {alarms:?}, trips at {trips:?}"));
    }
    let first = |e: Expect| xs.iter().copied().find(|&x| oracle(&cfg, x) == e);
    if (Some(alarms[0]), Some(trips[0])) != (first(Expect::Alarm), first(Expect::Trip)) {
        return Err(format!(
            "{ied} {ln}: alarm at {}, trip at {}; expected {:?}, {:?}",
            alarms[0],
            trips[0],
            first(Expect::Alarm),
            first(Expect::Trip)
        ));
    }
    Ok(())
}

//! Post-run check that every trip is justified by the recorded state.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::ied::{eval_protection, input_values, Decision, IedAction};
use crate::store::{replay, Actor, StoreSnapshot};

use super::{RangeSpec, RunLog};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripVerdict {
    pub tick: u64,
    pub ied: String,
    pub ln: String,
    pub justified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Replay the store to each trip's tick from `initial` and the audit log,
/// and confirm that the trip follows from genuine (non-attacker) inputs.
pub fn check_trips(spec: &RangeSpec, initial: &StoreSnapshot, log: &RunLog) -> Vec<TripVerdict> {
    let mut out = Vec::new();
    for (tick, a) in log.ied_actions(|a| matches!(a, IedAction::Trip { .. })) {
        let IedAction::Trip {
            ln,
            inputs,
            sample_tick,
            ..
        } = &a.action
        else {
            unreachable!("filtered");
        };
        let mut verdict = TripVerdict {
            tick,
            ied: a.device.clone(),
            ln: ln.clone(),
            justified: false,
            reason: None,
        };
        let cfg = spec
            .ied(&a.device)
            .and_then(|i| i.protections.iter().find(|p| p.config.ln == *ln))
            .map(|p| &p.config);
        let Some(cfg) = cfg else {
            verdict.reason = Some("no such protection function".into());
            out.push(verdict);
            continue;
        };
        if eval_protection(cfg, inputs) != Ok(Decision::Trip) {
            verdict.reason = Some("recorded inputs do not trip".into());
            out.push(verdict);
            continue;
        }
        let snap = replay(initial, &log.audit, sample_tick.unwrap_or(tick));
        let local = input_values(cfg, &snap, &Default::default());
        if let Some((k, _)) = local.iter().find(|(k, v)| inputs.get(*k) != Some(v)) {
            verdict.reason = Some(format!("input {k} differs from the replayed store"));
            out.push(verdict);
            continue;
        }
        let watched: BTreeSet<&str> = cfg.monitored.iter().filter_map(|m| m.physical.as_deref()).collect();
        let forged = log
            .audit
            .iter()
            .find(|r| r.tick <= tick && r.actor == Actor::Attacker && watched.contains(&*r.path));
        if let Some(r) = forged {
            verdict.reason = Some(format!("{} was written by the attacker at tick {}", r.path, r.tick));
            out.push(verdict);
            continue;
        }
        verdict.justified = true;
        out.push(verdict);
    }
    out
}

//! Per-tick run records, serialized as NDJSON.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::gateway::CommandStatus;
use crate::ied::IedAction;
use crate::net::DeliveryRecord;
use crate::plc::PlcAction;
use crate::power::FlowSolution;
use crate::store::{AuditRecord, Value};

pub const RUNLOG_FORMAT: &str = "sgcr-runlog/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format: String,
    pub n_steps: usize,
    pub tick_ms: u64,
    pub ieds: usize,
    pub plcs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub islands: usize,
    pub energized_islands: usize,
    pub max_balance_error: f64,
    pub generation_mw: f64,
    pub load_mw: f64,
    pub open_switches: Vec<String>,
}

impl SolverSummary {
    pub fn of(sol: &FlowSolution) -> Self {
        SolverSummary {
            converged: sol.converged,
            iterations: sol.iterations,
            residual: sol.residual,
            islands: sol.islands,
            energized_islands: sol.energized_islands,
            max_balance_error: sol.max_balance_error(),
            generation_mw: sol.generators.iter().map(|g| g.p_mw).sum(),
            load_mw: sol.loads.iter().map(|l| l.p_mw).sum(),
            open_switches: sol.switches.iter().filter(|s| !s.closed).map(|s| s.id.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceAction<A> {
    pub device: String,
    pub action: A,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEvent {
    pub step: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEvent {
    pub id: u64,
    pub point: String,
    pub value: Value,
    pub operator_id: String,
    #[serde(flatten)]
    pub status: CommandStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TickRecord {
    /// Snapshot tick produced by this step.
    pub tick: u64,
    pub step: usize,
    pub solver: Option<SolverSummary>,
    pub ied_actions: Vec<DeviceAction<IedAction>>,
    pub plc_actions: Vec<DeviceAction<PlcAction>>,
    pub frames: Vec<DeliveryRecord>,
    pub attacks: Vec<AttackEvent>,
    pub commands: Vec<CommandEvent>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(RunHeader),
    Tick(TickRecord),
    Audit(AuditRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub ticks: Vec<TickRecord>,
    pub audit: Vec<AuditRecord>,
}

impl RunLog {
    pub fn write_ndjson(&self, mut w: impl Write) -> io::Result<()> {
        let mut line = |l: &Line| -> io::Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n")
        };
        line(&Line::Header(self.header.clone()))?;
        for t in &self.ticks {
            line(&Line::Tick(t.clone()))?;
        }
        for a in &self.audit {
            line(&Line::Audit(a.clone()))?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_ndjson(&mut out).expect("writing to a Vec");
        out
    }

    pub fn read_ndjson(r: impl BufRead) -> io::Result<RunLog> {
        let mut header = None;
        let mut ticks = Vec::new();
        let mut audit = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Line>(&line)? {
                Line::Header(h) => header = Some(h),
                Line::Tick(t) => ticks.push(t),
                Line::Audit(a) => audit.push(a),
            }
        }
        let header = header.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "run log has no header"))?;
        Ok(RunLog { header, ticks, audit })
    }

    pub fn tick(&self, tick: u64) -> Option<&TickRecord> {
        self.ticks.iter().find(|t| t.tick == tick)
    }

    /// Every IED action of kind matching `pred`, with its tick.
    pub fn ied_actions<'a>(
        &'a self,
        pred: impl Fn(&IedAction) -> bool + 'a,
    ) -> impl Iterator<Item = (u64, &'a DeviceAction<IedAction>)> + 'a {
        self.ticks
            .iter()
            .flat_map(|t| t.ied_actions.iter().map(move |a| (t.tick, a)))
            .filter(move |(_, a)| pred(&a.action))
    }
}

/// First tick whose records differ (or where one log ends early).
pub fn first_divergence(a: &RunLog, b: &RunLog) -> Option<u64> {
    first_divergence_by(a, b, |t| serde_json::to_vec(t).expect("record serializes"))
}

/// Like [`first_divergence`], comparing a projection of each record.
pub fn first_divergence_by<K: PartialEq>(a: &RunLog, b: &RunLog, key: impl Fn(&TickRecord) -> K) -> Option<u64> {
    for (x, y) in a.ticks.iter().zip(&b.ticks) {
        if x.tick != y.tick || key(x) != key(y) {
            return Some(x.tick.min(y.tick));
        }
    }
    let n = a.ticks.len().min(b.ticks.len());
    if a.ticks.len() != b.ticks.len() {
        let longer = if a.ticks.len() > n { a } else { b };
        return Some(longer.ticks[n].tick);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(n: u64) -> RunLog {
        RunLog {
            header: RunHeader {
                format: RUNLOG_FORMAT.into(),
                n_steps: n as usize,
                tick_ms: 100,
                ieds: 0,
                plcs: 0,
                attack: None,
            },
            ticks: (1..=n)
                .map(|t| TickRecord {
                    tick: t,
                    step: t as usize - 1,
                    ..Default::default()
                })
                .collect(),
            audit: Vec::new(),
        }
    }

    #[test]
    fn ndjson_round_trip() {
        let l = log(3);
        let bytes = l.to_ndjson();
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 4);
        assert_eq!(RunLog::read_ndjson(&bytes[..]).unwrap(), l);
    }

    #[test]
    fn divergence() {
        let a = log(5);
        let mut b = log(5);
        assert_eq!(first_divergence(&a, &b), None);
        b.ticks[3].errors.push("x".into());
        assert_eq!(first_divergence(&a, &b), Some(4));
        assert_eq!(first_divergence(&a, &log(3)), Some(4));
    }
}

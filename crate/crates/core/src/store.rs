//! Snapshot store shared by the power solver and the cyber devices.
//!
//! Writes are queued into a pending tick and sealed by [`SimStore::commit_tick`]
//! into an immutable snapshot. Every applied write is appended to an audit
//! log, so any snapshot can be rebuilt by folding the log over the initial
//! state.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::power::{FlowSolution, PowerNetwork, SwitchCommands};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Solver,
    Ied,
    Plc,
    Scada,
    Attacker,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Actor::Solver => "solver",
            Actor::Ied => "ied",
            Actor::Plc => "plc",
            Actor::Scada => "scada",
            Actor::Attacker => "attacker",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Real(f64),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Real(v) => v,
            Value::Bool(b) => f64::from(u8::from(b)),
        }
    }

    pub fn as_bool(self) -> bool {
        match self {
            Value::Bool(b) => b,
            Value::Real(v) => v >= 0.5,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Real(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Good,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    /// Solver-owned; devices may read but not write.
    Measurement,
    /// Writable by devices (breaker positions, setpoints).
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMeta {
    pub kind: PointKind,
    pub unit: String,
    /// Nominal value used for per-unit conversion, if meaningful.
    pub base: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub value: Value,
    pub quality: Quality,
    pub written_by: Actor,
    pub at_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub tick: u64,
    /// Keys are shared between snapshots, so committing a tick copies no
    /// strings. Serialized in key order.
    #[serde(serialize_with = "sorted")]
    pub values: HashMap<Arc<str>, PointRecord>,
}

fn sorted<S: Serializer>(values: &HashMap<Arc<str>, PointRecord>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_map(values.iter().collect::<BTreeMap<_, _>>())
}

impl StoreSnapshot {
    pub fn get(&self, path: &str) -> Option<&PointRecord> {
        self.values.get(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub tick: u64,
    pub path: Arc<str>,
    pub value: Value,
    pub quality: Quality,
    pub actor: Actor,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("point `{0}` is not registered")]
    UnregisteredPoint(String),
    #[error("point `{path}` is read-only for {actor}")]
    ReadOnlyPoint { path: String, actor: Actor },
    #[error("point `{0}` registered twice")]
    DuplicatePoint(String),
}

/// Clonable read handle that always sees the last committed snapshot.
#[derive(Debug, Clone)]
pub struct StoreReader {
    latest: Arc<RwLock<Arc<StoreSnapshot>>>,
}

impl StoreReader {
    pub fn snapshot(&self) -> Arc<StoreSnapshot> {
        self.latest.read().expect("store lock poisoned").clone()
    }
}

#[derive(Debug, Clone)]
struct PendingWrite {
    path: Arc<str>,
    value: Value,
    quality: Quality,
    actor: Actor,
}

#[derive(Debug)]
pub struct SimStore {
    meta: BTreeMap<String, PointMeta>,
    initial: Arc<StoreSnapshot>,
    history: Vec<Arc<StoreSnapshot>>,
    latest: Arc<RwLock<Arc<StoreSnapshot>>>,
    solver_pending: Vec<PendingWrite>,
    device_pending: Vec<PendingWrite>,
    audit: Vec<AuditRecord>,
    /// Latest device-written position per control point.
    commands: BTreeMap<String, bool>,
    keep_history: bool,
}

impl Default for SimStore {
    fn default() -> Self {
        Self::new()
    }
}

impl SimStore {
    pub fn new() -> Self {
        let initial = Arc::new(StoreSnapshot {
            tick: 0,
            values: HashMap::new(),
        });
        SimStore {
            meta: BTreeMap::new(),
            initial: initial.clone(),
            history: vec![initial.clone()],
            latest: Arc::new(RwLock::new(initial)),
            solver_pending: Vec::new(),
            device_pending: Vec::new(),
            audit: Vec::new(),
            commands: BTreeMap::new(),
            keep_history: true,
        }
    }

    /// Drop old snapshots as they are superseded (the audit log is kept).
    pub fn set_keep_history(&mut self, keep: bool) {
        self.keep_history = keep;
    }

    /// Register a point; it reads as invalid 0 until first written.
    pub fn register(&mut self, path: &str, meta: PointMeta) -> Result<(), StoreError> {
        if self.meta.contains_key(path) {
            return Err(StoreError::DuplicatePoint(path.to_string()));
        }
        let initial_value = match meta.kind {
            PointKind::Control => Value::Bool(false),
            PointKind::Measurement => Value::Real(0.0),
        };
        self.meta.insert(path.to_string(), meta);
        // Registration happens before the first commit; fold it into the
        // initial snapshot.
        let rec = PointRecord {
            value: initial_value,
            quality: Quality::Invalid,
            written_by: Actor::Solver,
            at_tick: 0,
        };
        let fresh = self.history.len() == 1 && self.history[0].tick == 0;
        if fresh {
            // Drop the other handles so the insert below does not copy.
            self.history.clear();
            *self.latest.write().expect("store lock poisoned") = Arc::new(StoreSnapshot {
                tick: 0,
                values: HashMap::new(),
            });
        }
        Arc::make_mut(&mut self.initial).values.insert(path.into(), rec);
        if fresh {
            self.history.push(self.initial.clone());
            *self.latest.write().expect("store lock poisoned") = self.initial.clone();
        }
        Ok(())
    }

    pub fn meta(&self, path: &str) -> Option<&PointMeta> {
        self.meta.get(path)
    }

    pub fn points(&self) -> impl Iterator<Item = (&String, &PointMeta)> {
        self.meta.iter()
    }

    pub fn reader(&self) -> StoreReader {
        StoreReader {
            latest: self.latest.clone(),
        }
    }

    pub fn latest(&self) -> Arc<StoreSnapshot> {
        self.latest.read().expect("store lock poisoned").clone()
    }

    pub fn tick(&self) -> u64 {
        self.latest().tick
    }

    pub fn initial(&self) -> &StoreSnapshot {
        &self.initial
    }

    /// Committed snapshots, oldest first (only the newest when history is off).
    pub fn history(&self) -> &[Arc<StoreSnapshot>] {
        &self.history
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    /// Value from the last committed snapshot.
    pub fn read_point(&self, path: &str) -> Result<PointRecord, StoreError> {
        self.latest()
            .get(path)
            .copied()
            .ok_or_else(|| StoreError::UnregisteredPoint(path.to_string()))
    }

    fn check(&self, path: &str) -> Result<&PointMeta, StoreError> {
        self.meta
            .get(path)
            .ok_or_else(|| StoreError::UnregisteredPoint(path.to_string()))
    }

    /// Shared key of a registered point.
    fn key(&self, path: &str) -> Result<Arc<str>, StoreError> {
        self.initial
            .values
            .get_key_value(path)
            .map(|(k, _)| k.clone())
            .ok_or_else(|| StoreError::UnregisteredPoint(path.to_string()))
    }

    /// Queue a solver write into the pending tick.
    pub fn write_solver(&mut self, path: &str, value: Value, quality: Quality) -> Result<(), StoreError> {
        let path = self.key(path)?;
        self.solver_pending.push(PendingWrite {
            path,
            value,
            quality,
            actor: Actor::Solver,
        });
        Ok(())
    }

    /// Queue a device write. Measurements are read-only except for the
    /// attacker, whose writes model false data injection.
    pub fn write_control(&mut self, path: &str, value: Value, actor: Actor) -> Result<(), StoreError> {
        let meta = self.check(path)?;
        if meta.kind == PointKind::Measurement && actor != Actor::Attacker && actor != Actor::Solver {
            return Err(StoreError::ReadOnlyPoint {
                path: path.to_string(),
                actor,
            });
        }
        let path = self.key(path)?;
        self.device_pending.push(PendingWrite {
            path,
            value,
            quality: Quality::Good,
            actor,
        });
        Ok(())
    }

    /// Whether a device write is queued for `path` in the pending tick.
    pub fn has_pending_device_write(&self, path: &str) -> bool {
        self.device_pending.iter().any(|w| &*w.path == path)
    }

    /// Write every mapped measurement of `solution` into the pending tick.
    pub fn write_measurements(
        &mut self,
        solution: &FlowSolution,
        mapping: &MeasurementMap,
    ) -> Result<(), StoreError> {
        for p in &mapping.points {
            let (value, quality) = p.evaluate(solution)?;
            self.write_solver(&p.path, value, quality)?;
        }
        Ok(())
    }

    /// Seal the pending writes as snapshot `tick + 1`.
    pub fn commit_tick(&mut self) -> Arc<StoreSnapshot> {
        let prev = self.latest();
        let tick = prev.tick + 1;
        let mut values = prev.values.clone();
        for w in self.solver_pending.drain(..) {
            let rec = PointRecord {
                value: w.value,
                quality: w.quality,
                written_by: w.actor,
                at_tick: tick,
            };
            let slot = values.entry(w.path.clone()).or_insert(rec);
            let changed = slot.at_tick == tick || slot.value != w.value || slot.quality != w.quality;
            if changed {
                self.audit.push(AuditRecord {
                    tick,
                    path: w.path,
                    value: w.value,
                    quality: w.quality,
                    actor: w.actor,
                });
            }
            *slot = PointRecord {
                at_tick: if changed { tick } else { slot.at_tick },
                ..rec
            };
        }
        for w in self.device_pending.drain(..) {
            if self.meta.get(&*w.path).map(|m| m.kind) == Some(PointKind::Control) {
                self.commands.insert(w.path.to_string(), w.value.as_bool());
            }
            self.audit.push(AuditRecord {
                tick,
                path: w.path.clone(),
                value: w.value,
                quality: w.quality,
                actor: w.actor,
            });
            put(
                &mut values,
                w.path,
                PointRecord {
                    value: w.value,
                    quality: w.quality,
                    written_by: w.actor,
                    at_tick: tick,
                },
            );
        }
        let snap = Arc::new(StoreSnapshot { tick, values });
        if self.keep_history {
            self.history.push(snap.clone());
        } else {
            self.history = vec![snap.clone()];
        }
        *self.latest.write().expect("store lock poisoned") = snap.clone();
        snap
    }

    /// Device-commanded breaker positions, keyed by switch id.
    pub fn switch_commands(&self) -> StoreCommands<'_> {
        StoreCommands(&self.commands)
    }

    /// Committed commands overlaid with device writes still pending, so a
    /// breaker operated during a tick takes effect in the next solve.
    pub fn effective_commands(&self) -> BTreeMap<String, bool> {
        let mut out = self.commands.clone();
        for w in &self.device_pending {
            if self.meta.get(&*w.path).map(|m| m.kind) == Some(PointKind::Control) {
                out.insert(w.path.to_string(), w.value.as_bool());
            }
        }
        out.into_iter()
            .filter_map(|(k, v)| k.strip_suffix(".Pos").map(|id| (id.to_string(), v)))
            .collect()
    }

    /// Audit log as newline-delimited JSON.
    pub fn write_audit_ndjson(&self, mut w: impl Write) -> io::Result<()> {
        for r in &self.audit {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn put(values: &mut HashMap<Arc<str>, PointRecord>, path: Arc<str>, rec: PointRecord) {
    values.insert(path, rec);
}

/// Adapter exposing `<switch>.Pos` commands to the power model.
pub struct StoreCommands<'a>(&'a BTreeMap<String, bool>);

impl SwitchCommands for StoreCommands<'_> {
    fn commanded(&self, switch_id: &str) -> Option<bool> {
        self.0.get(&format!("{switch_id}.Pos")).copied()
    }
}

/// Rebuild the snapshot at `tick` by folding the audit log over `initial`.
pub fn replay(initial: &StoreSnapshot, audit: &[AuditRecord], tick: u64) -> StoreSnapshot {
    let mut values = initial.values.clone();
    for r in audit.iter().filter(|r| r.tick <= tick) {
        let at_tick = match values.get(&*r.path) {
            Some(p) if p.value == r.value && p.quality == r.quality && r.actor == Actor::Solver => {
                p.at_tick
            }
            _ => r.tick,
        };
        put(
            &mut values,
            r.path.clone(),
            PointRecord {
                value: r.value,
                quality: r.quality,
                written_by: r.actor,
                at_tick,
            },
        );
    }
    StoreSnapshot { tick, values }
}

// ---------------------------------------------------------------------------
// Mapping from solver results to store points

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    /// Phase-to-neutral voltage magnitude in V.
    Voltage,
    /// Phase current magnitude in A.
    Current,
    /// Active power in MW.
    P,
    /// Reactive power in Mvar.
    Q,
    /// Breaker position, true when closed.
    Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementRef {
    Generator(usize),
    Load(usize),
    Line(usize),
    Transformer(usize),
    Switch(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub path: String,
    pub component: String,
    pub element: ElementRef,
    pub quantity: Quantity,
    pub bus: usize,
    pub nominal_kv: f64,
}

pub const PHASES: [&str; 3] = ["phsA", "phsB", "phsC"];

fn phase_voltage_base(kv: f64) -> f64 {
    kv * 1000.0 / 3f64.sqrt()
}

impl MeasurementPoint {
    pub fn meta(&self) -> PointMeta {
        match self.quantity {
            Quantity::Voltage => PointMeta {
                kind: PointKind::Measurement,
                unit: "V".into(),
                base: Some(phase_voltage_base(self.nominal_kv)),
            },
            Quantity::Current => PointMeta {
                kind: PointKind::Measurement,
                unit: "A".into(),
                base: None,
            },
            Quantity::P => PointMeta {
                kind: PointKind::Measurement,
                unit: "MW".into(),
                base: None,
            },
            Quantity::Q => PointMeta {
                kind: PointKind::Measurement,
                unit: "Mvar".into(),
                base: None,
            },
            Quantity::Pos => PointMeta {
                kind: PointKind::Control,
                unit: "bool".into(),
                base: None,
            },
        }
    }

    fn evaluate(&self, s: &FlowSolution) -> Result<(Value, Quality), StoreError> {
        let missing = || StoreError::UnregisteredPoint(self.path.clone());
        let bus = s.buses.get(self.bus).ok_or_else(missing)?;
        let vm = bus.vm_pu;
        let (p, q, i_ka) = match self.element {
            ElementRef::Generator(i) => {
                let g = s.generators.get(i).filter(|g| g.name == self.component).ok_or_else(missing)?;
                (g.p_mw, g.q_mvar, None)
            }
            ElementRef::Load(i) => {
                let l = s.loads.get(i).filter(|l| l.name == self.component).ok_or_else(missing)?;
                (l.p_mw, l.q_mvar, None)
            }
            ElementRef::Line(i) => {
                let b = s.lines.get(i).filter(|b| b.name == self.component).ok_or_else(missing)?;
                (b.p_from_mw, b.q_from_mvar, Some(b.i_from_ka))
            }
            ElementRef::Transformer(i) => {
                let b = s.transformers.get(i).filter(|b| b.name == self.component).ok_or_else(missing)?;
                (b.p_from_mw, b.q_from_mvar, Some(b.i_from_ka))
            }
            ElementRef::Switch(i) => {
                let sw = s.switches.get(i).filter(|w| w.id == self.component).ok_or_else(missing)?;
                if self.quantity == Quantity::Pos {
                    return Ok((Value::Bool(sw.closed), Quality::Good));
                }
                (sw.p_mw, sw.q_mvar, Some(sw.i_ka))
            }
        };
        let value = match self.quantity {
            Quantity::Voltage => vm * phase_voltage_base(self.nominal_kv),
            Quantity::Current => match i_ka {
                Some(i) => i * 1000.0,
                None if vm > 0.0 => {
                    (p * p + q * q).sqrt() / (3f64.sqrt() * vm * self.nominal_kv) * 1000.0
                }
                None => 0.0,
            },
            Quantity::P => p,
            Quantity::Q => q,
            Quantity::Pos => return Err(missing()),
        };
        let quality = if bus.energized { Quality::Good } else { Quality::Invalid };
        Ok((Value::Real(value), quality))
    }
}

/// Every store point the solver writes, derived from the network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementMap {
    pub points: Vec<MeasurementPoint>,
}

impl MeasurementMap {
    pub fn from_network(net: &PowerNetwork) -> Self {
        let mut points = Vec::new();
        let mut add = |component: &str, element: ElementRef, bus: usize, with_pos: bool| {
            let kv = net.buses[bus].nominal_kv;
            let mut push = |path: String, quantity| {
                points.push(MeasurementPoint {
                    path,
                    component: component.to_string(),
                    element,
                    quantity,
                    bus,
                    nominal_kv: kv,
                })
            };
            if with_pos {
                push(format!("{component}.Pos"), Quantity::Pos);
            }
            for ph in PHASES {
                push(format!("{component}.Voltage.{ph}"), Quantity::Voltage);
            }
            for ph in PHASES {
                push(format!("{component}.Current.{ph}"), Quantity::Current);
            }
            push(format!("{component}.P"), Quantity::P);
            push(format!("{component}.Q"), Quantity::Q);
        };
        for (i, g) in net.generators.iter().enumerate() {
            add(&g.name, ElementRef::Generator(i), g.bus, false);
        }
        for (i, l) in net.loads.iter().enumerate() {
            add(&l.name, ElementRef::Load(i), l.bus, false);
        }
        for (i, l) in net.lines.iter().enumerate() {
            add(&l.name, ElementRef::Line(i), l.from_bus, false);
        }
        for (i, t) in net.transformers.iter().enumerate() {
            add(&t.name, ElementRef::Transformer(i), t.hv_bus, false);
        }
        for (i, s) in net.switches.iter().enumerate() {
            add(&s.id, ElementRef::Switch(i), s.bus, true);
        }
        MeasurementMap { points }
    }

    /// Register every point with `store`.
    pub fn register_all(&self, store: &mut SimStore) -> Result<(), StoreError> {
        for p in &self.points {
            store.register(&p.path, p.meta())?;
        }
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&MeasurementPoint> {
        self.points.iter().find(|p| p.path == path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> SimStore {
        let mut s = SimStore::new();
        s.register(
            "CB3.Pos",
            PointMeta {
                kind: PointKind::Control,
                unit: "bool".into(),
                base: None,
            },
        )
        .unwrap();
        s.register(
            "Load0.Voltage.phsA",
            PointMeta {
                kind: PointKind::Measurement,
                unit: "V".into(),
                base: Some(6350.0),
            },
        )
        .unwrap();
        s
    }

    #[test]
    fn initial_read_is_invalid_zero() {
        let s = store();
        let r = s.read_point("Load0.Voltage.phsA").unwrap();
        assert_eq!(r.quality, Quality::Invalid);
        assert_eq!(r.value, Value::Real(0.0));
        assert!(matches!(s.read_point("nope"), Err(StoreError::UnregisteredPoint(_))));
    }

    #[test]
    fn scada_cannot_write_measurement() {
        let mut s = store();
        let err = s.write_control("Load0.Voltage.phsA", Value::Real(1.0), Actor::Scada).unwrap_err();
        assert!(matches!(err, StoreError::ReadOnlyPoint { .. }));
        s.write_control("Load0.Voltage.phsA", Value::Real(1.0), Actor::Attacker).unwrap();
    }

    #[test]
    fn last_writer_wins_and_both_audited() {
        let mut s = store();
        s.write_control("CB3.Pos", Value::Bool(false), Actor::Ied).unwrap();
        s.write_control("CB3.Pos", Value::Bool(true), Actor::Scada).unwrap();
        let snap = s.commit_tick();
        let r = snap.get("CB3.Pos").unwrap();
        assert_eq!(r.value, Value::Bool(true));
        assert_eq!(r.written_by, Actor::Scada);
        assert_eq!(s.audit().len(), 2);
        assert_eq!(s.switch_commands().commanded("CB3"), Some(true));
    }

    #[test]
    fn readers_see_previous_snapshot_until_commit() {
        let mut s = store();
        let reader = s.reader();
        s.write_solver("Load0.Voltage.phsA", Value::Real(6000.0), Quality::Good).unwrap();
        assert_eq!(reader.snapshot().tick, 0);
        s.commit_tick();
        assert_eq!(reader.snapshot().tick, 1);
        assert_eq!(reader.snapshot().get("Load0.Voltage.phsA").unwrap().value, Value::Real(6000.0));
    }

    #[test]
    fn empty_commit_only_advances_tick() {
        let mut s = store();
        let a = s.commit_tick();
        let b = s.commit_tick();
        assert_eq!(b.tick, a.tick + 1);
        assert_eq!(a.values, b.values);
    }
}

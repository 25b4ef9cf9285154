//! The co-simulation loop: solve, publish to the store, run devices over
//! the emulated network, repeat.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::sync::Arc;

use thiserror::Error;

use crate::gateway::{CommandError, CommandRecord, ScadaGateway, StreamBatch};
use crate::ied::{IedOutput, VirtualIed};
use crate::net::{Frame, NetEmulator, NetError, NodeKind};
use crate::plc::{PlcOutput, PlcRuntime};
use crate::power::{solve_power_flow, FlowSolution, PowerError, PowerNetwork};
use crate::store::{Actor, MeasurementMap, SimStore, StoreError, StoreReader, StoreSnapshot, Value};

use super::attack::{AttackRuntime, AttackScript};
use super::runlog::{CommandEvent, DeviceAction, RunHeader, RunLog, SolverSummary, TickRecord, RUNLOG_FORMAT};
use super::RangeSpec;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("run finished after {0} steps")]
    Finished(usize),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// A running instance of a compiled range.
#[derive(Debug)]
pub struct Range {
    power: PowerNetwork,
    store: SimStore,
    measurements: MeasurementMap,
    net: NetEmulator,
    ieds: BTreeMap<String, VirtualIed>,
    plcs: Vec<PlcRuntime>,
    gateway: Option<ScadaGateway>,
    attack: Option<AttackRuntime>,
    n_steps: usize,
    tick_ms: u64,
    step: usize,
    header: RunHeader,
    ticks: Vec<TickRecord>,
    last_solution: Option<FlowSolution>,
    last_batch: Option<StreamBatch>,
    reported_commands: BTreeMap<u64, CommandEvent>,
}

fn sender_actor(kind: Option<NodeKind>) -> Actor {
    match kind {
        Some(NodeKind::Ied) => Actor::Ied,
        Some(NodeKind::Plc) => Actor::Plc,
        Some(NodeKind::Gateway) => Actor::Scada,
        _ => Actor::Attacker,
    }
}

impl Range {
    pub fn new(spec: &RangeSpec) -> Result<Range, KernelError> {
        Range::build(spec, None)
    }

    pub fn with_attack(spec: &RangeSpec, script: &AttackScript) -> Result<Range, KernelError> {
        Range::build(spec, Some(script.clone()))
    }

    fn build(spec: &RangeSpec, script: Option<AttackScript>) -> Result<Range, KernelError> {
        let mut store = SimStore::new();
        // Past states are rebuilt from the audit log on demand.
        store.set_keep_history(false);
        spec.measurements.register_all(&mut store)?;
        let mut net = NetEmulator::new(spec.cyber.clone());
        for ied in &spec.ieds {
            for g in ied.groups() {
                net.subscribe(&ied.name, g)?;
            }
        }
        let plcs: Vec<PlcRuntime> = spec
            .plcs
            .iter()
            .map(|p| {
                let mut rt = PlcRuntime::new(p.clone());
                rt.address = net.address_of(&p.node);
                rt
            })
            .collect();
        let attack = match script {
            Some(s) => {
                net.attach_attacker(&s.attacker, &s.attach, None)?;
                Some(AttackRuntime::new(s))
            }
            None => None,
        };
        let header = RunHeader {
            format: RUNLOG_FORMAT.into(),
            n_steps: spec.n_steps,
            tick_ms: spec.tick_ms,
            ieds: spec.ieds.len(),
            plcs: spec.plcs.len(),
            attack: attack.as_ref().map(|a| a.script.name.clone()),
        };
        Ok(Range {
            power: spec.power.clone(),
            store,
            measurements: spec.measurements.clone(),
            net,
            ieds: spec.ieds.iter().map(|i| (i.name.clone(), i.clone())).collect(),
            plcs,
            gateway: spec.gateway.clone(),
            attack,
            n_steps: spec.n_steps,
            tick_ms: spec.tick_ms,
            step: 0,
            header,
            ticks: Vec::new(),
            last_solution: None,
            last_batch: None,
            reported_commands: BTreeMap::new(),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn finished(&self) -> bool {
        self.step >= self.n_steps
    }

    pub fn store(&self) -> &SimStore {
        &self.store
    }

    pub fn reader(&self) -> StoreReader {
        self.store.reader()
    }

    pub fn snapshot(&self) -> Arc<StoreSnapshot> {
        self.store.latest()
    }

    pub fn power(&self) -> &PowerNetwork {
        &self.power
    }

    pub fn net(&self) -> &NetEmulator {
        &self.net
    }

    pub fn ied(&self, name: &str) -> Option<&VirtualIed> {
        self.ieds.get(name)
    }

    pub fn gateway(&self) -> Option<&ScadaGateway> {
        self.gateway.as_ref()
    }

    pub fn last_solution(&self) -> Option<&FlowSolution> {
        self.last_solution.as_ref()
    }

    /// Changed SCADA points of the most recent step.
    pub fn last_batch(&self) -> Option<&StreamBatch> {
        self.last_batch.as_ref()
    }

    pub fn ticks(&self) -> &[TickRecord] {
        &self.ticks
    }

    /// Queue an operator command; it goes out over the network next step.
    pub fn issue_command(&mut self, point: &str, value: Value, operator_id: &str) -> Result<u64, CommandError> {
        match self.gateway.as_mut() {
            Some(g) => g.issue_command(point, value, operator_id),
            None => Err(CommandError::UnknownPoint(point.to_string())),
        }
    }

    pub fn command(&self, id: u64) -> Option<&CommandRecord> {
        self.gateway.as_ref().and_then(|g| g.command(id))
    }

    /// Write a control point directly, as `actor`, for the next commit.
    /// Used by test harnesses to operate breakers out of band.
    pub fn operate(&mut self, path: &str, value: Value, actor: Actor) -> Result<(), StoreError> {
        self.store.write_control(path, value, actor)
    }

    fn tick_us(&self) -> u64 {
        self.tick_ms * 1000
    }

    /// Advance one step and return its record.
    pub fn step(&mut self) -> Result<&TickRecord, KernelError> {
        if self.finished() {
            return Err(KernelError::Finished(self.n_steps));
        }
        let s = self.step;
        let mut rec = TickRecord {
            step: s,
            ..Default::default()
        };

        let commands = self.store.effective_commands();
        self.power.apply_timestep(s, &commands)?;
        match solve_power_flow(&self.power) {
            Ok(sol) => {
                rec.solver = Some(SolverSummary::of(&sol));
                if let Err(e) = self.store.write_measurements(&sol, &self.measurements) {
                    rec.errors.push(e.to_string());
                }
                self.last_solution = Some(sol);
            }
            Err(e) => rec.errors.push(format!("solver: {e}")),
        }
        let prev = self.store.latest();
        let snap = self.store.commit_tick();
        let tick = snap.tick;
        rec.tick = tick;
        let t0 = tick * self.tick_us();
        let mid = t0 + self.tick_us() / 2;
        let end = t0 + self.tick_us() - 1;
        self.net.advance_to(t0);

        let names: Vec<String> = self.ieds.keys().cloned().collect();
        for name in &names {
            let out = self.ieds.get_mut(name).expect("listed").scan_cycle(&snap, tick);
            self.apply_ied(name, out, &mut rec);
        }

        if let Some(a) = self.attack.as_mut() {
            rec.attacks = a.run(tick, &mut self.net, &mut self.store);
        }

        for i in 0..self.plcs.len() {
            let net = &self.net;
            let out = self.plcs[i].begin_scan(tick, |n| net.address_of(n));
            self.apply_plc(i, out, &mut rec);
        }
        if let Some(g) = self.gateway.as_mut() {
            let net = &self.net;
            let reqs = g.take_requests(|n| net.address_of(n));
            for (id, f) in reqs {
                if let Err(e) = self.net.send_frame(f) {
                    rec.errors.push(format!("gateway: {e}"));
                    self.gateway.as_mut().expect("present").send_failed(id);
                }
            }
        }
        self.pump(mid, tick, &mut rec);

        self.net.advance_to(mid);
        for i in 0..self.plcs.len() {
            let net = &self.net;
            let out = self.plcs[i].finish_scan(|n| net.address_of(n));
            self.apply_plc(i, out, &mut rec);
        }
        self.pump(end, tick, &mut rec);

        if let Some(g) = self.gateway.as_mut() {
            g.expire_in_flight();
            self.last_batch = Some(g.batch(Some(&prev), &snap));
        }
        self.report_commands(&mut rec);
        rec.frames = self.net.drain_log();
        self.ticks.push(rec);
        self.step += 1;
        Ok(self.ticks.last().expect("just pushed"))
    }

    fn report_commands(&mut self, rec: &mut TickRecord) {
        let Some(g) = self.gateway.as_ref() else {
            return;
        };
        for id in 1.. {
            let Some(c) = g.command(id) else {
                break;
            };
            let ev = CommandEvent {
                id,
                point: c.point.clone(),
                value: c.value,
                operator_id: c.operator_id.clone(),
                status: c.status.clone(),
            };
            if self.reported_commands.get(&id) != Some(&ev) {
                self.reported_commands.insert(id, ev.clone());
                rec.commands.push(ev);
            }
        }
    }

    fn send(&mut self, f: Frame, who: &str, rec: &mut TickRecord) -> bool {
        match self.net.send_frame(f) {
            Ok(_) => true,
            Err(e) => {
                rec.errors.push(format!("{who}: {e}"));
                false
            }
        }
    }

    fn apply_ied(&mut self, name: &str, out: IedOutput, rec: &mut TickRecord) {
        for a in out.actions {
            rec.ied_actions.push(DeviceAction {
                device: name.to_string(),
                action: a,
            });
        }
        for w in out.writes {
            if let Err(e) = self.store.write_control(&w.path, w.value, w.actor) {
                rec.errors.push(format!("{name}: {e}"));
            }
        }
        for f in out.frames {
            self.send(f, name, rec);
        }
    }

    fn apply_plc(&mut self, i: usize, out: PlcOutput, rec: &mut TickRecord) {
        let name = self.plcs[i].node().to_string();
        for a in out.actions {
            rec.plc_actions.push(DeviceAction {
                device: name.clone(),
                action: a,
            });
        }
        for f in out.frames {
            let copy = f.clone();
            if !self.send(f, &name, rec) {
                self.plcs[i].request_failed(&copy);
            }
        }
    }

    /// Deliver queued frames due by `until_us`, including any they trigger.
    fn pump(&mut self, until_us: u64, tick: u64, rec: &mut TickRecord) {
        while let Some(d) = self.net.next_delivery(until_us) {
            let kind = self.net.topology().node(&d.to).map(|n| n.kind);
            match kind {
                Some(NodeKind::Ied) => {
                    let actor = if d.injected_by.is_some() {
                        Actor::Attacker
                    } else {
                        sender_actor(self.net.topology().node(&d.frame.src).map(|n| n.kind))
                    };
                    let Some(ied) = self.ieds.get_mut(&d.to) else {
                        continue;
                    };
                    let out = ied.handle_frame(&d.frame, tick, actor);
                    self.apply_ied(&d.to, out, rec);
                }
                Some(NodeKind::Plc) => {
                    if let Some(i) = self.plcs.iter().position(|p| p.node() == d.to) {
                        let out = self.plcs[i].handle_frame(&d.frame);
                        self.apply_plc(i, out, rec);
                    }
                }
                Some(NodeKind::Gateway) => {
                    if let Some(g) = self.gateway.as_mut().filter(|g| g.node == d.to) {
                        g.handle_frame(&d.frame, tick);
                    }
                }
                _ => {}
            }
        }
    }

    /// Run every remaining step.
    pub fn run_to_end(&mut self) -> Result<(), KernelError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(())
    }

    /// The run log so far, including the store audit trail.
    pub fn run_log(&self) -> RunLog {
        RunLog {
            header: self.header.clone(),
            ticks: self.ticks.clone(),
            audit: self.store.audit().to_vec(),
        }
    }

    pub fn into_run_log(self) -> RunLog {
        RunLog {
            header: self.header,
            ticks: self.ticks,
            audit: self.store.audit().to_vec(),
        }
    }

    /// Address of a node, for diagnostics.
    pub fn address_of(&self, node: &str) -> Option<Ipv4Addr> {
        self.net.address_of(node)
    }
}

/// Run a compiled range to completion, optionally under attack, for at most
/// `max_steps` steps.
pub fn run_range(spec: &RangeSpec, attack: Option<&AttackScript>, max_steps: Option<usize>) -> Result<(Range, RunLog), KernelError> {
    let mut r = match attack {
        Some(a) => Range::with_attack(spec, a)?,
        None => Range::new(spec)?,
    };
    let limit = max_steps.unwrap_or(usize::MAX).min(r.n_steps());
    while r.steps_done() < limit {
        r.step()?;
    }
    let log = r.run_log();
    Ok((r, log))
}

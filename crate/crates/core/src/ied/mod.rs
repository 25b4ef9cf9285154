//! Virtual IEDs: data model, protection scan, GOOSE and request service.
//!
//! A [`VirtualIed`] is a self-contained actor. It reads the committed store
//! snapshot during its scan and reacts to delivered frames; every side effect
//! comes back as an [`IedOutput`] for the kernel to apply.

mod goose;
mod protection;
mod request;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{frame_json, unframe_json, Destination, Frame, FrameKind};
use crate::scl::{AttributePath, CpMapping, IedSection, LnClass, Thresholds};
use crate::store::{Actor, PointMeta, Quantity, StoreSnapshot, Value};

pub use goose::{
    goose_accept, Acceptance, GooseEntry, GooseMessage, Publication, Subscription, Transport, HEARTBEAT_TICKS,
    RESYNC_INTERVALS,
};
pub use protection::{
    eval_protection, Decision, ProtectionConfig, ProtectionError, ProtectionInput, ProtectionKind, DEAD_BUS_PU,
};
pub use request::{Request, RequestError, RequestOp, Response, SERVER_PORT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IedError {
    #[error("{ied}: no Thresholds entry usable for {ln}")]
    MissingThreshold { ied: String, ln: String },
    #[error("{ied}: dataset member `{path}` has no mapping and no internal source")]
    UnmappedAttribute { ied: String, path: String },
    #[error("{ied}: {ln} has no breaker to operate")]
    NoTargetBreaker { ied: String, ln: String },
    #[error("{ied}: {ln} has no monitored input")]
    NoMonitoredInput { ied: String, ln: String },
    #[error("{ied}: cannot resolve subscription to {detail}")]
    UnresolvedSubscription { ied: String, detail: String },
}

/// Which measured quantity a physical path carries (`Comp.Voltage.phsA`).
pub fn quantity_of(physical: &str) -> Option<Quantity> {
    match physical.split('.').nth(1)? {
        "Voltage" => Some(Quantity::Voltage),
        "Current" => Some(Quantity::Current),
        "P" => Some(Quantity::P),
        "Q" => Some(Quantity::Q),
        "Pos" => Some(Quantity::Pos),
        _ => None,
    }
}

fn related(a: &str, b: &str) -> bool {
    let prefix = |p: &str, s: &str| s == p || (s.starts_with(p) && s[p.len()..].starts_with('.'));
    prefix(a, b) || prefix(b, a)
}

fn is_breaker_pos(path: &AttributePath) -> bool {
    path.ln().class == LnClass::Xcbr && path.do_name() == "Pos"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreWrite {
    pub path: String,
    pub value: Value,
    pub actor: Actor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum IedAction {
    Alarm {
        ln: String,
    },
    Trip {
        ln: String,
        target: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        via: Option<String>,
        /// Inputs the decision was taken on, in threshold units.
        inputs: BTreeMap<String, f64>,
        /// Tick the local inputs were sampled at, when older than the scan
        /// (differential protection aligned to the partner's sample).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample_tick: Option<u64>,
    },
    Interlock {
        ln: String,
        target: String,
        closed: bool,
    },
    InterlockBlocked {
        ln: String,
        target: String,
    },
    Publish {
        app_id: u32,
        stnum: u32,
        sqnum: u32,
    },
    GooseAccepted {
        app_id: u32,
        stnum: u32,
    },
    RejectedStale {
        app_id: u32,
        stnum: u32,
        last_accepted: u32,
    },
    Resync {
        app_id: u32,
    },
    Served {
        op: RequestOp,
        path: String,
        requester: String,
        ok: bool,
    },
    Warning {
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IedOutput {
    pub actions: Vec<IedAction>,
    pub writes: Vec<StoreWrite>,
    pub frames: Vec<Frame>,
}

impl IedOutput {
    fn extend(&mut self, o: IedOutput) {
        self.actions.extend(o.actions);
        self.writes.extend(o.writes);
        self.frames.extend(o.frames);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionState {
    pub config: ProtectionConfig,
    pub last: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedPoint {
    pub attribute: AttributePath,
    pub physical: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualIed {
    pub name: String,
    pub address: Option<Ipv4Addr>,
    pub server_port: u16,
    pub data_model: BTreeMap<String, Value>,
    pub mapping: Vec<MappedPoint>,
    pub protections: Vec<ProtectionState>,
    pub publications: Vec<Publication>,
    pub subscriptions: Vec<Subscription>,
    /// Latest accepted values from subscribed datasets.
    pub remote: BTreeMap<String, Value>,
    /// Publisher sample tick of each value in `remote`.
    pub remote_tick: BTreeMap<String, u64>,
    /// Recent local differential inputs per PDIF, by scan tick.
    pdif_history: BTreeMap<String, VecDeque<Sample>>,
    has_ptrc: Option<String>,
    /// Breakers this IED has tripped; the interlock never recloses them.
    tripped: BTreeSet<String>,
    interlock_seen: BTreeMap<String, bool>,
}

/// Resolve where `path` (published by `publisher`) is sent from.
fn resolve_subscription(
    ied: &str,
    path: &AttributePath,
    cb_name: Option<&str>,
    peers: &[IedSection],
) -> Result<Subscription, IedError> {
    let unresolved = || IedError::UnresolvedSubscription {
        ied: ied.to_string(),
        detail: path.to_string(),
    };
    let publisher = peers.iter().find(|p| p.name == path.ied()).ok_or_else(unresolved)?;
    let candidates = publisher
        .control_blocks
        .iter()
        .filter(|cb| Transport::from_control(cb.kind).is_some())
        .filter(|cb| cb_name.is_none_or(|n| n == cb.name));
    for cb in candidates {
        let Some(ds) = publisher.dataset(&cb.dataset_ref) else {
            continue;
        };
        if cb_name.is_some() || ds.members.iter().any(|m| related(m.as_str(), path.as_str())) {
            let transport = Transport::from_control(cb.kind).expect("filtered");
            return Ok(Subscription::new(cb.app_id, &publisher.name, &cb.dataset_ref, transport));
        }
    }
    Err(unresolved())
}

/// Build a virtual IED from its ICD section, the bundle supplements and the
/// other IEDs it may subscribe to. `catalog` gives store point metadata.
pub fn instantiate_ied(
    icd: &IedSection,
    mapping: &CpMapping,
    thresholds: &Thresholds,
    peers: &[IedSection],
    catalog: &BTreeMap<String, PointMeta>,
) -> Result<VirtualIed, IedError> {
    let name = icd.name.clone();
    let mut data_model = BTreeMap::new();
    for (_, ln) in icd.logical_nodes() {
        let lnref = ln.reference();
        for d in &ln.data_objects {
            for a in &d.attributes {
                data_model.insert(format!("{name}.{lnref}.{}.{a}", d.name), Value::Real(0.0));
            }
        }
    }
    let mapped: Vec<MappedPoint> = mapping
        .for_ied(&name)
        .map(|p| MappedPoint {
            attribute: p.attribute_path.clone(),
            physical: p.physical_path.clone(),
        })
        .collect();
    for m in &mapped {
        let v = if quantity_of(&m.physical) == Some(Quantity::Pos) {
            Value::Bool(false)
        } else {
            Value::Real(0.0)
        };
        data_model.insert(m.attribute.to_string(), v);
    }

    let default_cb = mapped
        .iter()
        .find(|m| is_breaker_pos(&m.attribute))
        .map(|m| m.physical.clone());
    let mut protections = Vec::new();
    let mut subscriptions: Vec<Subscription> = Vec::new();
    let mut add_sub = |s: Subscription| {
        if !subscriptions.iter().any(|x| x.app_id == s.app_id) {
            subscriptions.push(s);
        }
    };
    let mut has_ptrc = None;
    for (_, ln) in icd.logical_nodes() {
        let Some(kind) = ProtectionKind::from_class(&ln.ln_class) else {
            continue;
        };
        let lnref = ln.reference();
        let missing = || IedError::MissingThreshold {
            ied: name.clone(),
            ln: lnref.clone(),
        };
        if kind == ProtectionKind::Ptrc {
            has_ptrc = Some(lnref.clone());
        }
        let entry = match thresholds.find(&name, &ln.ln_class, ln.instance) {
            Some(e) => e.clone(),
            // Trip conditioning only aggregates; it may go unconfigured.
            None if kind == ProtectionKind::Ptrc => {
                crate::scl::ThresholdEntry::new(&name, ln.ln_class.clone(), ln.instance, crate::scl::ThresholdUnits::Pu)
            }
            None => return Err(missing()),
        };
        match kind {
            ProtectionKind::Pdif | ProtectionKind::Cilo if entry.partner.is_none() => return Err(missing()),
            ProtectionKind::Pdis if entry.zone_impedance_ohm.is_none() && entry.trip_threshold.is_none() => {
                return Err(missing())
            }
            _ => {}
        }
        let input_for = |attr: &AttributePath, physical: Option<&str>| ProtectionInput {
            path: attr.clone(),
            quantity: physical.and_then(quantity_of),
            physical: physical.map(str::to_string),
            base: physical.and_then(|p| catalog.get(p)).and_then(|m| m.base),
        };
        let monitored: Vec<ProtectionInput> = if !entry.monitored.is_empty() {
            entry
                .monitored
                .iter()
                .map(|a| {
                    let phys = mapped.iter().find(|m| related(m.attribute.as_str(), a.as_str()));
                    input_for(a, phys.map(|m| m.physical.as_str()))
                })
                .collect()
        } else {
            let wanted = kind.default_quantities();
            let mut v: Vec<ProtectionInput> = mapped
                .iter()
                .filter(|m| quantity_of(&m.physical).is_some_and(|q| wanted.contains(&q)))
                .map(|m| input_for(&m.attribute, Some(&m.physical)))
                .collect();
            if kind == ProtectionKind::Pdif {
                v.truncate(1);
            }
            v
        };
        if monitored.is_empty() && !matches!(kind, ProtectionKind::Ptrc | ProtectionKind::Cilo) {
            return Err(IedError::NoMonitoredInput {
                ied: name.clone(),
                ln: lnref,
            });
        }
        let target_cb = entry.target_cb.clone().or_else(|| default_cb.clone());
        if target_cb.is_none() {
            return Err(IedError::NoTargetBreaker {
                ied: name.clone(),
                ln: lnref,
            });
        }
        if let Some(p) = &entry.partner {
            add_sub(resolve_subscription(&name, p, None, peers)?);
        }
        for i in &monitored {
            if i.physical.is_none() && i.path.ied() != name {
                add_sub(resolve_subscription(&name, &i.path, None, peers)?);
            }
        }
        protections.push(ProtectionState {
            config: ProtectionConfig {
                kind,
                ln: lnref,
                monitored,
                alarm_threshold: entry.alarm_threshold,
                trip_threshold: entry.trip_threshold,
                units: entry.units,
                target_cb,
                zone_impedance_ohm: entry.zone_impedance_ohm,
                pickup_a: entry.pickup_a,
                partner: entry.partner.clone(),
            },
            last: Decision::None,
        });
    }
    for ext in &icd.inputs {
        if let Some(p) = ext.attribute_path() {
            add_sub(resolve_subscription(&name, &p, ext.src_cb_name.as_deref(), peers)?);
        }
    }

    let mut publications = Vec::new();
    for cb in &icd.control_blocks {
        let Some(transport) = Transport::from_control(cb.kind) else {
            continue;
        };
        let members = icd.dataset(&cb.dataset_ref).map(|d| d.members.clone()).unwrap_or_default();
        for m in &members {
            let internal = icd.resolves(m) || data_model.keys().any(|k| related(k, m.as_str()));
            if !internal {
                return Err(IedError::UnmappedAttribute {
                    ied: name.clone(),
                    path: m.to_string(),
                });
            }
        }
        publications.push(Publication::new(&cb.name, cb.app_id, transport, &cb.dataset_ref, members));
    }

    Ok(VirtualIed {
        name,
        address: None,
        server_port: SERVER_PORT,
        data_model,
        mapping: mapped,
        protections,
        publications,
        subscriptions,
        remote: BTreeMap::new(),
        has_ptrc,
        remote_tick: BTreeMap::new(),
        pdif_history: BTreeMap::new(),
        tripped: BTreeSet::new(),
        interlock_seen: BTreeMap::new(),
    })
}

/// Protection input values for `cfg`, in threshold units: local inputs from
/// the snapshot, remote ones (and the partner) from `remote`.
pub fn input_values(
    cfg: &ProtectionConfig,
    snap: &StoreSnapshot,
    remote: &BTreeMap<String, Value>,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for i in &cfg.monitored {
        let raw = match &i.physical {
            Some(p) => snap.get(p).map(|r| r.value.as_f64()),
            None => remote.get(i.path.as_str()).map(|v| v.as_f64()),
        };
        if let Some(raw) = raw {
            out.insert(i.path.to_string(), cfg.scale(i, raw));
        }
    }
    if let Some(p) = &cfg.partner {
        if let Some(v) = remote.get(p.as_str()) {
            out.insert(p.to_string(), v.as_f64());
        }
    }
    out
}

/// Local samples kept per differential function.
/// Local inputs taken at one scan tick.
type Sample = (u64, BTreeMap<String, f64>);

const PDIF_HISTORY: usize = 16;

/// Pair the partner's latest sample with the local sample taken at the same
/// tick. Records this scan's local values in `hist`. Returns `None` when no
/// local sample matches (partner data too old).
fn align_to_partner(
    cfg: &ProtectionConfig,
    hist: &mut VecDeque<Sample>,
    remote_tick: &BTreeMap<String, u64>,
    mut values: BTreeMap<String, f64>,
    tick: u64,
) -> Option<(BTreeMap<String, f64>, u64)> {
    let partner = cfg.partner.as_ref().map(|p| p.as_str());
    let partner_value = partner.and_then(|p| values.remove(p));
    hist.push_back((tick, values.clone()));
    while hist.len() > PDIF_HISTORY {
        hist.pop_front();
    }
    let (Some(p), Some(pv)) = (partner, partner_value) else {
        return Some((values, tick));
    };
    let t = remote_tick.get(p).copied().unwrap_or(tick);
    let (t, mut local) = hist.iter().find(|(h, _)| *h == t).cloned()?;
    local.insert(p.to_string(), pv);
    Some((local, t))
}

impl VirtualIed {
    /// Data-model value at `path`, matching mapped attributes by prefix in
    /// either direction.
    pub fn lookup(&self, path: &str) -> Option<Value> {
        if let Some(v) = self.data_model.get(path) {
            return Some(*v);
        }
        if let Some(m) = self.mapping.iter().find(|m| related(m.attribute.as_str(), path)) {
            return self.data_model.get(m.attribute.as_str()).copied();
        }
        let prefix = format!("{path}.");
        self.data_model
            .range(prefix.clone()..)
            .next()
            .filter(|(k, _)| k.starts_with(&prefix))
            .map(|(_, v)| *v)
    }

    /// Store point of the breaker addressed by `path`, if writable.
    pub fn breaker_point(&self, path: &str) -> Option<&str> {
        let p: AttributePath = path.parse().ok()?;
        if !is_breaker_pos(&p) || p.ied() != self.name {
            return None;
        }
        self.mapping
            .iter()
            .find(|m| is_breaker_pos(&m.attribute) && related(m.attribute.as_str(), path))
            .map(|m| m.physical.as_str())
    }

    fn own_breaker_state(&self, point: &str) -> Option<bool> {
        self.mapping
            .iter()
            .find(|m| m.physical == point)
            .and_then(|m| self.data_model.get(m.attribute.as_str()))
            .map(|v| v.as_bool())
    }

    /// Nodes this IED listens to, for network subscription.
    pub fn groups(&self) -> Vec<Destination> {
        self.subscriptions.iter().map(|s| s.transport.destination(s.app_id)).collect()
    }

    /// One scan: copy mapped points, evaluate protection, publish datasets.
    pub fn scan_cycle(&mut self, snap: &StoreSnapshot, tick: u64) -> IedOutput {
        let mut out = IedOutput::default();
        for m in &self.mapping {
            if let Some(r) = snap.get(&m.physical) {
                self.data_model.insert(m.attribute.to_string(), r.value);
            }
        }

        let mut tripped_now: BTreeSet<String> = BTreeSet::new();
        let mut any_trip = false;
        for st in &mut self.protections {
            if st.config.kind == ProtectionKind::Cilo {
                continue;
            }
            let mut values = input_values(&st.config, snap, &self.remote);
            let mut sample_tick = None;
            let mut d = if st.config.kind == ProtectionKind::Pdif {
                let hist = self.pdif_history.entry(st.config.ln.clone()).or_default();
                match align_to_partner(&st.config, hist, &self.remote_tick, values, tick) {
                    Some((v, t)) => {
                        values = v;
                        sample_tick = (t != tick).then_some(t);
                        eval_protection(&st.config, &values).unwrap_or(Decision::None)
                    }
                    None => {
                        values = BTreeMap::new();
                        Decision::None
                    }
                }
            } else {
                eval_protection(&st.config, &values).unwrap_or(Decision::None)
            };
            if st.config.kind == ProtectionKind::Ptrc && any_trip {
                d = Decision::Trip;
            }
            let prev = std::mem::replace(&mut st.last, d);
            if d == prev || d == Decision::None {
                continue;
            }
            match d {
                Decision::Alarm if prev == Decision::None => out.actions.push(IedAction::Alarm {
                    ln: st.config.ln.clone(),
                }),
                Decision::Trip => {
                    any_trip = true;
                    let target = st.config.target_cb.clone().expect("checked at instantiation");
                    let via = self.has_ptrc.clone().filter(|p| *p != st.config.ln);
                    out.actions.push(IedAction::Trip {
                        ln: st.config.ln.clone(),
                        target: target.clone(),
                        via,
                        inputs: values.clone(),
                        sample_tick,
                    });
                    if tripped_now.insert(target.clone()) {
                        out.writes.push(StoreWrite {
                            path: target.clone(),
                            value: Value::Bool(false),
                            actor: Actor::Ied,
                        });
                    }
                    self.tripped.insert(target);
                }
                _ => {}
            }
        }

        for i in 0..self.publications.len() {
            let values: Vec<Value> = self.publications[i]
                .members
                .iter()
                .map(|m| self.lookup(m.as_str()).unwrap_or(Value::Real(0.0)))
                .collect();
            let p = &mut self.publications[i];
            if let Some(changed) = p.due(&values, tick) {
                let msg = p.publish(values, changed, tick);
                out.actions.push(IedAction::Publish {
                    app_id: msg.app_id,
                    stnum: msg.stnum,
                    sqnum: msg.sqnum,
                });
                out.frames.push(msg.into_frame(p.transport, &self.name, self.address));
            }
        }
        out
    }

    /// React to a delivered frame. `requester` is the actor class of the
    /// claimed sender, used for store provenance of writes.
    pub fn handle_frame(&mut self, frame: &Frame, tick: u64, requester: Actor) -> IedOutput {
        match frame.kind {
            FrameKind::TcpSegment => self.handle_request(frame, requester),
            FrameKind::L2Multicast | FrameKind::UdpMulticast => match GooseMessage::from_payload(&frame.payload) {
                Some(msg) => self.handle_goose(&msg, tick),
                None => IedOutput {
                    actions: vec![IedAction::Warning {
                        message: format!("undecodable multicast from {}", frame.src),
                    }],
                    ..Default::default()
                },
            },
        }
    }

    fn handle_request(&mut self, frame: &Frame, requester: Actor) -> IedOutput {
        let mut out = IedOutput::default();
        let (resp, path, op) = match unframe_json::<Request>(&frame.payload) {
            Ok(req) => {
                let resp = self.serve_request(&req, requester, &mut out);
                (resp, req.path, req.op)
            }
            Err(_) => (Response::err(0, RequestError::BadRequest), String::new(), RequestOp::Read),
        };
        out.actions.push(IedAction::Served {
            op,
            path,
            requester: frame.src.clone(),
            ok: resp.ok,
        });
        match frame.src_ip {
            Some(ip) => out.frames.push(Frame {
                kind: FrameKind::TcpSegment,
                src: self.name.clone(),
                src_ip: self.address,
                dst: Destination::Unicast(ip),
                app_id: 0,
                payload: frame_json(&resp),
                injected_by: None,
            }),
            None => out.actions.push(IedAction::Warning {
                message: format!("request from {} has no return address", frame.src),
            }),
        }
        out
    }

    /// Answer a read or write. Writes to a breaker position are queued as
    /// store writes attributed to `requester`.
    pub fn serve_request(&mut self, req: &Request, requester: Actor, out: &mut IedOutput) -> Response {
        match req.op {
            RequestOp::Read => match self.lookup(&req.path) {
                Some(v) => Response::ok(req.id, Some(v)),
                None => Response::err(req.id, RequestError::NoSuchPath),
            },
            RequestOp::Write => {
                if let Some(point) = self.breaker_point(&req.path).map(str::to_string) {
                    let Some(v) = req.value else {
                        return Response::err(req.id, RequestError::BadRequest);
                    };
                    let closed = v.as_bool();
                    out.writes.push(StoreWrite {
                        path: point,
                        value: Value::Bool(closed),
                        actor: requester,
                    });
                    Response::ok(req.id, Some(Value::Bool(closed)))
                } else if self.lookup(&req.path).is_some() {
                    Response::err(req.id, RequestError::NotWritable)
                } else {
                    Response::err(req.id, RequestError::NoSuchPath)
                }
            }
        }
    }

    fn handle_goose(&mut self, msg: &GooseMessage, tick: u64) -> IedOutput {
        let mut out = IedOutput::default();
        let Some(sub) = self.subscriptions.iter_mut().find(|s| s.app_id == msg.app_id) else {
            return out;
        };
        if sub.maybe_resync(tick) {
            out.actions.push(IedAction::Resync { app_id: msg.app_id });
        }
        let last = sub.last_accepted_stnum;
        match goose_accept(sub, msg, tick) {
            Acceptance::Accepted => {
                out.actions.push(IedAction::GooseAccepted {
                    app_id: msg.app_id,
                    stnum: msg.stnum,
                });
                for e in &msg.entries {
                    self.remote.insert(e.path.clone(), e.value);
                    self.remote_tick.insert(e.path.clone(), msg.t);
                }
                out.extend(self.interlock());
            }
            Acceptance::RejectedStale => out.actions.push(IedAction::RejectedStale {
                app_id: msg.app_id,
                stnum: msg.stnum,
                last_accepted: last,
            }),
        }
        out
    }

    /// Mirror partner breaker changes onto our own breaker.
    fn interlock(&mut self) -> IedOutput {
        let mut out = IedOutput::default();
        for st in &self.protections {
            let cfg = &st.config;
            if cfg.kind != ProtectionKind::Cilo {
                continue;
            }
            let (Some(partner), Some(target)) = (&cfg.partner, &cfg.target_cb) else {
                continue;
            };
            let Some(partner_closed) = self.remote.get(partner.as_str()).map(|v| v.as_bool()) else {
                continue;
            };
            if self.interlock_seen.insert(cfg.ln.clone(), partner_closed) == Some(partner_closed) {
                continue;
            }
            if self.own_breaker_state(target) == Some(partner_closed) {
                continue;
            }
            if partner_closed && self.tripped.contains(target) {
                out.actions.push(IedAction::InterlockBlocked {
                    ln: cfg.ln.clone(),
                    target: target.clone(),
                });
                continue;
            }
            out.actions.push(IedAction::Interlock {
                ln: cfg.ln.clone(),
                target: target.clone(),
                closed: partner_closed,
            });
            out.writes.push(StoreWrite {
                path: target.clone(),
                value: Value::Bool(partner_closed),
                actor: Actor::Ied,
            });
        }
        out
    }
}

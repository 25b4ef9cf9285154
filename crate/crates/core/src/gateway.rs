//! SCADA gateway node: point listing, change streaming and commands.
//!
//! Reads come from committed store snapshots. Commands become write requests
//! sent from the gateway's own network node to the IED owning the point, so
//! they are subject to the same routing, taps and link failures as any
//! other traffic.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ied::{Request, RequestOp, Response};
use crate::net::{frame_json, unframe_json, Destination, Frame, FrameKind};
use crate::scl::{AttributePath, CpMapping, LnClass, ScadaConfig};
use crate::store::{Quality, StoreSnapshot, Value};

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum CommandError {
    #[error("unknown point `{0}`")]
    UnknownPoint(String),
    #[error("point `{0}` is not writable")]
    NotWritable(String),
    #[error("IED for point `{0}` is unreachable")]
    IedUnreachable(String),
    #[error("IED rejected the command on `{0}`")]
    Rejected(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("writable point `{point}` maps to `{path}`, which is not a breaker position")]
    NotControllable { point: String, path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScadaPoint {
    pub point_name: String,
    pub attribute_path: AttributePath,
    pub writable: bool,
    pub last_value: Option<Value>,
    pub quality: Option<Quality>,
    pub last_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointUpdate {
    pub point: String,
    pub value: Value,
}

/// One streamed batch: every configured point that changed in a commit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamBatch {
    pub tick: u64,
    pub updates: Vec<PointUpdate>,
}

impl StreamBatch {
    /// Keep only the named points (no filter keeps all).
    pub fn filtered(&self, points: Option<&[String]>) -> StreamBatch {
        StreamBatch {
            tick: self.tick,
            updates: self
                .updates
                .iter()
                .filter(|u| points.is_none_or(|ps| ps.contains(&u.point)))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CommandStatus {
    Pending,
    Acked { tick: u64 },
    Failed { error: CommandError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub id: u64,
    pub point: String,
    pub value: Value,
    pub operator_id: String,
    #[serde(flatten)]
    pub status: CommandStatus,
}

#[derive(Debug, Clone)]
struct Binding {
    physical: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ScadaGateway {
    pub node: String,
    pub address: Option<Ipv4Addr>,
    config: ScadaConfig,
    bindings: BTreeMap<String, Binding>,
    queued: Vec<u64>,
    in_flight: BTreeMap<u64, u64>,
    commands: BTreeMap<u64, CommandRecord>,
    next_id: u64,
    next_request: u64,
}

fn related(a: &str, b: &str) -> bool {
    let prefix = |p: &str, s: &str| s == p || (s.starts_with(p) && s[p.len()..].starts_with('.'));
    prefix(a, b) || prefix(b, a)
}

impl ScadaGateway {
    pub fn new(node: &str, config: ScadaConfig, mapping: &CpMapping) -> Result<Self, GatewayError> {
        let mut bindings = BTreeMap::new();
        for p in &config.points {
            if p.writable {
                let ln = p.attribute_path.ln();
                if ln.class != LnClass::Xcbr || p.attribute_path.do_name() != "Pos" {
                    return Err(GatewayError::NotControllable {
                        point: p.point_name.clone(),
                        path: p.attribute_path.to_string(),
                    });
                }
            }
            let physical = mapping
                .pairs
                .iter()
                .find(|m| related(m.attribute_path.as_str(), p.attribute_path.as_str()))
                .map(|m| m.physical_path.clone());
            bindings.insert(p.point_name.clone(), Binding { physical });
        }
        Ok(ScadaGateway {
            node: node.to_string(),
            address: None,
            config,
            bindings,
            queued: Vec::new(),
            in_flight: BTreeMap::new(),
            commands: BTreeMap::new(),
            next_id: 1,
            next_request: 1,
        })
    }

    pub fn config(&self) -> &ScadaConfig {
        &self.config
    }

    /// Store point behind a configured point name.
    pub fn physical_of(&self, point: &str) -> Option<&str> {
        self.bindings.get(point).and_then(|b| b.physical.as_deref())
    }

    pub fn list_points(&self, snap: &StoreSnapshot) -> Vec<ScadaPoint> {
        self.config
            .points
            .iter()
            .map(|p| {
                let rec = self.physical_of(&p.point_name).and_then(|ph| snap.get(ph));
                ScadaPoint {
                    point_name: p.point_name.clone(),
                    attribute_path: p.attribute_path.clone(),
                    writable: p.writable,
                    last_value: rec.map(|r| r.value),
                    quality: rec.map(|r| r.quality),
                    last_tick: snap.tick,
                }
            })
            .collect()
    }

    /// Changed configured points between two snapshots.
    pub fn batch(&self, prev: Option<&StoreSnapshot>, snap: &StoreSnapshot) -> StreamBatch {
        let mut updates = Vec::new();
        for p in &self.config.points {
            let Some(ph) = self.physical_of(&p.point_name) else {
                continue;
            };
            let Some(now) = snap.get(ph) else {
                continue;
            };
            let before = prev.and_then(|s| s.get(ph)).map(|r| r.value);
            if before != Some(now.value) {
                updates.push(PointUpdate {
                    point: p.point_name.clone(),
                    value: now.value,
                });
            }
        }
        StreamBatch { tick: snap.tick, updates }
    }

    /// Queue an operator command; it is sent during the next network phase.
    pub fn issue_command(&mut self, point: &str, value: Value, operator_id: &str) -> Result<u64, CommandError> {
        let cfg = self
            .config
            .points
            .iter()
            .find(|p| p.point_name == point)
            .ok_or_else(|| CommandError::UnknownPoint(point.to_string()))?;
        if !cfg.writable {
            return Err(CommandError::NotWritable(point.to_string()));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.commands.insert(
            id,
            CommandRecord {
                id,
                point: point.to_string(),
                value,
                operator_id: operator_id.to_string(),
                status: CommandStatus::Pending,
            },
        );
        self.queued.push(id);
        Ok(id)
    }

    pub fn command(&self, id: u64) -> Option<&CommandRecord> {
        self.commands.get(&id)
    }

    /// Request frames for queued commands. The caller reports frames the
    /// network refuses via [`ScadaGateway::send_failed`].
    pub fn take_requests(&mut self, address_of: impl Fn(&str) -> Option<Ipv4Addr>) -> Vec<(u64, Frame)> {
        let mut out = Vec::new();
        for id in std::mem::take(&mut self.queued) {
            let rec = self.commands.get_mut(&id).expect("queued command recorded");
            let cfg = self
                .config
                .points
                .iter()
                .find(|p| p.point_name == rec.point)
                .expect("validated at issue");
            let Some(ip) = address_of(cfg.attribute_path.ied()) else {
                rec.status = CommandStatus::Failed {
                    error: CommandError::IedUnreachable(rec.point.clone()),
                };
                continue;
            };
            let req_id = self.next_request;
            self.next_request += 1;
            let req = Request {
                id: req_id,
                op: RequestOp::Write,
                path: cfg.attribute_path.to_string(),
                value: Some(rec.value),
            };
            self.in_flight.insert(req_id, id);
            out.push((
                id,
                Frame {
                    kind: FrameKind::TcpSegment,
                    src: self.node.clone(),
                    src_ip: self.address,
                    dst: Destination::Unicast(ip),
                    app_id: 0,
                    payload: frame_json(&req),
                    injected_by: None,
                },
            ));
        }
        out
    }

    pub fn send_failed(&mut self, command_id: u64) {
        self.in_flight.retain(|_, c| *c != command_id);
        if let Some(rec) = self.commands.get_mut(&command_id) {
            rec.status = CommandStatus::Failed {
                error: CommandError::IedUnreachable(rec.point.clone()),
            };
        }
    }

    pub fn handle_frame(&mut self, frame: &Frame, tick: u64) {
        let Ok(resp) = unframe_json::<Response>(&frame.payload) else {
            return;
        };
        let Some(cmd) = self.in_flight.remove(&resp.id) else {
            return;
        };
        if let Some(rec) = self.commands.get_mut(&cmd) {
            rec.status = if resp.ok {
                CommandStatus::Acked { tick }
            } else {
                CommandStatus::Failed {
                    error: CommandError::Rejected(rec.point.clone()),
                }
            };
        }
    }

    /// Commands still unanswered at the end of a tick are unreachable.
    pub fn expire_in_flight(&mut self) -> Vec<u64> {
        let expired: Vec<u64> = std::mem::take(&mut self.in_flight).into_values().collect();
        for id in &expired {
            if let Some(rec) = self.commands.get_mut(id) {
                rec.status = CommandStatus::Failed {
                    error: CommandError::IedUnreachable(rec.point.clone()),
                };
            }
        }
        expired
    }
}

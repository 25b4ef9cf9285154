//! Cyber topology derivation and a deterministic frame emulator.
//!
//! Nodes are the owners of `ConnectedAP` entries in the merged SCD; links are
//! formed by pairing equal `PhysConn` cable ids. Frames travel along
//! shortest hop paths in simulated microseconds, ordered by `(time, seq)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scl::{Address, IedSection, SclDocument};

pub const DEFAULT_LATENCY_US: u64 = 100;
pub const DEFAULT_BANDWIDTH_MBPS: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("cable `{cable}` has only one endpoint ({node})")]
    DanglingCable { cable: String, node: String },
    #[error("cable `{cable}` appears on {} endpoints", endpoints.len())]
    CableTriple { cable: String, endpoints: Vec<String> },
    #[error("no route: {0}")]
    Unroutable(String),
    #[error("unknown tap scope `{0}`")]
    UnknownScope(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("frame payload is empty")]
    EmptyPayload,
    #[error("`{0}` is not a multicast group address")]
    NotMulticast(Ipv4Addr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Ied,
    Plc,
    Switch,
    Gateway,
    Attacker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyberNode {
    pub name: String,
    pub kind: NodeKind,
    pub subnetworks: Vec<String>,
    pub address: Option<Address>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: String,
    /// Port string from `PhysConn`, absent when the SCD does not name one.
    pub port: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyberLink {
    pub a: Endpoint,
    pub b: Endpoint,
    pub cable: String,
    pub latency_ms: f64,
    pub bandwidth_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CyberTopology {
    pub nodes: Vec<CyberNode>,
    pub links: Vec<CyberLink>,
}

impl CyberTopology {
    pub fn node(&self, name: &str) -> Option<&CyberNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn link_by_cable(&self, cable: &str) -> Option<&CyberLink> {
        self.links.iter().find(|l| l.cable == cable)
    }

    /// Endpoints whose `PhysConn` carried no port name.
    pub fn missing_ports(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for l in &self.links {
            for e in [&l.a, &l.b] {
                if e.port.is_none() {
                    out.push((e.node.clone(), l.cable.clone()));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology is serializable")
    }

    pub fn to_dot(&self) -> String {
        let q = |s: &str| format!("\"{}\"", s.replace('"', "\\\""));
        let mut out = String::from("graph cyber {\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Switch => "diamond",
                NodeKind::Plc => "hexagon",
                NodeKind::Gateway => "house",
                NodeKind::Attacker => "octagon",
                NodeKind::Ied => "box",
            };
            let addr = n.address.as_ref().map(|a| a.ip.to_string()).unwrap_or_default();
            let kind = serde_json::to_value(n.kind).expect("kind serializes");
            let label = format!("{}\\n{}\\n{}", n.name, kind.as_str().unwrap_or(""), addr);
            let _ = writeln!(out, "  {} [shape={shape}, label={}];", q(&n.name), q(&label));
        }
        for l in &self.links {
            let _ = writeln!(out, "  {} -- {} [label={}];", q(&l.a.node), q(&l.b.node), q(&l.cable));
        }
        out.push_str("}\n");
        out
    }
}

/// Node kind from the owning IED section's `type`. A ConnectedAP without an
/// IED section is network gear and becomes a switch.
pub fn classify(ied: Option<&IedSection>) -> NodeKind {
    let Some(ied) = ied else {
        return NodeKind::Switch;
    };
    let t = ied.ied_type.as_deref().unwrap_or("").to_ascii_lowercase();
    if t.contains("switch") {
        NodeKind::Switch
    } else if t.contains("plc") {
        NodeKind::Plc
    } else if t.contains("gateway") || t.contains("scada") || t.contains("hmi") {
        NodeKind::Gateway
    } else {
        NodeKind::Ied
    }
}

/// Derive the cyber topology from a merged SCD. Pure: equal documents give
/// equal topologies.
pub fn build_cyber_topology(scd: &SclDocument) -> Result<CyberTopology, NetError> {
    let mut nodes: Vec<CyberNode> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut cables: BTreeMap<String, Vec<Endpoint>> = BTreeMap::new();
    let mut cable_order: Vec<String> = Vec::new();
    for (sn, ap) in scd.connected_aps() {
        let i = *index.entry(ap.ied_name.clone()).or_insert_with(|| {
            nodes.push(CyberNode {
                name: ap.ied_name.clone(),
                kind: classify(scd.ied(&ap.ied_name)),
                subnetworks: Vec::new(),
                address: None,
            });
            nodes.len() - 1
        });
        let node = &mut nodes[i];
        if !node.subnetworks.contains(&sn.name) {
            node.subnetworks.push(sn.name.clone());
        }
        if node.address.is_none() {
            node.address = ap.address;
        }
        for pc in &ap.phys_conns {
            let eps = cables.entry(pc.cable.clone()).or_default();
            if eps.is_empty() {
                cable_order.push(pc.cable.clone());
            }
            eps.push(Endpoint {
                node: ap.ied_name.clone(),
                port: pc.port.clone(),
            });
        }
    }
    let mut links = Vec::new();
    for cable in cable_order {
        let mut eps = cables.remove(&cable).expect("cable recorded");
        match eps.len() {
            1 => {
                return Err(NetError::DanglingCable {
                    cable,
                    node: eps.remove(0).node,
                })
            }
            2 => {
                let b = eps.pop().expect("two endpoints");
                let a = eps.pop().expect("two endpoints");
                links.push(CyberLink {
                    a,
                    b,
                    cable,
                    latency_ms: DEFAULT_LATENCY_US as f64 / 1000.0,
                    bandwidth_mbps: DEFAULT_BANDWIDTH_MBPS,
                });
            }
            _ => {
                return Err(NetError::CableTriple {
                    cable,
                    endpoints: eps.into_iter().map(|e| e.node).collect(),
                })
            }
        }
    }
    Ok(CyberTopology { nodes, links })
}

// ---------------------------------------------------------------------------
// Frames

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    L2Multicast,
    UdpMulticast,
    TcpSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Unicast(Ipv4Addr),
    /// Layer-2 multicast keyed by GOOSE app id, scoped to the subnetwork.
    L2Group(u32),
    /// Routable UDP multicast group.
    IpGroup(Ipv4Addr),
}

/// Routable multicast group for an R-GOOSE app id.
pub fn rgoose_group(app_id: u32) -> Ipv4Addr {
    Ipv4Addr::new(239, 192, ((app_id >> 8) & 0xff) as u8, (app_id & 0xff) as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub kind: FrameKind,
    /// Claimed sender node (not validated).
    pub src: String,
    pub src_ip: Option<Ipv4Addr>,
    pub dst: Destination,
    pub app_id: u32,
    pub payload: Vec<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub injected_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub time_us: u64,
    pub to: String,
    pub frame: Frame,
    /// Attacker that emitted the frame; hidden from the receiver.
    pub injected_by: Option<String>,
}

/// One delivered frame, kept for the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub time_us: u64,
    pub src: String,
    pub to: String,
    pub kind: FrameKind,
    pub app_id: u32,
    pub bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub injected_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TapScope {
    Node(String),
    /// A link identified by its cable id.
    Link(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TapHandle(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct TappedFrame {
    pub time_us: u64,
    pub frame: Frame,
}

#[derive(Debug)]
struct Tap {
    scope: Scope,
    frames: Vec<TappedFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Node(usize),
    Link(usize),
}

#[derive(Debug)]
struct Pending {
    to: usize,
    frame: Frame,
}

#[derive(Debug)]
pub struct NetEmulator {
    topo: CyberTopology,
    index: BTreeMap<String, usize>,
    /// Per node: (neighbour, link) sorted by neighbour name.
    adj: Vec<Vec<(usize, usize)>>,
    link_up: Vec<bool>,
    link_latency_us: Vec<u64>,
    subs: Vec<BTreeSet<Destination>>,
    queue: BTreeMap<(u64, u64), Pending>,
    seq: u64,
    now_us: u64,
    taps: Vec<Tap>,
    log: Vec<DeliveryRecord>,
    route_cache: BTreeMap<usize, Vec<Option<(usize, usize)>>>,
}

impl NetEmulator {
    pub fn new(topo: CyberTopology) -> Self {
        let mut emu = NetEmulator {
            index: BTreeMap::new(),
            adj: Vec::new(),
            link_up: vec![true; topo.links.len()],
            link_latency_us: topo
                .links
                .iter()
                .map(|l| (l.latency_ms * 1000.0).round() as u64)
                .collect(),
            subs: vec![BTreeSet::new(); topo.nodes.len()],
            queue: BTreeMap::new(),
            seq: 0,
            now_us: 0,
            taps: Vec::new(),
            log: Vec::new(),
            route_cache: BTreeMap::new(),
            topo,
        };
        emu.reindex();
        emu
    }

    fn reindex(&mut self) {
        self.index = self
            .topo
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.clone(), i))
            .collect();
        self.adj = vec![Vec::new(); self.topo.nodes.len()];
        for (li, l) in self.topo.links.iter().enumerate() {
            let a = self.index[&l.a.node];
            let b = self.index[&l.b.node];
            self.adj[a].push((b, li));
            self.adj[b].push((a, li));
        }
        let names: Vec<String> = self.topo.nodes.iter().map(|n| n.name.clone()).collect();
        for list in &mut self.adj {
            list.sort_by(|x, y| names[x.0].cmp(&names[y.0]).then(x.1.cmp(&y.1)));
        }
        self.route_cache.clear();
    }

    pub fn topology(&self) -> &CyberTopology {
        &self.topo
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    fn idx(&self, name: &str) -> Result<usize, NetError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NetError::UnknownNode(name.to_string()))
    }

    /// Add an attacker node wired to `at` by a fresh cable.
    pub fn attach_attacker(&mut self, name: &str, at: &str, address: Option<Address>) -> Result<(), NetError> {
        let host = self.idx(at)?;
        if self.index.contains_key(name) {
            return Err(NetError::UnknownNode(format!("{name} already attached")));
        }
        let subnetworks = self.topo.nodes[host].subnetworks.clone();
        self.topo.nodes.push(CyberNode {
            name: name.to_string(),
            kind: NodeKind::Attacker,
            subnetworks,
            address,
        });
        self.topo.links.push(CyberLink {
            a: Endpoint {
                node: name.to_string(),
                port: None,
            },
            b: Endpoint {
                node: at.to_string(),
                port: None,
            },
            cable: format!("{name}-{at}"),
            latency_ms: DEFAULT_LATENCY_US as f64 / 1000.0,
            bandwidth_mbps: DEFAULT_BANDWIDTH_MBPS,
        });
        self.link_up.push(true);
        self.link_latency_us.push(DEFAULT_LATENCY_US);
        self.subs.push(BTreeSet::new());
        self.reindex();
        Ok(())
    }

    pub fn subscribe(&mut self, node: &str, group: Destination) -> Result<(), NetError> {
        let i = self.idx(node)?;
        self.subs[i].insert(group);
        Ok(())
    }

    /// Take a link out of service. Returns false if no such link is up.
    pub fn drop_link(&mut self, a: &str, b: &str) -> bool {
        let mut hit = false;
        for (li, l) in self.topo.links.iter().enumerate() {
            let ends = (l.a.node.as_str(), l.b.node.as_str());
            if self.link_up[li] && (ends == (a, b) || ends == (b, a)) {
                self.link_up[li] = false;
                hit = true;
            }
        }
        self.route_cache.clear();
        hit
    }

    pub fn restore_link(&mut self, a: &str, b: &str) {
        for (li, l) in self.topo.links.iter().enumerate() {
            let ends = (l.a.node.as_str(), l.b.node.as_str());
            if ends == (a, b) || ends == (b, a) {
                self.link_up[li] = true;
            }
        }
        self.route_cache.clear();
    }

    pub fn attach_tap(&mut self, scope: TapScope) -> Result<TapHandle, NetError> {
        let scope = match scope {
            TapScope::Node(n) => Scope::Node(self.idx(&n).map_err(|_| NetError::UnknownScope(n))?),
            TapScope::Link(c) => Scope::Link(
                self.topo
                    .links
                    .iter()
                    .position(|l| l.cable == c)
                    .ok_or(NetError::UnknownScope(c))?,
            ),
        };
        self.taps.push(Tap {
            scope,
            frames: Vec::new(),
        });
        Ok(TapHandle(self.taps.len() - 1))
    }

    /// Frames observed by a tap since the last drain.
    pub fn drain_tap(&mut self, h: TapHandle) -> Vec<TappedFrame> {
        self.taps
            .get_mut(h.0)
            .map(|t| std::mem::take(&mut t.frames))
            .unwrap_or_default()
    }

    /// BFS predecessor tree from `src`: entry = (parent node, link).
    fn tree(&mut self, src: usize) -> &Vec<Option<(usize, usize)>> {
        if !self.route_cache.contains_key(&src) {
            let n = self.topo.nodes.len();
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut seen = vec![false; n];
            seen[src] = true;
            let mut q = VecDeque::from([src]);
            while let Some(u) = q.pop_front() {
                // Frames only transit switches; end hosts do not forward.
                if u != src && self.topo.nodes[u].kind != NodeKind::Switch {
                    continue;
                }
                for &(v, li) in &self.adj[u] {
                    if self.link_up[li] && !seen[v] {
                        seen[v] = true;
                        prev[v] = Some((u, li));
                        q.push_back(v);
                    }
                }
            }
            self.route_cache.insert(src, prev);
        }
        &self.route_cache[&src]
    }

    /// Links on the path from the tree root to `dst`, or None if unreachable.
    fn path(&mut self, src: usize, dst: usize) -> Option<Vec<usize>> {
        if src == dst {
            return Some(Vec::new());
        }
        let tree = self.tree(src);
        tree[dst]?;
        let mut links = Vec::new();
        let mut cur = dst;
        while cur != src {
            let (p, li) = tree[cur].expect("on tree");
            links.push(li);
            cur = p;
        }
        links.reverse();
        Some(links)
    }

    fn owner_of(&self, ip: Ipv4Addr, origin: usize) -> Option<usize> {
        let owners: Vec<usize> = self
            .topo
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.address.as_ref().is_some_and(|a| a.ip == ip))
            .map(|(i, _)| i)
            .collect();
        match owners.len() {
            0 => None,
            1 => Some(owners[0]),
            _ => {
                let subs = &self.topo.nodes[origin].subnetworks;
                owners
                    .into_iter()
                    .find(|&o| self.topo.nodes[o].subnetworks.iter().any(|s| subs.contains(s)))
            }
        }
    }

    pub fn address_of(&self, node: &str) -> Option<Ipv4Addr> {
        self.topo.node(node).and_then(|n| n.address.as_ref()).map(|a| a.ip)
    }

    /// Send a frame from its `src` node.
    pub fn send_frame(&mut self, f: Frame) -> Result<Vec<String>, NetError> {
        let origin = self.idx(&f.src).map_err(|_| NetError::Unroutable(format!("unknown source {}", f.src)))?;
        self.emit(origin, f)
    }

    /// Emit a frame physically at `at`, whatever its claimed source.
    pub fn inject_frame(&mut self, at: &str, f: Frame) -> Result<Vec<String>, NetError> {
        let origin = self
            .idx(at)
            .map_err(|_| NetError::Unroutable(format!("injection point {at} not attached")))?;
        self.emit(origin, f)
    }

    fn emit(&mut self, origin: usize, f: Frame) -> Result<Vec<String>, NetError> {
        if f.payload.is_empty() {
            return Err(NetError::EmptyPayload);
        }
        let claimed = self.index.get(&f.src).copied();
        let receivers: Vec<usize> = match f.dst {
            Destination::Unicast(ip) => {
                let to = self
                    .owner_of(ip, origin)
                    .ok_or_else(|| NetError::Unroutable(format!("no owner for {ip}")))?;
                vec![to]
            }
            Destination::L2Group(_) => {
                let subs = self.topo.nodes[origin].subnetworks.clone();
                (0..self.topo.nodes.len())
                    .filter(|&i| i != origin && Some(i) != claimed)
                    .filter(|&i| self.subs[i].contains(&f.dst))
                    .filter(|&i| self.topo.nodes[i].subnetworks.iter().any(|s| subs.contains(s)))
                    .collect()
            }
            Destination::IpGroup(g) => {
                if !g.is_multicast() {
                    return Err(NetError::NotMulticast(g));
                }
                (0..self.topo.nodes.len())
                    .filter(|&i| i != origin && Some(i) != claimed)
                    .filter(|&i| self.subs[i].contains(&f.dst))
                    .collect()
            }
        };
        let mut delivered = Vec::new();
        let mut used_links: BTreeSet<usize> = BTreeSet::new();
        let mut used_nodes: BTreeSet<usize> = BTreeSet::from([origin]);
        let mut scheduled = Vec::new();
        for r in receivers {
            let Some(path) = self.path(origin, r) else {
                if matches!(f.dst, Destination::Unicast(_)) {
                    return Err(NetError::Unroutable(format!(
                        "{} unreachable from {}",
                        self.topo.nodes[r].name, self.topo.nodes[origin].name
                    )));
                }
                continue;
            };
            let latency: u64 = path.iter().map(|&li| self.link_latency_us[li]).sum();
            for &li in &path {
                used_links.insert(li);
                let l = &self.topo.links[li];
                used_nodes.insert(self.index[&l.a.node]);
                used_nodes.insert(self.index[&l.b.node]);
            }
            scheduled.push((self.now_us + latency.max(1), r));
            delivered.push(self.topo.nodes[r].name.clone());
        }
        for tap in &mut self.taps {
            let hit = match tap.scope {
                Scope::Link(li) => used_links.contains(&li),
                Scope::Node(n) => used_nodes.contains(&n),
            };
            if hit {
                tap.frames.push(TappedFrame {
                    time_us: self.now_us,
                    frame: f.clone(),
                });
            }
        }
        for (time, to) in scheduled {
            self.seq += 1;
            self.queue.insert(
                (time, self.seq),
                Pending {
                    to,
                    frame: f.clone(),
                },
            );
        }
        Ok(delivered)
    }

    pub fn has_pending(&self) -> bool {
        !self.queue.is_empty()
    }

    /// Time of the earliest queued delivery.
    pub fn next_event_us(&self) -> Option<u64> {
        self.queue.keys().next().map(|k| k.0)
    }

    /// Pop the next delivery if it is due at or before `until_us`.
    pub fn next_delivery(&mut self, until_us: u64) -> Option<Delivery> {
        let (&key, _) = self.queue.iter().next()?;
        if key.0 > until_us {
            return None;
        }
        let p = self.queue.remove(&key).expect("key present");
        self.now_us = self.now_us.max(key.0);
        let mut frame = p.frame;
        let injected_by = frame.injected_by.take();
        let to = self.topo.nodes[p.to].name.clone();
        self.log.push(DeliveryRecord {
            time_us: key.0,
            src: frame.src.clone(),
            to: to.clone(),
            kind: frame.kind,
            app_id: frame.app_id,
            bytes: frame.payload.len(),
            injected_by: injected_by.clone(),
        });
        Some(Delivery {
            time_us: key.0,
            to,
            frame,
            injected_by,
        })
    }

    /// Advance the clock without delivering (no-op if already later).
    pub fn advance_to(&mut self, t_us: u64) {
        self.now_us = self.now_us.max(t_us);
    }

    /// Delivery records accumulated since the last drain.
    pub fn drain_log(&mut self) -> Vec<DeliveryRecord> {
        std::mem::take(&mut self.log)
    }
}

// ---------------------------------------------------------------------------
// Request wire format: 4-byte big-endian length, then UTF-8 JSON.

/// Length-prefix a JSON body.
pub fn frame_json<T: Serialize>(body: &T) -> Vec<u8> {
    let json = serde_json::to_vec(body).expect("body serializes");
    let mut out = Vec::with_capacity(json.len() + 4);
    out.extend_from_slice(&(json.len() as u32).to_be_bytes());
    out.extend_from_slice(&json);
    out
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame shorter than its length prefix")]
    Truncated,
    #[error("bad JSON body: {0}")]
    Json(#[from] serde_json::Error),
}

/// Decode a length-prefixed JSON body.
pub fn unframe_json<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, WireError> {
    if bytes.len() < 4 {
        return Err(WireError::Truncated);
    }
    let n = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(4..4 + n).ok_or(WireError::Truncated)?;
    Ok(serde_json::from_slice(body)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(name: &str, kind: NodeKind, ip: u8) -> CyberNode {
        CyberNode {
            name: name.into(),
            kind,
            subnetworks: vec!["SN".into()],
            address: Some(Address {
                ip: Ipv4Addr::new(10, 0, 0, ip),
                netmask: Ipv4Addr::new(255, 255, 255, 0),
                gateway: None,
            }),
        }
    }

    fn link(a: &str, b: &str, cable: &str) -> CyberLink {
        CyberLink {
            a: Endpoint {
                node: a.into(),
                port: Some("P1".into()),
            },
            b: Endpoint {
                node: b.into(),
                port: Some("P2".into()),
            },
            cable: cable.into(),
            latency_ms: 0.1,
            bandwidth_mbps: 100.0,
        }
    }

    fn star() -> NetEmulator {
        NetEmulator::new(CyberTopology {
            nodes: vec![
                node("SW", NodeKind::Switch, 1),
                node("A", NodeKind::Ied, 2),
                node("B", NodeKind::Ied, 3),
                node("C", NodeKind::Ied, 4),
            ],
            links: vec![link("A", "SW", "C1"), link("B", "SW", "C2"), link("C", "SW", "C3")],
        })
    }

    fn frame(src: &str, dst: Destination) -> Frame {
        Frame {
            kind: FrameKind::L2Multicast,
            src: src.into(),
            src_ip: None,
            dst,
            app_id: 0x1001,
            payload: b"x".to_vec(),
            injected_by: None,
        }
    }

    #[test]
    fn unicast_one_delivery() {
        let mut net = star();
        let d = net.send_frame(frame("A", Destination::Unicast(Ipv4Addr::new(10, 0, 0, 3)))).unwrap();
        assert_eq!(d, vec!["B".to_string()]);
        let got = net.next_delivery(u64::MAX).unwrap();
        assert_eq!(got.time_us, 200);
        assert!(net.next_delivery(u64::MAX).is_none());
    }

    #[test]
    fn multicast_excludes_sender() {
        let mut net = star();
        for n in ["A", "B", "C"] {
            net.subscribe(n, Destination::L2Group(0x1001)).unwrap();
        }
        let d = net.send_frame(frame("A", Destination::L2Group(0x1001))).unwrap();
        assert_eq!(d, vec!["B".to_string(), "C".to_string()]);
    }

    #[test]
    fn unknown_address_unroutable() {
        let mut net = star();
        let e = net.send_frame(frame("A", Destination::Unicast(Ipv4Addr::new(10, 9, 9, 9))));
        assert!(matches!(e, Err(NetError::Unroutable(_))));
    }

    #[test]
    fn dropped_link_unroutable_and_idle_tap_empty() {
        let mut net = star();
        let idle = net.attach_tap(TapScope::Link("C3".into())).unwrap();
        assert!(net.drop_link("B", "SW"));
        let e = net.send_frame(frame("A", Destination::Unicast(Ipv4Addr::new(10, 0, 0, 3))));
        assert!(matches!(e, Err(NetError::Unroutable(_))));
        net.send_frame(frame("A", Destination::Unicast(Ipv4Addr::new(10, 0, 0, 1)))).unwrap();
        assert!(net.drain_tap(idle).is_empty());
    }

    #[test]
    fn taps_are_identical_and_non_intrusive() {
        let mut plain = star();
        let mut tapped = star();
        let t1 = tapped.attach_tap(TapScope::Link("C1".into())).unwrap();
        let t2 = tapped.attach_tap(TapScope::Link("C1".into())).unwrap();
        let f = frame("A", Destination::Unicast(Ipv4Addr::new(10, 0, 0, 4)));
        assert_eq!(plain.send_frame(f.clone()).unwrap(), tapped.send_frame(f).unwrap());
        let a = tapped.drain_tap(t1);
        assert_eq!(a.len(), 1);
        assert_eq!(a, tapped.drain_tap(t2));
        assert!(matches!(
            tapped.attach_tap(TapScope::Link("nope".into())),
            Err(NetError::UnknownScope(_))
        ));
    }

    #[test]
    fn order_preserved_on_same_path() {
        let mut net = star();
        for tag in [b"1", b"2", b"3"] {
            let mut f = frame("A", Destination::Unicast(Ipv4Addr::new(10, 0, 0, 3)));
            f.payload = tag.to_vec();
            net.send_frame(f).unwrap();
        }
        let got: Vec<Vec<u8>> = std::iter::from_fn(|| net.next_delivery(u64::MAX))
            .map(|d| d.frame.payload)
            .collect();
        assert_eq!(got, vec![b"1".to_vec(), b"2".to_vec(), b"3".to_vec()]);
    }

    #[test]
    fn injection_hides_origin_from_receiver() {
        let mut net = star();
        net.attach_attacker("X", "SW", None).unwrap();
        net.subscribe("B", Destination::IpGroup(rgoose_group(0x1001))).unwrap();
        let mut f = frame("A", Destination::IpGroup(rgoose_group(0x1001)));
        f.kind = FrameKind::UdpMulticast;
        f.injected_by = Some("attacker".into());
        let d = net.inject_frame("X", f).unwrap();
        assert_eq!(d, vec!["B".to_string()]);
        let got = net.next_delivery(u64::MAX).unwrap();
        assert_eq!(got.frame.injected_by, None);
        assert_eq!(got.frame.src, "A");
        assert_eq!(net.drain_log()[0].injected_by.as_deref(), Some("attacker"));
        assert!(matches!(
            net.inject_frame("nowhere", frame("A", Destination::L2Group(1))),
            Err(NetError::Unroutable(_))
        ));
    }

    #[test]
    fn wire_roundtrip() {
        let v = serde_json::json!({"op": "read", "path": "IED1.XCBR1.Pos"});
        let bytes = frame_json(&v);
        assert_eq!(&bytes[..4], &((bytes.len() - 4) as u32).to_be_bytes());
        let back: serde_json::Value = unframe_json(&bytes).unwrap();
        assert_eq!(back, v);
        assert!(unframe_json::<serde_json::Value>(&bytes[..3]).is_err());
    }
}

//! Power-topology export (JSON for tooling and the HMI, DOT for humans).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{FlowSolution, PowerNetwork, SwitchKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBus {
    pub id: String,
    pub nominal_kv: f64,
    pub substation: String,
    pub voltage_level: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vm_pu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub va_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportEdge {
    pub id: String,
    /// `line`, `transformer`, `CBR` or `DIS`.
    pub kind: String,
    pub from: String,
    pub to: String,
    /// Closed for switches, in service for branches.
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportInjection {
    pub id: String,
    /// `generator` or `load`.
    pub kind: String,
    pub bus: String,
    pub p_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkExport {
    pub base_mva: f64,
    pub substations: Vec<String>,
    pub buses: Vec<ExportBus>,
    pub edges: Vec<ExportEdge>,
    pub injections: Vec<ExportInjection>,
}

impl NetworkExport {
    pub fn new(net: &PowerNetwork, solution: Option<&FlowSolution>) -> Self {
        let bus = |i: usize| net.buses[i].id.clone();
        let mut substations: Vec<String> = Vec::new();
        for b in &net.buses {
            if !substations.contains(&b.substation) {
                substations.push(b.substation.clone());
            }
        }
        let mut edges = Vec::new();
        for l in &net.lines {
            edges.push(ExportEdge {
                id: l.name.clone(),
                kind: "line".into(),
                from: bus(l.from_bus),
                to: bus(l.to_bus),
                closed: l.in_service,
            });
        }
        for t in &net.transformers {
            edges.push(ExportEdge {
                id: t.name.clone(),
                kind: "transformer".into(),
                from: bus(t.hv_bus),
                to: bus(t.lv_bus),
                closed: t.in_service,
            });
        }
        for s in &net.switches {
            edges.push(ExportEdge {
                id: s.id.clone(),
                kind: match s.kind {
                    SwitchKind::Cbr => "CBR".into(),
                    SwitchKind::Dis => "DIS".into(),
                },
                from: bus(s.bus),
                to: bus(s.element_ref),
                closed: s.closed,
            });
        }
        let mut injections = Vec::new();
        for g in &net.generators {
            injections.push(ExportInjection {
                id: g.name.clone(),
                kind: "generator".into(),
                bus: bus(g.bus),
                p_mw: g.p_mw,
            });
        }
        for l in &net.loads {
            injections.push(ExportInjection {
                id: l.name.clone(),
                kind: "load".into(),
                bus: bus(l.bus),
                p_mw: l.p_mw,
            });
        }
        NetworkExport {
            base_mva: net.base_mva,
            substations,
            buses: net
                .buses
                .iter()
                .enumerate()
                .map(|(i, b)| ExportBus {
                    id: b.id.clone(),
                    nominal_kv: b.nominal_kv,
                    substation: b.substation.clone(),
                    voltage_level: b.voltage_level.clone(),
                    vm_pu: solution.map(|s| s.buses[i].vm_pu),
                    va_deg: solution.map(|s| s.buses[i].va_deg),
                })
                .collect(),
            edges,
            injections,
        }
    }
}

/// Pretty JSON of the network (and solution, when given).
pub fn network_json(net: &PowerNetwork, solution: Option<&FlowSolution>) -> String {
    serde_json::to_string_pretty(&NetworkExport::new(net, solution)).expect("export is serializable")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering: one cluster per substation, buses as nodes,
/// branches and switches as edges labelled with kind and state.
pub fn network_to_dot(net: &PowerNetwork) -> String {
    let export = NetworkExport::new(net, None);
    let mut out = String::from("graph power {\n  node [shape=box];\n");
    for (k, sub) in export.substations.iter().enumerate() {
        let _ = writeln!(out, "  subgraph cluster_{k} {{\n    label={};", quote(sub));
        for b in export.buses.iter().filter(|b| &b.substation == sub) {
            let _ = writeln!(
                out,
                "    {} [label={}];",
                quote(&b.id),
                quote(&format!("{}\\n{} kV", b.id, b.nominal_kv))
            );
        }
        out.push_str("  }\n");
    }
    for e in &export.edges {
        let state = match (e.kind.as_str(), e.closed) {
            ("CBR" | "DIS", true) => "closed",
            ("CBR" | "DIS", false) => "open",
            (_, true) => "in service",
            (_, false) => "out of service",
        };
        let style = if e.closed { "solid" } else { "dashed" };
        let _ = writeln!(
            out,
            "  {} -- {} [label={}, style={style}];",
            quote(&e.from),
            quote(&e.to),
            quote(&format!("{} {} ({state})", e.kind, e.id))
        );
    }
    for inj in &export.injections {
        let shape = if inj.kind == "generator" { "circle" } else { "triangle" };
        let _ = writeln!(
            out,
            "  {} [shape={shape}, label={}];\n  {} -- {};",
            quote(&inj.id),
            quote(&inj.id),
            quote(&inj.id),
            quote(&inj.bus)
        );
    }
    out.push_str("}\n");
    out
}

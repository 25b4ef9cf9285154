//! Compilation of a bundle into a runnable range, the run loop, attack
//! scripts and run logs.

mod attack;
mod bundle;
mod check;
mod kernel;
mod runlog;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::gateway::{GatewayError, ScadaGateway};
use crate::ied::{instantiate_ied, IedError, VirtualIed};
use crate::merger::{merge_model, CablePolicy, MergeError, MergedModel};
use crate::net::{build_cyber_topology, CyberTopology, NetError, NodeKind};
use crate::plc::{load_program, PlcError, PlcProgram};
use crate::power::{build_power_network, network_json, network_to_dot, PowerError, PowerNetwork};
use crate::scl::{validate_bundle, Finding, IedSection, ValidationReport};
use crate::store::{MeasurementMap, PointMeta};

pub use attack::{fci_attack, AttackError, AttackScript, AttackStep};
pub use bundle::{Bundle, BundleError, STD_TYPES_FILE};
pub use check::{check_trips, TripVerdict};
pub use kernel::{run_range, KernelError, Range};
pub use runlog::{
    first_divergence, first_divergence_by, AttackEvent, CommandEvent, DeviceAction, RunHeader, RunLog,
    SolverSummary, TickRecord, RUNLOG_FORMAT,
};

pub const DEFAULT_TICK_MS: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("bundle has no SSD")]
    NoSsd,
    #[error("bundle has no SCD")]
    NoScd,
    #[error("{0}")]
    Validation(Finding),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Ied(#[from] IedError),
    #[error(transparent)]
    Plc(#[from] PlcError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("PLC program {program} runs on `{node}`, which is not a PLC node")]
    PlcNode { program: String, node: String },
    #[error("ScadaConfig present but the topology has no gateway node")]
    NoGatewayNode,
}

/// Every problem found while compiling, in discovery order.
#[derive(Debug, Clone, PartialEq)]
pub struct CompileErrors(pub Vec<CompileError>);

impl fmt::Display for CompileErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for CompileErrors {}

/// A compiled range: everything needed to start runs.
#[derive(Debug, Clone)]
pub struct RangeSpec {
    pub merged: MergedModel,
    pub power: PowerNetwork,
    pub cyber: CyberTopology,
    pub measurements: MeasurementMap,
    pub catalog: BTreeMap<String, PointMeta>,
    /// Sorted by name.
    pub ieds: Vec<VirtualIed>,
    pub plcs: Vec<PlcProgram>,
    pub gateway: Option<ScadaGateway>,
    pub n_steps: usize,
    pub tick_ms: u64,
    pub validation: ValidationReport,
}

impl RangeSpec {
    pub fn ied(&self, name: &str) -> Option<&VirtualIed> {
        self.ieds.iter().find(|i| i.name == name)
    }
}

/// IED sections visible to the range: ICD files first, then the merged SCD.
fn ied_sections(bundle: &Bundle, merged: &MergedModel) -> Vec<IedSection> {
    let mut out: Vec<IedSection> = Vec::new();
    for s in bundle.icds.iter().flat_map(|d| &d.ieds).chain(&merged.scd.ieds) {
        if !out.iter().any(|o| o.name == s.name) {
            out.push(s.clone());
        }
    }
    out
}

/// Validate, merge and instantiate a bundle.
pub fn compile_range(bundle: &Bundle) -> Result<RangeSpec, CompileErrors> {
    let mut errors = Vec::new();
    if bundle.ssds.is_empty() {
        errors.push(CompileError::NoSsd);
    }
    if bundle.scds.is_empty() {
        errors.push(CompileError::NoScd);
    }
    let validation = validate_bundle(&bundle.scl_docs(), &bundle.supplements);
    errors.extend(validation.errors().cloned().map(CompileError::Validation));
    if !errors.is_empty() {
        return Err(CompileErrors(errors));
    }

    let merged = merge_model(&bundle.ssds, &bundle.seds, &bundle.scds, CablePolicy::Namespace)
        .map_err(|e| CompileErrors(vec![e.into()]))?;
    let params = bundle.power_params();
    let std_types = bundle.std_types.clone().unwrap_or_default();
    let power = build_power_network(&merged.ssd, &params, &std_types).map_err(|e| errors.push(e.into()));
    let cyber = build_cyber_topology(&merged.scd).map_err(|e| errors.push(e.into()));
    let (Ok(power), Ok(cyber)) = (power, cyber) else {
        return Err(CompileErrors(errors));
    };

    let measurements = MeasurementMap::from_network(&power);
    let catalog: BTreeMap<String, PointMeta> = measurements.points.iter().map(|p| (p.path.clone(), p.meta())).collect();
    let mapping = bundle.cp_mapping();
    let thresholds = bundle.thresholds();
    let peers = ied_sections(bundle, &merged);
    let address = |name: &str| cyber.node(name).and_then(|n| n.address.as_ref()).map(|a| a.ip);

    let mut ieds = Vec::new();
    for node in cyber.nodes.iter().filter(|n| n.kind == NodeKind::Ied) {
        let Some(section) = peers.iter().find(|s| s.name == node.name) else {
            continue;
        };
        match instantiate_ied(section, &mapping, &thresholds, &peers, &catalog) {
            Ok(mut ied) => {
                ied.address = address(&ied.name);
                ieds.push(ied);
            }
            Err(e) => errors.push(e.into()),
        }
    }
    ieds.sort_by(|a, b| a.name.cmp(&b.name));

    let resolves = |p: &crate::scl::AttributePath| peers.iter().any(|s| s.name == p.ied() && s.resolves(p));
    let mut plcs = Vec::new();
    for doc in bundle.plc_programs() {
        if cyber.node(&doc.node).map(|n| n.kind) != Some(NodeKind::Plc) {
            errors.push(CompileError::PlcNode {
                program: doc.name.clone(),
                node: doc.node.clone(),
            });
            continue;
        }
        match load_program(&doc, resolves) {
            Ok(p) => plcs.push(p),
            Err(e) => errors.push(e.into()),
        }
    }

    let mut gateway = None;
    if let Some(config) = bundle.scada_config() {
        match cyber.nodes.iter().find(|n| n.kind == NodeKind::Gateway) {
            None => errors.push(CompileError::NoGatewayNode),
            Some(node) => match ScadaGateway::new(&node.name, config, &mapping) {
                Ok(mut g) => {
                    g.address = address(&node.name);
                    gateway = Some(g);
                }
                Err(e) => errors.push(e.into()),
            },
        }
    }

    if !errors.is_empty() {
        return Err(CompileErrors(errors));
    }
    let n_steps = params.n_steps().unwrap_or(1);
    Ok(RangeSpec {
        merged,
        power,
        cyber,
        measurements,
        catalog,
        ieds,
        plcs,
        gateway,
        n_steps,
        tick_ms: DEFAULT_TICK_MS,
        validation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyLayer {
    Power,
    Cyber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
}

/// Render one layer of a compiled range.
pub fn export_topology(spec: &RangeSpec, layer: TopologyLayer, format: ExportFormat) -> String {
    match (layer, format) {
        (TopologyLayer::Power, ExportFormat::Json) => network_json(&spec.power, None),
        (TopologyLayer::Power, ExportFormat::Dot) => network_to_dot(&spec.power),
        (TopologyLayer::Cyber, ExportFormat::Json) => spec.cyber.to_json(),
        (TopologyLayer::Cyber, ExportFormat::Dot) => spec.cyber.to_dot(),
    }
}

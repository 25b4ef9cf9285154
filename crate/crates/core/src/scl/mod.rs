//! Typed views of SCL documents (SSD/SCD/ICD/SED) and the supplementary
//! configuration XMLs that accompany them.

mod parse;
mod path;
pub mod supplement;
mod templates;
pub mod validate;
mod write;

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::xml::{Element, XmlError};

pub use parse::parse_scl;
pub use path::{AttributePath, LnSegment};
pub use supplement::{
    parse_supplement, CpMapping, MappingPair, PlcDirection, PlcProgramDoc, PlcStatementDoc,
    PlcVarType, PlcVariableDoc,
    PowerComponent, PowerParams, ScadaConfig, ScadaPointConfig, SupplementDoc, SupplementKind,
    ThresholdEntry, ThresholdUnits, Thresholds,
};
pub use validate::{validate_bundle, Finding, FindingKind, Severity, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error(transparent)]
    XmlSyntax(#[from] XmlError),
    #[error("document is not a valid {expected}: {reason}")]
    KindMismatch { expected: String, reason: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("data_sequence length mismatch: `{component}` has {found} entries, expected {expected}")]
    LengthMismatch {
        component: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SclKind {
    Ssd,
    Scd,
    Icd,
    Sed,
}

impl SclKind {
    pub fn from_extension(ext: &str) -> Option<SclKind> {
        match ext.to_ascii_lowercase().as_str() {
            "ssd" => Some(SclKind::Ssd),
            "scd" => Some(SclKind::Scd),
            "icd" | "cid" | "iid" => Some(SclKind::Icd),
            "sed" => Some(SclKind::Sed),
            _ => None,
        }
    }
}

impl fmt::Display for SclKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SclKind::Ssd => "SSD",
            SclKind::Scd => "SCD",
            SclKind::Icd => "ICD",
            SclKind::Sed => "SED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Header {
    pub id: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SclDocument {
    pub kind: SclKind,
    /// File the document was loaded from; not part of the XML.
    pub source: String,
    pub header: Header,
    pub processes: Vec<ProcessSection>,
    pub communication: Option<CommunicationSection>,
    pub ieds: Vec<IedSection>,
    pub data_type_templates: Option<Element>,
    /// Root-level elements this crate does not model, kept verbatim.
    pub extensions: Vec<Element>,
}

impl SclDocument {
    pub fn empty(kind: SclKind, id: &str) -> Self {
        SclDocument {
            kind,
            source: id.to_string(),
            header: Header {
                id: id.to_string(),
                version: "1".into(),
            },
            processes: Vec::new(),
            communication: None,
            ieds: Vec::new(),
            data_type_templates: None,
            extensions: Vec::new(),
        }
    }

    pub fn ied(&self, name: &str) -> Option<&IedSection> {
        self.ieds.iter().find(|i| i.name == name)
    }

    pub fn bays(&self) -> impl Iterator<Item = (&ProcessSection, &VoltageLevel, &Bay)> {
        self.processes.iter().flat_map(|p| {
            p.voltage_levels
                .iter()
                .flat_map(move |vl| vl.bays.iter().map(move |b| (p, vl, b)))
        })
    }

    pub fn connected_aps(&self) -> impl Iterator<Item = (&SubNetwork, &ConnectedAp)> {
        self.communication
            .iter()
            .flat_map(|c| c.subnetworks.iter())
            .flat_map(|s| s.connected_aps.iter().map(move |ap| (s, ap)))
    }
}

/// Whether a process section was written as `<Process>` or `<Substation>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessTag {
    Process,
    Substation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSection {
    pub name: String,
    pub tag: ProcessTag,
    pub voltage_levels: Vec<VoltageLevel>,
    pub extensions: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoltageLevel {
    pub name: String,
    pub nominal_kv: f64,
    /// `None` when the attribute was absent; see [`VoltageLevel::num_phases`].
    pub num_phases: Option<u8>,
    pub nom_freq: Option<f64>,
    pub bays: Vec<Bay>,
    pub extensions: Vec<Element>,
}

pub const DEFAULT_NUM_PHASES: u8 = 3;
pub const DEFAULT_NOM_FREQ_HZ: f64 = 50.0;

impl VoltageLevel {
    pub fn num_phases(&self) -> u8 {
        self.num_phases.unwrap_or(DEFAULT_NUM_PHASES)
    }

    pub fn nom_freq(&self) -> f64 {
        self.nom_freq.unwrap_or(DEFAULT_NOM_FREQ_HZ)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bay {
    pub name: String,
    pub equipment: Vec<ConductingEquipment>,
    pub transformers: Vec<PowerTransformer>,
    /// Connectivity node identifiers (their `pathName`, or `name` when absent).
    pub connectivity_nodes: Vec<String>,
    pub extensions: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EquipmentType {
    Gen,
    Ifl,
    Cbr,
    Dis,
    Cab,
    Lin,
    Other(String),
}

impl EquipmentType {
    pub fn as_str(&self) -> &str {
        match self {
            EquipmentType::Gen => "GEN",
            EquipmentType::Ifl => "IFL",
            EquipmentType::Cbr => "CBR",
            EquipmentType::Dis => "DIS",
            EquipmentType::Cab => "CAB",
            EquipmentType::Lin => "LIN",
            EquipmentType::Other(s) => s,
        }
    }

    pub fn is_switch(&self) -> bool {
        matches!(self, EquipmentType::Cbr | EquipmentType::Dis)
    }

    pub fn is_line(&self) -> bool {
        matches!(self, EquipmentType::Cab | EquipmentType::Lin)
    }
}

impl From<&str> for EquipmentType {
    fn from(s: &str) -> Self {
        match s.to_ascii_uppercase().as_str() {
            "GEN" => EquipmentType::Gen,
            "IFL" => EquipmentType::Ifl,
            "CBR" => EquipmentType::Cbr,
            "DIS" => EquipmentType::Dis,
            "CAB" => EquipmentType::Cab,
            "LIN" => EquipmentType::Lin,
            _ => EquipmentType::Other(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Terminal {
    pub connectivity_node: String,
    pub voltage_level_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConductingEquipment {
    pub name: String,
    pub ce_type: EquipmentType,
    pub terminals: Vec<Terminal>,
    pub extensions: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerWinding {
    pub name: String,
    pub terminal: Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTransformer {
    pub name: String,
    /// Always exactly two; the first is the HV side.
    pub windings: Vec<TransformerWinding>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommunicationSection {
    pub subnetworks: Vec<SubNetwork>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubNetwork {
    pub name: String,
    pub connected_aps: Vec<ConnectedAp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Address {
    pub ip: Ipv4Addr,
    pub netmask: Ipv4Addr,
    pub gateway: Option<Ipv4Addr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhysConn {
    pub port: Option<String>,
    pub cable: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectedAp {
    pub ied_name: String,
    pub ap_name: String,
    pub address: Option<Address>,
    pub phys_conns: Vec<PhysConn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IedSection {
    pub name: String,
    /// The IED `type` attribute; also classifies switches, PLCs and gateways.
    pub ied_type: Option<String>,
    pub logical_devices: Vec<LogicalDevice>,
    pub datasets: Vec<DataSet>,
    pub control_blocks: Vec<ControlBlock>,
    pub inputs: Vec<ExtRef>,
}

impl IedSection {
    pub fn logical_nodes(&self) -> impl Iterator<Item = (&LogicalDevice, &LogicalNode)> {
        self.logical_devices
            .iter()
            .flat_map(|ld| ld.logical_nodes.iter().map(move |ln| (ld, ln)))
    }

    /// The LN addressed by an LN path segment (lowest instance when unspecified).
    pub fn find_ln(&self, seg: &LnSegment) -> Option<&LogicalNode> {
        self.logical_nodes()
            .map(|(_, ln)| ln)
            .filter(|ln| ln.ln_class == seg.class && (seg.prefix.is_empty() || ln.prefix == seg.prefix))
            .filter(|ln| seg.instance.is_none_or(|i| ln.instance == i))
            .min_by_key(|ln| ln.instance)
    }

    /// Whether `path` names a data object or attribute of this IED.
    pub fn resolves(&self, path: &AttributePath) -> bool {
        if path.ied() != self.name {
            return false;
        }
        let Some(ln) = self.find_ln(&path.ln()) else {
            return false;
        };
        let Some(dobj) = ln.data_objects.iter().find(|d| d.name == path.do_name()) else {
            return false;
        };
        let da = path.da_path();
        if da.is_empty() {
            return true;
        }
        dobj.attributes.iter().any(|leaf| {
            let leaf: Vec<&str> = leaf.split('.').collect();
            leaf.len() >= da.len() && leaf[..da.len()] == da[..]
        })
    }

    pub fn control_block(&self, name: &str) -> Option<&ControlBlock> {
        self.control_blocks.iter().find(|c| c.name == name)
    }

    pub fn dataset(&self, name: &str) -> Option<&DataSet> {
        self.datasets.iter().find(|d| d.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogicalDevice {
    pub inst: String,
    pub logical_nodes: Vec<LogicalNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LnClass {
    Mmxu,
    Xcbr,
    Ptoc,
    Ptov,
    Ptuv,
    Ptrc,
    Cilo,
    Pdif,
    Pdis,
    Other(String),
}

impl LnClass {
    pub fn as_str(&self) -> &str {
        match self {
            LnClass::Mmxu => "MMXU",
            LnClass::Xcbr => "XCBR",
            LnClass::Ptoc => "PTOC",
            LnClass::Ptov => "PTOV",
            LnClass::Ptuv => "PTUV",
            LnClass::Ptrc => "PTRC",
            LnClass::Cilo => "CILO",
            LnClass::Pdif => "PDIF",
            LnClass::Pdis => "PDIS",
            LnClass::Other(s) => s,
        }
    }

    pub fn is_protection(&self) -> bool {
        matches!(
            self,
            LnClass::Ptoc
                | LnClass::Ptov
                | LnClass::Ptuv
                | LnClass::Ptrc
                | LnClass::Cilo
                | LnClass::Pdif
                | LnClass::Pdis
        )
    }
}

impl From<&str> for LnClass {
    fn from(s: &str) -> Self {
        match s {
            "MMXU" => LnClass::Mmxu,
            "XCBR" => LnClass::Xcbr,
            "PTOC" => LnClass::Ptoc,
            "PTOV" => LnClass::Ptov,
            "PTUV" => LnClass::Ptuv,
            "PTRC" => LnClass::Ptrc,
            "CILO" => LnClass::Cilo,
            "PDIF" => LnClass::Pdif,
            "PDIS" => LnClass::Pdis,
            other => LnClass::Other(other.to_string()),
        }
    }
}

impl fmt::Display for LnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataObject {
    pub name: String,
    /// Leaf attribute sub-paths below the DO, e.g. `phsA.cVal.mag.f`.
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogicalNode {
    pub ln_class: LnClass,
    pub prefix: String,
    pub instance: u32,
    pub ln_type: String,
    /// True for the `LN0` element of a logical device.
    pub is_ln0: bool,
    pub data_objects: Vec<DataObject>,
    /// `DOI` and other children kept verbatim.
    pub extensions: Vec<Element>,
}

impl LogicalNode {
    /// The LN path segment, e.g. `MMXU1`.
    pub fn reference(&self) -> String {
        if self.is_ln0 {
            format!("{}{}", self.prefix, self.ln_class)
        } else {
            format!("{}{}{}", self.prefix, self.ln_class, self.instance)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub name: String,
    pub ld_inst: String,
    pub members: Vec<AttributePath>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ControlKind {
    Goose,
    Rgoose,
    Report,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlBlock {
    pub kind: ControlKind,
    pub name: String,
    pub ld_inst: String,
    pub dataset_ref: String,
    pub app_id: u32,
}

/// A subscription input (`Inputs/ExtRef`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtRef {
    pub ld_inst: String,
    pub ied_name: String,
    pub src_ld_inst: Option<String>,
    pub ln_class: String,
    pub ln_inst: String,
    pub prefix: String,
    pub do_name: String,
    pub da_name: Option<String>,
    pub src_cb_name: Option<String>,
}

impl ExtRef {
    pub fn attribute_path(&self) -> Option<AttributePath> {
        let mut s = format!(
            "{}.{}{}{}.{}",
            self.ied_name, self.prefix, self.ln_class, self.ln_inst, self.do_name
        );
        if let Some(da) = &self.da_name {
            s.push('.');
            s.push_str(da);
        }
        AttributePath::new(s).ok()
    }
}

/// Parse an integer written either as decimal or with a `0x` prefix.
pub(crate) fn parse_int(s: &str) -> Option<u32> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

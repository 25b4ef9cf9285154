//! The supplementary configuration XMLs: power parameters, cyber-physical
//! mapping, protection thresholds, SCADA points and PLC programs.
//!
//! Each document has a single root element named after its kind whose
//! children are homogeneous records with snake_case attributes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::xml::{self, Element};

use super::{AttributePath, LnClass, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SupplementKind {
    PowerParams,
    CpMapping,
    Thresholds,
    ScadaConfig,
    PlcProgram,
}

impl SupplementKind {
    pub const ALL: [SupplementKind; 5] = [
        SupplementKind::PowerParams,
        SupplementKind::CpMapping,
        SupplementKind::Thresholds,
        SupplementKind::ScadaConfig,
        SupplementKind::PlcProgram,
    ];

    pub fn root_name(self) -> &'static str {
        match self {
            SupplementKind::PowerParams => "PowerParams",
            SupplementKind::CpMapping => "CpMapping",
            SupplementKind::Thresholds => "Thresholds",
            SupplementKind::ScadaConfig => "ScadaConfig",
            SupplementKind::PlcProgram => "PlcProgram",
        }
    }

    pub fn from_root_name(name: &str) -> Option<SupplementKind> {
        Self::ALL.into_iter().find(|k| k.root_name() == name)
    }
}

impl fmt::Display for SupplementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.root_name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SupplementDoc {
    PowerParams(PowerParams),
    CpMapping(CpMapping),
    Thresholds(Thresholds),
    ScadaConfig(ScadaConfig),
    PlcProgram(PlcProgramDoc),
}

impl SupplementDoc {
    pub fn kind(&self) -> SupplementKind {
        match self {
            SupplementDoc::PowerParams(_) => SupplementKind::PowerParams,
            SupplementDoc::CpMapping(_) => SupplementKind::CpMapping,
            SupplementDoc::Thresholds(_) => SupplementKind::Thresholds,
            SupplementDoc::ScadaConfig(_) => SupplementKind::ScadaConfig,
            SupplementDoc::PlcProgram(_) => SupplementKind::PlcProgram,
        }
    }

    pub fn to_element(&self) -> Element {
        match self {
            SupplementDoc::PowerParams(d) => d.to_element(),
            SupplementDoc::CpMapping(d) => d.to_element(),
            SupplementDoc::Thresholds(d) => d.to_element(),
            SupplementDoc::ScadaConfig(d) => d.to_element(),
            SupplementDoc::PlcProgram(d) => d.to_element(),
        }
    }

    pub fn to_xml(&self) -> String {
        self.to_element().to_xml()
    }
}

// ---------------------------------------------------------------------------
// attribute helpers

fn violation(msg: impl Into<String>) -> ParseError {
    ParseError::SchemaViolation(msg.into())
}

fn req<'a>(el: &'a Element, key: &str) -> Result<&'a str, ParseError> {
    match el.attr(key) {
        Some(v) if !v.trim().is_empty() => Ok(v.trim()),
        _ => Err(violation(format!(
            "<{}> is missing attribute `{key}`",
            el.local_name()
        ))),
    }
}

fn opt_num<T: FromStr>(el: &Element, key: &str) -> Result<Option<T>, ParseError> {
    match el.attr(key).map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| violation(format!("attribute `{key}`=`{s}` is not a number"))),
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn opt_bool(el: &Element, key: &str) -> Result<Option<bool>, ParseError> {
    match el.attr(key) {
        None => Ok(None),
        Some(s) => parse_bool(s)
            .map(Some)
            .ok_or_else(|| violation(format!("attribute `{key}`=`{s}` is not a boolean"))),
    }
}

fn attribute_path(s: &str) -> Result<AttributePath, ParseError> {
    AttributePath::new(s.trim()).map_err(violation)
}

fn set_opt(el: &mut Element, key: &str, v: &Option<impl ToString>) {
    if let Some(v) = v {
        el.set_attr(key, v.to_string());
    }
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// PowerParams

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerComponent {
    pub component_ref: String,
    pub p_mw: Option<f64>,
    pub q_mvar: Option<f64>,
    pub vm_pu: Option<f64>,
    pub closed: Option<bool>,
    pub length_km: Option<f64>,
    pub std_type: Option<String>,
    /// Per-step multiplier of rated p/q for loads and generators, or the
    /// 0/1 closed state for switches.
    pub data_sequence: Option<Vec<f64>>,
    /// Marks a generator as the preferred slack of its island.
    pub slack: Option<bool>,
    pub sn_mva: Option<f64>,
    pub vk_percent: Option<f64>,
    pub vkr_percent: Option<f64>,
    pub r_ohm_per_km: Option<f64>,
    pub x_ohm_per_km: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerParams {
    pub base_mva: Option<f64>,
    pub components: Vec<PowerComponent>,
}

impl PowerParams {
    pub fn component(&self, name: &str) -> Option<&PowerComponent> {
        self.components.iter().find(|c| c.component_ref == name)
    }

    /// Length shared by every `data_sequence`, if any component has one.
    pub fn n_steps(&self) -> Option<usize> {
        self.components
            .iter()
            .find_map(|c| c.data_sequence.as_ref().map(Vec::len))
    }

    fn parse(root: &Element) -> Result<Self, ParseError> {
        let mut out = PowerParams {
            base_mva: opt_num(root, "base_mva")?,
            components: Vec::new(),
        };
        if out.base_mva.is_some_and(|b: f64| !(b > 0.0)) {
            return Err(violation("base_mva must be positive"));
        }
        for el in root.elements_named("Component") {
            let data_sequence = match el.attr("data_sequence") {
                None => None,
                Some(s) => Some(
                    s.split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|t| !t.is_empty())
                        .map(|t| {
                            t.parse::<f64>().map_err(|_| {
                                violation(format!("data_sequence entry `{t}` is not a number"))
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                ),
            };
            out.components.push(PowerComponent {
                component_ref: req(el, "component_ref")?.to_string(),
                p_mw: opt_num(el, "p_mw")?,
                q_mvar: opt_num(el, "q_mvar")?,
                vm_pu: opt_num(el, "vm_pu")?,
                closed: opt_bool(el, "closed")?,
                length_km: opt_num(el, "length_km")?,
                std_type: el.attr("std_type").map(str::to_string),
                data_sequence,
                slack: opt_bool(el, "slack")?,
                sn_mva: opt_num(el, "sn_mva")?,
                vk_percent: opt_num(el, "vk_percent")?,
                vkr_percent: opt_num(el, "vkr_percent")?,
                r_ohm_per_km: opt_num(el, "r_ohm_per_km")?,
                x_ohm_per_km: opt_num(el, "x_ohm_per_km")?,
            });
        }
        let mut expected: Option<(usize, &str)> = None;
        for c in &out.components {
            let Some(seq) = &c.data_sequence else { continue };
            match expected {
                None => expected = Some((seq.len(), &c.component_ref)),
                Some((n, _)) if n != seq.len() => {
                    return Err(ParseError::LengthMismatch {
                        component: c.component_ref.clone(),
                        expected: n,
                        found: seq.len(),
                    })
                }
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn to_element(&self) -> Element {
        let mut root = Element::new("PowerParams");
        set_opt(&mut root, "base_mva", &self.base_mva);
        for c in &self.components {
            let mut el = Element::new("Component").with_attr("component_ref", &c.component_ref);
            set_opt(&mut el, "p_mw", &c.p_mw);
            set_opt(&mut el, "q_mvar", &c.q_mvar);
            set_opt(&mut el, "vm_pu", &c.vm_pu);
            set_opt(&mut el, "closed", &c.closed);
            set_opt(&mut el, "length_km", &c.length_km);
            set_opt(&mut el, "std_type", &c.std_type);
            if let Some(seq) = &c.data_sequence {
                el.set_attr("data_sequence", join_f64(seq));
            }
            set_opt(&mut el, "slack", &c.slack);
            set_opt(&mut el, "sn_mva", &c.sn_mva);
            set_opt(&mut el, "vk_percent", &c.vk_percent);
            set_opt(&mut el, "vkr_percent", &c.vkr_percent);
            set_opt(&mut el, "r_ohm_per_km", &c.r_ohm_per_km);
            set_opt(&mut el, "x_ohm_per_km", &c.x_ohm_per_km);
            root.push(el);
        }
        root
    }
}

// ---------------------------------------------------------------------------
// CpMapping

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingPair {
    /// Store point, e.g. `Load0.Voltage.phsA`.
    pub physical_path: String,
    pub attribute_path: AttributePath,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CpMapping {
    pub pairs: Vec<MappingPair>,
}

impl CpMapping {
    fn parse(root: &Element) -> Result<Self, ParseError> {
        let mut pairs = Vec::new();
        for el in root.elements_named("Mapping") {
            let physical_path = req(el, "physical_path")?.to_string();
            if physical_path.split('.').count() < 2 {
                return Err(violation(format!(
                    "physical_path `{physical_path}` needs a component and a quantity"
                )));
            }
            pairs.push(MappingPair {
                physical_path,
                attribute_path: attribute_path(req(el, "attribute_path")?)?,
            });
        }
        Ok(CpMapping { pairs })
    }

    pub fn to_element(&self) -> Element {
        let mut root = Element::new("CpMapping");
        for p in &self.pairs {
            root.push(
                Element::new("Mapping")
                    .with_attr("physical_path", &p.physical_path)
                    .with_attr("attribute_path", &p.attribute_path),
            );
        }
        root
    }

    /// Pairs whose attribute path belongs to `ied`.
    pub fn for_ied<'a>(&'a self, ied: &'a str) -> impl Iterator<Item = &'a MappingPair> + 'a {
        self.pairs.iter().filter(move |p| p.attribute_path.ied() == ied)
    }
}

// ---------------------------------------------------------------------------
// Thresholds

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdUnits {
    #[serde(rename = "pu")]
    Pu,
    A,
    V,
    #[serde(rename = "ohm")]
    Ohm,
}

impl ThresholdUnits {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdUnits::Pu => "pu",
            ThresholdUnits::A => "A",
            ThresholdUnits::V => "V",
            ThresholdUnits::Ohm => "ohm",
        }
    }
}

impl FromStr for ThresholdUnits {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        match s.trim() {
            "pu" => Ok(ThresholdUnits::Pu),
            "A" => Ok(ThresholdUnits::A),
            "V" => Ok(ThresholdUnits::V),
            "ohm" | "Ohm" => Ok(ThresholdUnits::Ohm),
            other => Err(violation(format!("unknown threshold units `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub ied: String,
    pub ln_class: LnClass,
    pub instance: u32,
    pub alarm_threshold: Option<f64>,
    pub trip_threshold: Option<f64>,
    pub units: ThresholdUnits,
    /// Remote quantity: the partner current for PDIF, the partner breaker
    /// position for CILO, an intertrip signal for PTRC.
    pub partner: Option<AttributePath>,
    pub zone_impedance_ohm: Option<f64>,
    /// Minimum current for PDIS to operate, in amperes.
    pub pickup_a: Option<f64>,
    /// Overrides the attribute paths the function watches.
    pub monitored: Vec<AttributePath>,
    /// Overrides the breaker point the function operates.
    pub target_cb: Option<String>,
}

impl ThresholdEntry {
    pub fn new(ied: &str, ln_class: LnClass, instance: u32, units: ThresholdUnits) -> Self {
        ThresholdEntry {
            ied: ied.to_string(),
            ln_class,
            instance,
            alarm_threshold: None,
            trip_threshold: None,
            units,
            partner: None,
            zone_impedance_ohm: None,
            pickup_a: None,
            monitored: Vec::new(),
            target_cb: None,
        }
    }

    pub fn with_levels(mut self, alarm: f64, trip: f64) -> Self {
        self.alarm_threshold = Some(alarm);
        self.trip_threshold = Some(trip);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Thresholds {
    pub entries: Vec<ThresholdEntry>,
}

impl Thresholds {
    pub fn find(&self, ied: &str, class: &LnClass, instance: u32) -> Option<&ThresholdEntry> {
        self.entries
            .iter()
            .find(|e| e.ied == ied && &e.ln_class == class && e.instance == instance)
    }

    fn parse(root: &Element) -> Result<Self, ParseError> {
        let mut entries = Vec::new();
        for el in root.elements_named("Threshold") {
            let ln_class = LnClass::from(req(el, "ln_class")?);
            let instance = opt_num::<u32>(el, "instance")?.unwrap_or(1);
            let e = ThresholdEntry {
                ied: req(el, "ied")?.to_string(),
                ln_class,
                instance,
                alarm_threshold: opt_num(el, "alarm_threshold")?,
                trip_threshold: opt_num(el, "trip_threshold")?,
                units: el.attr("units").unwrap_or("pu").parse()?,
                partner: el.attr("partner").map(attribute_path).transpose()?,
                zone_impedance_ohm: opt_num(el, "zone_impedance_ohm")?,
                pickup_a: opt_num(el, "pickup_a")?,
                monitored: el
                    .attr("monitored")
                    .unwrap_or("")
                    .split_whitespace()
                    .map(attribute_path)
                    .collect::<Result<_, _>>()?,
                target_cb: el.attr("target_cb").map(str::to_string),
            };
            let needs_levels = !matches!(e.ln_class, LnClass::Cilo | LnClass::Ptrc);
            let label = format!("{}.{}{}", e.ied, e.ln_class, e.instance);
            match (e.alarm_threshold, e.trip_threshold) {
                (Some(a), Some(t)) => {
                    // Under-functions (undervoltage, impedance reach) alarm above the trip level.
                    let under = matches!(e.ln_class, LnClass::Ptuv | LnClass::Pdis);
                    let ordered = if under { a >= t } else { a <= t };
                    if !ordered {
                        return Err(violation(format!(
                            "threshold {label}: alarm {a} and trip {t} are in the wrong order"
                        )));
                    }
                }
                (None, Some(_)) | (None, None) if !needs_levels => {}
                _ => {
                    return Err(violation(format!(
                        "threshold {label} needs both alarm_threshold and trip_threshold"
                    )))
                }
            }
            entries.push(e);
        }
        Ok(Thresholds { entries })
    }

    pub fn to_element(&self) -> Element {
        let mut root = Element::new("Thresholds");
        for e in &self.entries {
            let mut el = Element::new("Threshold")
                .with_attr("ied", &e.ied)
                .with_attr("ln_class", e.ln_class.as_str())
                .with_attr("instance", e.instance);
            set_opt(&mut el, "alarm_threshold", &e.alarm_threshold);
            set_opt(&mut el, "trip_threshold", &e.trip_threshold);
            el.set_attr("units", e.units.as_str());
            set_opt(&mut el, "partner", &e.partner);
            set_opt(&mut el, "zone_impedance_ohm", &e.zone_impedance_ohm);
            set_opt(&mut el, "pickup_a", &e.pickup_a);
            if !e.monitored.is_empty() {
                let joined: Vec<&str> = e.monitored.iter().map(AttributePath::as_str).collect();
                el.set_attr("monitored", joined.join(" "));
            }
            set_opt(&mut el, "target_cb", &e.target_cb);
            root.push(el);
        }
        root
    }
}

// ---------------------------------------------------------------------------
// ScadaConfig

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScadaPointConfig {
    pub point_name: String,
    pub attribute_path: AttributePath,
    pub writable: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScadaConfig {
    pub points: Vec<ScadaPointConfig>,
}

impl ScadaConfig {
    fn parse(root: &Element) -> Result<Self, ParseError> {
        let mut points: Vec<ScadaPointConfig> = Vec::new();
        for el in root.elements_named("Point") {
            let point_name = req(el, "point_name")?.to_string();
            if points.iter().any(|p| p.point_name == point_name) {
                return Err(violation(format!("duplicate SCADA point `{point_name}`")));
            }
            points.push(ScadaPointConfig {
                point_name,
                attribute_path: attribute_path(req(el, "attribute_path")?)?,
                writable: opt_bool(el, "writable")?.unwrap_or(false),
            });
        }
        Ok(ScadaConfig { points })
    }

    pub fn to_element(&self) -> Element {
        let mut root = Element::new("ScadaConfig");
        for p in &self.points {
            root.push(
                Element::new("Point")
                    .with_attr("point_name", &p.point_name)
                    .with_attr("attribute_path", &p.attribute_path)
                    .with_attr("writable", p.writable),
            );
        }
        root
    }
}

// ---------------------------------------------------------------------------
// PlcProgram

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlcDirection {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlcVarType {
    Bool,
    Real,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlcVariableDoc {
    pub name: String,
    pub direction: PlcDirection,
    pub var_type: PlcVarType,
    pub binding: AttributePath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlcStatementDoc {
    pub target: String,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlcProgramDoc {
    pub name: String,
    /// The PLC node in the cyber topology that runs this program.
    pub node: String,
    pub scan_interval_ticks: u32,
    pub variables: Vec<PlcVariableDoc>,
    pub statements: Vec<PlcStatementDoc>,
}

impl PlcProgramDoc {
    fn parse(root: &Element) -> Result<Self, ParseError> {
        let scan_interval_ticks = opt_num::<u32>(root, "scan_interval_ticks")?.unwrap_or(1);
        if scan_interval_ticks == 0 {
            return Err(violation("scan_interval_ticks must be at least 1"));
        }
        let mut variables = Vec::new();
        let mut statements = Vec::new();
        for el in root.elements() {
            match el.local_name() {
                "Variable" => variables.push(PlcVariableDoc {
                    name: req(el, "name")?.to_string(),
                    direction: match req(el, "direction")? {
                        "in" => PlcDirection::In,
                        "out" => PlcDirection::Out,
                        d => return Err(violation(format!("unknown direction `{d}`"))),
                    },
                    var_type: match el.attr("type").unwrap_or("bool") {
                        "bool" | "BOOL" => PlcVarType::Bool,
                        "real" | "REAL" => PlcVarType::Real,
                        t => return Err(violation(format!("unknown variable type `{t}`"))),
                    },
                    binding: attribute_path(req(el, "binding")?)?,
                }),
                "Statement" => statements.push(PlcStatementDoc {
                    target: req(el, "target")?.to_string(),
                    expr: el.text(),
                }),
                _ => {}
            }
        }
        Ok(PlcProgramDoc {
            name: req(root, "name")?.to_string(),
            node: req(root, "node")?.to_string(),
            scan_interval_ticks,
            variables,
            statements,
        })
    }

    pub fn to_element(&self) -> Element {
        let mut root = Element::new("PlcProgram")
            .with_attr("name", &self.name)
            .with_attr("node", &self.node)
            .with_attr("scan_interval_ticks", self.scan_interval_ticks);
        for v in &self.variables {
            root.push(
                Element::new("Variable")
                    .with_attr("name", &v.name)
                    .with_attr(
                        "direction",
                        match v.direction {
                            PlcDirection::In => "in",
                            PlcDirection::Out => "out",
                        },
                    )
                    .with_attr(
                        "type",
                        match v.var_type {
                            PlcVarType::Bool => "bool",
                            PlcVarType::Real => "real",
                        },
                    )
                    .with_attr("binding", &v.binding),
            );
        }
        for s in &self.statements {
            root.push(
                Element::new("Statement")
                    .with_attr("target", &s.target)
                    .with_text(s.expr.clone()),
            );
        }
        root
    }
}

/// Parse a supplementary document of the given kind.
pub fn parse_supplement(text: &str, kind: SupplementKind) -> Result<SupplementDoc, ParseError> {
    let root = xml::parse(text)?;
    if root.local_name() != kind.root_name() {
        return Err(ParseError::KindMismatch {
            expected: kind.to_string(),
            reason: format!("root element is <{}>", root.name),
        });
    }
    Ok(match kind {
        SupplementKind::PowerParams => SupplementDoc::PowerParams(PowerParams::parse(&root)?),
        SupplementKind::CpMapping => SupplementDoc::CpMapping(CpMapping::parse(&root)?),
        SupplementKind::Thresholds => SupplementDoc::Thresholds(Thresholds::parse(&root)?),
        SupplementKind::ScadaConfig => SupplementDoc::ScadaConfig(ScadaConfig::parse(&root)?),
        SupplementKind::PlcProgram => SupplementDoc::PlcProgram(PlcProgramDoc::parse(&root)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_with_sequence() {
        let doc = parse_supplement(
            r#"<PowerParams><Component component_ref="Load0" p_mw="1.0" q_mvar="0.2" data_sequence="1.0 1.1"/></PowerParams>"#,
            SupplementKind::PowerParams,
        )
        .unwrap();
        let SupplementDoc::PowerParams(pp) = doc else { panic!() };
        assert_eq!(pp.n_steps(), Some(2));
        let c = pp.component("Load0").unwrap();
        assert_eq!(c.p_mw, Some(1.0));
        assert_eq!(c.q_mvar, Some(0.2));
    }

    #[test]
    fn unequal_sequences_rejected() {
        let err = parse_supplement(
            r#"<PowerParams>
                 <Component component_ref="A" data_sequence="1 1"/>
                 <Component component_ref="B" data_sequence="1 1 1"/>
               </PowerParams>"#,
            SupplementKind::PowerParams,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::LengthMismatch { found: 3, expected: 2, .. }));
    }

    #[test]
    fn mapping_pair() {
        let doc = parse_supplement(
            r#"<CpMapping><Mapping physical_path="Load0.Voltage.phsA" attribute_path="IED2.MMXU.PhV.phsA.cVal"/></CpMapping>"#,
            SupplementKind::CpMapping,
        )
        .unwrap();
        let SupplementDoc::CpMapping(m) = doc else { panic!() };
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].attribute_path.ied(), "IED2");
    }

    #[test]
    fn ptov_threshold_round_trips() {
        let text = r#"<Thresholds><Threshold ied="IED2" ln_class="PTOV" instance="1" alarm_threshold="1.05" trip_threshold="1.10" units="pu"/></Thresholds>"#;
        let doc = parse_supplement(text, SupplementKind::Thresholds).unwrap();
        let SupplementDoc::Thresholds(t) = &doc else { panic!() };
        assert_eq!(t.entries[0].units, ThresholdUnits::Pu);
        assert_eq!(t.entries[0].trip_threshold, Some(1.10));
        let again = parse_supplement(&doc.to_xml(), SupplementKind::Thresholds).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn misordered_thresholds_rejected() {
        let text = r#"<Thresholds><Threshold ied="I" ln_class="PTUV" alarm_threshold="0.85" trip_threshold="0.9"/></Thresholds>"#;
        assert!(parse_supplement(text, SupplementKind::Thresholds).is_err());
        let text = r#"<Thresholds><Threshold ied="I" ln_class="PTOC" alarm_threshold="3" trip_threshold="2" units="A"/></Thresholds>"#;
        assert!(parse_supplement(text, SupplementKind::Thresholds).is_err());
    }

    #[test]
    fn wrong_root_is_kind_mismatch() {
        let err = parse_supplement("<CpMapping/>", SupplementKind::Thresholds).unwrap_err();
        assert!(matches!(err, ParseError::KindMismatch { .. }));
    }

    #[test]
    fn plc_program_round_trips() {
        let text = r#"<PlcProgram name="interlock" node="PLC1" scan_interval_ticks="2">
            <Variable name="P" direction="in" type="bool" binding="S1_IED22.XCBR1.Pos.stVal"/>
            <Variable name="S2" direction="out" type="bool" binding="S2_IED0.XCBR1.Pos.stVal"/>
            <Statement target="S2">P</Statement>
          </PlcProgram>"#;
        let doc = parse_supplement(text, SupplementKind::PlcProgram).unwrap();
        let again = parse_supplement(&doc.to_xml(), SupplementKind::PlcProgram).unwrap();
        assert_eq!(doc, again);
    }
}

//! Cross-document reference checks over a bundle of parsed files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::merger::{cable_namespace_plan, namespaced_cable};

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum FindingKind {
    UnresolvedConnectivityNode,
    UnresolvedAttributePath,
    UnresolvedPhysicalPath,
    MissingPowerParams,
    UnknownComponentRef,
    DuplicateComponentName,
    MissingThreshold,
    DanglingCable,
    CableOverused,
    DefaultApplied,
    TemplateConflict,
}

impl FindingKind {
    pub fn severity(self) -> Severity {
        match self {
            FindingKind::DefaultApplied | FindingKind::TemplateConflict => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    /// The offending identifier (cable id, path, component name, ...).
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {:?}({}): {}", self.kind, self.subject, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warning)
    }

    pub fn has(&self, kind: FindingKind, subject: &str) -> bool {
        self.findings.iter().any(|f| f.kind == kind && f.subject == subject)
    }

    fn push(&mut self, kind: FindingKind, subject: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: kind.severity(),
            kind,
            subject: subject.into(),
            message: message.into(),
        });
    }

    fn finish(mut self) -> Self {
        self.findings.sort();
        self.findings.dedup();
        self.ok = !self.findings.iter().any(|f| f.severity == Severity::Error);
        self
    }
}

/// Physical quantities a store point may carry.
pub const QUANTITIES: [&str; 5] = ["Voltage", "Current", "P", "Q", "Pos"];

/// Check every cross-reference in a bundle. Problems are reported, never raised.
pub fn validate_bundle(scl_docs: &[SclDocument], supplements: &[SupplementDoc]) -> ValidationReport {
    let mut r = ValidationReport::default();

    // Electrical side. SCDs often repeat the substation section, so they only
    // count when no SSD or SED is present.
    let electrical: Vec<&SclDocument> = {
        let plant: Vec<&SclDocument> = scl_docs
            .iter()
            .filter(|d| matches!(d.kind, SclKind::Ssd | SclKind::Sed))
            .collect();
        if plant.is_empty() {
            scl_docs.iter().collect()
        } else {
            plant
        }
    };
    let mut nodes = BTreeSet::new();
    let mut components: BTreeMap<&str, (EquipmentType, usize)> = BTreeMap::new();
    let mut transformers: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &electrical {
        for (_, _, bay) in d.bays() {
            nodes.extend(bay.connectivity_nodes.iter().map(String::as_str));
            for ce in &bay.equipment {
                components.entry(&ce.name).or_insert((ce.ce_type.clone(), 0)).1 += 1;
            }
            for tr in &bay.transformers {
                *transformers.entry(&tr.name).or_default() += 1;
            }
        }
        for p in &d.processes {
            for vl in &p.voltage_levels {
                let label = format!("{}/{}", p.name, vl.name);
                if vl.num_phases.is_none() {
                    r.push(
                        FindingKind::DefaultApplied,
                        &label,
                        format!("numPhases absent; assuming {DEFAULT_NUM_PHASES}"),
                    );
                }
                if vl.nom_freq.is_none() {
                    r.push(
                        FindingKind::DefaultApplied,
                        &label,
                        format!("nomFreq absent; assuming {DEFAULT_NOM_FREQ_HZ} Hz"),
                    );
                }
            }
        }
    }
    for d in &electrical {
        for (_, _, bay) in d.bays() {
            let terminals = bay
                .equipment
                .iter()
                .flat_map(|ce| ce.terminals.iter().map(move |t| (ce.name.as_str(), t)))
                .chain(
                    bay.transformers
                        .iter()
                        .flat_map(|tr| tr.windings.iter().map(move |w| (tr.name.as_str(), &w.terminal))),
                );
            for (owner, t) in terminals {
                if !nodes.contains(t.connectivity_node.as_str()) {
                    r.push(
                        FindingKind::UnresolvedConnectivityNode,
                        &t.connectivity_node,
                        format!("terminal of `{owner}` names an undeclared connectivity node"),
                    );
                }
            }
        }
    }
    for (name, (_, n)) in &components {
        if *n + transformers.get(name).copied().unwrap_or(0) > 1 {
            r.push(
                FindingKind::DuplicateComponentName,
                *name,
                format!("equipment name declared {n} times; names must be unique across the bundle"),
            );
        }
    }

    let power_params: Vec<&PowerParams> = supplements
        .iter()
        .filter_map(|s| match s {
            SupplementDoc::PowerParams(p) => Some(p),
            _ => None,
        })
        .collect();
    let has_process = electrical.iter().any(|d| !d.processes.is_empty());
    if has_process {
        let has_params = |name: &str| power_params.iter().any(|p| p.component(name).is_some());
        for (name, (ty, _)) in &components {
            let needs = matches!(
                ty,
                EquipmentType::Gen
                    | EquipmentType::Ifl
                    | EquipmentType::Cbr
                    | EquipmentType::Dis
                    | EquipmentType::Cab
                    | EquipmentType::Lin
            );
            if needs && !has_params(name) {
                r.push(
                    FindingKind::MissingPowerParams,
                    *name,
                    format!("{} has no PowerParams entry", ty.as_str()),
                );
            }
        }
        for name in transformers.keys() {
            if !has_params(name) {
                r.push(
                    FindingKind::MissingPowerParams,
                    *name,
                    "transformer has no PowerParams entry",
                );
            }
        }
        for pp in &power_params {
            for c in &pp.components {
                let known = components.contains_key(c.component_ref.as_str())
                    || transformers.contains_key(c.component_ref.as_str());
                if !known {
                    r.push(
                        FindingKind::UnknownComponentRef,
                        &c.component_ref,
                        "PowerParams entry names no equipment",
                    );
                }
            }
        }
    }

    let check_physical = |r: &mut ValidationReport, path: &str, context: &str| {
        let mut parts = path.split('.');
        let comp = parts.next().unwrap_or("");
        let qty = parts.next().unwrap_or("");
        let kind = components.get(comp).map(|(t, _)| t);
        let ok = match kind {
            None => transformers.contains_key(comp) && qty != "Pos",
            Some(t) => QUANTITIES.contains(&qty) && (qty != "Pos" || t.is_switch()),
        };
        if !ok {
            r.push(
                FindingKind::UnresolvedPhysicalPath,
                path,
                format!("{context} names no store point"),
            );
        }
    };

    // Cyber side.
    let mut ieds: BTreeMap<&str, Vec<&IedSection>> = BTreeMap::new();
    for d in scl_docs {
        for ied in &d.ieds {
            ieds.entry(&ied.name).or_default().push(ied);
        }
    }
    let resolves = |p: &AttributePath| {
        ieds.get(p.ied())
            .is_some_and(|v| v.iter().any(|ied| ied.resolves(p)))
    };
    let check_path = |r: &mut ValidationReport, p: &AttributePath, context: &str| {
        if !resolves(p) {
            r.push(
                FindingKind::UnresolvedAttributePath,
                p.as_str(),
                format!("{context} does not resolve against any IED"),
            );
        }
    };
    for list in ieds.values() {
        for ied in list {
            for ds in &ied.datasets {
                for m in &ds.members {
                    check_path(&mut r, m, &format!("member of dataset {}.{}", ied.name, ds.name));
                }
            }
        }
    }

    let thresholds: Vec<&Thresholds> = supplements
        .iter()
        .filter_map(|s| match s {
            SupplementDoc::Thresholds(t) => Some(t),
            _ => None,
        })
        .collect();
    for s in supplements {
        match s {
            SupplementDoc::CpMapping(m) => {
                for pair in &m.pairs {
                    check_path(&mut r, &pair.attribute_path, "CpMapping entry");
                    if has_process {
                        check_physical(&mut r, &pair.physical_path, "CpMapping entry");
                    }
                }
            }
            SupplementDoc::ScadaConfig(c) => {
                for p in &c.points {
                    check_path(&mut r, &p.attribute_path, &format!("SCADA point `{}`", p.point_name));
                }
            }
            SupplementDoc::PlcProgram(prog) => {
                for v in &prog.variables {
                    check_path(&mut r, &v.binding, &format!("PLC variable `{}`", v.name));
                }
            }
            SupplementDoc::Thresholds(t) => {
                for e in &t.entries {
                    let label = format!("{}.{}{}", e.ied, e.ln_class, e.instance);
                    if let Some(p) = &e.partner {
                        check_path(&mut r, p, &format!("partner of {label}"));
                    }
                    for m in &e.monitored {
                        check_path(&mut r, m, &format!("monitored value of {label}"));
                    }
                    if let (Some(cb), true) = (&e.target_cb, has_process) {
                        check_physical(&mut r, cb, &format!("target_cb of {label}"));
                    }
                    let present = ieds.get(e.ied.as_str()).is_some_and(|v| {
                        v.iter().any(|ied| {
                            ied.logical_nodes()
                                .any(|(_, ln)| ln.ln_class == e.ln_class && ln.instance == e.instance)
                        })
                    });
                    if !present {
                        r.push(
                            FindingKind::UnresolvedAttributePath,
                            &label,
                            "threshold entry names no logical node",
                        );
                    }
                }
            }
            SupplementDoc::PowerParams(_) => {}
        }
    }
    for (name, list) in &ieds {
        let Some(ied) = list.first() else { continue };
        for (_, ln) in ied.logical_nodes() {
            if !ln.ln_class.is_protection() || ln.ln_class == LnClass::Ptrc {
                continue;
            }
            if !thresholds
                .iter()
                .any(|t| t.find(name, &ln.ln_class, ln.instance).is_some())
            {
                r.push(
                    FindingKind::MissingThreshold,
                    format!("{name}.{}", ln.reference()),
                    format!("IED `{name}` has {} without a Thresholds entry", ln.ln_class),
                );
            }
        }
    }

    // Cable endpoints, after the same namespacing the merger applies.
    let scds: Vec<SclDocument> = scl_docs
        .iter()
        .filter(|d| d.communication.is_some())
        .cloned()
        .collect();
    let plan = cable_namespace_plan(&scds);
    let mut cables: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for (i, d) in scds.iter().enumerate() {
        for (_, ap) in d.connected_aps() {
            for pc in &ap.phys_conns {
                let id = if plan.contains(&(i, pc.cable.clone())) {
                    namespaced_cable(&d.source, &pc.cable)
                } else {
                    pc.cable.clone()
                };
                cables.entry(id).or_default().push(&ap.ied_name);
            }
        }
    }
    for (cable, ends) in cables {
        match ends.len() {
            2 => {}
            1 => r.push(
                FindingKind::DanglingCable,
                &cable,
                format!("cable only attached to `{}`", ends[0]),
            ),
            n => r.push(
                FindingKind::CableOverused,
                &cable,
                format!("cable attached to {n} endpoints: {}", ends.join(", ")),
            ),
        }
    }

    // Template bodies that disagree between files.
    let mut templates: BTreeMap<(String, String), (&str, &crate::xml::Element)> = BTreeMap::new();
    for d in scl_docs {
        let Some(t) = &d.data_type_templates else { continue };
        for el in t.elements() {
            let key = (el.local_name().to_string(), el.attr("id").unwrap_or("").to_string());
            match templates.get(&key) {
                None => {
                    templates.insert(key, (&d.source, el));
                }
                Some((src, first)) if *first != el => r.push(
                    FindingKind::TemplateConflict,
                    &key.1,
                    format!("`{}` differs from the definition in `{src}`; first kept", d.source),
                ),
                _ => {}
            }
        }
    }

    r.finish()
}

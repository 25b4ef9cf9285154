//! Combining per-substation SCL files into one system model.
//!
//! SSDs are concatenated process by process and SED bays are grafted under
//! the voltage level they name. SCDs are concatenated subnetwork by
//! subnetwork; cable identifiers that would otherwise collide can be
//! namespaced with their source file name.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::scl::{SclDocument, SclKind};
use crate::xml::Element;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MergeError {
    #[error("no input documents")]
    Empty,
    #[error("`{source_name}` is a {found} file where a {expected} was expected")]
    WrongKind {
        source_name: String,
        expected: SclKind,
        found: SclKind,
    },
    #[error("process `{0}` is defined by more than one input")]
    DuplicateProcess(String),
    #[error("subnetwork `{0}` is defined by more than one input")]
    DuplicateSubNetwork(String),
    #[error("SED `{sed}` names voltage level `{voltage_level}` which no SSD declares")]
    NoMatchingVoltageLevel { sed: String, voltage_level: String },
    #[error("bay `{bay}` already exists under `{target}`")]
    DuplicateBay { bay: String, target: String },
    #[error("IED `{0}` is defined by more than one input")]
    DuplicateIedName(String),
    #[error("cable `{cable}` links different devices in {sources:?}")]
    CableCollision { cable: String, sources: Vec<String> },
}

/// What to do with a cable id that is used for complete links in more than
/// one source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CablePolicy {
    /// Report [`MergeError::CableCollision`].
    #[default]
    Strict,
    /// Rename the colliding intra-file links to `<source>/<cable>`.
    Namespace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateConflict {
    pub id: String,
    pub kept_from: String,
    pub dropped_from: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedModel {
    pub ssd: SclDocument,
    pub scd: SclDocument,
    /// Source file of every merged element, keyed by `kind:path`.
    pub provenance: BTreeMap<String, String>,
    pub template_conflicts: Vec<TemplateConflict>,
}

fn check_kind(doc: &SclDocument, expected: SclKind) -> Result<(), MergeError> {
    if doc.kind != expected {
        return Err(MergeError::WrongKind {
            source_name: doc.source.clone(),
            expected,
            found: doc.kind,
        });
    }
    Ok(())
}

/// Record the origin of every structural element of `doc`.
pub fn record_provenance(doc: &SclDocument, out: &mut BTreeMap<String, String>) {
    let src = &doc.source;
    for p in &doc.processes {
        out.entry(format!("process:{}", p.name)).or_insert_with(|| src.clone());
        for vl in &p.voltage_levels {
            let vl_key = format!("{}/{}", p.name, vl.name);
            out.entry(format!("voltage_level:{vl_key}")).or_insert_with(|| src.clone());
            for bay in &vl.bays {
                let bay_key = format!("{vl_key}/{}", bay.name);
                out.insert(format!("bay:{bay_key}"), src.clone());
                for ce in &bay.equipment {
                    out.insert(format!("equipment:{bay_key}/{}", ce.name), src.clone());
                }
                for tr in &bay.transformers {
                    out.insert(format!("equipment:{bay_key}/{}", tr.name), src.clone());
                }
            }
        }
    }
    for (sn, ap) in doc.connected_aps() {
        out.insert(format!("subnetwork:{}", sn.name), src.clone());
        out.insert(
            format!("connected_ap:{}/{}/{}", sn.name, ap.ied_name, ap.ap_name),
            src.clone(),
        );
    }
    if let Some(c) = &doc.communication {
        for sn in &c.subnetworks {
            out.entry(format!("subnetwork:{}", sn.name)).or_insert_with(|| src.clone());
        }
    }
    for ied in &doc.ieds {
        out.insert(format!("ied:{}", ied.name), src.clone());
    }
}

fn merged_header(docs: &[SclDocument], kind: SclKind) -> SclDocument {
    let mut out = SclDocument::empty(kind, "merged");
    out.source = "merged".into();
    for d in docs {
        out.extensions.extend(d.extensions.iter().cloned());
    }
    out
}

/// Concatenate SSD processes and insert SED bays under matching voltage levels.
pub fn merge_ssd(ssds: &[SclDocument], seds: &[SclDocument]) -> Result<SclDocument, MergeError> {
    for d in ssds {
        check_kind(d, SclKind::Ssd)?;
    }
    for d in seds {
        check_kind(d, SclKind::Sed)?;
    }
    let mut out = match ssds {
        [] => return Err(MergeError::Empty),
        [single] => single.clone(),
        many => {
            let mut out = merged_header(many, SclKind::Ssd);
            let mut seen = BTreeSet::new();
            for d in many {
                for p in &d.processes {
                    if !seen.insert(p.name.clone()) {
                        return Err(MergeError::DuplicateProcess(p.name.clone()));
                    }
                    out.processes.push(p.clone());
                }
            }
            let (templates, _) = merge_templates(many);
            out.data_type_templates = templates;
            out
        }
    };
    for sed in seds {
        graft_sed(&mut out, sed)?;
    }
    Ok(out)
}

fn graft_sed(target: &mut SclDocument, sed: &SclDocument) -> Result<(), MergeError> {
    for sp in &sed.processes {
        for svl in &sp.voltage_levels {
            // Prefer the same-named process, then the lexicographically first
            // process that declares the voltage level, so the result does not
            // depend on input order.
            let by_name = target
                .processes
                .iter()
                .position(|p| p.name == sp.name && p.voltage_levels.iter().any(|v| v.name == svl.name));
            let fallback = || {
                target
                    .processes
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.voltage_levels.iter().any(|v| v.name == svl.name))
                    .min_by(|a, b| a.1.name.cmp(&b.1.name))
                    .map(|(i, _)| i)
            };
            let Some(pi) = by_name.or_else(fallback) else {
                return Err(MergeError::NoMatchingVoltageLevel {
                    sed: sed.source.clone(),
                    voltage_level: svl.name.clone(),
                });
            };
            let process = &mut target.processes[pi];
            let pname = process.name.clone();
            let vl = process
                .voltage_levels
                .iter_mut()
                .find(|v| v.name == svl.name)
                .expect("voltage level located above");
            for bay in &svl.bays {
                if vl.bays.iter().any(|b| b.name == bay.name) {
                    return Err(MergeError::DuplicateBay {
                        bay: bay.name.clone(),
                        target: format!("{pname}/{}", vl.name),
                    });
                }
                vl.bays.push(bay.clone());
            }
        }
    }
    Ok(())
}

/// Cable ids per source that must be renamed under [`CablePolicy::Namespace`].
///
/// A cable is renamed in a file when that file uses it for a complete
/// two-endpoint link and the id also appears elsewhere.
pub fn cable_namespace_plan(scds: &[SclDocument]) -> BTreeSet<(usize, String)> {
    let mut per_file: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in scds.iter().enumerate() {
        for (_, ap) in d.connected_aps() {
            for pc in &ap.phys_conns {
                per_file.entry(pc.cable.as_str()).or_default().push(i);
            }
        }
    }
    let mut plan = BTreeSet::new();
    for (cable, files) in per_file {
        if files.len() <= 2 {
            continue;
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for f in files {
            *counts.entry(f).or_default() += 1;
        }
        for (f, n) in counts {
            if n == 2 {
                plan.insert((f, cable.to_string()));
            }
        }
    }
    plan
}

/// The cable id a `PhysConn` ends up with after namespacing.
pub fn namespaced_cable(source: &str, cable: &str) -> String {
    format!("{source}/{cable}")
}

fn merge_templates(docs: &[SclDocument]) -> (Option<Element>, Vec<TemplateConflict>) {
    let mut kept: Vec<Element> = Vec::new();
    let mut origin: BTreeMap<(String, String), (usize, String)> = BTreeMap::new();
    let mut conflicts = Vec::new();
    let mut any = false;
    for d in docs {
        let Some(t) = &d.data_type_templates else { continue };
        any = true;
        for el in t.elements() {
            let key = (el.local_name().to_string(), el.attr("id").unwrap_or("").to_string());
            match origin.get(&key) {
                None => {
                    origin.insert(key, (kept.len(), d.source.clone()));
                    kept.push(el.clone());
                }
                Some((idx, src)) => {
                    if kept[*idx] != *el {
                        conflicts.push(TemplateConflict {
                            id: key.1.clone(),
                            kept_from: src.clone(),
                            dropped_from: d.source.clone(),
                        });
                    }
                }
            }
        }
    }
    if !any {
        return (None, conflicts);
    }
    let mut out = Element::new("DataTypeTemplates");
    for el in kept {
        out.push(el);
    }
    (Some(out), conflicts)
}

/// Concatenate SCDs, rejecting colliding cable ids.
pub fn merge_scd(scds: &[SclDocument]) -> Result<SclDocument, MergeError> {
    merge_scd_with(scds, CablePolicy::Strict).map(|(d, _)| d)
}

pub fn merge_scd_with(
    scds: &[SclDocument],
    policy: CablePolicy,
) -> Result<(SclDocument, Vec<TemplateConflict>), MergeError> {
    for d in scds {
        check_kind(d, SclKind::Scd)?;
    }
    if let [single] = scds {
        return Ok((single.clone(), Vec::new()));
    }
    if scds.is_empty() {
        return Err(MergeError::Empty);
    }

    let plan = cable_namespace_plan(scds);
    if policy == CablePolicy::Strict {
        if let Some((_, cable)) = plan.iter().next() {
            let sources = plan
                .iter()
                .filter(|(_, c)| c == cable)
                .map(|(i, _)| scds[*i].source.clone())
                .collect();
            return Err(MergeError::CableCollision {
                cable: cable.clone(),
                sources,
            });
        }
    }

    let mut out = merged_header(scds, SclKind::Scd);
    let mut comm = crate::scl::CommunicationSection::default();
    let mut processes = BTreeSet::new();
    let mut subnets = BTreeSet::new();
    let mut ieds = BTreeSet::new();
    for (i, d) in scds.iter().enumerate() {
        for p in &d.processes {
            if !processes.insert(p.name.clone()) {
                return Err(MergeError::DuplicateProcess(p.name.clone()));
            }
            out.processes.push(p.clone());
        }
        for ied in &d.ieds {
            if !ieds.insert(ied.name.clone()) {
                return Err(MergeError::DuplicateIedName(ied.name.clone()));
            }
            out.ieds.push(ied.clone());
        }
        for sn in d.communication.iter().flat_map(|c| &c.subnetworks) {
            if !subnets.insert(sn.name.clone()) {
                return Err(MergeError::DuplicateSubNetwork(sn.name.clone()));
            }
            let mut sn = sn.clone();
            for ap in &mut sn.connected_aps {
                for pc in &mut ap.phys_conns {
                    if plan.contains(&(i, pc.cable.clone())) {
                        pc.cable = namespaced_cable(&d.source, &pc.cable);
                    }
                }
            }
            comm.subnetworks.push(sn);
        }
    }
    out.communication = Some(comm);
    let (templates, conflicts) = merge_templates(scds);
    out.data_type_templates = templates;
    Ok((out, conflicts))
}

/// Merge a complete bundle: SSDs with SEDs, and SCDs with namespacing.
pub fn merge_model(
    ssds: &[SclDocument],
    seds: &[SclDocument],
    scds: &[SclDocument],
    policy: CablePolicy,
) -> Result<MergedModel, MergeError> {
    let ssd = merge_ssd(ssds, seds)?;
    let (scd, template_conflicts) = merge_scd_with(scds, policy)?;
    let mut provenance = BTreeMap::new();
    for d in ssds.iter().chain(seds).chain(scds) {
        record_provenance(d, &mut provenance);
    }
    Ok(MergedModel {
        ssd,
        scd,
        provenance,
        template_conflicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scl::parse_scl;

    fn ssd(name: &str, vl: &str) -> SclDocument {
        let text = format!(
            r#"<SCL><Header id="{name}"/><Substation name="{name}"><VoltageLevel name="{vl}"><Voltage multiplier="k">66</Voltage>
               <Bay name="B1"><ConnectivityNode name="N1" pathName="{name}/{vl}/B1/N1"/>
               <ConductingEquipment name="{name}_CB" type="CBR"><Terminal connectivityNode="{name}/{vl}/B1/N1"/><Terminal connectivityNode="{name}/{vl}/B1/N1"/></ConductingEquipment></Bay>
               </VoltageLevel></Substation></SCL>"#
        );
        parse_scl(&text, SclKind::Ssd).unwrap()
    }

    fn sed(vl: &str) -> SclDocument {
        let text = format!(
            r#"<SCL><Header id="tie"/><Substation name="S1"><VoltageLevel name="{vl}"><Voltage multiplier="k">66</Voltage>
               <Bay name="Tie"/></VoltageLevel></Substation></SCL>"#
        );
        parse_scl(&text, SclKind::Sed).unwrap()
    }

    #[test]
    fn identity_merge() {
        let s = ssd("S1", "66kV");
        assert_eq!(merge_ssd(std::slice::from_ref(&s), &[]).unwrap(), s);
    }

    #[test]
    fn sed_bay_lands_under_voltage_level() {
        let merged = merge_ssd(&[ssd("S1", "66kV"), ssd("S2", "66kV")], &[sed("66kV")]).unwrap();
        assert_eq!(merged.processes.len(), 2);
        assert_eq!(merged.processes[0].voltage_levels[0].bays.len(), 2);
    }

    #[test]
    fn unknown_voltage_level() {
        let err = merge_ssd(&[ssd("S1", "66kV")], &[sed("132kV")]).unwrap_err();
        assert!(matches!(err, MergeError::NoMatchingVoltageLevel { .. }));
    }

    #[test]
    fn duplicate_process() {
        let err = merge_ssd(&[ssd("S1", "66kV"), ssd("S1", "66kV")], &[]).unwrap_err();
        assert_eq!(err, MergeError::DuplicateProcess("S1".into()));
    }
}

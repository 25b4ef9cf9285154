//! Random substation models for merge properties.

use proptest::prelude::*;
use sgcr_core::merger::{merge_scd_with, CablePolicy, MergeError};
use sgcr_core::scl::{parse_scl, SclDocument, SclKind};
use sgcr_core::xml::Element;

#[derive(Debug, Clone)]
pub struct SubSpec {
    pub vls: Vec<(String, usize)>,
    pub ieds: usize,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub subs: Vec<SubSpec>,
    /// (target substation, target voltage level index, bay count)
    pub seds: Vec<(usize, usize, usize)>,
}

pub fn model() -> impl Strategy<Value = Model> {
    let sub = (
        prop::collection::vec((prop::sample::select(vec!["HV", "MV", "LV"]), 1..4usize), 1..3),
        1..5usize,
    )
        .prop_map(|(vls, ieds)| {
            let mut seen = Vec::new();
            let vls = vls
                .into_iter()
                .filter(|(n, _)| {
                    let fresh = !seen.contains(n);
                    seen.push(*n);
                    fresh
                })
                .map(|(n, b)| (n.to_string(), b))
                .collect();
            SubSpec { vls, ieds }
        });
    prop::collection::vec(sub, 1..5).prop_flat_map(|subs| {
        let n = subs.len();
        let seds = prop::collection::vec((0..n, 0..3usize, 1..3usize), 0..4);
        (Just(subs), seds).prop_map(|(subs, seds)| {
            let seds = seds
                .into_iter()
                .map(|(s, v, b)| (s, v % subs[s].vls.len(), b))
                .collect();
            Model { subs, seds }
        })
    })
}

pub fn vl(name: &str) -> Element {
    Element::new("VoltageLevel")
        .with_attr("name", name)
        .with_child(Element::new("Voltage").with_attr("multiplier", "k").with_text("11"))
}

pub fn bay(sub: &str, vl: &str, name: &str) -> Element {
    let node = format!("{sub}/{vl}/{name}/N");
    Element::new("Bay")
        .with_attr("name", name)
        .with_child(Element::new("ConnectivityNode").with_attr("name", "N").with_attr("pathName", &node))
        .with_child(
            Element::new("ConductingEquipment")
                .with_attr("name", format!("{sub}_{vl}_{name}_L"))
                .with_attr("type", "IFL")
                .with_child(Element::new("Terminal").with_attr("connectivityNode", &node)),
        )
}

pub fn scl(id: &str) -> Element {
    Element::new("SCL").with_child(Element::new("Header").with_attr("id", id))
}

pub fn ssds(m: &Model) -> Vec<SclDocument> {
    m.subs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let name = format!("S{i}");
            let mut sub = Element::new("Substation").with_attr("name", &name);
            for (v, bays) in &s.vls {
                let mut el = vl(v);
                for b in 0..*bays {
                    el.push(bay(&name, v, &format!("B{b}")));
                }
                sub.push(el);
            }
            parse_scl(&scl(&name).with_child(sub).to_xml(), SclKind::Ssd).unwrap()
        })
        .collect()
}

pub fn seds(m: &Model) -> Vec<SclDocument> {
    m.seds
        .iter()
        .enumerate()
        .map(|(k, (s, v, bays))| {
            let sub = format!("S{s}");
            let vname = &m.subs[*s].vls[*v].0;
            let mut el = vl(vname);
            for b in 0..*bays {
                el.push(bay(&sub, vname, &format!("X{k}_{b}")));
            }
            let doc = scl(&format!("SED{k}")).with_child(Element::new("Substation").with_attr("name", &sub).with_child(el));
            parse_scl(&doc.to_xml(), SclKind::Sed).unwrap()
        })
        .collect()
}

pub fn scds(m: &Model) -> Vec<SclDocument> {
    m.subs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = |t: &str, v: &str| Element::new("P").with_attr("type", t).with_text(v);
            let mut sn = Element::new("SubNetwork").with_attr("name", format!("S{i}_LAN"));
            let mut sw = Element::new("ConnectedAP").with_attr("iedName", format!("S{i}_SW")).with_attr("apName", "P");
            for k in 0..s.ieds {
                let ied = format!("S{i}_IED{k}");
                let cable = format!("C{k}");
                sn.push(
                    Element::new("ConnectedAP")
                        .with_attr("iedName", &ied)
                        .with_attr("apName", "AP1")
                        .with_child(Element::new("PhysConn").with_child(p("Port", "1")).with_child(p("Cable", &cable))),
                );
                sw.push(Element::new("PhysConn").with_child(p("Port", &k.to_string())).with_child(p("Cable", &cable)));
            }
            sn.push(sw);
            let mut doc = scl(&format!("S{i}_SCD"))
                .with_child(Element::new("Communication").with_child(sn));
            for k in 0..s.ieds {
                doc.push(Element::new("IED").with_attr("name", format!("S{i}_IED{k}")));
            }
            parse_scl(&doc.to_xml(), SclKind::Scd).unwrap()
        })
        .collect()
}

/// Sort every named collection so documents can be compared as sets.
pub fn canonical(mut d: SclDocument) -> SclDocument {
    d.processes.sort_by(|a, b| a.name.cmp(&b.name));
    for p in &mut d.processes {
        p.voltage_levels.sort_by(|a, b| a.name.cmp(&b.name));
        for v in &mut p.voltage_levels {
            v.bays.sort_by(|a, b| a.name.cmp(&b.name));
        }
    }
    if let Some(c) = &mut d.communication {
        c.subnetworks.sort_by(|a, b| a.name.cmp(&b.name));
    }
    d.ieds.sort_by(|a, b| a.name.cmp(&b.name));
    d
}

/// Every substation reuses cable ids `C0..`, so intra-file links get namespaced.
pub fn merge_scd(docs: &[SclDocument]) -> Result<SclDocument, MergeError> {
    merge_scd_with(docs, CablePolicy::Namespace).map(|(d, _)| d)
}

pub fn counts(docs: &[SclDocument]) -> (usize, usize, usize) {
    let processes = docs.iter().map(|d| d.processes.len()).sum();
    let bays = docs.iter().map(|d| d.bays().count()).sum();
    let equipment = docs.iter().flat_map(|d| d.bays()).map(|(_, _, b)| b.equipment.len()).sum();
    (processes, bays, equipment)
}

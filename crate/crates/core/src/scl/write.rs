//! Serialization of typed SCL documents back to XML.

use crate::xml::Element;

use super::*;

const SCL_NS: &str = "http://www.iec.ch/61850/2003/SCL";

impl SclDocument {
    pub fn to_element(&self) -> Element {
        let mut root = Element::new("SCL").with_attr("xmlns", SCL_NS);
        root.push(
            Element::new("Header")
                .with_attr("id", &self.header.id)
                .with_attr("version", &self.header.version),
        );
        for p in &self.processes {
            root.push(process_element(p));
        }
        if let Some(comm) = &self.communication {
            root.push(communication_element(comm));
        }
        for ied in &self.ieds {
            root.push(ied_element(ied));
        }
        for ext in &self.extensions {
            root.push(ext.clone());
        }
        if let Some(t) = &self.data_type_templates {
            root.push(t.clone());
        }
        root
    }

    pub fn to_xml(&self) -> String {
        self.to_element().to_xml()
    }
}

fn process_element(p: &ProcessSection) -> Element {
    let tag = match p.tag {
        ProcessTag::Process => "Process",
        ProcessTag::Substation => "Substation",
    };
    let mut el = Element::new(tag).with_attr("name", &p.name);
    for vl in &p.voltage_levels {
        let mut v = Element::new("VoltageLevel").with_attr("name", &vl.name);
        if let Some(n) = vl.num_phases {
            v.set_attr("numPhases", n);
        }
        if let Some(f) = vl.nom_freq {
            v.set_attr("nomFreq", f);
        }
        v.push(
            Element::new("Voltage")
                .with_attr("unit", "V")
                .with_attr("multiplier", "k")
                .with_text(vl.nominal_kv.to_string()),
        );
        for bay in &vl.bays {
            v.push(bay_element(bay));
        }
        for ext in &vl.extensions {
            v.push(ext.clone());
        }
        el.push(v);
    }
    for ext in &p.extensions {
        el.push(ext.clone());
    }
    el
}

fn terminal_element(t: &Terminal) -> Element {
    let mut el = Element::new("Terminal").with_attr("connectivityNode", &t.connectivity_node);
    if let Some(vl) = &t.voltage_level_name {
        el.set_attr("voltageLevelName", vl);
    }
    el
}

fn bay_element(bay: &Bay) -> Element {
    let mut el = Element::new("Bay").with_attr("name", &bay.name);
    for ce in &bay.equipment {
        let mut c = Element::new("ConductingEquipment")
            .with_attr("name", &ce.name)
            .with_attr("type", ce.ce_type.as_str());
        for t in &ce.terminals {
            c.push(terminal_element(t));
        }
        for ext in &ce.extensions {
            c.push(ext.clone());
        }
        el.push(c);
    }
    for tr in &bay.transformers {
        let mut t = Element::new("PowerTransformer")
            .with_attr("name", &tr.name)
            .with_attr("type", "PTR");
        for w in &tr.windings {
            t.push(
                Element::new("TransformerWinding")
                    .with_attr("name", &w.name)
                    .with_attr("type", "PTW")
                    .with_child(terminal_element(&w.terminal)),
            );
        }
        el.push(t);
    }
    for id in &bay.connectivity_nodes {
        let name = id.rsplit('/').next().unwrap_or(id);
        el.push(
            Element::new("ConnectivityNode")
                .with_attr("name", name)
                .with_attr("pathName", id),
        );
    }
    for ext in &bay.extensions {
        el.push(ext.clone());
    }
    el
}

fn p(ty: &str, value: impl ToString) -> Element {
    Element::new("P").with_attr("type", ty).with_text(value.to_string())
}

fn communication_element(comm: &CommunicationSection) -> Element {
    let mut el = Element::new("Communication");
    for sn in &comm.subnetworks {
        let mut s = Element::new("SubNetwork").with_attr("name", &sn.name);
        for ap in &sn.connected_aps {
            let mut a = Element::new("ConnectedAP")
                .with_attr("iedName", &ap.ied_name)
                .with_attr("apName", &ap.ap_name);
            if let Some(addr) = &ap.address {
                let mut ad = Element::new("Address")
                    .with_child(p("IP", addr.ip))
                    .with_child(p("IP-SUBNET", addr.netmask));
                if let Some(gw) = addr.gateway {
                    ad.push(p("IP-GATEWAY", gw));
                }
                a.push(ad);
            }
            for pc in &ap.phys_conns {
                let mut c = Element::new("PhysConn").with_attr("type", "Connection");
                if let Some(port) = &pc.port {
                    c.push(p("Port", port));
                }
                c.push(p("Cable", &pc.cable));
                a.push(c);
            }
            s.push(a);
        }
        el.push(s);
    }
    el
}

fn ied_element(ied: &IedSection) -> Element {
    let mut el = Element::new("IED").with_attr("name", &ied.name);
    if let Some(t) = &ied.ied_type {
        el.set_attr("type", t);
    }
    let mut server = Element::new("Server");
    for ld in &ied.logical_devices {
        let mut l = Element::new("LDevice").with_attr("inst", &ld.inst);
        // Datasets, control blocks and inputs live in LN0, or the first LN
        // when the device has none.
        let host = ld
            .logical_nodes
            .iter()
            .position(|ln| ln.is_ln0)
            .unwrap_or(0);
        for (i, ln) in ld.logical_nodes.iter().enumerate() {
            let mut n = Element::new(if ln.is_ln0 { "LN0" } else { "LN" });
            if !ln.prefix.is_empty() {
                n.set_attr("prefix", &ln.prefix);
            }
            n.set_attr("lnClass", ln.ln_class.as_str());
            n.set_attr("inst", if ln.is_ln0 && ln.instance == 0 { String::new() } else { ln.instance.to_string() });
            n.set_attr("lnType", &ln.ln_type);
            if i == host {
                append_ln0_content(&mut n, ied, &ld.inst);
            }
            for ext in &ln.extensions {
                n.push(ext.clone());
            }
            l.push(n);
        }
        server.push(l);
    }
    el.push(
        Element::new("AccessPoint")
            .with_attr("name", "AP1")
            .with_child(server),
    );
    el
}

fn append_ln0_content(ln: &mut Element, ied: &IedSection, ld_inst: &str) {
    for ds in ied.datasets.iter().filter(|d| d.ld_inst == ld_inst) {
        let mut d = Element::new("DataSet").with_attr("name", &ds.name);
        for m in &ds.members {
            let seg = m.ln();
            let mut f = Element::new("FCDA").with_attr("ldInst", ld_inst);
            if !seg.prefix.is_empty() {
                f.set_attr("prefix", &seg.prefix);
            }
            f.set_attr("lnClass", seg.class.as_str());
            if let Some(i) = seg.instance {
                f.set_attr("lnInst", i);
            }
            f.set_attr("doName", m.do_name());
            let da = m.da_path();
            if !da.is_empty() {
                f.set_attr("daName", da.join("."));
            }
            d.push(f);
        }
        ln.push(d);
    }
    for cb in ied.control_blocks.iter().filter(|c| c.ld_inst == ld_inst) {
        let c = match cb.kind {
            ControlKind::Report => Element::new("ReportControl")
                .with_attr("name", &cb.name)
                .with_attr("datSet", &cb.dataset_ref)
                .with_attr("appID", cb.app_id),
            ControlKind::Goose | ControlKind::Rgoose => Element::new("GSEControl")
                .with_attr("name", &cb.name)
                .with_attr("datSet", &cb.dataset_ref)
                .with_attr("type", if cb.kind == ControlKind::Goose { "GOOSE" } else { "RGOOSE" })
                .with_attr("appID", format!("0x{:04X}", cb.app_id)),
        };
        ln.push(c);
    }
    let inputs: Vec<&ExtRef> = ied.inputs.iter().filter(|e| e.ld_inst == ld_inst).collect();
    if !inputs.is_empty() {
        let mut i = Element::new("Inputs");
        for e in inputs {
            let mut x = Element::new("ExtRef").with_attr("iedName", &e.ied_name);
            if let Some(ld) = &e.src_ld_inst {
                x.set_attr("ldInst", ld);
            }
            if !e.prefix.is_empty() {
                x.set_attr("prefix", &e.prefix);
            }
            x.set_attr("lnClass", &e.ln_class);
            if !e.ln_inst.is_empty() {
                x.set_attr("lnInst", &e.ln_inst);
            }
            x.set_attr("doName", &e.do_name);
            if let Some(da) = &e.da_name {
                x.set_attr("daName", da);
            }
            if let Some(cb) = &e.src_cb_name {
                x.set_attr("srcCBName", cb);
            }
            i.push(x);
        }
        ln.push(i);
    }
}

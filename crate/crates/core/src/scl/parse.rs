use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use crate::xml::{self, Element};

use super::templates::{merge_instances, TemplateIndex};
use super::*;

fn violation(msg: impl Into<String>) -> ParseError {
    ParseError::SchemaViolation(msg.into())
}

fn required<'a>(el: &'a Element, attr: &str) -> Result<&'a str, ParseError> {
    match el.attr(attr) {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(violation(format!(
            "<{}> is missing mandatory attribute `{attr}`",
            el.local_name()
        ))),
    }
}

fn ensure_unique<'a>(
    what: &str,
    parent: &str,
    names: impl IntoIterator<Item = &'a str>,
) -> Result<(), ParseError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(violation(format!("duplicate {what} `{n}` in {parent}")));
        }
    }
    Ok(())
}

/// Parse one SCL file and check it against the invariants of `expected_kind`.
pub fn parse_scl(text: &str, expected_kind: SclKind) -> Result<SclDocument, ParseError> {
    let root = xml::parse(text)?;
    if root.local_name() != "SCL" {
        return Err(ParseError::KindMismatch {
            expected: expected_kind.to_string(),
            reason: format!("root element is <{}>, not <SCL>", root.name),
        });
    }

    let mut doc = SclDocument::empty(expected_kind, "");
    let templates = root.first("DataTypeTemplates");
    let index = TemplateIndex::new(templates);

    let mut saw_header = false;
    for child in root.elements() {
        match child.local_name() {
            "Header" => {
                doc.header = Header {
                    id: required(child, "id")?.to_string(),
                    version: child.attr("version").unwrap_or_default().to_string(),
                };
                saw_header = true;
            }
            "Process" | "Substation" => doc.processes.push(parse_process(child)?),
            "Communication" => {
                if doc.communication.is_some() {
                    return Err(violation("more than one <Communication> section"));
                }
                doc.communication = Some(parse_communication(child)?);
            }
            "IED" => doc.ieds.push(parse_ied(child, &index)?),
            "DataTypeTemplates" => doc.data_type_templates = Some(child.clone()),
            _ => doc.extensions.push(child.clone()),
        }
    }
    if !saw_header {
        return Err(violation("<SCL> has no <Header>"));
    }
    doc.source = doc.header.id.clone();

    ensure_unique("process", "SCL", doc.processes.iter().map(|p| p.name.as_str()))?;
    ensure_unique("IED", "SCL", doc.ieds.iter().map(|i| i.name.as_str()))?;

    let mismatch = |reason: &str| ParseError::KindMismatch {
        expected: expected_kind.to_string(),
        reason: reason.to_string(),
    };
    match expected_kind {
        SclKind::Ssd if doc.processes.is_empty() => {
            return Err(mismatch("an SSD must describe at least one process"))
        }
        SclKind::Icd if doc.ieds.len() != 1 => {
            return Err(mismatch(&format!(
                "an ICD must contain exactly one IED, found {}",
                doc.ieds.len()
            )))
        }
        SclKind::Scd if doc.communication.is_none() => {
            return Err(mismatch("an SCD must contain a <Communication> section"))
        }
        SclKind::Sed if doc.processes.is_empty() && doc.communication.is_none() => {
            return Err(mismatch("an SED must contain process or communication data"))
        }
        _ => {}
    }
    Ok(doc)
}

fn parse_process(el: &Element) -> Result<ProcessSection, ParseError> {
    let tag = if el.local_name() == "Process" {
        ProcessTag::Process
    } else {
        ProcessTag::Substation
    };
    let mut p = ProcessSection {
        name: required(el, "name")?.to_string(),
        tag,
        voltage_levels: Vec::new(),
        extensions: Vec::new(),
    };
    for child in el.elements() {
        match child.local_name() {
            "VoltageLevel" => p.voltage_levels.push(parse_voltage_level(child)?),
            _ => p.extensions.push(child.clone()),
        }
    }
    ensure_unique(
        "voltage level",
        &format!("process `{}`", p.name),
        p.voltage_levels.iter().map(|v| v.name.as_str()),
    )?;
    Ok(p)
}

fn parse_voltage(el: &Element) -> Result<f64, ParseError> {
    let value: f64 = el
        .text()
        .parse()
        .map_err(|_| violation(format!("<Voltage> value `{}` is not a number", el.text())))?;
    let factor = match el.attr("multiplier").unwrap_or("") {
        "k" => 1.0,
        "M" => 1000.0,
        "" => 1e-3,
        "m" => 1e-6,
        other => return Err(violation(format!("unsupported Voltage multiplier `{other}`"))),
    };
    Ok(value * factor)
}

fn parse_voltage_level(el: &Element) -> Result<VoltageLevel, ParseError> {
    let name = required(el, "name")?.to_string();
    let num_phases = match el.attr("numPhases") {
        None => None,
        Some(s) => match s.trim().parse::<u8>() {
            Ok(n @ (1 | 3)) => Some(n),
            _ => return Err(violation(format!("VoltageLevel `{name}`: numPhases `{s}` not in {{1,3}}"))),
        },
    };
    let nom_freq = match el.attr("nomFreq") {
        None => None,
        Some(s) => Some(
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|f| *f > 0.0)
                .ok_or_else(|| violation(format!("VoltageLevel `{name}`: bad nomFreq `{s}`")))?,
        ),
    };
    let mut vl = VoltageLevel {
        name,
        nominal_kv: 0.0,
        num_phases,
        nom_freq,
        bays: Vec::new(),
        extensions: Vec::new(),
    };
    for child in el.elements() {
        match child.local_name() {
            "Voltage" => vl.nominal_kv = parse_voltage(child)?,
            "Bay" => vl.bays.push(parse_bay(child)?),
            _ => vl.extensions.push(child.clone()),
        }
    }
    if !(vl.nominal_kv > 0.0) {
        return Err(violation(format!(
            "VoltageLevel `{}` needs a positive <Voltage>",
            vl.name
        )));
    }
    ensure_unique(
        "bay",
        &format!("voltage level `{}`", vl.name),
        vl.bays.iter().map(|b| b.name.as_str()),
    )?;
    Ok(vl)
}

fn parse_terminal(el: &Element) -> Result<Terminal, ParseError> {
    Ok(Terminal {
        connectivity_node: required(el, "connectivityNode")?.to_string(),
        voltage_level_name: el.attr("voltageLevelName").map(str::to_string),
    })
}

fn parse_bay(el: &Element) -> Result<Bay, ParseError> {
    let mut bay = Bay {
        name: required(el, "name")?.to_string(),
        equipment: Vec::new(),
        transformers: Vec::new(),
        connectivity_nodes: Vec::new(),
        extensions: Vec::new(),
    };
    let mut node_names = Vec::new();
    for child in el.elements() {
        match child.local_name() {
            "ConductingEquipment" => bay.equipment.push(parse_equipment(child)?),
            "PowerTransformer" => bay.transformers.push(parse_transformer(child)?),
            "ConnectivityNode" => {
                let name = required(child, "name")?;
                node_names.push(name.to_string());
                bay.connectivity_nodes
                    .push(child.attr("pathName").unwrap_or(name).to_string());
            }
            _ => bay.extensions.push(child.clone()),
        }
    }
    let parent = format!("bay `{}`", bay.name);
    ensure_unique(
        "equipment",
        &parent,
        bay.equipment
            .iter()
            .map(|e| e.name.as_str())
            .chain(bay.transformers.iter().map(|t| t.name.as_str())),
    )?;
    ensure_unique("connectivity node", &parent, node_names.iter().map(String::as_str))?;
    Ok(bay)
}

fn parse_equipment(el: &Element) -> Result<ConductingEquipment, ParseError> {
    let name = required(el, "name")?.to_string();
    let ty = el
        .attr("type")
        .or_else(|| el.attr("Type"))
        .ok_or_else(|| violation(format!("ConductingEquipment `{name}` has no type")))?;
    let mut ce = ConductingEquipment {
        name,
        ce_type: EquipmentType::from(ty),
        terminals: Vec::new(),
        extensions: Vec::new(),
    };
    for child in el.elements() {
        match child.local_name() {
            "Terminal" => ce.terminals.push(parse_terminal(child)?),
            _ => ce.extensions.push(child.clone()),
        }
    }
    let n = ce.terminals.len();
    let ok = match ce.ce_type {
        EquipmentType::Cbr | EquipmentType::Dis | EquipmentType::Cab | EquipmentType::Lin => n == 2,
        EquipmentType::Gen | EquipmentType::Ifl => n >= 1,
        EquipmentType::Other(_) => true,
    };
    if !ok {
        return Err(violation(format!(
            "{} `{}` has {n} terminals",
            ce.ce_type.as_str(),
            ce.name
        )));
    }
    Ok(ce)
}

fn parse_transformer(el: &Element) -> Result<PowerTransformer, ParseError> {
    let name = required(el, "name")?.to_string();
    let mut windings = Vec::new();
    for w in el.elements_named("TransformerWinding") {
        let terminal = w
            .first("Terminal")
            .ok_or_else(|| violation(format!("winding of `{name}` has no Terminal")))?;
        windings.push(TransformerWinding {
            name: required(w, "name")?.to_string(),
            terminal: parse_terminal(terminal)?,
        });
    }
    if windings.len() != 2 {
        return Err(violation(format!(
            "PowerTransformer `{name}` has {} windings; exactly 2 are supported",
            windings.len()
        )));
    }
    if let (Some(a), Some(b)) = (
        &windings[0].terminal.voltage_level_name,
        &windings[1].terminal.voltage_level_name,
    ) {
        if a == b {
            return Err(violation(format!(
                "PowerTransformer `{name}` has both windings on voltage level `{a}`"
            )));
        }
    }
    Ok(PowerTransformer { name, windings })
}

fn parse_ip(s: &str, what: &str, ap: &str) -> Result<Ipv4Addr, ParseError> {
    s.trim()
        .parse()
        .map_err(|_| violation(format!("ConnectedAP `{ap}`: {what} `{s}` is not IPv4")))
}

fn parse_communication(el: &Element) -> Result<CommunicationSection, ParseError> {
    let mut comm = CommunicationSection::default();
    for sn in el.elements_named("SubNetwork") {
        let mut subnet = SubNetwork {
            name: required(sn, "name")?.to_string(),
            connected_aps: Vec::new(),
        };
        for ap in sn.elements_named("ConnectedAP") {
            subnet.connected_aps.push(parse_connected_ap(ap)?);
        }
        comm.subnetworks.push(subnet);
    }
    ensure_unique(
        "subnetwork",
        "Communication",
        comm.subnetworks.iter().map(|s| s.name.as_str()),
    )?;
    Ok(comm)
}

fn parse_connected_ap(ap: &Element) -> Result<ConnectedAp, ParseError> {
    let ied_name = required(ap, "iedName")?.to_string();
    let ap_name = ap.attr("apName").unwrap_or("AP1").to_string();
    let label = format!("{ied_name}/{ap_name}");
    let address = match ap.first("Address") {
        None => None,
        Some(addr) => {
            let mut ip = None;
            let mut mask = None;
            let mut gw = None;
            for p in addr.elements_named("P") {
                match p.attr("type") {
                    Some("IP") => ip = Some(parse_ip(&p.text(), "IP", &label)?),
                    Some("IP-SUBNET") => mask = Some(parse_ip(&p.text(), "IP-SUBNET", &label)?),
                    Some("IP-GATEWAY") => gw = Some(parse_ip(&p.text(), "IP-GATEWAY", &label)?),
                    _ => {}
                }
            }
            Some(Address {
                ip: ip.ok_or_else(|| violation(format!("ConnectedAP `{label}` Address lacks IP")))?,
                netmask: mask.ok_or_else(|| {
                    violation(format!("ConnectedAP `{label}` Address lacks IP-SUBNET"))
                })?,
                gateway: gw,
            })
        }
    };
    let mut phys_conns = Vec::new();
    for pc in ap.elements_named("PhysConn") {
        let mut port = None;
        let mut cable = None;
        for p in pc.elements_named("P") {
            match p.attr("type") {
                Some("Port") => port = Some(p.text()),
                Some("Cable") => cable = Some(p.text()),
                _ => {}
            }
        }
        match cable {
            Some(c) if !c.is_empty() => phys_conns.push(PhysConn { port, cable: c }),
            _ => {
                return Err(violation(format!(
                    "ConnectedAP `{label}` has a PhysConn without a cable"
                )))
            }
        }
    }
    Ok(ConnectedAp {
        ied_name,
        ap_name,
        address,
        phys_conns,
    })
}

fn parse_ied(el: &Element, index: &TemplateIndex<'_>) -> Result<IedSection, ParseError> {
    let mut ied = IedSection {
        name: required(el, "name")?.to_string(),
        ied_type: el.attr("type").map(str::to_string),
        logical_devices: Vec::new(),
        datasets: Vec::new(),
        control_blocks: Vec::new(),
        inputs: Vec::new(),
    };
    let mut ldevices: Vec<&Element> = el.elements_named("LDevice").collect();
    for ap in el.elements_named("AccessPoint") {
        for server in ap.elements_named("Server") {
            ldevices.extend(server.elements_named("LDevice"));
        }
    }
    for ld_el in ldevices {
        let inst = required(ld_el, "inst")?.to_string();
        let mut ld = LogicalDevice {
            inst: inst.clone(),
            logical_nodes: Vec::new(),
        };
        for ln_el in ld_el.elements() {
            let is_ln0 = match ln_el.local_name() {
                "LN0" => true,
                "LN" => false,
                _ => continue,
            };
            let ied_name = ied.name.clone();
            ld.logical_nodes
                .push(parse_ln(ln_el, is_ln0, &ied_name, &inst, index, &mut ied)?);
        }
        ensure_unique(
            "logical node",
            &format!("LD `{}/{}`", ied.name, ld.inst),
            ld.logical_nodes
                .iter()
                .map(|ln| ln.reference())
                .collect::<Vec<_>>()
                .iter()
                .map(String::as_str),
        )?;
        ied.logical_devices.push(ld);
    }
    ensure_unique(
        "logical device",
        &format!("IED `{}`", ied.name),
        ied.logical_devices.iter().map(|l| l.inst.as_str()),
    )?;
    ensure_unique(
        "dataset",
        &format!("IED `{}`", ied.name),
        ied.datasets.iter().map(|d| d.name.as_str()),
    )?;
    ensure_unique(
        "control block",
        &format!("IED `{}`", ied.name),
        ied.control_blocks.iter().map(|c| c.name.as_str()),
    )?;
    Ok(ied)
}

fn parse_ln(
    el: &Element,
    is_ln0: bool,
    ied_name: &str,
    ld_inst: &str,
    index: &TemplateIndex<'_>,
    ied: &mut IedSection,
) -> Result<LogicalNode, ParseError> {
    let class = required(el, "lnClass")?;
    let inst_str = el.attr("inst").unwrap_or("");
    let instance = if inst_str.is_empty() {
        0
    } else {
        inst_str
            .parse()
            .map_err(|_| violation(format!("LN `{class}` has non-numeric inst `{inst_str}`")))?
    };
    let ln_type = el.attr("lnType").unwrap_or_default().to_string();
    let mut ln = LogicalNode {
        ln_class: LnClass::from(class),
        prefix: el.attr("prefix").unwrap_or_default().to_string(),
        instance,
        ln_type: ln_type.clone(),
        is_ln0,
        data_objects: index.data_objects(&ln_type),
        extensions: Vec::new(),
    };
    merge_instances(&mut ln.data_objects, el);

    for child in el.elements() {
        match child.local_name() {
            "DataSet" => {
                let mut members = Vec::new();
                for f in child.elements_named("FCDA") {
                    let mut s = format!(
                        "{ied_name}.{}{}{}.{}",
                        f.attr("prefix").unwrap_or(""),
                        required(f, "lnClass")?,
                        f.attr("lnInst").unwrap_or(""),
                        required(f, "doName")?
                    );
                    if let Some(da) = f.attr("daName") {
                        s.push('.');
                        s.push_str(da);
                    }
                    members.push(AttributePath::new(s).map_err(violation)?);
                }
                ied.datasets.push(DataSet {
                    name: required(child, "name")?.to_string(),
                    ld_inst: ld_inst.to_string(),
                    members,
                });
            }
            "GSEControl" | "ReportControl" => {
                let name = required(child, "name")?.to_string();
                let kind = if child.local_name() == "ReportControl" {
                    ControlKind::Report
                } else {
                    match child.attr("type").unwrap_or("GOOSE") {
                        "GOOSE" => ControlKind::Goose,
                        "RGOOSE" | "R-GOOSE" => ControlKind::Rgoose,
                        other => {
                            return Err(violation(format!(
                                "GSEControl `{name}` has unsupported type `{other}`"
                            )))
                        }
                    }
                };
                let app_id = match (kind, child.attr("appID")) {
                    (ControlKind::Report, None) => 0,
                    (_, Some(s)) => parse_int(s).ok_or_else(|| {
                        violation(format!("control block `{name}`: appID `{s}` is not an integer"))
                    })?,
                    (_, None) => return Err(violation(format!("GSEControl `{name}` has no appID"))),
                };
                ied.control_blocks.push(ControlBlock {
                    kind,
                    name,
                    ld_inst: ld_inst.to_string(),
                    dataset_ref: required(child, "datSet")?.to_string(),
                    app_id,
                });
            }
            "Inputs" => {
                for ext in child.elements_named("ExtRef") {
                    ied.inputs.push(ExtRef {
                        ld_inst: ld_inst.to_string(),
                        ied_name: required(ext, "iedName")?.to_string(),
                        src_ld_inst: ext.attr("ldInst").map(str::to_string),
                        ln_class: required(ext, "lnClass")?.to_string(),
                        ln_inst: ext.attr("lnInst").unwrap_or("").to_string(),
                        prefix: ext.attr("prefix").unwrap_or("").to_string(),
                        do_name: required(ext, "doName")?.to_string(),
                        da_name: ext.attr("daName").map(str::to_string),
                        src_cb_name: ext.attr("srcCBName").map(str::to_string),
                    });
                }
            }
            _ => ln.extensions.push(child.clone()),
        }
    }
    Ok(ln)
}

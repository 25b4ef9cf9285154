//! Generated example bundles: a three-substation 66/11 kV grid with 45 IEDs
//! and a single-substation variant with 9.
//!
//! Each substation has a 66 kV bus, a 66/11 kV transformer and 11 kV
//! feeders. Substations are joined by 66 kV tie lines described in SED
//! files. Every IED sits on its substation LAN switch; the switches are
//! chained by trunk cables `T12` and `T23`.

use crate::scenario::{fci_attack, AttackScript, Bundle};
use crate::scl::{
    parse_scl, CpMapping, LnClass, MappingPair, PlcDirection, PlcProgramDoc, PlcStatementDoc, PlcVarType,
    PlcVariableDoc, PowerComponent, PowerParams, ScadaConfig, ScadaPointConfig, SclKind, SupplementDoc,
    ThresholdEntry, ThresholdUnits, Thresholds,
};
use crate::xml::Element;

/// Publisher of the tie breaker position used by the interlock.
pub const TIE_PUBLISHER: &str = "S1_IED22";
/// R-GOOSE app id of [`TIE_PUBLISHER`]'s position dataset.
pub const TIE_APP_ID: u32 = 0x0C12;
/// Breaker whose position is published.
pub const INTERLOCK_SOURCE_CB: &str = "S1_CBT12";
/// Breaker driven by the interlock in S2.
pub const INTERLOCK_PARTNER_CB: &str = "S2_CBT12";
pub const INTERLOCK_IED: &str = "S2_IED0";
pub const TIE_POS_PATH: &str = "S1_IED22.XCBR1.Pos.stVal";
pub const TRUNK_S1_S2: &str = "T12";
pub const ATTACK_ATTACH: &str = "S2_SW";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleVariant {
    /// Three substations, 45 IEDs, a SCADA gateway and a PLC.
    ThreeSubstations,
    /// One substation with 9 IEDs and a SCADA gateway.
    SingleSubstation,
}

const LINE_TYPE: &str = "243-AL1/39-ST1A 110.0";
const TRAFO_TYPE: &str = "40 MVA 66/11 kV";
const FEEDER_P_MW: f64 = 1.0;
const FEEDER_Q_MVAR: f64 = 0.2;

#[derive(Debug, Clone)]
struct IedPlan {
    name: String,
    /// Component whose V/I/P/Q feed MMXU1.
    meas: String,
    /// Switch behind XCBR1.
    cb: String,
    protections: Vec<ThresholdEntry>,
    publish: Option<Publish>,
}

#[derive(Debug, Clone)]
struct Publish {
    routable: bool,
    app_id: u32,
    /// (lnClass, DO, DA) members, all instance 1.
    members: Vec<(&'static str, &'static str, &'static str)>,
}

#[derive(Debug, Clone)]
struct SubPlan {
    name: String,
    index: u8,
    feeders: usize,
    grid: Option<(String, bool, f64)>,
    ieds: Vec<IedPlan>,
    extra_nodes: Vec<(String, &'static str)>,
    /// Switch names this substation's LAN switch trunks to, with cable ids.
    trunks: Vec<String>,
}

struct Tie {
    a: usize,
    b: usize,
    label: &'static str,
    km: f64,
}

fn lvl(ied: &str, class: LnClass, units: ThresholdUnits, alarm: f64, trip: f64) -> ThresholdEntry {
    ThresholdEntry::new(ied, class, 1, units).with_levels(alarm, trip)
}

fn feeder_protection(ied: &str, ptoc: (f64, f64)) -> Vec<ThresholdEntry> {
    vec![
        lvl(ied, LnClass::Ptoc, ThresholdUnits::A, ptoc.0, ptoc.1),
        lvl(ied, LnClass::Ptov, ThresholdUnits::Pu, 1.05, 1.10),
        lvl(ied, LnClass::Ptuv, ThresholdUnits::Pu, 0.90, 0.85),
    ]
}

fn pos_dataset(app_id: u32) -> Option<Publish> {
    Some(Publish {
        routable: false,
        app_id,
        members: vec![("XCBR", "Pos", "stVal")],
    })
}

fn substation(name: &str, index: u8, feeders: usize, grid: Option<(String, bool, f64)>) -> SubPlan {
    SubPlan {
        name: name.to_string(),
        index,
        feeders,
        grid,
        ieds: Vec::new(),
        extra_nodes: Vec::new(),
        trunks: Vec::new(),
    }
}

/// Feeder and transformer IEDs, numbered from `first`.
fn standard_ieds(s: &mut SubPlan, first: usize) {
    let n = s.name.clone();
    let mut i = first;
    let ied = |i: usize| format!("{n}_IED{i}");
    let name = ied(i);
    s.ieds.push(IedPlan {
        protections: feeder_protection(&name, (400.0, 600.0)),
        name,
        meas: format!("{n}_TR1"),
        cb: format!("{n}_CBTR"),
        publish: pos_dataset(u32::from(s.index) << 8 | 0xF0),
    });
    i += 1;
    for f in 0..s.feeders {
        let name = ied(i);
        s.ieds.push(IedPlan {
            protections: feeder_protection(&name, (200.0, 300.0)),
            name,
            meas: format!("{n}_L{f}"),
            cb: format!("{n}_CBF{f}"),
            publish: pos_dataset(u32::from(s.index) << 8 | f as u32),
        });
        i += 1;
    }
}

fn plan(variant: SampleVariant) -> (Vec<SubPlan>, Vec<Tie>) {
    match variant {
        SampleVariant::SingleSubstation => {
            let mut s1 = substation("S1", 1, 8, Some(("Grid1".into(), true, 0.0)));
            standard_ieds(&mut s1, 0);
            s1.extra_nodes.push(("SCADA".into(), "gateway"));
            (vec![s1], Vec::new())
        }
        SampleVariant::ThreeSubstations => {
            let mut s1 = substation("S1", 1, 21, Some(("Grid1".into(), true, 0.0)));
            standard_ieds(&mut s1, 0);
            // Tie 1-2, line end.
            let mut p = vec![
                ThresholdEntry {
                    zone_impedance_ohm: Some(20.0),
                    pickup_a: Some(50.0),
                    ..lvl(TIE_PUBLISHER, LnClass::Pdis, ThresholdUnits::Ohm, 30.0, 20.0)
                },
                ThresholdEntry {
                    partner: Some("S2_IED0.MMXU1.A.phsA.cVal.mag.f".parse().expect("valid path")),
                    ..lvl(TIE_PUBLISHER, LnClass::Pdif, ThresholdUnits::A, 30.0, 60.0)
                },
            ];
            p[0].monitored = vec![
                "S1_IED22.MMXU1.PhV.phsA.cVal.mag.f".parse().expect("valid path"),
                "S1_IED22.MMXU1.A.phsA.cVal.mag.f".parse().expect("valid path"),
            ];
            s1.ieds.push(IedPlan {
                name: TIE_PUBLISHER.into(),
                meas: "Line12".into(),
                cb: INTERLOCK_SOURCE_CB.into(),
                protections: p,
                publish: Some(Publish {
                    routable: true,
                    app_id: TIE_APP_ID,
                    members: vec![("XCBR", "Pos", "stVal")],
                }),
            });

            let mut s2 = substation("S2", 2, 8, None);
            s2.ieds.push(IedPlan {
                name: INTERLOCK_IED.into(),
                meas: INTERLOCK_PARTNER_CB.into(),
                cb: INTERLOCK_PARTNER_CB.into(),
                protections: vec![ThresholdEntry {
                    partner: Some(TIE_POS_PATH.parse().expect("valid path")),
                    ..ThresholdEntry::new(INTERLOCK_IED, LnClass::Cilo, 1, ThresholdUnits::Pu)
                }],
                publish: Some(Publish {
                    routable: true,
                    app_id: 0x0C21,
                    members: vec![("XCBR", "Pos", "stVal"), ("MMXU", "A", "phsA.cVal.mag.f")],
                }),
            });
            standard_ieds(&mut s2, 1);
            // Tie 2-3, line end, inserted after the transformer IED.
            let mut tie23 = IedPlan {
                name: String::new(),
                meas: "Line23".into(),
                cb: "S2_CBT23".into(),
                protections: Vec::new(),
                publish: pos_dataset(0x0C23),
            };
            renumber_insert(&mut s2, 2, &mut tie23, |name| {
                vec![
                    ThresholdEntry {
                        zone_impedance_ohm: Some(20.0),
                        pickup_a: Some(50.0),
                        ..lvl(name, LnClass::Pdis, ThresholdUnits::Ohm, 30.0, 20.0)
                    },
                    lvl(name, LnClass::Ptov, ThresholdUnits::Pu, 1.05, 1.10),
                ]
            });

            let mut s3 = substation("S3", 3, 9, Some(("Grid2".into(), false, 5.0)));
            s3.ieds.push(IedPlan {
                name: "S3_IED0".into(),
                meas: "S3_CBT23".into(),
                cb: "S3_CBT23".into(),
                protections: vec![
                    lvl("S3_IED0", LnClass::Ptov, ThresholdUnits::Pu, 1.05, 1.10),
                    lvl("S3_IED0", LnClass::Ptuv, ThresholdUnits::Pu, 0.90, 0.85),
                ],
                publish: pos_dataset(0x0C32),
            });
            standard_ieds(&mut s3, 1);

            s1.trunks.push(TRUNK_S1_S2.into());
            s2.trunks.push(TRUNK_S1_S2.into());
            s2.trunks.push("T23".into());
            s3.trunks.push("T23".into());
            s1.extra_nodes.push(("SCADA".into(), "gateway"));
            s2.extra_nodes.push(("S2_PLC".into(), "plc"));
            let ties = vec![
                Tie {
                    a: 0,
                    b: 1,
                    label: "12",
                    km: 12.0,
                },
                Tie {
                    a: 1,
                    b: 2,
                    label: "23",
                    km: 15.0,
                },
            ];
            (vec![s1, s2, s3], ties)
        }
    }
}

/// Insert `ied` at position `at`, renaming IEDs so numbering stays dense.
fn renumber_insert(s: &mut SubPlan, at: usize, ied: &mut IedPlan, protections: impl Fn(&str) -> Vec<ThresholdEntry>) {
    s.ieds.insert(at, ied.clone());
    for (i, p) in s.ieds.iter_mut().enumerate() {
        let name = format!("{}_IED{i}", s.name);
        if p.name != name {
            for e in &mut p.protections {
                e.ied = name.clone();
            }
            p.name = name;
        }
    }
    let name = s.ieds[at].name.clone();
    s.ieds[at].protections = protections(&name);
    ied.name = name;
}

// ---------------------------------------------------------------------------
// SCL construction

fn node(path: &str) -> Element {
    let name = path.rsplit('/').next().unwrap_or(path);
    Element::new("ConnectivityNode").with_attr("name", name).with_attr("pathName", path)
}

fn terminal(cn: &str) -> Element {
    Element::new("Terminal").with_attr("connectivityNode", cn)
}

fn equipment(name: &str, ty: &str, terminals: &[&str]) -> Element {
    let mut el = Element::new("ConductingEquipment").with_attr("name", name).with_attr("type", ty);
    for t in terminals {
        el.push(terminal(t));
    }
    el
}

fn voltage_level(name: &str, kv: f64) -> Element {
    Element::new("VoltageLevel")
        .with_attr("name", name)
        .with_attr("numPhases", 3)
        .with_attr("nomFreq", 50)
        .with_child(Element::new("Voltage").with_attr("unit", "V").with_attr("multiplier", "k").with_text(kv.to_string()))
}

fn scl(id: &str) -> Element {
    Element::new("SCL")
        .with_attr("xmlns", "http://www.iec.ch/61850/2003/SCL")
        .with_child(Element::new("Header").with_attr("id", id).with_attr("version", "1"))
}

fn hv_bus(s: &str) -> String {
    format!("{s}/HV/BB/N")
}

fn mv_bus(s: &str) -> String {
    format!("{s}/MV/BB/N")
}

fn tie_node(s: &str, label: &str) -> String {
    format!("{s}/HV/T{label}/N")
}

fn ssd(s: &SubPlan) -> Element {
    let n = &s.name;
    let mut hv = voltage_level("HV", 66.0);
    hv.push(Element::new("Bay").with_attr("name", "BB").with_child(node(&hv_bus(n))));
    if let Some((g, _, _)) = &s.grid {
        hv.push(Element::new("Bay").with_attr("name", "G").with_child(equipment(g, "GEN", &[&hv_bus(n)])));
    }
    let tr_node = format!("{n}/HV/TR/N");
    hv.push(
        Element::new("Bay")
            .with_attr("name", "TR")
            .with_child(node(&tr_node))
            .with_child(equipment(&format!("{n}_CBTR"), "CBR", &[&hv_bus(n), &tr_node]))
            .with_child(
                Element::new("PowerTransformer")
                    .with_attr("name", format!("{n}_TR1"))
                    .with_attr("type", "PTR")
                    .with_child(
                        Element::new("TransformerWinding")
                            .with_attr("name", "W1")
                            .with_attr("type", "PTW")
                            .with_child(terminal(&tr_node).with_attr("voltageLevelName", "HV")),
                    )
                    .with_child(
                        Element::new("TransformerWinding")
                            .with_attr("name", "W2")
                            .with_attr("type", "PTW")
                            .with_child(terminal(&mv_bus(n)).with_attr("voltageLevelName", "MV")),
                    ),
            ),
    );
    let mut mv = voltage_level("MV", 11.0);
    mv.push(Element::new("Bay").with_attr("name", "BB").with_child(node(&mv_bus(n))));
    for f in 0..s.feeders {
        let fnode = format!("{n}/MV/F{f}/N");
        mv.push(
            Element::new("Bay")
                .with_attr("name", format!("F{f}"))
                .with_child(node(&fnode))
                .with_child(equipment(&format!("{n}_CBF{f}"), "CBR", &[&mv_bus(n), &fnode]))
                .with_child(equipment(&format!("{n}_L{f}"), "IFL", &[&fnode])),
        );
    }
    scl(n).with_child(Element::new("Substation").with_attr("name", n).with_child(hv).with_child(mv))
}

fn sed(a: &SubPlan, b: &SubPlan, tie: &Tie) -> Element {
    let (na, nb, l) = (&a.name, &b.name, tie.label);
    let side = |s: &str, with_line: bool| {
        let mut bay = Element::new("Bay")
            .with_attr("name", format!("T{l}"))
            .with_child(node(&tie_node(s, l)))
            .with_child(equipment(&format!("{s}_CBT{l}"), "CBR", &[&hv_bus(s), &tie_node(s, l)]));
        if with_line {
            bay.push(equipment(&format!("Line{l}"), "LIN", &[&tie_node(na, l), &tie_node(nb, l)]));
        }
        Element::new("Substation")
            .with_attr("name", s)
            .with_child(voltage_level("HV", 66.0).with_child(bay))
    };
    scl(&format!("Tie{l}")).with_child(side(na, true)).with_child(side(nb, false))
}

fn templates() -> Element {
    let da = |name: &str, btype: &str, ty: Option<&str>, fc: &str| {
        let mut e = Element::new("DA").with_attr("name", name).with_attr("bType", btype).with_attr("fc", fc);
        if let Some(t) = ty {
            e.set_attr("type", t);
        }
        e
    };
    let dot = |id: &str, cdc: &str, children: Vec<Element>| {
        let mut e = Element::new("DOType").with_attr("id", id).with_attr("cdc", cdc);
        for c in children {
            e.push(c);
        }
        e
    };
    let lnt = |id: &str, class: &str, dos: &[(&str, &str)]| {
        let mut e = Element::new("LNodeType").with_attr("id", id).with_attr("lnClass", class);
        for (n, t) in dos {
            e.push(Element::new("DO").with_attr("name", *n).with_attr("type", *t));
        }
        e
    };
    let sdo = |n: &str| Element::new("SDO").with_attr("name", n).with_attr("type", "CMV_T");
    let prot = [("Beh", "INS_T"), ("Str", "ACD_T"), ("Op", "ACT_T")];
    Element::new("DataTypeTemplates")
        .with_child(lnt("LLN0_T", "LLN0", &[("Beh", "INS_T")]))
        .with_child(lnt(
            "MMXU_T",
            "MMXU",
            &[("Beh", "INS_T"), ("PhV", "WYE_T"), ("A", "WYE_T"), ("TotW", "MV_T"), ("TotVAr", "MV_T")],
        ))
        .with_child(lnt("XCBR_T", "XCBR", &[("Beh", "INS_T"), ("Pos", "DPC_T")]))
        .with_child(lnt("PTOC_T", "PTOC", &prot))
        .with_child(lnt("PTOV_T", "PTOV", &prot))
        .with_child(lnt("PTUV_T", "PTUV", &prot))
        .with_child(lnt("PDIF_T", "PDIF", &prot))
        .with_child(lnt("PDIS_T", "PDIS", &prot))
        .with_child(lnt("CILO_T", "CILO", &[("Beh", "INS_T"), ("EnaOpn", "SPS_T"), ("EnaCls", "SPS_T")]))
        .with_child(dot("INS_T", "INS", vec![da("stVal", "INT32", None, "ST")]))
        .with_child(dot("SPS_T", "SPS", vec![da("stVal", "BOOLEAN", None, "ST")]))
        .with_child(dot("ACD_T", "ACD", vec![da("general", "BOOLEAN", None, "ST")]))
        .with_child(dot("ACT_T", "ACT", vec![da("general", "BOOLEAN", None, "ST")]))
        .with_child(dot(
            "DPC_T",
            "DPC",
            vec![da("stVal", "BOOLEAN", None, "ST"), da("ctlVal", "BOOLEAN", None, "CO")],
        ))
        .with_child(dot("WYE_T", "WYE", vec![sdo("phsA"), sdo("phsB"), sdo("phsC")]))
        .with_child(dot("CMV_T", "CMV", vec![da("cVal", "Struct", Some("Vector_T"), "MX")]))
        .with_child(dot("MV_T", "MV", vec![da("mag", "Struct", Some("AV_T"), "MX")]))
        .with_child(
            Element::new("DAType")
                .with_attr("id", "Vector_T")
                .with_child(Element::new("BDA").with_attr("name", "mag").with_attr("bType", "Struct").with_attr("type", "AV_T")),
        )
        .with_child(
            Element::new("DAType")
                .with_attr("id", "AV_T")
                .with_child(Element::new("BDA").with_attr("name", "f").with_attr("bType", "FLOAT32")),
        )
}

fn ied_section(p: &IedPlan) -> Element {
    let mut ln0 = Element::new("LN0").with_attr("lnClass", "LLN0").with_attr("inst", "").with_attr("lnType", "LLN0_T");
    if let Some(pb) = &p.publish {
        let mut ds = Element::new("DataSet").with_attr("name", "DS_POS");
        for (class, d, a) in &pb.members {
            ds.push(
                Element::new("FCDA")
                    .with_attr("ldInst", "LD0")
                    .with_attr("lnClass", *class)
                    .with_attr("lnInst", "1")
                    .with_attr("doName", *d)
                    .with_attr("daName", *a)
                    .with_attr("fc", if *class == "MMXU" { "MX" } else { "ST" }),
            );
        }
        ln0.push(ds);
        ln0.push(
            Element::new("GSEControl")
                .with_attr("name", "GC1")
                .with_attr("datSet", "DS_POS")
                .with_attr("appID", format!("0x{:04X}", pb.app_id))
                .with_attr("type", if pb.routable { "RGOOSE" } else { "GOOSE" }),
        );
    }
    let ln = |class: &str| {
        Element::new("LN")
            .with_attr("lnClass", class)
            .with_attr("inst", "1")
            .with_attr("lnType", format!("{class}_T"))
    };
    let mut ld = Element::new("LDevice").with_attr("inst", "LD0").with_child(ln0).with_child(ln("MMXU")).with_child(ln("XCBR"));
    for e in &p.protections {
        ld.push(ln(e.ln_class.as_str()));
    }
    Element::new("IED")
        .with_attr("name", &p.name)
        .with_attr("type", "ProtectionRelay")
        .with_attr("manufacturer", "sgcr")
        .with_child(
            Element::new("AccessPoint")
                .with_attr("name", "AP1")
                .with_child(Element::new("Server").with_child(ld)),
        )
}

fn connected_ap(ied: &str, ip: Option<String>, cables: &[String]) -> Element {
    let p = |ty: &str, v: &str| Element::new("P").with_attr("type", ty).with_text(v);
    let mut ap = Element::new("ConnectedAP").with_attr("iedName", ied).with_attr("apName", "AP1");
    if let Some(ip) = ip {
        ap.push(Element::new("Address").with_child(p("IP", &ip)).with_child(p("IP-SUBNET", "255.255.0.0")));
    }
    for (i, c) in cables.iter().enumerate() {
        ap.push(
            Element::new("PhysConn")
                .with_attr("type", "Connection")
                .with_child(p("Port", &format!("P{}", i + 1)))
                .with_child(p("Cable", c)),
        );
    }
    ap
}

fn scd(s: &SubPlan) -> Element {
    let n = &s.name;
    let ip = |host: usize| Some(format!("10.0.{}.{}", s.index, host));
    let switch = format!("{n}_SW");
    let mut lan = Element::new("SubNetwork").with_attr("name", format!("{n}_LAN")).with_attr("type", "8-MMS");
    let mut switch_cables = Vec::new();
    for (i, p) in s.ieds.iter().enumerate() {
        let cable = format!("{n}_C{i}");
        lan.push(connected_ap(&p.name, ip(10 + i), std::slice::from_ref(&cable)));
        switch_cables.push(cable);
    }
    for (i, (extra, _)) in s.extra_nodes.iter().enumerate() {
        let cable = format!("{n}_CX{i}");
        lan.push(connected_ap(extra, ip(200 + i), std::slice::from_ref(&cable)));
        switch_cables.push(cable);
    }
    switch_cables.extend(s.trunks.iter().cloned());
    lan.push(connected_ap(&switch, None, &switch_cables));
    let mut doc = scl(&format!("{n}_SCD")).with_child(Element::new("Communication").with_child(lan));
    for p in &s.ieds {
        doc.push(ied_section(p));
    }
    for (extra, ty) in &s.extra_nodes {
        doc.push(Element::new("IED").with_attr("name", extra).with_attr("type", *ty));
    }
    doc.push(templates());
    doc
}

// ---------------------------------------------------------------------------
// Supplements

fn load_profile(n_steps: usize, phase: usize) -> Vec<f64> {
    (0..n_steps)
        .map(|t| {
            let k = ((t + phase) % 20) as f64;
            let tri = if k < 10.0 { k } else { 20.0 - k };
            0.9 + 0.02 * tri
        })
        .collect()
}

fn power_params(subs: &[SubPlan], ties: &[Tie], n_steps: usize) -> PowerParams {
    let mut c = Vec::new();
    let closed = |name: String| PowerComponent {
        component_ref: name,
        closed: Some(true),
        ..Default::default()
    };
    for s in subs {
        let n = &s.name;
        if let Some((g, slack, p)) = &s.grid {
            c.push(PowerComponent {
                component_ref: g.clone(),
                p_mw: (!*slack).then_some(*p),
                vm_pu: Some(1.0),
                slack: Some(*slack),
                ..Default::default()
            });
        }
        c.push(closed(format!("{n}_CBTR")));
        c.push(PowerComponent {
            component_ref: format!("{n}_TR1"),
            std_type: Some(TRAFO_TYPE.into()),
            ..Default::default()
        });
        for f in 0..s.feeders {
            c.push(closed(format!("{n}_CBF{f}")));
            c.push(PowerComponent {
                component_ref: format!("{n}_L{f}"),
                p_mw: Some(FEEDER_P_MW),
                q_mvar: Some(FEEDER_Q_MVAR),
                data_sequence: Some(load_profile(n_steps, f + usize::from(s.index) * 7)),
                ..Default::default()
            });
        }
    }
    for t in ties {
        c.push(closed(format!("{}_CBT{}", subs[t.a].name, t.label)));
        c.push(closed(format!("{}_CBT{}", subs[t.b].name, t.label)));
        c.push(PowerComponent {
            component_ref: format!("Line{}", t.label),
            length_km: Some(t.km),
            std_type: Some(LINE_TYPE.into()),
            ..Default::default()
        });
    }
    PowerParams {
        base_mva: Some(100.0),
        components: c,
    }
}

fn mapping(subs: &[SubPlan]) -> CpMapping {
    let mut pairs = Vec::new();
    for p in subs.iter().flat_map(|s| &s.ieds) {
        let mut pair = |physical: String, attr: String| {
            pairs.push(MappingPair {
                physical_path: physical,
                attribute_path: attr.parse().expect("generated path is valid"),
            })
        };
        for ph in crate::store::PHASES {
            pair(format!("{}.Voltage.{ph}", p.meas), format!("{}.MMXU1.PhV.{ph}.cVal.mag.f", p.name));
        }
        for ph in crate::store::PHASES {
            pair(format!("{}.Current.{ph}", p.meas), format!("{}.MMXU1.A.{ph}.cVal.mag.f", p.name));
        }
        pair(format!("{}.P", p.meas), format!("{}.MMXU1.TotW.mag.f", p.name));
        pair(format!("{}.Q", p.meas), format!("{}.MMXU1.TotVAr.mag.f", p.name));
        pair(format!("{}.Pos", p.cb), format!("{}.XCBR1.Pos.stVal", p.name));
    }
    CpMapping { pairs }
}

fn scada(subs: &[SubPlan]) -> ScadaConfig {
    let mut points = Vec::new();
    for p in subs.iter().flat_map(|s| &s.ieds) {
        let path = |s: &str| format!("{}.{s}", p.name).parse().expect("generated path is valid");
        points.push(ScadaPointConfig {
            point_name: format!("{}_V", p.cb),
            attribute_path: path("MMXU1.PhV.phsA.cVal.mag.f"),
            writable: false,
        });
        points.push(ScadaPointConfig {
            point_name: format!("{}_P", p.cb),
            attribute_path: path("MMXU1.TotW.mag.f"),
            writable: false,
        });
        points.push(ScadaPointConfig {
            point_name: p.cb.clone(),
            attribute_path: path("XCBR1.Pos.stVal"),
            writable: true,
        });
    }
    ScadaConfig { points }
}

/// Supervisory PLC in S2: keeps the first S2 feeder closed while its bus is
/// live.
fn plc_program(feeder_ied: &str) -> PlcProgramDoc {
    let var = |name: &str, direction, var_type, binding: String| PlcVariableDoc {
        name: name.into(),
        direction,
        var_type,
        binding: binding.parse().expect("generated path is valid"),
    };
    PlcProgramDoc {
        name: "S2_FEEDER_SUPERVISION".into(),
        node: "S2_PLC".into(),
        scan_interval_ticks: 5,
        variables: vec![
            var("V", PlcDirection::In, PlcVarType::Real, format!("{feeder_ied}.MMXU1.PhV.phsA.cVal.mag.f")),
            var("FEED", PlcDirection::Out, PlcVarType::Bool, format!("{feeder_ied}.XCBR1.Pos.stVal")),
        ],
        statements: vec![PlcStatementDoc {
            target: "FEED".into(),
            expr: "V > 3000.0".into(),
        }],
    }
}

fn parse(el: Element, kind: SclKind) -> crate::scl::SclDocument {
    parse_scl(&el.to_xml(), kind).expect("generated SCL parses")
}

/// Build a sample bundle whose load profiles have `n_steps` entries.
pub fn sample_bundle(variant: SampleVariant, n_steps: usize) -> Bundle {
    let n_steps = n_steps.max(1);
    let (subs, ties) = plan(variant);
    let mut b = Bundle::default();
    for s in &subs {
        b.push_scl(parse(ssd(s), SclKind::Ssd));
    }
    for t in &ties {
        b.push_scl(parse(sed(&subs[t.a], &subs[t.b], t), SclKind::Sed));
    }
    for s in &subs {
        b.push_scl(parse(scd(s), SclKind::Scd));
    }
    b.supplements.push(SupplementDoc::PowerParams(power_params(&subs, &ties, n_steps)));
    b.supplements.push(SupplementDoc::CpMapping(mapping(&subs)));
    let thresholds = Thresholds {
        entries: subs.iter().flat_map(|s| &s.ieds).flat_map(|p| p.protections.clone()).collect(),
    };
    b.supplements.push(SupplementDoc::Thresholds(thresholds));
    b.supplements.push(SupplementDoc::ScadaConfig(scada(&subs)));
    if variant == SampleVariant::ThreeSubstations {
        let feeder = subs[1]
            .ieds
            .iter()
            .find(|p| p.meas.starts_with("S2_L"))
            .expect("S2 has feeders");
        b.supplements.push(SupplementDoc::PlcProgram(plc_program(&feeder.name)));
    }
    b
}

/// The stNum-spoofing attack against the sample's tie interlock.
pub fn sample_fci(tap_tick: u64, spoof: u32) -> AttackScript {
    fci_attack(ATTACK_ATTACH, TRUNK_S1_S2, TIE_APP_ID, TIE_POS_PATH, tap_tick, spoof)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NodeKind;
    use crate::scenario::compile_range;

    #[test]
    fn three_substations_compile() {
        let b = sample_bundle(SampleVariant::ThreeSubstations, 5);
        let spec = compile_range(&b).unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(spec.cyber.count(NodeKind::Ied), 45);
        assert_eq!(spec.ieds.len(), 45);
        assert!(spec.gateway.is_some());
        assert_eq!(spec.plcs.len(), 1);
    }

    #[test]
    fn single_substation_compiles() {
        let b = sample_bundle(SampleVariant::SingleSubstation, 5);
        let spec = compile_range(&b).unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(spec.ieds.len(), 9);
        assert!(spec.gateway.is_some());
        assert!(spec.plcs.is_empty());
    }
}

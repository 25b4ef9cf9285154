//! Bus/branch power network compiled from the merged SSD and PowerParams,
//! plus the per-timestep loop inputs.

mod export;
mod solver;
mod stdtypes;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scl::{EquipmentType, PowerComponent, PowerParams, SclDocument};

pub use export::{network_json, network_to_dot, NetworkExport};
pub use solver::{
    detect_islands, solve_power_flow, BranchResult, BusResult, FlowSolution, InjectionResult,
    IslandMap, SwitchResult, MAX_ITERATIONS, TOLERANCE_PU,
};
pub use stdtypes::{LineType, StdTypes, TransformerType};

pub const DEFAULT_BASE_MVA: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("`{component}` lacks parameter `{parameter}`")]
    MissingParameter { component: String, parameter: String },
    #[error("`{component}` uses unknown std_type `{std_type}`")]
    UnknownStdType { component: String, std_type: String },
    #[error("`{component}` references undeclared connectivity node `{node}`")]
    UnknownBus { component: String, node: String },
    #[error("`{component}`: {reason}")]
    InvalidParameter { component: String, reason: String },
    #[error("island {island} is energized but has no slack candidate")]
    NoSlack { island: usize },
    #[error("no energized island")]
    NoEnergizedIsland,
    #[error("step {step} is outside 0..{n_steps}")]
    StepOutOfRange { step: usize, n_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub nominal_kv: f64,
    pub substation: String,
    pub voltage_level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub name: String,
    pub bus: usize,
    pub rated_p_mw: f64,
    pub p_mw: f64,
    pub vm_pu: f64,
    pub is_slack: bool,
    pub sequence: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub name: String,
    pub bus: usize,
    pub rated_p_mw: f64,
    pub rated_q_mvar: f64,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub sequence: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub name: String,
    pub from_bus: usize,
    pub to_bus: usize,
    pub length_km: f64,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
    pub in_service: bool,
    pub sequence: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub name: String,
    pub hv_bus: usize,
    pub lv_bus: usize,
    pub sn_mva: f64,
    pub vk_percent: f64,
    pub vkr_percent: f64,
    pub in_service: bool,
    pub sequence: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SwitchKind {
    Cbr,
    Dis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub id: String,
    pub bus: usize,
    /// The bus on the other side of the switch.
    pub element_ref: usize,
    pub closed: bool,
    pub kind: SwitchKind,
    /// Position from PowerParams (constant or per-step).
    pub scheduled: bool,
    pub sequence: Option<Vec<f64>>,
    /// Latest position commanded by a device; overrides the schedule.
    pub forced: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub lines: Vec<Line>,
    pub transformers: Vec<Transformer>,
    pub switches: Vec<Switch>,
    pub n_steps: usize,
    pub base_mva: f64,
    /// Step most recently applied, if any.
    pub step: Option<usize>,
}

/// Latest breaker positions commanded by devices through the store.
pub trait SwitchCommands {
    fn commanded(&self, switch_id: &str) -> Option<bool>;
}

/// No device commands.
pub struct NoCommands;

impl SwitchCommands for NoCommands {
    fn commanded(&self, _: &str) -> Option<bool> {
        None
    }
}

impl SwitchCommands for BTreeMap<String, bool> {
    fn commanded(&self, switch_id: &str) -> Option<bool> {
        self.get(switch_id).copied()
    }
}

fn missing(component: &str, parameter: &str) -> PowerError {
    PowerError::MissingParameter {
        component: component.to_string(),
        parameter: parameter.to_string(),
    }
}

fn at_step(seq: &Option<Vec<f64>>, step: usize) -> Option<f64> {
    seq.as_ref().and_then(|s| s.get(step).copied())
}

impl PowerNetwork {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn switch(&self, id: &str) -> Option<&Switch> {
        self.switches.iter().find(|s| s.id == id)
    }

    pub fn switch_mut(&mut self, id: &str) -> Option<&mut Switch> {
        self.switches.iter_mut().find(|s| s.id == id)
    }

    /// Set loads, generation and scheduled positions for `step`, then apply
    /// device-commanded breaker positions from `commands`.
    pub fn apply_timestep(
        &mut self,
        step: usize,
        commands: &dyn SwitchCommands,
    ) -> Result<(), PowerError> {
        if step >= self.n_steps {
            return Err(PowerError::StepOutOfRange {
                step,
                n_steps: self.n_steps,
            });
        }
        for g in &mut self.generators {
            g.p_mw = g.rated_p_mw * at_step(&g.sequence, step).unwrap_or(1.0);
        }
        for l in &mut self.loads {
            let k = at_step(&l.sequence, step).unwrap_or(1.0);
            l.p_mw = l.rated_p_mw * k;
            l.q_mvar = l.rated_q_mvar * k;
        }
        for l in &mut self.lines {
            if let Some(v) = at_step(&l.sequence, step) {
                l.in_service = v >= 0.5;
            }
        }
        for t in &mut self.transformers {
            if let Some(v) = at_step(&t.sequence, step) {
                t.in_service = v >= 0.5;
            }
        }
        for s in &mut self.switches {
            if let Some(v) = at_step(&s.sequence, step) {
                s.scheduled = v >= 0.5;
            }
            if let Some(c) = commands.commanded(&s.id) {
                s.forced = Some(c);
            }
            s.closed = s.forced.unwrap_or(s.scheduled);
        }
        self.step = Some(step);
        Ok(())
    }
}

/// Compile the electrical model of a merged SSD.
pub fn build_power_network(
    ssd: &SclDocument,
    params: &PowerParams,
    std_types: &StdTypes,
) -> Result<PowerNetwork, PowerError> {
    let mut net = PowerNetwork {
        buses: Vec::new(),
        generators: Vec::new(),
        loads: Vec::new(),
        lines: Vec::new(),
        transformers: Vec::new(),
        switches: Vec::new(),
        n_steps: params.n_steps().unwrap_or(1),
        base_mva: params.base_mva.unwrap_or(DEFAULT_BASE_MVA),
        step: None,
    };
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (p, vl, bay) in ssd.bays() {
        for id in &bay.connectivity_nodes {
            if !index.contains_key(id) {
                index.insert(id.clone(), net.buses.len());
                net.buses.push(Bus {
                    id: id.clone(),
                    nominal_kv: vl.nominal_kv,
                    substation: p.name.clone(),
                    voltage_level: vl.name.clone(),
                });
            }
        }
    }
    let bus_of = |component: &str, node: &str| {
        index.get(node).copied().ok_or_else(|| PowerError::UnknownBus {
            component: component.to_string(),
            node: node.to_string(),
        })
    };
    let entry = |name: &str| -> Result<&PowerComponent, PowerError> {
        params.component(name).ok_or_else(|| missing(name, "PowerParams entry"))
    };

    for (_, _, bay) in ssd.bays() {
        for ce in &bay.equipment {
            let name = ce.name.as_str();
            let first_bus = || match ce.terminals.first() {
                Some(t) => bus_of(name, &t.connectivity_node),
                None => Err(missing(name, "terminal")),
            };
            let two_buses = || -> Result<(usize, usize), PowerError> {
                match ce.terminals.as_slice() {
                    [a, b, ..] => Ok((bus_of(name, &a.connectivity_node)?, bus_of(name, &b.connectivity_node)?)),
                    _ => Err(missing(name, "second terminal")),
                }
            };
            match &ce.ce_type {
                EquipmentType::Gen => {
                    let c = entry(name)?;
                    let is_slack = c.slack.unwrap_or(false);
                    let rated = match (c.p_mw, is_slack) {
                        (Some(p), _) => p,
                        (None, true) => 0.0,
                        (None, false) => return Err(missing(name, "p_mw")),
                    };
                    net.generators.push(Generator {
                        name: name.to_string(),
                        bus: first_bus()?,
                        rated_p_mw: rated,
                        p_mw: rated,
                        vm_pu: c.vm_pu.unwrap_or(1.0),
                        is_slack,
                        sequence: c.data_sequence.clone(),
                    });
                }
                EquipmentType::Ifl => {
                    let c = entry(name)?;
                    let p = c.p_mw.ok_or_else(|| missing(name, "p_mw"))?;
                    let q = c.q_mvar.unwrap_or(0.0);
                    net.loads.push(Load {
                        name: name.to_string(),
                        bus: first_bus()?,
                        rated_p_mw: p,
                        rated_q_mvar: q,
                        p_mw: p,
                        q_mvar: q,
                        sequence: c.data_sequence.clone(),
                    });
                }
                EquipmentType::Cbr | EquipmentType::Dis => {
                    let c = entry(name)?;
                    let closed = match (c.closed, &c.data_sequence) {
                        (Some(v), _) => v,
                        (None, Some(seq)) if !seq.is_empty() => seq[0] >= 0.5,
                        _ => return Err(missing(name, "closed")),
                    };
                    let (a, b) = two_buses()?;
                    net.switches.push(Switch {
                        id: name.to_string(),
                        bus: a,
                        element_ref: b,
                        closed,
                        kind: if ce.ce_type == EquipmentType::Cbr {
                            SwitchKind::Cbr
                        } else {
                            SwitchKind::Dis
                        },
                        scheduled: closed,
                        sequence: c.data_sequence.clone(),
                        forced: None,
                    });
                }
                EquipmentType::Cab | EquipmentType::Lin => {
                    let c = entry(name)?;
                    let length_km = c.length_km.ok_or_else(|| missing(name, "length_km"))?;
                    if !(length_km > 0.0) {
                        return Err(PowerError::InvalidParameter {
                            component: name.to_string(),
                            reason: format!("length_km must be positive, got {length_km}"),
                        });
                    }
                    let lt = match (&c.std_type, c.r_ohm_per_km, c.x_ohm_per_km) {
                        (_, Some(r), Some(x)) => LineType {
                            r_ohm_per_km: r,
                            x_ohm_per_km: x,
                        },
                        (Some(t), _, _) => *std_types.line.get(t).ok_or_else(|| {
                            PowerError::UnknownStdType {
                                component: name.to_string(),
                                std_type: t.clone(),
                            }
                        })?,
                        (None, _, _) => return Err(missing(name, "std_type")),
                    };
                    let (a, b) = two_buses()?;
                    if net.buses[a].nominal_kv != net.buses[b].nominal_kv {
                        return Err(PowerError::InvalidParameter {
                            component: name.to_string(),
                            reason: "line ends sit on different nominal voltages".into(),
                        });
                    }
                    net.lines.push(Line {
                        name: name.to_string(),
                        from_bus: a,
                        to_bus: b,
                        length_km,
                        r_ohm_per_km: lt.r_ohm_per_km,
                        x_ohm_per_km: lt.x_ohm_per_km,
                        in_service: c.closed.unwrap_or(true),
                        sequence: c.data_sequence.clone(),
                    });
                }
                EquipmentType::Other(_) => {}
            }
        }
        for tr in &bay.transformers {
            let name = tr.name.as_str();
            let c = entry(name)?;
            let tt = match (&c.std_type, c.sn_mva, c.vk_percent) {
                (_, Some(sn), Some(vk)) => TransformerType {
                    sn_mva: sn,
                    vk_percent: vk,
                    vkr_percent: c.vkr_percent.unwrap_or(0.0),
                },
                (Some(t), _, _) => {
                    *std_types
                        .trafo
                        .get(t)
                        .ok_or_else(|| PowerError::UnknownStdType {
                            component: name.to_string(),
                            std_type: t.clone(),
                        })?
                }
                (None, _, _) => return Err(missing(name, "std_type")),
            };
            if !(tt.sn_mva > 0.0 && tt.vk_percent > 0.0 && tt.vkr_percent <= tt.vk_percent) {
                return Err(PowerError::InvalidParameter {
                    component: name.to_string(),
                    reason: "need sn_mva > 0 and 0 <= vkr_percent <= vk_percent > 0".into(),
                });
            }
            let hv = bus_of(name, &tr.windings[0].terminal.connectivity_node)?;
            let lv = bus_of(name, &tr.windings[1].terminal.connectivity_node)?;
            let (hv, lv) = if net.buses[hv].nominal_kv >= net.buses[lv].nominal_kv {
                (hv, lv)
            } else {
                (lv, hv)
            };
            net.transformers.push(Transformer {
                name: name.to_string(),
                hv_bus: hv,
                lv_bus: lv,
                sn_mva: tt.sn_mva,
                vk_percent: tt.vk_percent,
                vkr_percent: tt.vkr_percent,
                in_service: c.closed.unwrap_or(true),
                sequence: c.data_sequence.clone(),
            });
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scl::{parse_scl, parse_supplement, SclKind, SupplementDoc, SupplementKind};

    const SSD: &str = r#"<SCL><Header id="t"/><Substation name="S"><VoltageLevel name="VL"><Voltage multiplier="k">11</Voltage>
        <Bay name="B"><ConnectivityNode name="N1" pathName="S/VL/B/N1"/><ConnectivityNode name="N2" pathName="S/VL/B/N2"/>
        <ConductingEquipment name="Grid" type="GEN"><Terminal connectivityNode="S/VL/B/N1"/></ConductingEquipment>
        <ConductingEquipment name="Load0" type="IFL"><Terminal connectivityNode="S/VL/B/N2"/></ConductingEquipment>
        <ConductingEquipment name="L1" type="CAB"><Terminal connectivityNode="S/VL/B/N1"/><Terminal connectivityNode="S/VL/B/N2"/></ConductingEquipment>
        </Bay></VoltageLevel></Substation></SCL>"#;

    fn params(extra: &str) -> PowerParams {
        let text = format!(
            r#"<PowerParams>
                <Component component_ref="Grid" slack="true"/>
                <Component component_ref="Load0" p_mw="1.0" q_mvar="0.2" data_sequence="1.0 1.1"/>
                {extra}
            </PowerParams>"#
        );
        match parse_supplement(&text, SupplementKind::PowerParams).unwrap() {
            SupplementDoc::PowerParams(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn table_mapping_two_buses() {
        let ssd = parse_scl(SSD, SclKind::Ssd).unwrap();
        let p = params(r#"<Component component_ref="L1" length_km="2" std_type="NA2XS2Y 1x240"/>"#);
        let net = build_power_network(&ssd, &p, &StdTypes::default()).unwrap();
        assert_eq!(net.buses.len(), 2);
        assert_eq!(net.generators.len(), 1);
        assert!(net.generators[0].is_slack);
        assert_eq!(net.loads.len(), 1);
        assert_eq!(net.lines.len(), 1);
        assert_eq!(net.n_steps, 2);
    }

    #[test]
    fn timestep_scales_load_and_rejects_out_of_range() {
        let ssd = parse_scl(SSD, SclKind::Ssd).unwrap();
        let p = params(r#"<Component component_ref="L1" length_km="2" std_type="NA2XS2Y 1x240"/>"#);
        let mut net = build_power_network(&ssd, &p, &StdTypes::default()).unwrap();
        net.apply_timestep(0, &NoCommands).unwrap();
        assert_eq!(net.loads[0].p_mw, 1.0);
        net.apply_timestep(1, &NoCommands).unwrap();
        assert!((net.loads[0].p_mw - 1.1).abs() < 1e-12);
        assert_eq!(
            net.apply_timestep(2, &NoCommands),
            Err(PowerError::StepOutOfRange { step: 2, n_steps: 2 })
        );
    }

    #[test]
    fn unknown_std_type() {
        let ssd = parse_scl(SSD, SclKind::Ssd).unwrap();
        let p = params(r#"<Component component_ref="L1" length_km="2" std_type="nope"/>"#);
        let err = build_power_network(&ssd, &p, &StdTypes::default()).unwrap_err();
        assert!(matches!(err, PowerError::UnknownStdType { .. }));
    }

    #[test]
    fn missing_line_entry() {
        let ssd = parse_scl(SSD, SclKind::Ssd).unwrap();
        let err = build_power_network(&ssd, &params(""), &StdTypes::default()).unwrap_err();
        assert_eq!(err, missing("L1", "PowerParams entry"));
    }
}

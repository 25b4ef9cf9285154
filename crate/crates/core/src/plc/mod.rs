//! PLC actor executing a structured-statement program.
//!
//! A scan has two halves around network processing: [`PlcRuntime::begin_scan`]
//! sends read requests for every bound variable, replies arrive through
//! [`PlcRuntime::handle_frame`], and [`PlcRuntime::finish_scan`] evaluates the
//! statements and sends write requests for changed outputs. The PLC never
//! touches the store directly.

mod expr;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ied::{Request, RequestOp, Response};
use crate::net::{frame_json, unframe_json, Destination, Frame, FrameKind};
use crate::scl::{AttributePath, PlcDirection, PlcProgramDoc, PlcVarType};
use crate::store::Value;

pub use expr::{parse_expr, BinOp, Expr, TypeCheckError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlcError {
    #[error("program {program}: unbound variable `{var}`")]
    UnboundVariable { program: String, var: String },
    #[error("program {program}: {message}")]
    TypeError { program: String, message: String },
    #[error("program {program}: cannot parse `{expr}`: {message}")]
    Syntax {
        program: String,
        expr: String,
        message: String,
    },
    #[error("program {program}: output `{var}` assigned more than once")]
    MultipleAssignment { program: String, var: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlcVariable {
    pub name: String,
    pub direction: PlcDirection,
    pub var_type: PlcVarType,
    pub binding: AttributePath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlcStatement {
    pub target: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlcProgram {
    pub name: String,
    pub node: String,
    pub scan_interval_ticks: u32,
    pub variables: Vec<PlcVariable>,
    pub statements: Vec<PlcStatement>,
}

impl PlcProgram {
    pub fn variable(&self, name: &str) -> Option<&PlcVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn count(&self, dir: PlcDirection) -> usize {
        self.variables.iter().filter(|v| v.direction == dir).count()
    }
}

/// Parse and type-check a program. `binding_exists` decides whether a bound
/// attribute path exists in the range.
pub fn load_program(
    doc: &PlcProgramDoc,
    binding_exists: impl Fn(&AttributePath) -> bool,
) -> Result<PlcProgram, PlcError> {
    let program = doc.name.clone();
    let mut types = BTreeMap::new();
    for v in &doc.variables {
        if !binding_exists(&v.binding) {
            return Err(PlcError::UnboundVariable {
                program,
                var: format!("{} (binding {})", v.name, v.binding),
            });
        }
        types.insert(v.name.clone(), v.var_type);
    }
    let mut assigned = std::collections::BTreeSet::new();
    let mut statements = Vec::new();
    for s in &doc.statements {
        let Some(target) = doc.variables.iter().find(|v| v.name == s.target) else {
            return Err(PlcError::UnboundVariable {
                program,
                var: s.target.clone(),
            });
        };
        if target.direction != PlcDirection::Out {
            return Err(PlcError::TypeError {
                program,
                message: format!("`{}` is an input and cannot be assigned", s.target),
            });
        }
        if !assigned.insert(s.target.clone()) {
            return Err(PlcError::MultipleAssignment {
                program,
                var: s.target.clone(),
            });
        }
        let e = parse_expr(&s.expr).map_err(|message| PlcError::Syntax {
            program: program.clone(),
            expr: s.expr.clone(),
            message,
        })?;
        let t = e.type_of(&types).map_err(|err| match err {
            TypeCheckError::Unbound(var) => PlcError::UnboundVariable {
                program: program.clone(),
                var,
            },
            TypeCheckError::Mismatch(message) => PlcError::TypeError {
                program: program.clone(),
                message,
            },
        })?;
        if t != target.var_type {
            return Err(PlcError::TypeError {
                program,
                message: format!("`{}` is {:?} but its expression is {t:?}", s.target, target.var_type),
            });
        }
        statements.push(PlcStatement {
            target: s.target.clone(),
            expr: e,
        });
    }
    Ok(PlcProgram {
        name: program,
        node: doc.node.clone(),
        scan_interval_ticks: doc.scan_interval_ticks,
        variables: doc
            .variables
            .iter()
            .map(|v| PlcVariable {
                name: v.name.clone(),
                direction: v.direction,
                var_type: v.var_type,
                binding: v.binding.clone(),
            })
            .collect(),
        statements,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlcAction {
    Write { var: String, path: String, value: Value },
    WriteFailed { var: String, path: String },
    StaleInput { var: String },
    Warning { message: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlcOutput {
    pub actions: Vec<PlcAction>,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputQuality {
    Good,
    Stale,
}

#[derive(Debug, Clone, PartialEq)]
enum Outstanding {
    Read(String),
    Write(String),
}

#[derive(Debug, Clone)]
pub struct PlcRuntime {
    pub program: PlcProgram,
    pub address: Option<Ipv4Addr>,
    /// Last known value of every variable (inputs read, outputs read back).
    pub values: BTreeMap<String, (Value, InputQuality)>,
    last_computed: BTreeMap<String, Value>,
    outstanding: BTreeMap<u64, Outstanding>,
    fresh: BTreeMap<String, bool>,
    next_id: u64,
    scanning: bool,
}

impl PlcRuntime {
    pub fn new(program: PlcProgram) -> Self {
        PlcRuntime {
            program,
            address: None,
            values: BTreeMap::new(),
            last_computed: BTreeMap::new(),
            outstanding: BTreeMap::new(),
            fresh: BTreeMap::new(),
            next_id: 1,
            scanning: false,
        }
    }

    pub fn node(&self) -> &str {
        &self.program.node
    }

    fn request(&mut self, to: Ipv4Addr, op: RequestOp, path: &AttributePath, value: Option<Value>) -> (u64, Frame) {
        let id = self.next_id;
        self.next_id += 1;
        let req = Request {
            id,
            op,
            path: path.to_string(),
            value,
        };
        let frame = Frame {
            kind: FrameKind::TcpSegment,
            src: self.program.node.clone(),
            src_ip: self.address,
            dst: Destination::Unicast(to),
            app_id: 0,
            payload: frame_json(&req),
            injected_by: None,
        };
        (id, frame)
    }

    /// Start a scan if `tick` is due: request every bound variable.
    pub fn begin_scan(&mut self, tick: u64, address_of: impl Fn(&str) -> Option<Ipv4Addr>) -> PlcOutput {
        let mut out = PlcOutput::default();
        if !tick.is_multiple_of(u64::from(self.program.scan_interval_ticks.max(1))) {
            return out;
        }
        self.scanning = true;
        self.fresh.clear();
        self.outstanding.clear();
        let vars: Vec<(String, AttributePath)> = self
            .program
            .variables
            .iter()
            .map(|v| (v.name.clone(), v.binding.clone()))
            .collect();
        for (name, binding) in vars {
            match address_of(binding.ied()) {
                Some(ip) => {
                    let (id, f) = self.request(ip, RequestOp::Read, &binding, None);
                    self.outstanding.insert(id, Outstanding::Read(name));
                    out.frames.push(f);
                }
                None => out.actions.push(PlcAction::Warning {
                    message: format!("no address for {}", binding.ied()),
                }),
            }
        }
        out
    }

    /// Mark a request as undeliverable (the network refused to route it).
    pub fn request_failed(&mut self, frame: &Frame) {
        if let Ok(req) = unframe_json::<Request>(&frame.payload) {
            self.outstanding.remove(&req.id);
        }
    }

    pub fn handle_frame(&mut self, frame: &Frame) -> PlcOutput {
        let mut out = PlcOutput::default();
        let Ok(resp) = unframe_json::<Response>(&frame.payload) else {
            out.actions.push(PlcAction::Warning {
                message: format!("undecodable reply from {}", frame.src),
            });
            return out;
        };
        match self.outstanding.remove(&resp.id) {
            Some(Outstanding::Read(var)) => {
                if let (true, Some(v)) = (resp.ok, resp.value) {
                    self.values.insert(var.clone(), (v, InputQuality::Good));
                    self.fresh.insert(var, true);
                }
            }
            Some(Outstanding::Write(var)) if !resp.ok => {
                let path = self.program.variable(&var).map(|v| v.binding.to_string()).unwrap_or_default();
                out.actions.push(PlcAction::WriteFailed { var, path });
            }
            _ => {}
        }
        out
    }

    /// Evaluate statements and write changed outputs.
    pub fn finish_scan(&mut self, address_of: impl Fn(&str) -> Option<Ipv4Addr>) -> PlcOutput {
        let mut out = PlcOutput::default();
        if !self.scanning {
            return out;
        }
        self.scanning = false;
        self.outstanding.retain(|_, o| matches!(o, Outstanding::Write(_)));
        for v in &self.program.variables {
            if self.fresh.get(&v.name).copied().unwrap_or(false) {
                continue;
            }
            if let Some((_, q)) = self.values.get_mut(&v.name) {
                *q = InputQuality::Stale;
            }
            if v.direction == PlcDirection::In {
                out.actions.push(PlcAction::StaleInput { var: v.name.clone() });
            }
        }
        let mut env: BTreeMap<String, f64> = self.values.iter().map(|(k, (v, _))| (k.clone(), v.as_f64())).collect();
        let statements = self.program.statements.clone();
        for s in &statements {
            let var = self.program.variable(&s.target).expect("checked at load").clone();
            // Without a current reading of every input, hold the output.
            let inputs_known = self
                .program
                .variables
                .iter()
                .filter(|v| v.direction == PlcDirection::In)
                .all(|v| self.values.contains_key(&v.name));
            if !inputs_known {
                continue;
            }
            let x = s.expr.eval(&env);
            env.insert(s.target.clone(), x);
            let value = match var.var_type {
                PlcVarType::Bool => Value::Bool(x >= 0.5),
                PlcVarType::Real => Value::Real(x),
            };
            let previous = self
                .last_computed
                .get(&s.target)
                .copied()
                .or_else(|| self.values.get(&s.target).map(|(v, _)| *v));
            self.last_computed.insert(s.target.clone(), value);
            if previous.is_some_and(|p| p == value || (p.as_f64() - value.as_f64()).abs() == 0.0) {
                continue;
            }
            match address_of(var.binding.ied()) {
                Some(ip) => {
                    let (id, f) = self.request(ip, RequestOp::Write, &var.binding, Some(value));
                    self.outstanding.insert(id, Outstanding::Write(var.name.clone()));
                    out.frames.push(f);
                    out.actions.push(PlcAction::Write {
                        var: var.name.clone(),
                        path: var.binding.to_string(),
                        value,
                    });
                }
                None => out.actions.push(PlcAction::WriteFailed {
                    var: var.name.clone(),
                    path: var.binding.to_string(),
                }),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scl::{PlcStatementDoc, PlcVariableDoc};

    fn doc(expr: &str) -> PlcProgramDoc {
        PlcProgramDoc {
            name: "interlock".into(),
            node: "PLC1".into(),
            scan_interval_ticks: 1,
            variables: vec![
                PlcVariableDoc {
                    name: "P".into(),
                    direction: PlcDirection::In,
                    var_type: PlcVarType::Bool,
                    binding: "S1_IED22.XCBR1.Pos".parse().unwrap(),
                },
                PlcVariableDoc {
                    name: "S2".into(),
                    direction: PlcDirection::Out,
                    var_type: PlcVarType::Bool,
                    binding: "S2_IED0.XCBR1.Pos".parse().unwrap(),
                },
            ],
            statements: vec![PlcStatementDoc {
                target: "S2".into(),
                expr: expr.into(),
            }],
        }
    }

    #[test]
    fn mirror_program_loads() {
        let p = load_program(&doc("P"), |_| true).unwrap();
        assert_eq!((p.count(PlcDirection::In), p.count(PlcDirection::Out)), (1, 1));
        assert!(matches!(load_program(&doc("P and 3"), |_| true), Err(PlcError::TypeError { .. })));
        assert!(matches!(load_program(&doc("P"), |_| false), Err(PlcError::UnboundVariable { .. })));
    }

    fn reply(rt: &PlcRuntime, req_frame: &Frame, value: Value) -> Frame {
        let req: Request = unframe_json(&req_frame.payload).unwrap();
        Frame {
            kind: FrameKind::TcpSegment,
            src: "IED".into(),
            src_ip: None,
            dst: Destination::Unicast(rt.address.unwrap()),
            app_id: 0,
            payload: frame_json(&Response::ok(req.id, Some(value))),
            injected_by: None,
        }
    }

    fn scan(rt: &mut PlcRuntime, tick: u64, p: Option<bool>, s2: Option<bool>) -> PlcOutput {
        let addr = |_: &str| Some(Ipv4Addr::new(10, 0, 0, 9));
        let begin = rt.begin_scan(tick, addr);
        for f in &begin.frames {
            let req: Request = unframe_json(&f.payload).unwrap();
            let v = if req.path.starts_with("S1") { p } else { s2 };
            if let Some(v) = v {
                let r = reply(rt, f, Value::Bool(v));
                rt.handle_frame(&r);
            }
        }
        rt.finish_scan(addr)
    }

    #[test]
    fn writes_only_on_change_and_survives_stale_input() {
        let mut rt = PlcRuntime::new(load_program(&doc("P"), |_| true).unwrap());
        rt.address = Some(Ipv4Addr::new(10, 0, 0, 1));
        assert!(scan(&mut rt, 0, Some(true), Some(true)).frames.is_empty());
        assert!(scan(&mut rt, 1, Some(true), Some(true)).frames.is_empty());
        let out = scan(&mut rt, 2, Some(false), Some(true));
        assert_eq!(out.frames.len(), 1);
        assert!(matches!(out.actions[0], PlcAction::Write { value: Value::Bool(false), .. }));
        let out = scan(&mut rt, 3, None, Some(false));
        assert!(out.frames.is_empty());
        assert!(out.actions.iter().any(|a| matches!(a, PlcAction::StaleInput { .. })));
        assert_eq!(rt.values["P"].1, InputQuality::Stale);
    }
}

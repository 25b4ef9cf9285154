//! Attack scripts: an attacker node, a timed sequence of steps, and the
//! runtime that executes them against the network and the store.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ied::{GooseEntry, GooseMessage};
use crate::net::{Frame, NetEmulator, TapHandle, TapScope};
use crate::store::{Actor, SimStore, Value};
use crate::xml::{self, Element};

use super::runlog::AttackEvent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("attack script: {0}")]
    Parse(String),
}

fn perr(m: impl Into<String>) -> AttackError {
    AttackError::Parse(m.into())
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackStep {
    /// Start copying frames seen on a link or node.
    Tap { at_tick: u64, scope: TapScope },
    /// Replay the last tapped message of `app_id` with a forged stNum and
    /// overridden entries. Waits until something was observed, and until
    /// `wait_for` holds in the observed message when given.
    InjectGoose {
        at_tick: u64,
        app_id: u32,
        stnum: u32,
        src: Option<String>,
        dataset: Option<String>,
        wait_for: Option<(String, Value)>,
        entries: Vec<GooseEntry>,
    },
    /// Overwrite a store point on every tick of `[at_tick, until_tick]`.
    FdiWrite {
        at_tick: u64,
        until_tick: u64,
        path: String,
        value: Value,
    },
    DropLink { at_tick: u64, a: String, b: String },
}

impl AttackStep {
    pub fn at_tick(&self) -> u64 {
        match self {
            AttackStep::Tap { at_tick, .. }
            | AttackStep::InjectGoose { at_tick, .. }
            | AttackStep::FdiWrite { at_tick, .. }
            | AttackStep::DropLink { at_tick, .. } => *at_tick,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            AttackStep::Tap { .. } => "tap",
            AttackStep::InjectGoose { .. } => "inject_goose",
            AttackStep::FdiWrite { .. } => "fdi_write",
            AttackStep::DropLink { .. } => "drop_link",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackScript {
    pub name: String,
    /// Name of the attacker node added to the topology.
    pub attacker: String,
    /// Node the attacker is cabled to.
    pub attach: String,
    /// Executed in order; a step that is not ready holds back later ones.
    pub steps: Vec<AttackStep>,
}

pub fn parse_value(s: &str) -> Result<Value, AttackError> {
    match s.trim() {
        "true" | "TRUE" => Ok(Value::Bool(true)),
        "false" | "FALSE" => Ok(Value::Bool(false)),
        t => t.parse().map(Value::Real).map_err(|_| perr(format!("bad value `{t}`"))),
    }
}

fn req<'a>(el: &'a Element, key: &str) -> Result<&'a str, AttackError> {
    el.attr(key)
        .ok_or_else(|| perr(format!("<{}> lacks `{key}`", el.local_name())))
}

fn num<T: std::str::FromStr>(el: &Element, key: &str) -> Result<T, AttackError> {
    let s = req(el, key)?;
    parse_num(s).ok_or_else(|| perr(format!("bad number `{s}` for `{key}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Option<T> {
    s.parse().ok()
}

fn parse_app_id(s: &str) -> Option<u32> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

impl AttackScript {
    pub fn parse(text: &str) -> Result<AttackScript, AttackError> {
        let root = xml::parse(text).map_err(|e| perr(e.to_string()))?;
        if root.local_name() != "AttackScript" {
            return Err(perr(format!("root is <{}>, expected <AttackScript>", root.local_name())));
        }
        let mut steps = Vec::new();
        for el in root.elements() {
            let at_tick = num(el, "at_tick")?;
            let step = match el.local_name() {
                "Tap" => {
                    let scope = match (el.attr("link"), el.attr("node")) {
                        (Some(l), None) => TapScope::Link(l.to_string()),
                        (None, Some(n)) => TapScope::Node(n.to_string()),
                        _ => return Err(perr("<Tap> needs exactly one of `link` or `node`")),
                    };
                    AttackStep::Tap { at_tick, scope }
                }
                "InjectGoose" => {
                    let app_id = parse_app_id(req(el, "app_id")?).ok_or_else(|| perr("bad app_id"))?;
                    let wait_for = match (el.attr("wait_for_path"), el.attr("wait_for_value")) {
                        (Some(p), Some(v)) => Some((p.to_string(), parse_value(v)?)),
                        (None, None) => None,
                        _ => return Err(perr("wait_for_path and wait_for_value go together")),
                    };
                    let entries = el
                        .elements_named("Entry")
                        .map(|e| {
                            Ok(GooseEntry {
                                path: req(e, "path")?.to_string(),
                                value: parse_value(req(e, "value")?)?,
                            })
                        })
                        .collect::<Result<_, AttackError>>()?;
                    AttackStep::InjectGoose {
                        at_tick,
                        app_id,
                        stnum: num(el, "stnum")?,
                        src: el.attr("src").map(str::to_string),
                        dataset: el.attr("dataset").map(str::to_string),
                        wait_for,
                        entries,
                    }
                }
                "FdiWrite" => AttackStep::FdiWrite {
                    at_tick,
                    until_tick: num(el, "until_tick")?,
                    path: req(el, "path")?.to_string(),
                    value: parse_value(req(el, "value")?)?,
                },
                "DropLink" => AttackStep::DropLink {
                    at_tick,
                    a: req(el, "a")?.to_string(),
                    b: req(el, "b")?.to_string(),
                },
                other => return Err(perr(format!("unknown step <{other}>"))),
            };
            steps.push(step);
        }
        Ok(AttackScript {
            name: req(&root, "name")?.to_string(),
            attacker: req(&root, "attacker")?.to_string(),
            attach: req(&root, "attach")?.to_string(),
            steps,
        })
    }

    pub fn to_xml(&self) -> String {
        let mut root = Element::new("AttackScript")
            .with_attr("name", &self.name)
            .with_attr("attacker", &self.attacker)
            .with_attr("attach", &self.attach);
        for s in &self.steps {
            let el = match s {
                AttackStep::Tap { at_tick, scope } => {
                    let el = Element::new("Tap").with_attr("at_tick", at_tick);
                    match scope {
                        TapScope::Link(l) => el.with_attr("link", l),
                        TapScope::Node(n) => el.with_attr("node", n),
                    }
                }
                AttackStep::InjectGoose {
                    at_tick,
                    app_id,
                    stnum,
                    src,
                    dataset,
                    wait_for,
                    entries,
                } => {
                    let mut el = Element::new("InjectGoose")
                        .with_attr("at_tick", at_tick)
                        .with_attr("app_id", format!("0x{app_id:04X}"))
                        .with_attr("stnum", stnum);
                    if let Some(s) = src {
                        el.set_attr("src", s);
                    }
                    if let Some(d) = dataset {
                        el.set_attr("dataset", d);
                    }
                    if let Some((p, v)) = wait_for {
                        el.set_attr("wait_for_path", p);
                        el.set_attr("wait_for_value", v);
                    }
                    for e in entries {
                        el.push(Element::new("Entry").with_attr("path", &e.path).with_attr("value", e.value));
                    }
                    el
                }
                AttackStep::FdiWrite {
                    at_tick,
                    until_tick,
                    path,
                    value,
                } => Element::new("FdiWrite")
                    .with_attr("at_tick", at_tick)
                    .with_attr("until_tick", until_tick)
                    .with_attr("path", path)
                    .with_attr("value", value),
                AttackStep::DropLink { at_tick, a, b } => Element::new("DropLink")
                    .with_attr("at_tick", at_tick)
                    .with_attr("a", a)
                    .with_attr("b", b),
            };
            root.push(el);
        }
        root.to_xml()
    }

    /// Tick of the first scripted step.
    pub fn first_tick(&self) -> Option<u64> {
        self.steps.iter().map(AttackStep::at_tick).min()
    }
}

/// stNum-spoofing false command injection against a GOOSE interlock.
///
/// The attacker, cabled to `attach`, taps `trunk` at `tap_tick`. On the
/// next publication it replays the dataset with stNum `spoof`, then sends
/// `spoof + 1` with `pos_path` forced open once it has seen the breaker
/// closed. Subscribers then reject the legitimate publisher as stale.
pub fn fci_attack(attach: &str, trunk: &str, app_id: u32, pos_path: &str, tap_tick: u64, spoof: u32) -> AttackScript {
    AttackScript {
        name: format!("fci-stnum-{spoof}"),
        attacker: "ATTACKER".into(),
        attach: attach.into(),
        steps: vec![
            AttackStep::Tap {
                at_tick: tap_tick,
                scope: TapScope::Link(trunk.into()),
            },
            AttackStep::InjectGoose {
                at_tick: tap_tick + 1,
                app_id,
                stnum: spoof,
                src: None,
                dataset: None,
                wait_for: None,
                entries: Vec::new(),
            },
            AttackStep::InjectGoose {
                at_tick: tap_tick + 2,
                app_id,
                stnum: spoof.wrapping_add(1).max(1),
                src: None,
                dataset: None,
                wait_for: Some((pos_path.into(), Value::Bool(true))),
                entries: vec![GooseEntry {
                    path: pos_path.into(),
                    value: Value::Bool(false),
                }],
            },
        ],
    }
}

fn related(a: &str, b: &str) -> bool {
    let prefix = |p: &str, s: &str| s == p || (s.starts_with(p) && s[p.len()..].starts_with('.'));
    prefix(a, b) || prefix(b, a)
}

/// Execution state of a script inside a running range.
#[derive(Debug)]
pub(crate) struct AttackRuntime {
    pub script: AttackScript,
    next: usize,
    taps: Vec<TapHandle>,
    /// Last observed message and frame per app id.
    observed: BTreeMap<u32, (GooseMessage, Frame)>,
    fdi: Vec<(u64, String, Value)>,
    deferred_reported: Option<usize>,
}

impl AttackRuntime {
    pub fn new(script: AttackScript) -> Self {
        AttackRuntime {
            script,
            next: 0,
            taps: Vec::new(),
            observed: BTreeMap::new(),
            fdi: Vec::new(),
            deferred_reported: None,
        }
    }

    fn collect_taps(&mut self, net: &mut NetEmulator) {
        for &h in &self.taps {
            for t in net.drain_tap(h) {
                if let Some(msg) = GooseMessage::from_payload(&t.frame.payload) {
                    self.observed.insert(msg.app_id, (msg, t.frame));
                }
            }
        }
    }

    /// Run every step that is due at `tick`, then refresh active FDI writes.
    pub fn run(&mut self, tick: u64, net: &mut NetEmulator, store: &mut SimStore) -> Vec<AttackEvent> {
        let mut events = Vec::new();
        self.collect_taps(net);
        while let Some(step) = self.script.steps.get(self.next).cloned() {
            if step.at_tick() > tick {
                break;
            }
            let ev = |detail: String| AttackEvent {
                step: step.name().into(),
                detail,
            };
            match &step {
                AttackStep::Tap { scope, .. } => match net.attach_tap(scope.clone()) {
                    Ok(h) => {
                        self.taps.push(h);
                        events.push(ev(format!("{scope:?}")));
                    }
                    Err(e) => events.push(ev(format!("failed: {e}"))),
                },
                AttackStep::InjectGoose {
                    app_id,
                    stnum,
                    src,
                    dataset,
                    wait_for,
                    entries,
                    ..
                } => {
                    let ready = self.observed.get(app_id).filter(|(msg, _)| {
                        wait_for.as_ref().is_none_or(|(p, v)| {
                            msg.entries.iter().any(|e| related(&e.path, p) && e.value == *v)
                        })
                    });
                    let Some((base, frame)) = ready.cloned() else {
                        if self.deferred_reported != Some(self.next) {
                            self.deferred_reported = Some(self.next);
                            events.push(ev(format!("waiting for app_id 0x{app_id:04X}")));
                        }
                        break;
                    };
                    let mut msg = base;
                    msg.stnum = *stnum;
                    msg.sqnum = 0;
                    if let Some(d) = dataset {
                        msg.dataset = d.clone();
                    }
                    for o in entries {
                        for e in msg.entries.iter_mut().filter(|e| related(&e.path, &o.path)) {
                            e.value = o.value;
                        }
                    }
                    let mut f = frame;
                    if let Some(s) = src {
                        f.src = s.clone();
                    }
                    f.payload = msg.to_payload();
                    f.injected_by = Some(self.script.attacker.clone());
                    let claimed = f.src.clone();
                    match net.inject_frame(&self.script.attacker, f) {
                        Ok(to) => events.push(ev(format!(
                            "app_id 0x{app_id:04X} stnum {stnum} as {claimed} to {}",
                            to.join(",")
                        ))),
                        Err(e) => events.push(ev(format!("failed: {e}"))),
                    }
                }
                AttackStep::FdiWrite {
                    until_tick, path, value, ..
                } => {
                    self.fdi.push((*until_tick, path.clone(), *value));
                    events.push(ev(format!("{path} := {value} until tick {until_tick}")));
                }
                AttackStep::DropLink { a, b, .. } => {
                    let ok = net.drop_link(a, b);
                    events.push(ev(format!("{a}-{b} {}", if ok { "dropped" } else { "not found" })));
                }
            }
            self.next += 1;
        }
        self.fdi.retain(|(until, _, _)| *until >= tick);
        for (_, path, value) in &self.fdi {
            if let Err(e) = store.write_control(path, *value, Actor::Attacker) {
                events.push(AttackEvent {
                    step: "fdi_write".into(),
                    detail: format!("failed: {e}"),
                });
            }
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_round_trip() {
        let s = fci_attack("SW2", "T12", 0x2001, "S1_IED22.LD0.XCBR1.Pos.stVal", 20, 1000);
        let mut with_fdi = s.clone();
        with_fdi.steps.push(AttackStep::FdiWrite {
            at_tick: 3,
            until_tick: 5,
            path: "Load0.P".into(),
            value: Value::Real(1.5),
        });
        with_fdi.steps.push(AttackStep::DropLink {
            at_tick: 4,
            a: "SW1".into(),
            b: "SW2".into(),
        });
        let back = AttackScript::parse(&with_fdi.to_xml()).unwrap();
        assert_eq!(back, with_fdi);
        assert_eq!(back.first_tick(), Some(3));
    }

    #[test]
    fn rejects_unknown_step() {
        let err = AttackScript::parse(r#"<AttackScript name="x" attacker="A" attach="S"><Boom at_tick="1"/></AttackScript>"#);
        assert!(err.is_err());
    }
}

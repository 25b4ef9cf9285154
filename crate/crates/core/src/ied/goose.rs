//! GOOSE / R-GOOSE publication state and the subscriber acceptance rule.

use serde::{Deserialize, Serialize};

use crate::net::{rgoose_group, Destination, Frame, FrameKind};
use crate::scl::{AttributePath, ControlKind};
use crate::store::Value;

/// Heartbeat retransmission period when nothing changes.
pub const HEARTBEAT_TICKS: u64 = 10;
/// Subscribers forget their last stNum after this many publish intervals
/// without an accepted message.
pub const RESYNC_INTERVALS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    L2,
    Routable,
}

impl Transport {
    pub fn from_control(kind: ControlKind) -> Option<Transport> {
        match kind {
            ControlKind::Goose => Some(Transport::L2),
            ControlKind::Rgoose => Some(Transport::Routable),
            ControlKind::Report => None,
        }
    }

    pub fn destination(self, app_id: u32) -> Destination {
        match self {
            Transport::L2 => Destination::L2Group(app_id),
            Transport::Routable => Destination::IpGroup(rgoose_group(app_id)),
        }
    }

    pub fn frame_kind(self) -> FrameKind {
        match self {
            Transport::L2 => FrameKind::L2Multicast,
            Transport::Routable => FrameKind::UdpMulticast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GooseEntry {
    pub path: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GooseMessage {
    pub app_id: u32,
    pub dataset: String,
    pub stnum: u32,
    pub sqnum: u32,
    /// Tick at which the publisher sampled the dataset.
    #[serde(default)]
    pub t: u64,
    pub entries: Vec<GooseEntry>,
    #[serde(skip)]
    pub transport: Option<Transport>,
}

impl GooseMessage {
    pub fn to_payload(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("message serializes")
    }

    pub fn from_payload(bytes: &[u8]) -> Option<GooseMessage> {
        serde_json::from_slice(bytes).ok()
    }

    /// Wrap into a multicast frame sent by `src`.
    pub fn into_frame(self, transport: Transport, src: &str, src_ip: Option<std::net::Ipv4Addr>) -> Frame {
        Frame {
            kind: transport.frame_kind(),
            src: src.to_string(),
            src_ip,
            dst: transport.destination(self.app_id),
            app_id: self.app_id,
            payload: self.to_payload(),
            injected_by: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Publication {
    pub control_block: String,
    pub app_id: u32,
    pub transport: Transport,
    pub dataset_ref: String,
    pub members: Vec<AttributePath>,
    pub stnum: u32,
    pub sqnum: u32,
    pub last_values: Option<Vec<Value>>,
    pub last_publish_tick: Option<u64>,
}

impl Publication {
    pub fn new(control_block: &str, app_id: u32, transport: Transport, dataset_ref: &str, members: Vec<AttributePath>) -> Self {
        Publication {
            control_block: control_block.to_string(),
            app_id,
            transport,
            dataset_ref: dataset_ref.to_string(),
            members,
            stnum: 0,
            sqnum: 0,
            last_values: None,
            last_publish_tick: None,
        }
    }

    /// Build the next message. A change bumps stNum (wrapping to 1 after the
    /// 32-bit maximum) and resets sqNum; a retransmission bumps sqNum.
    pub fn publish(&mut self, values: Vec<Value>, changed: bool, tick: u64) -> GooseMessage {
        if changed {
            self.stnum = if self.stnum == u32::MAX { 1 } else { self.stnum + 1 };
            self.sqnum = 0;
        } else {
            self.sqnum = self.sqnum.wrapping_add(1);
        }
        let entries = self
            .members
            .iter()
            .zip(&values)
            .map(|(p, v)| GooseEntry {
                path: p.to_string(),
                value: *v,
            })
            .collect();
        self.last_values = Some(values);
        self.last_publish_tick = Some(tick);
        GooseMessage {
            app_id: self.app_id,
            dataset: self.dataset_ref.clone(),
            stnum: self.stnum,
            sqnum: self.sqnum,
            t: tick,
            entries,
            transport: Some(self.transport),
        }
    }

    /// Whether a scan with `values` must publish, and whether it is a change.
    pub fn due(&self, values: &[Value], tick: u64) -> Option<bool> {
        match (&self.last_values, self.last_publish_tick) {
            (Some(last), Some(t)) if last.as_slice() == values => {
                (tick >= t + HEARTBEAT_TICKS).then_some(false)
            }
            _ => Some(true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub app_id: u32,
    pub publisher: String,
    pub dataset_ref: String,
    pub transport: Transport,
    pub last_accepted_stnum: u32,
    pub last_accepted_tick: Option<u64>,
    pub resync_after_ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceptance {
    Accepted,
    RejectedStale,
}

impl Subscription {
    pub fn new(app_id: u32, publisher: &str, dataset_ref: &str, transport: Transport) -> Self {
        Subscription {
            app_id,
            publisher: publisher.to_string(),
            dataset_ref: dataset_ref.to_string(),
            transport,
            last_accepted_stnum: 0,
            last_accepted_tick: None,
            resync_after_ticks: HEARTBEAT_TICKS * RESYNC_INTERVALS,
        }
    }

    /// Reset the stNum memory if nothing was accepted for too long.
    /// Returns true when a resynchronization happened.
    pub fn maybe_resync(&mut self, tick: u64) -> bool {
        match self.last_accepted_tick {
            Some(t) if tick > t + self.resync_after_ticks && self.last_accepted_stnum != 0 => {
                self.last_accepted_stnum = 0;
                self.last_accepted_tick = Some(tick);
                true
            }
            _ => false,
        }
    }
}

/// Accept iff `msg.stnum >= last accepted`; on acceptance remember it.
pub fn goose_accept(sub: &mut Subscription, msg: &GooseMessage, tick: u64) -> Acceptance {
    if msg.stnum >= sub.last_accepted_stnum {
        sub.last_accepted_stnum = msg.stnum;
        sub.last_accepted_tick = Some(tick);
        Acceptance::Accepted
    } else {
        Acceptance::RejectedStale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(stnum: u32) -> GooseMessage {
        GooseMessage {
            app_id: 1,
            dataset: "DS".into(),
            stnum,
            sqnum: 0,
            t: 0,
            entries: vec![],
            transport: None,
        }
    }

    #[test]
    fn acceptance_examples() {
        let mut s = Subscription::new(1, "P", "DS", Transport::Routable);
        s.last_accepted_stnum = 5;
        assert_eq!(goose_accept(&mut s, &msg(4), 0), Acceptance::RejectedStale);
        assert_eq!(goose_accept(&mut s, &msg(5), 0), Acceptance::Accepted);
        assert_eq!(goose_accept(&mut s, &msg(1000), 0), Acceptance::Accepted);
        assert_eq!(goose_accept(&mut s, &msg(6), 0), Acceptance::RejectedStale);
    }

    #[test]
    fn publish_counters() {
        let p: AttributePath = "I.XCBR1.Pos".parse().unwrap();
        let mut pb = Publication::new("GC", 1, Transport::L2, "DS", vec![p]);
        let m = pb.publish(vec![Value::Bool(true)], true, 0);
        assert_eq!((m.stnum, m.sqnum), (1, 0));
        let m = pb.publish(vec![Value::Bool(true)], false, 10);
        assert_eq!((m.stnum, m.sqnum), (1, 1));
        let m = pb.publish(vec![Value::Bool(false)], true, 11);
        assert_eq!((m.stnum, m.sqnum), (2, 0));
        let m = pb.publish(vec![Value::Bool(true)], true, 12);
        assert_eq!((m.stnum, m.sqnum), (3, 0));
        pb.stnum = u32::MAX;
        assert_eq!(pb.publish(vec![Value::Bool(false)], true, 13).stnum, 1);
    }

    #[test]
    fn heartbeat_due() {
        let p: AttributePath = "I.XCBR1.Pos".parse().unwrap();
        let mut pb = Publication::new("GC", 1, Transport::L2, "DS", vec![p]);
        let v = vec![Value::Bool(true)];
        assert_eq!(pb.due(&v, 0), Some(true));
        pb.publish(v.clone(), true, 0);
        assert_eq!(pb.due(&v, 5), None);
        assert_eq!(pb.due(&v, 10), Some(false));
        assert_eq!(pb.due(&[Value::Bool(false)], 3), Some(true));
    }

    #[test]
    fn resync_after_silence() {
        let mut s = Subscription::new(1, "P", "DS", Transport::Routable);
        goose_accept(&mut s, &msg(1000), 5);
        assert!(!s.maybe_resync(50));
        assert!(s.maybe_resync(5 + s.resync_after_ticks + 1));
        assert_eq!(goose_accept(&mut s, &msg(7), 200), Acceptance::Accepted);
    }
}

//! Multi-shot reliable broadcast: eager-relay CR-broadcast for the crash
//! model and Bracha's BR-broadcast for the Byzantine model.
//!
//! Endpoints are pure state machines. They never touch the network; each
//! input returns the messages to send and at most one delivery.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trace::{Operation, ProcessId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BroadcastKey {
    pub sender: ProcessId,
    pub sn: u64,
}

impl fmt::Display for BroadcastKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.sender, self.sn)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Send,
    Relay,
    Echo,
    Ready,
}

/// `from` is stamped by the network and cannot be forged.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub phase: Phase,
    pub key: BroadcastKey,
    pub payload: Operation,
    pub from: ProcessId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub to: ProcessId,
    pub msg: ProtocolMessage,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub key: BroadcastKey,
    pub payload: Operation,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Reaction {
    pub sends: Vec<Outgoing>,
    pub delivery: Option<Delivery>,
    /// Why the message was discarded, if it was.
    pub dropped: Option<String>,
}

impl Reaction {
    fn drop(reason: impl Into<String>) -> Self {
        Reaction {
            dropped: Some(reason.into()),
            ..Reaction::default()
        }
    }
}

fn to_all(n: usize, msg: &ProtocolMessage, skip: impl Fn(ProcessId) -> bool) -> Vec<Outgoing> {
    ProcessId::all(n)
        .filter(|&p| !skip(p))
        .map(|to| Outgoing { to, msg: msg.clone() })
        .collect()
}

/// Common sanity checks on an incoming message.
fn malformed(msg: &ProtocolMessage, n: usize) -> Option<String> {
    if !msg.key.sender.in_system(n) {
        return Some(format!("unknown sender {}", msg.key.sender));
    }
    if msg.key.sn == 0 {
        return Some("sequence numbers start at 1".into());
    }
    if !msg.payload.is_update() {
        return Some(format!("payload {} is not an update", msg.payload));
    }
    if msg.phase == Phase::Send && msg.from != msg.key.sender {
        return Some(format!("SEND for {} relayed by {}", msg.key, msg.from));
    }
    None
}

/// Crash-tolerant broadcast: on first receipt of a key, relay it to every
/// other process, then deliver.
#[derive(Clone, Debug)]
pub struct CrBroadcast {
    me: ProcessId,
    n: usize,
    delivered: BTreeSet<BroadcastKey>,
}

impl CrBroadcast {
    pub fn new(me: ProcessId, n: usize) -> Self {
        CrBroadcast {
            me,
            n,
            delivered: BTreeSet::new(),
        }
    }

    /// SEND to every process, including the sender itself.
    pub fn broadcast(&mut self, sn: u64, payload: Operation) -> Vec<Outgoing> {
        let msg = ProtocolMessage {
            phase: Phase::Send,
            key: BroadcastKey { sender: self.me, sn },
            payload,
            from: self.me,
        };
        to_all(self.n, &msg, |_| false)
    }

    pub fn on_message(&mut self, msg: ProtocolMessage) -> Reaction {
        if let Some(reason) = malformed(&msg, self.n) {
            return Reaction::drop(reason);
        }
        if matches!(msg.phase, Phase::Echo | Phase::Ready) {
            return Reaction::drop("ECHO/READY are not part of CR-broadcast");
        }
        if !self.delivered.insert(msg.key) {
            return Reaction::default();
        }
        let relay = ProtocolMessage {
            phase: Phase::Relay,
            key: msg.key,
            payload: msg.payload.clone(),
            from: self.me,
        };
        let me = self.me;
        let sends = if msg.key.sender == me {
            // Own SEND: the other processes got it directly already.
            Vec::new()
        } else {
            to_all(self.n, &relay, |p| p == me || p == msg.key.sender)
        };
        Reaction {
            sends,
            delivery: Some(Delivery {
                key: msg.key,
                payload: msg.payload,
            }),
            dropped: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct BrachaInstance {
    echoed: bool,
    readied: bool,
    delivered: bool,
    echo_from: BTreeSet<ProcessId>,
    ready_from: BTreeSet<ProcessId>,
    echoes: BTreeMap<Operation, usize>,
    readies: BTreeMap<Operation, usize>,
}

/// Bracha's Byzantine reliable broadcast, one instance per key. Only the
/// first ECHO and the first READY of each process count.
#[derive(Clone, Debug)]
pub struct BrBroadcast {
    me: ProcessId,
    n: usize,
    t: usize,
    instances: BTreeMap<BroadcastKey, BrachaInstance>,
}

impl BrBroadcast {
    pub fn new(me: ProcessId, n: usize, t: usize) -> Self {
        BrBroadcast {
            me,
            n,
            t,
            instances: BTreeMap::new(),
        }
    }

    /// `⌈(n+t+1)/2⌉` matching ECHOs send a READY.
    pub fn echo_quorum(&self) -> usize {
        (self.n + self.t) / 2 + 1
    }

    /// `t+1` matching READYs send a READY.
    pub fn ready_amplification(&self) -> usize {
        self.t + 1
    }

    /// `2t+1` matching READYs deliver.
    pub fn delivery_quorum(&self) -> usize {
        2 * self.t + 1
    }

    pub fn broadcast(&mut self, sn: u64, payload: Operation) -> Vec<Outgoing> {
        let msg = ProtocolMessage {
            phase: Phase::Send,
            key: BroadcastKey { sender: self.me, sn },
            payload,
            from: self.me,
        };
        to_all(self.n, &msg, |_| false)
    }

    fn emit(&self, phase: Phase, key: BroadcastKey, payload: &Operation) -> Vec<Outgoing> {
        let msg = ProtocolMessage {
            phase,
            key,
            payload: payload.clone(),
            from: self.me,
        };
        to_all(self.n, &msg, |_| false)
    }

    pub fn on_message(&mut self, msg: ProtocolMessage) -> Reaction {
        if let Some(reason) = malformed(&msg, self.n) {
            return Reaction::drop(reason);
        }
        if !msg.from.in_system(self.n) {
            return Reaction::drop(format!("unknown peer {}", msg.from));
        }
        let (echo_quorum, amplify, deliver_at) =
            (self.echo_quorum(), self.ready_amplification(), self.delivery_quorum());
        let key = msg.key;
        let inst = self.instances.entry(key).or_default();
        let mut out: Vec<(Phase, Operation)> = Vec::new();
        match msg.phase {
            Phase::Relay => return Reaction::drop("RELAY is not part of BR-broadcast"),
            Phase::Send => {
                if inst.echoed {
                    return Reaction::default();
                }
                inst.echoed = true;
                out.push((Phase::Echo, msg.payload.clone()));
            }
            Phase::Echo => {
                if !inst.echo_from.insert(msg.from) {
                    return Reaction::default();
                }
                let count = inst.echoes.entry(msg.payload.clone()).or_insert(0);
                *count += 1;
                if *count >= echo_quorum && !inst.readied {
                    inst.readied = true;
                    out.push((Phase::Ready, msg.payload.clone()));
                }
            }
            Phase::Ready => {
                if !inst.ready_from.insert(msg.from) {
                    return Reaction::default();
                }
                let count = inst.readies.entry(msg.payload.clone()).or_insert(0);
                *count += 1;
                if *count >= amplify && !inst.readied {
                    inst.readied = true;
                    out.push((Phase::Ready, msg.payload.clone()));
                }
            }
        }
        let delivery = match inst.readies.iter().find(|(_, &c)| c >= deliver_at) {
            Some((payload, _)) if !inst.delivered => {
                inst.delivered = true;
                Some(Delivery {
                    key,
                    payload: payload.clone(),
                })
            }
            _ => None,
        };
        let sends = out
            .iter()
            .flat_map(|(phase, payload)| self.emit(*phase, key, payload))
            .collect();
        Reaction {
            sends,
            delivery,
            dropped: None,
        }
    }
}

/// Either broadcast flavour behind one interface.
#[derive(Clone, Debug)]
pub enum Broadcaster {
    Crb(CrBroadcast),
    Brb(BrBroadcast),
}

impl Broadcaster {
    pub fn broadcast(&mut self, sn: u64, payload: Operation) -> Vec<Outgoing> {
        match self {
            Broadcaster::Crb(b) => b.broadcast(sn, payload),
            Broadcaster::Brb(b) => b.broadcast(sn, payload),
        }
    }

    pub fn on_message(&mut self, msg: ProtocolMessage) -> Reaction {
        match self {
            Broadcaster::Crb(b) => b.on_message(msg),
            Broadcaster::Brb(b) => b.on_message(msg),
        }
    }
}

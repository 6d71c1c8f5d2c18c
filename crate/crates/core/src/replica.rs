//! The generic replica: local trace and state, query handling, update
//! invocation, and the gated processing of delivered updates.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::{PcoSpec, Value};
use crate::trace::{OpKind, Operation, ProcessId, Trace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InvokeError {
    #[error("abort: {0}")]
    Abort(String),
    #[error("busy: update sn {0} is still being processed")]
    Busy(u64),
    #[error("unknown query {0}")]
    UnknownQuery(Operation),
}

/// The gate clause a buffered message currently fails.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateClause {
    /// `up ∉ C ∪ O_sender`.
    Authorization,
    /// `sn ≠ del[sender] + 1`.
    Fifo,
    /// The transition is undefined in the current state.
    Legality,
}

impl fmt::Display for GateClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateClause::Authorization => "authorization",
            GateClause::Fifo => "fifo",
            GateClause::Legality => "legality",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateTicket {
    pub sn: u64,
    pub op: Operation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Processed {
    pub sender: ProcessId,
    pub sn: u64,
    pub op: Operation,
    /// `output(op, ·)` on the state right before `op` was appended.
    pub output: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StuckEntry {
    pub process: ProcessId,
    pub sender: ProcessId,
    pub sn: u64,
    pub op: Operation,
    pub clause: GateClause,
}

#[derive(Clone, Debug)]
struct Inflight {
    sn: u64,
    output: Option<Value>,
}

pub struct Replica<S: PcoSpec> {
    id: ProcessId,
    spec: Arc<S>,
    seq: Trace,
    state: S::State,
    sn: u64,
    del: Vec<u64>,
    pending: Vec<BTreeMap<u64, Operation>>,
    inflight: Option<Inflight>,
}

impl<S: PcoSpec> Replica<S> {
    pub fn new(id: ProcessId, spec: Arc<S>) -> Self {
        let n = spec.n();
        Replica {
            id,
            seq: Trace::empty(n),
            state: spec.initial_state(),
            spec,
            sn: 0,
            del: vec![0; n],
            pending: vec![BTreeMap::new(); n],
            inflight: None,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn spec(&self) -> &S {
        &self.spec
    }

    pub fn seq(&self) -> &Trace {
        &self.seq
    }

    pub fn state(&self) -> &S::State {
        &self.state
    }

    pub fn sn(&self) -> u64 {
        self.sn
    }

    /// Number of processed updates from `p`.
    pub fn del(&self, p: ProcessId) -> u64 {
        self.del[p.slot()]
    }

    pub fn busy(&self) -> bool {
        self.inflight.is_some()
    }

    pub fn invoke_query(&self, q: &Operation) -> Result<Value, InvokeError> {
        if q.kind != OpKind::Query || !self.spec.contains(q) {
            return Err(InvokeError::UnknownQuery(q.clone()));
        }
        Ok(self.spec.query(&self.state, q))
    }

    /// Would `begin_update(op)` pass its precondition right now?
    pub fn accepts(&self, op: &Operation) -> bool {
        self.spec.authorizes(self.id, op) && self.spec.transition(&self.state, op).is_some()
    }

    /// Checks `up ∈ C ∪ O_id` and legality, then allocates the next
    /// sequence number. The caller broadcasts `⟨sn, up⟩`.
    pub fn begin_update(&mut self, op: &Operation) -> Result<UpdateTicket, InvokeError> {
        if let Some(inflight) = &self.inflight {
            return Err(InvokeError::Busy(inflight.sn));
        }
        if !self.spec.authorizes(self.id, op) {
            return Err(InvokeError::Abort(format!("{op} is not authorized to {}", self.id)));
        }
        if self.spec.transition(&self.state, op).is_none() {
            return Err(InvokeError::Abort(format!("{op} is not legal in the current state")));
        }
        self.sn += 1;
        self.inflight = Some(Inflight {
            sn: self.sn,
            output: None,
        });
        Ok(UpdateTicket {
            sn: self.sn,
            op: op.clone(),
        })
    }

    /// Buffers a delivered update and processes whatever became eligible.
    pub fn on_r_delivered(&mut self, sender: ProcessId, sn: u64, op: Operation) -> Vec<Processed> {
        if sender.in_system(self.spec.n()) && sn > self.del[sender.slot()] {
            self.pending[sender.slot()].entry(sn).or_insert(op);
        }
        self.drain_pending()
    }

    fn gate(&self, sender: ProcessId, op: &Operation) -> Result<S::State, GateClause> {
        if !self.spec.authorizes(sender, op) {
            return Err(GateClause::Authorization);
        }
        self.spec.transition(&self.state, op).ok_or(GateClause::Legality)
    }

    /// Scans the sender buffers in ascending sender order until a full
    /// pass processes nothing.
    pub fn drain_pending(&mut self) -> Vec<Processed> {
        let mut done = Vec::new();
        loop {
            let mut progressed = false;
            for sender in ProcessId::all(self.spec.n()) {
                loop {
                    let next_sn = self.del[sender.slot()] + 1;
                    let Some(op) = self.pending[sender.slot()].get(&next_sn) else { break };
                    let Ok(next) = self.gate(sender, op) else { break };
                    let op = self.pending[sender.slot()].remove(&next_sn).expect("present");
                    let output = self.spec.output(&op, &self.state);
                    if sender == self.id {
                        if let Some(inflight) = self.inflight.as_mut().filter(|f| f.sn == next_sn) {
                            inflight.output = Some(output.clone());
                        }
                    }
                    self.state = next;
                    self.seq.push(op.clone()).expect("authorized updates fit the trace");
                    self.del[sender.slot()] = next_sn;
                    done.push(Processed {
                        sender,
                        sn: next_sn,
                        op,
                        output,
                    });
                    progressed = true;
                }
            }
            if !progressed {
                return done;
            }
        }
    }

    /// True once the local update has been processed locally.
    pub fn update_ready(&self) -> bool {
        matches!(&self.inflight, Some(Inflight { output: Some(_), .. }))
    }

    /// Returns the output of the completed local update and frees the
    /// replica for the next one.
    pub fn complete_update(&mut self) -> Option<(u64, Value)> {
        if !self.update_ready() {
            return None;
        }
        let inflight = self.inflight.take().expect("checked above");
        Some((inflight.sn, inflight.output.expect("checked above")))
    }

    /// Buffered messages with the clause that blocks each of them.
    pub fn stuck(&self) -> Vec<StuckEntry> {
        let mut out = Vec::new();
        for sender in ProcessId::all(self.spec.n()) {
            for (&sn, op) in &self.pending[sender.slot()] {
                let clause = if !self.spec.authorizes(sender, op) {
                    GateClause::Authorization
                } else if sn != self.del[sender.slot()] + 1 {
                    GateClause::Fifo
                } else {
                    GateClause::Legality
                };
                out.push(StuckEntry {
                    process: self.id,
                    sender,
                    sn,
                    op: op.clone(),
                    clause,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::{MoneySpec, MultisetParams, MultisetSpec, WsdParams, WsdSpec};

    fn p(i: u32) -> ProcessId {
        ProcessId::new(i)
    }

    fn money(init: Vec<i64>) -> Arc<MoneySpec> {
        Arc::new(MoneySpec::new(init).unwrap())
    }

    #[test]
    fn fresh_balance_is_initial() {
        let r = Replica::new(p(1), money(vec![7, 3]));
        assert_eq!(r.invoke_query(&MoneySpec::balance(p(2))).unwrap(), Value::Int(3));
    }

    #[test]
    fn begin_update_checks_authorization_and_legality() {
        let mut r = Replica::new(p(1), money(vec![5, 5]));
        assert!(matches!(
            r.begin_update(&MoneySpec::transfer(p(2), p(1), 1)),
            Err(InvokeError::Abort(_))
        ));
        assert!(matches!(
            r.begin_update(&MoneySpec::transfer(p(1), p(2), 6)),
            Err(InvokeError::Abort(_))
        ));
        let ticket = r.begin_update(&MoneySpec::transfer(p(1), p(2), 5)).unwrap();
        assert_eq!(ticket.sn, 1);
        assert_eq!(r.begin_update(&MoneySpec::mint(p(1), 1)), Err(InvokeError::Busy(1)));
        assert!(!r.update_ready());
        r.on_r_delivered(p(1), 1, ticket.op);
        assert_eq!(r.complete_update(), Some((1, Value::Silent)));
        assert_eq!(r.invoke_query(&MoneySpec::balance(p(1))).unwrap(), Value::Int(0));
    }

    #[test]
    fn gap_is_held_until_filled() {
        let mut r = Replica::new(p(1), money(vec![5, 5]));
        let t = |x| MoneySpec::transfer(p(2), p(1), x);
        assert!(r.on_r_delivered(p(2), 2, t(2)).is_empty());
        assert_eq!(r.stuck()[0].clause, GateClause::Fifo);
        let done = r.on_r_delivered(p(2), 1, t(1));
        assert_eq!(done.iter().map(|d| d.sn).collect::<Vec<_>>(), vec![1, 2]);
        assert!(r.stuck().is_empty());
        assert_eq!(r.del(p(2)), 2);
    }

    #[test]
    fn unauthorized_update_is_stuck_forever() {
        let mut r = Replica::new(p(1), money(vec![5, 5]));
        // p3 claims a transfer from p2's account
        let forged = MoneySpec::transfer(p(2), p(1), 1);
        assert!(r.on_r_delivered(p(1), 1, forged).is_empty());
        assert_eq!(r.stuck()[0].clause, GateClause::Authorization);
    }

    #[test]
    fn delete_waits_for_add() {
        let spec = Arc::new(MultisetSpec::from_params(2, &MultisetParams::default()).unwrap());
        let mut r = Replica::new(p(2), spec.clone());
        let del = spec.delete(0);
        assert!(r.on_r_delivered(p(1), 1, del).is_empty());
        assert_eq!(r.stuck()[0].clause, GateClause::Legality);
        let done = r.on_r_delivered(p(2), 1, MultisetSpec::add(0));
        assert_eq!(done.len(), 2);
        assert_eq!(r.seq().len(), 2);
        assert!(r.state().is_empty());
    }

    #[test]
    fn pop_returns_the_popped_task() {
        let spec = Arc::new(WsdSpec::from_params(2, &WsdParams::default()).unwrap());
        let mut r = Replica::new(p(1), spec);
        let push = r.begin_update(&WsdSpec::push_bottom(p(1), 100)).unwrap();
        r.on_r_delivered(p(1), push.sn, push.op);
        r.complete_update().unwrap();
        let pop = r.begin_update(&WsdSpec::pop_bottom(p(1))).unwrap();
        r.on_r_delivered(p(1), pop.sn, pop.op);
        assert_eq!(r.complete_update(), Some((2, Value::Int(100))));
    }
}

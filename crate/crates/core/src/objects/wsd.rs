//! Work-stealing deque: one deque per process, task ids partitioned by
//! submitter, results published as common updates.
//!
//! Pushes append at the end of the sequence and pops remove its front;
//! `get_top` reads the end, `get_bottom` the front.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::ObjectError;
use crate::spec::{PcoSpec, Value};
use crate::trace::{Alphabet, OpKind, Operation, ProcessId, Trace};

pub const PUSH_BOTTOM: &str = "push_bottom";
pub const POP_BOTTOM: &str = "pop_bottom";
pub const REMOVE: &str = "remove";
pub const ADD_RESULT: &str = "add_result";
pub const GET_TOP: &str = "get_top";
pub const GET_BOTTOM: &str = "get_bottom";
pub const GET_PENDING: &str = "get_pending";
pub const GET_RESULTS: &str = "get_results";

/// Tasks per process in the default configuration.
pub const DEFAULT_TASKS_PER_PROCESS: i64 = 5;

/// The one valid result of task `t`.
pub fn reference_result(t: i64) -> i64 {
    t.wrapping_mul(31).wrapping_add(7)
}

/// A result that fails validation for task `t`.
pub fn invalid_result(t: i64) -> i64 {
    reference_result(t).wrapping_add(1)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WsdParams {
    /// Process id → task ids it may submit. Empty means `i*100 + k` for
    /// `k < 5` at every process.
    #[serde(default, deserialize_with = "crate::spec::int_keys::deserialize")]
    pub tasks: BTreeMap<u32, Vec<i64>>,
}

#[derive(Clone, Debug)]
pub struct WsdSpec {
    n: usize,
    owner: BTreeMap<i64, ProcessId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct WsdState {
    pub deques: Vec<Vec<i64>>,
    pub pushed: BTreeSet<i64>,
    pub results: BTreeMap<i64, BTreeSet<i64>>,
}

impl WsdSpec {
    pub fn new(n: usize, owner: BTreeMap<i64, ProcessId>) -> Result<Self, ObjectError> {
        if n == 0 {
            return Err(ObjectError::InvalidParams("n must be positive".into()));
        }
        if let Some((t, p)) = owner.iter().find(|(_, p)| !p.in_system(n)) {
            return Err(ObjectError::InvalidParams(format!("task {t} owned by {p}, outside 1..={n}")));
        }
        Ok(WsdSpec { n, owner })
    }

    pub fn from_params(n: usize, params: &WsdParams) -> Result<Self, ObjectError> {
        let mut owner = BTreeMap::new();
        if params.tasks.is_empty() {
            for p in ProcessId::all(n) {
                for k in 0..DEFAULT_TASKS_PER_PROCESS {
                    owner.insert(p.index() as i64 * 100 + k, p);
                }
            }
        } else {
            for (&i, ts) in &params.tasks {
                if i == 0 {
                    return Err(ObjectError::InvalidParams("process ids start at 1".into()));
                }
                for &t in ts {
                    if let Some(prev) = owner.insert(t, ProcessId::new(i)) {
                        if prev != ProcessId::new(i) {
                            return Err(ObjectError::InvalidParams(format!(
                                "task {t} assigned to both {prev} and p{i}"
                            )));
                        }
                    }
                }
            }
        }
        WsdSpec::new(n, owner)
    }

    pub fn owner_of(&self, t: i64) -> Option<ProcessId> {
        self.owner.get(&t).copied()
    }

    pub fn tasks_of(&self, p: ProcessId) -> Vec<i64> {
        self.owner.iter().filter(|(_, &q)| q == p).map(|(&t, _)| t).collect()
    }

    pub fn is_valid_result(&self, t: i64, r: i64) -> bool {
        self.owner.contains_key(&t) && r == reference_result(t)
    }

    pub fn push_bottom(p: ProcessId, t: i64) -> Operation {
        Operation::owned(p, PUSH_BOTTOM, vec![t])
    }

    pub fn pop_bottom(p: ProcessId) -> Operation {
        Operation::owned(p, POP_BOTTOM, vec![])
    }

    pub fn remove(p: ProcessId, t: i64) -> Operation {
        Operation::owned(p, REMOVE, vec![t])
    }

    pub fn add_result(t: i64, r: i64) -> Operation {
        Operation::common(ADD_RESULT, vec![t, r])
    }

    pub fn get_top(p: ProcessId) -> Operation {
        Operation::query(GET_TOP, vec![p.index() as i64])
    }

    pub fn get_bottom(p: ProcessId) -> Operation {
        Operation::query(GET_BOTTOM, vec![p.index() as i64])
    }

    pub fn get_pending(p: ProcessId) -> Operation {
        Operation::query(GET_PENDING, vec![p.index() as i64])
    }

    pub fn get_results(t: i64) -> Operation {
        Operation::query(GET_RESULTS, vec![t])
    }

    fn process(&self, arg: Option<i64>) -> Option<usize> {
        arg.filter(|&i| i >= 1 && i as usize <= self.n).map(|i| i as usize - 1)
    }

    /// `d_state` for every process recomputed from the per-owner
    /// sequences, or `None` where it collapses (a pop on an empty deque or
    /// a second push of the same task).
    pub fn d_state(&self, trace: &Trace) -> Vec<Option<Vec<i64>>> {
        ProcessId::all(self.n)
            .map(|p| {
                let mut d: Vec<i64> = Vec::new();
                let mut pushed = BTreeSet::new();
                for op in trace.owned(p) {
                    match (op.name.as_str(), op.args.as_slice()) {
                        (PUSH_BOTTOM, [t]) => {
                            if !pushed.insert(*t) {
                                return None;
                            }
                            d.push(*t);
                        }
                        (POP_BOTTOM, []) => {
                            if d.is_empty() {
                                return None;
                            }
                            d.remove(0);
                        }
                        (REMOVE, [t]) => d.retain(|x| x != t),
                        _ => {}
                    }
                }
                Some(d)
            })
            .collect()
    }
}

impl Alphabet for WsdSpec {
    fn n(&self) -> usize {
        self.n
    }

    fn contains(&self, op: &Operation) -> bool {
        match (op.kind, op.name.as_str(), op.args.as_slice()) {
            (OpKind::Owned(p), PUSH_BOTTOM | REMOVE, [t]) => self.owner_of(*t) == Some(p),
            (OpKind::Owned(p), POP_BOTTOM, []) => p.in_system(self.n),
            (OpKind::Common, ADD_RESULT, [t, r]) => self.is_valid_result(*t, *r),
            (OpKind::Query, GET_TOP | GET_BOTTOM | GET_PENDING, [i]) => self.process(Some(*i)).is_some(),
            (OpKind::Query, GET_RESULTS, [_]) => true,
            _ => false,
        }
    }
}

impl PcoSpec for WsdSpec {
    type State = WsdState;

    fn name(&self) -> &'static str {
        "wsd"
    }

    fn initial_state(&self) -> WsdState {
        WsdState {
            deques: vec![Vec::new(); self.n],
            ..WsdState::default()
        }
    }

    fn transition(&self, state: &WsdState, op: &Operation) -> Option<WsdState> {
        if !self.contains(op) || op.kind == OpKind::Query {
            return None;
        }
        let mut next = state.clone();
        match (op.kind, op.name.as_str(), op.args.as_slice()) {
            (OpKind::Owned(p), PUSH_BOTTOM, [t]) => {
                if !next.pushed.insert(*t) {
                    return None;
                }
                next.deques[p.slot()].push(*t);
            }
            (OpKind::Owned(p), POP_BOTTOM, []) => {
                let d = &mut next.deques[p.slot()];
                if d.is_empty() {
                    return None;
                }
                d.remove(0);
            }
            (OpKind::Owned(p), REMOVE, [t]) => next.deques[p.slot()].retain(|x| x != t),
            (OpKind::Common, ADD_RESULT, [t, r]) => {
                next.results.entry(*t).or_default().insert(*r);
            }
            _ => return None,
        }
        Some(next)
    }

    fn query(&self, state: &WsdState, q: &Operation) -> Value {
        let deque = |q: &Operation| self.process(q.arg(0)).map(|i| &state.deques[i]);
        match q.name.as_str() {
            GET_TOP => deque(q).and_then(|d| d.last()).map_or(Value::Bottom, |&t| Value::Int(t)),
            GET_BOTTOM => deque(q).and_then(|d| d.first()).map_or(Value::Bottom, |&t| Value::Int(t)),
            GET_PENDING => deque(q).map_or(Value::Bottom, |d| Value::Set(d.iter().copied().collect())),
            GET_RESULTS => Value::Set(
                q.arg(0)
                    .and_then(|t| state.results.get(&t))
                    .cloned()
                    .unwrap_or_default(),
            ),
            _ => Value::Bottom,
        }
    }

    fn output(&self, up: &Operation, state: &WsdState) -> Value {
        match (up.kind, up.name.as_str()) {
            (OpKind::Owned(p), POP_BOTTOM) => state
                .deques
                .get(p.slot())
                .and_then(|d| d.first())
                .map_or(Value::Bottom, |&t| Value::Int(t)),
            _ => Value::Silent,
        }
    }

    fn trace_predicate(&self, trace: &Trace) -> Option<bool> {
        Some(self.d_state(trace).iter().all(Option::is_some))
    }

    fn queries(&self) -> Vec<Operation> {
        let mut qs = Vec::new();
        for p in ProcessId::all(self.n) {
            qs.push(Self::get_top(p));
            qs.push(Self::get_bottom(p));
            qs.push(Self::get_pending(p));
        }
        qs.extend(self.owner.keys().map(|&t| Self::get_results(t)));
        qs
    }

    fn propose_common(&self, rng: &mut dyn RngCore) -> Option<Operation> {
        if self.owner.is_empty() {
            return None;
        }
        let t = *self.owner.keys().nth(rng.gen_range(0..self.owner.len()))?;
        Some(Self::add_result(t, reference_result(t)))
    }

    fn propose_owned(&self, owner: ProcessId, state: &WsdState, rng: &mut dyn RngCore) -> Option<Operation> {
        let mine = self.tasks_of(owner);
        let deque = state.deques.get(owner.slot())?;
        match rng.gen_range(0..3) {
            0 => {
                let fresh: Vec<i64> = mine.iter().copied().filter(|t| !state.pushed.contains(t)).collect();
                let pool = if fresh.is_empty() { &mine } else { &fresh };
                (!pool.is_empty()).then(|| Self::push_bottom(owner, pool[rng.gen_range(0..pool.len())]))
            }
            1 => Some(Self::pop_bottom(owner)),
            _ => {
                let pool = if deque.is_empty() { &mine } else { deque };
                (!pool.is_empty()).then(|| Self::remove(owner, pool[rng.gen_range(0..pool.len())]))
            }
        }
    }
}

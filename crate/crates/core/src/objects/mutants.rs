//! Deliberately broken objects used as negative controls for the closure
//! validators.

use rand::RngCore;

use super::money::{MoneySpec, MoneyState, TRANSFER};
use super::multiset::{MultisetSpec, MultisetState, ADD};
use crate::spec::{PcoSpec, Value};
use crate::trace::{Alphabet, Operation, ProcessId};

/// Refuses `add_e` once `e` is present twice.
#[derive(Clone, Debug)]
pub struct RefusingMultiset {
    inner: MultisetSpec,
}

impl RefusingMultiset {
    pub const LIMIT: i64 = 2;

    pub fn new(inner: MultisetSpec) -> Self {
        RefusingMultiset { inner }
    }
}

impl Alphabet for RefusingMultiset {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn contains(&self, op: &Operation) -> bool {
        self.inner.contains(op)
    }
}

impl PcoSpec for RefusingMultiset {
    type State = MultisetState;

    fn name(&self) -> &'static str {
        "mutant-multiset"
    }

    fn initial_state(&self) -> MultisetState {
        self.inner.initial_state()
    }

    fn transition(&self, state: &MultisetState, op: &Operation) -> Option<MultisetState> {
        if op.name == ADD && op.arg(0).and_then(|e| state.get(&e)).copied().unwrap_or(0) >= Self::LIMIT {
            return None;
        }
        self.inner.transition(state, op)
    }

    fn query(&self, state: &MultisetState, q: &Operation) -> Value {
        self.inner.query(state, q)
    }

    fn output(&self, up: &Operation, state: &MultisetState) -> Value {
        self.inner.output(up, state)
    }

    fn queries(&self) -> Vec<Operation> {
        self.inner.queries()
    }

    fn propose_common(&self, rng: &mut dyn RngCore) -> Option<Operation> {
        self.inner.propose_common(rng)
    }

    fn propose_owned(&self, owner: ProcessId, state: &MultisetState, rng: &mut dyn RngCore) -> Option<Operation> {
        self.inner.propose_owned(owner, state, rng)
    }
}

/// Money with a per-account ceiling: a transfer is refused when it would
/// push the recipient above `cap`, so a mint to the recipient can disable
/// a transfer that was legal before it.
#[derive(Clone, Debug)]
pub struct CappedMoney {
    inner: MoneySpec,
    cap: i64,
}

impl CappedMoney {
    pub fn new(inner: MoneySpec) -> Self {
        let cap = inner.init().iter().copied().max().unwrap_or(0) * 2;
        CappedMoney { inner, cap }
    }

    pub fn with_cap(inner: MoneySpec, cap: i64) -> Self {
        CappedMoney { inner, cap }
    }
}

impl Alphabet for CappedMoney {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn contains(&self, op: &Operation) -> bool {
        self.inner.contains(op)
    }
}

impl PcoSpec for CappedMoney {
    type State = MoneyState;

    fn name(&self) -> &'static str {
        "mutant-money"
    }

    fn initial_state(&self) -> MoneyState {
        self.inner.initial_state()
    }

    fn transition(&self, state: &MoneyState, op: &Operation) -> Option<MoneyState> {
        let next = self.inner.apply(state, op)?;
        if op.name == TRANSFER {
            if let [from, to, _] = op.args.as_slice() {
                if from != to && next[*to as usize - 1] > self.cap {
                    return None;
                }
            }
        }
        Some(next)
    }

    fn query(&self, state: &MoneyState, q: &Operation) -> Value {
        self.inner.query(state, q)
    }

    fn output(&self, up: &Operation, state: &MoneyState) -> Value {
        self.inner.output(up, state)
    }

    fn queries(&self) -> Vec<Operation> {
        self.inner.queries()
    }

    fn propose_common(&self, rng: &mut dyn RngCore) -> Option<Operation> {
        self.inner.propose_common(rng)
    }

    fn propose_owned(&self, owner: ProcessId, state: &MoneyState, rng: &mut dyn RngCore) -> Option<Operation> {
        self.inner.propose_owned(owner, state, rng)
    }
}

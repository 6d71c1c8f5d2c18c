//! Multiset with deletion rights: anyone adds, only the element's owner
//! deletes, and only present elements can be deleted.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::ObjectError;
use crate::spec::{PcoSpec, Value};
use crate::trace::{Alphabet, OpKind, Operation, ProcessId, Trace};

pub const ADD: &str = "add";
pub const DELETE: &str = "delete";
pub const GET_SET: &str = "get_set";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultisetParams {
    /// Element → process holding its deletion right. Empty means the
    /// default universe `0..2n` assigned round-robin.
    #[serde(default)]
    pub ownership: BTreeMap<i64, u32>,
}

#[derive(Clone, Debug)]
pub struct MultisetSpec {
    n: usize,
    ownership: BTreeMap<i64, ProcessId>,
}

/// Element multiplicities; zero entries are omitted.
pub type MultisetState = BTreeMap<i64, i64>;

impl MultisetSpec {
    pub fn new(n: usize, ownership: BTreeMap<i64, ProcessId>) -> Result<Self, ObjectError> {
        if n == 0 {
            return Err(ObjectError::InvalidParams("n must be positive".into()));
        }
        if ownership.is_empty() {
            return Err(ObjectError::InvalidParams("element universe is empty".into()));
        }
        if let Some((e, p)) = ownership.iter().find(|(_, p)| !p.in_system(n)) {
            return Err(ObjectError::InvalidParams(format!(
                "element {e} is owned by {p}, outside 1..={n}"
            )));
        }
        Ok(MultisetSpec { n, ownership })
    }

    pub fn from_params(n: usize, params: &MultisetParams) -> Result<Self, ObjectError> {
        let ownership = if params.ownership.is_empty() {
            (0..2 * n as i64)
                .map(|e| (e, ProcessId::from_slot(e as usize % n.max(1))))
                .collect()
        } else {
            let mut m = BTreeMap::new();
            for (&e, &p) in &params.ownership {
                if p == 0 {
                    return Err(ObjectError::InvalidParams(format!(
                        "element {e} has owner 0; process ids start at 1"
                    )));
                }
                m.insert(e, ProcessId::new(p));
            }
            m
        };
        MultisetSpec::new(n, ownership)
    }

    pub fn owner_of(&self, e: i64) -> Option<ProcessId> {
        self.ownership.get(&e).copied()
    }

    pub fn elements(&self) -> impl Iterator<Item = i64> + '_ {
        self.ownership.keys().copied()
    }

    pub fn add(e: i64) -> Operation {
        Operation::common(ADD, vec![e])
    }

    /// `delete_e`, attributed to the element's owner.
    pub fn delete(&self, e: i64) -> Operation {
        let owner = self.owner_of(e).unwrap_or(ProcessId::new(1));
        Operation::owned(owner, DELETE, vec![e])
    }

    pub fn get_set() -> Operation {
        Operation::query(GET_SET, vec![])
    }

    fn element(&self, op: &Operation) -> Option<i64> {
        match op.args.as_slice() {
            [e] if self.ownership.contains_key(e) => Some(*e),
            _ => None,
        }
    }
}

impl Alphabet for MultisetSpec {
    fn n(&self) -> usize {
        self.n
    }

    fn contains(&self, op: &Operation) -> bool {
        match (op.kind, op.name.as_str()) {
            (OpKind::Common, ADD) => self.element(op).is_some(),
            (OpKind::Owned(p), DELETE) => self.element(op).and_then(|e| self.owner_of(e)) == Some(p),
            (OpKind::Query, GET_SET) => op.args.is_empty(),
            _ => false,
        }
    }
}

impl PcoSpec for MultisetSpec {
    type State = MultisetState;

    fn name(&self) -> &'static str {
        "multiset"
    }

    fn initial_state(&self) -> MultisetState {
        MultisetState::new()
    }

    fn transition(&self, state: &MultisetState, op: &Operation) -> Option<MultisetState> {
        if !self.contains(op) {
            return None;
        }
        let e = op.args[0];
        let mut next = state.clone();
        match op.name.as_str() {
            ADD => *next.entry(e).or_insert(0) += 1,
            DELETE => {
                let m = next.get_mut(&e)?;
                *m -= 1;
                if *m == 0 {
                    next.remove(&e);
                }
            }
            _ => return None,
        }
        Some(next)
    }

    fn query(&self, state: &MultisetState, _q: &Operation) -> Value {
        Value::Map(state.clone())
    }

    fn output(&self, _up: &Operation, _state: &MultisetState) -> Value {
        Value::Silent
    }

    fn trace_predicate(&self, trace: &Trace) -> Option<bool> {
        Some(self.elements().all(|e| {
            let adds = trace.count_matching(|op| op.name == ADD && op.args == [e]);
            let dels = trace.count_matching(|op| op.name == DELETE && op.args == [e]);
            adds >= dels
        }))
    }

    fn queries(&self) -> Vec<Operation> {
        vec![Self::get_set()]
    }

    fn propose_common(&self, rng: &mut dyn RngCore) -> Option<Operation> {
        let i = rng.gen_range(0..self.ownership.len());
        self.elements().nth(i).map(Self::add)
    }

    fn propose_owned(
        &self,
        owner: ProcessId,
        state: &MultisetState,
        rng: &mut dyn RngCore,
    ) -> Option<Operation> {
        let mine: Vec<i64> = self
            .ownership
            .iter()
            .filter(|(_, &p)| p == owner)
            .map(|(&e, _)| e)
            .collect();
        if mine.is_empty() {
            return None;
        }
        let present: Vec<i64> = mine.iter().copied().filter(|e| state.contains_key(e)).collect();
        let e = if !present.is_empty() && rng.gen_bool(0.7) {
            present[rng.gen_range(0..present.len())]
        } else {
            mine[rng.gen_range(0..mine.len())]
        };
        Some(Operation::owned(owner, DELETE, vec![e]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::step_word;

    fn spec() -> MultisetSpec {
        MultisetSpec::from_params(2, &MultisetParams::default()).unwrap()
    }

    #[test]
    fn delete_needs_presence() {
        let s = spec();
        assert_eq!(s.transition(&MultisetState::new(), &s.delete(0)), None);
        let st = step_word(&s, &[MultisetSpec::add(0), MultisetSpec::add(0), s.delete(0)]).unwrap();
        assert_eq!(st.get(&0), Some(&1));
        assert_eq!(s.query(&st, &MultisetSpec::get_set()), Value::Map([(0, 1)].into()));
    }

    #[test]
    fn delete_by_non_owner_is_outside_the_alphabet() {
        let s = spec();
        // element 0 belongs to p1
        let forged = Operation::owned(ProcessId::new(2), DELETE, vec![0]);
        assert!(!s.contains(&forged));
        assert!(!s.authorizes(ProcessId::new(2), &s.delete(0)));
        assert!(s.authorizes(ProcessId::new(1), &s.delete(0)));
        assert!(s.authorizes(ProcessId::new(2), &MultisetSpec::add(0)));
    }

    #[test]
    fn ownership_must_be_in_range() {
        let bad = MultisetParams {
            ownership: [(1, 3)].into(),
        };
        assert!(MultisetSpec::from_params(2, &bad).is_err());
        let zero = MultisetParams {
            ownership: [(1, 0)].into(),
        };
        assert!(MultisetSpec::from_params(2, &zero).is_err());
    }
}

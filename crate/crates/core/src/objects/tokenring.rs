//! Two-process token ring: the token starts with Alice (p1) and the only
//! legal moves alternate `t_ab`, `t_ba`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::spec::{PcoSpec, Value};
use crate::trace::{Alphabet, Operation, ProcessId, Trace};

pub const T_AB: &str = "t_ab";
pub const T_BA: &str = "t_ba";
pub const HOLDER: &str = "holder";

/// The two classes of indistinguishable legal traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Holder {
    A,
    B,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TokenRing;

impl TokenRing {
    pub fn alice() -> ProcessId {
        ProcessId::new(1)
    }

    pub fn bob() -> ProcessId {
        ProcessId::new(2)
    }

    pub fn t_ab() -> Operation {
        Operation::owned(Self::alice(), T_AB, vec![])
    }

    pub fn t_ba() -> Operation {
        Operation::owned(Self::bob(), T_BA, vec![])
    }

    pub fn holder() -> Operation {
        Operation::query(HOLDER, vec![])
    }
}

impl Alphabet for TokenRing {
    fn n(&self) -> usize {
        2
    }

    fn contains(&self, op: &Operation) -> bool {
        *op == Self::t_ab() || *op == Self::t_ba() || *op == Self::holder()
    }
}

impl PcoSpec for TokenRing {
    type State = Holder;

    fn name(&self) -> &'static str {
        "tokenring"
    }

    fn initial_state(&self) -> Holder {
        Holder::A
    }

    fn transition(&self, state: &Holder, op: &Operation) -> Option<Holder> {
        match (state, op.name.as_str()) {
            (Holder::A, T_AB) if *op == Self::t_ab() => Some(Holder::B),
            (Holder::B, T_BA) if *op == Self::t_ba() => Some(Holder::A),
            _ => None,
        }
    }

    fn query(&self, state: &Holder, _q: &Operation) -> Value {
        Value::Int(match state {
            Holder::A => 1,
            Holder::B => 2,
        })
    }

    fn output(&self, _up: &Operation, _state: &Holder) -> Value {
        Value::Silent
    }

    /// `0 ≤ |u|(t_ab) − |u|(t_ba) ≤ 1`.
    fn trace_predicate(&self, trace: &Trace) -> Option<bool> {
        let ab = trace.count_matching(|op| *op == Self::t_ab()) as i64;
        let ba = trace.count_matching(|op| *op == Self::t_ba()) as i64;
        Some((0..=1).contains(&(ab - ba)))
    }

    fn queries(&self) -> Vec<Operation> {
        vec![Self::holder()]
    }

    fn propose_common(&self, _rng: &mut dyn RngCore) -> Option<Operation> {
        None
    }

    fn propose_owned(&self, owner: ProcessId, _state: &Holder, _rng: &mut dyn RngCore) -> Option<Operation> {
        match owner.index() {
            1 => Some(Self::t_ab()),
            2 => Some(Self::t_ba()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{oracle_word_reachable, step_word};
    use crate::trace::word_to_trace;

    #[test]
    fn alternating_word_ends_with_bob() {
        let (ab, ba) = (TokenRing::t_ab(), TokenRing::t_ba());
        let w = [ab.clone(), ba.clone(), ab.clone(), ba.clone(), ab.clone()];
        assert_eq!(step_word(&TokenRing, &w), Some(Holder::B));
        for k in 0..=w.len() {
            assert!(step_word(&TokenRing, &w[..k]).is_some());
        }
        assert_eq!(step_word(&TokenRing, &[ab.clone(), ba.clone()]), Some(Holder::A));
        assert_eq!(step_word(&TokenRing, &[ba.clone(), ab]), None);
    }

    #[test]
    fn u5_is_legal_but_only_alternating_words_step() {
        let (ab, ba) = (TokenRing::t_ab(), TokenRing::t_ba());
        let u5 = word_to_trace(&TokenRing, &[ab.clone(), ab.clone(), ab.clone(), ba.clone(), ba.clone()]).unwrap();
        assert_eq!(TokenRing.trace_predicate(&u5), Some(true));
        assert!(oracle_word_reachable(&TokenRing, &u5, 10).unwrap());
        let reps = u5.representatives(10).unwrap();
        let stepping: Vec<_> = reps.iter().filter(|w| step_word(&TokenRing, w).is_some()).collect();
        assert_eq!(stepping, vec![&vec![ab.clone(), ba.clone(), ab.clone(), ba.clone(), ab]]);
        let v = word_to_trace(&TokenRing, &[ba.clone(), ba]).unwrap();
        assert_eq!(TokenRing.trace_predicate(&v), Some(false));
    }
}

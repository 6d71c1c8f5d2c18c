//! Shared Petri net with transition rights.
//!
//! Transitions that compete for an input place (transitively) must all be
//! owned by the same process; common transitions have no input places.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::ObjectError;
use crate::spec::{PcoSpec, Value};
use crate::trace::{Alphabet, OpKind, Operation, ProcessId, Trace};

pub const FIRE: &str = "fire";
pub const MARKING: &str = "marking";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceDef {
    pub name: String,
    #[serde(default)]
    pub initial: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDef {
    pub name: String,
    /// Input place → weight consumed.
    #[serde(default)]
    pub inputs: BTreeMap<String, i64>,
    /// Output place → weight produced.
    #[serde(default)]
    pub outputs: BTreeMap<String, i64>,
    /// Process holding the firing right; absent for common transitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<u32>,
}

/// Places, transitions with weighted arcs, initial marking, and the
/// assignment of transitions to `T_C` or some `T_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PetriNetDef {
    pub places: Vec<PlaceDef>,
    pub transitions: Vec<TransitionDef>,
}

impl PetriNetDef {
    /// A small producer/consumer net for `n` processes: each process has a
    /// buffer fed by a common generator and drained by two competing
    /// transitions it owns, one of which also feeds the next buffer.
    pub fn example(n: usize) -> Self {
        let buf = |i: usize| format!("buf{i}");
        let mut places: Vec<PlaceDef> = (1..=n)
            .map(|i| PlaceDef {
                name: buf(i),
                initial: 1,
            })
            .collect();
        places.push(PlaceDef {
            name: "done".into(),
            initial: 0,
        });
        let mut transitions = Vec::new();
        for i in 1..=n {
            let next = i % n + 1;
            transitions.push(TransitionDef {
                name: format!("gen{i}"),
                inputs: BTreeMap::new(),
                outputs: [(buf(i), 1)].into(),
                owner: None,
            });
            transitions.push(TransitionDef {
                name: format!("consume{i}"),
                inputs: [(buf(i), 1)].into(),
                outputs: [("done".to_string(), 1)].into(),
                owner: Some(i as u32),
            });
            let mut outputs: BTreeMap<String, i64> = [("done".to_string(), 1)].into();
            *outputs.entry(buf(next)).or_insert(0) += 1;
            transitions.push(TransitionDef {
                name: format!("batch{i}"),
                inputs: [(buf(i), 2)].into(),
                outputs,
                owner: Some(i as u32),
            });
        }
        PetriNetDef { places, transitions }
    }
}

#[derive(Clone, Debug)]
struct Transition {
    name: String,
    inputs: Vec<(usize, i64)>,
    outputs: Vec<(usize, i64)>,
    owner: Option<ProcessId>,
}

#[derive(Clone, Debug)]
pub struct PetriSpec {
    n: usize,
    place_names: Vec<String>,
    initial: Vec<i64>,
    transitions: Vec<Transition>,
}

/// Tokens per place, in declaration order.
pub type PetriState = Vec<i64>;

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = x;
    while parent[cur] != root {
        let up = parent[cur];
        parent[cur] = root;
        cur = up;
    }
    root
}

impl PetriSpec {
    pub fn new(n: usize, def: PetriNetDef) -> Result<Self, ObjectError> {
        let invalid = |m: String| Err(ObjectError::InvalidParams(m));
        let mut index = BTreeMap::new();
        for (i, p) in def.places.iter().enumerate() {
            if index.insert(p.name.clone(), i).is_some() {
                return invalid(format!("duplicate place {}", p.name));
            }
            if p.initial < 0 {
                return invalid(format!("place {} starts with {} tokens", p.name, p.initial));
            }
        }
        let mut names = BTreeSet::new();
        let mut transitions = Vec::with_capacity(def.transitions.len());
        for t in &def.transitions {
            if !names.insert(t.name.clone()) || index.contains_key(&t.name) {
                return invalid(format!("duplicate or clashing transition name {}", t.name));
            }
            let arcs = |m: &BTreeMap<String, i64>| -> Result<Vec<(usize, i64)>, ObjectError> {
                m.iter()
                    .map(|(place, &w)| match index.get(place) {
                        None => Err(ObjectError::InvalidParams(format!(
                            "transition {} refers to unknown place {place}",
                            t.name
                        ))),
                        Some(_) if w <= 0 => Err(ObjectError::InvalidParams(format!(
                            "arc {place}/{} has non-positive weight {w}",
                            t.name
                        ))),
                        Some(&i) => Ok((i, w)),
                    })
                    .collect()
            };
            let owner = match t.owner {
                None => None,
                Some(i) if i >= 1 && i as usize <= n => Some(ProcessId::new(i)),
                Some(i) => return invalid(format!("transition {} owned by p{i}, outside 1..={n}", t.name)),
            };
            transitions.push(Transition {
                name: t.name.clone(),
                inputs: arcs(&t.inputs)?,
                outputs: arcs(&t.outputs)?,
                owner,
            });
        }
        let spec = PetriSpec {
            n,
            place_names: def.places.iter().map(|p| p.name.clone()).collect(),
            initial: def.places.iter().map(|p| p.initial).collect(),
            transitions,
        };
        spec.check_partition()?;
        Ok(spec)
    }

    /// Common transitions have no inputs; every conflict class is owned by
    /// a single process.
    fn check_partition(&self) -> Result<(), ObjectError> {
        for t in &self.transitions {
            if t.owner.is_none() && !t.inputs.is_empty() {
                return Err(ObjectError::InvalidPartition(format!(
                    "common transition {} has an input place",
                    t.name
                )));
            }
        }
        let mut parent: Vec<usize> = (0..self.transitions.len()).collect();
        let mut first_consumer: BTreeMap<usize, usize> = BTreeMap::new();
        for (ti, t) in self.transitions.iter().enumerate() {
            for &(place, _) in &t.inputs {
                match first_consumer.get(&place) {
                    Some(&other) => {
                        let (a, b) = (find(&mut parent, ti), find(&mut parent, other));
                        parent[a] = b;
                    }
                    None => {
                        first_consumer.insert(place, ti);
                    }
                }
            }
        }
        let mut class_owner: BTreeMap<usize, (ProcessId, usize)> = BTreeMap::new();
        for (ti, t) in self.transitions.iter().enumerate() {
            let Some(owner) = t.owner else { continue };
            let root = find(&mut parent, ti);
            match class_owner.get(&root) {
                Some(&(other_owner, other)) if other_owner != owner => {
                    return Err(ObjectError::InvalidPartition(format!(
                        "conflicting transitions {} ({}) and {} ({}) belong to different processes",
                        self.transitions[other].name, other_owner, t.name, owner
                    )));
                }
                Some(_) => {}
                None => {
                    class_owner.insert(root, (owner, ti));
                }
            }
        }
        Ok(())
    }

    pub fn transition_index(&self, name: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t.name == name)
    }

    pub fn place_index(&self, name: &str) -> Option<usize> {
        self.place_names.iter().position(|p| p == name)
    }

    /// `fire_t` for the transition called `name`.
    pub fn fire(&self, name: &str) -> Option<Operation> {
        self.transition_index(name).map(|i| self.fire_index(i))
    }

    fn fire_index(&self, i: usize) -> Operation {
        let t = &self.transitions[i];
        match t.owner {
            Some(p) => Operation::owned(p, FIRE, vec![i as i64]),
            None => Operation::common(FIRE, vec![i as i64]),
        }
    }

    pub fn marking_query() -> Operation {
        Operation::query(MARKING, vec![])
    }

    fn fired(&self, op: &Operation) -> Option<&Transition> {
        match op.args.as_slice() {
            [i] if *i >= 0 => self.transitions.get(*i as usize),
            _ => None,
        }
    }

    /// Marking recomputed from the trace: initial tokens plus everything
    /// produced minus everything consumed.
    pub fn marking_of(&self, trace: &Trace) -> Vec<i64> {
        let mut m = self.initial.clone();
        for op in trace.to_word() {
            if let Some(t) = self.fired(&op) {
                for &(p, w) in &t.outputs {
                    m[p] += w;
                }
                for &(p, w) in &t.inputs {
                    m[p] -= w;
                }
            }
        }
        m
    }
}

impl Alphabet for PetriSpec {
    fn n(&self) -> usize {
        self.n
    }

    fn contains(&self, op: &Operation) -> bool {
        match (op.kind, op.name.as_str()) {
            (OpKind::Query, MARKING) => op.args.is_empty(),
            (kind, FIRE) => match self.fired(op) {
                Some(t) => match (kind, t.owner) {
                    (OpKind::Common, None) => true,
                    (OpKind::Owned(p), Some(q)) => p == q,
                    _ => false,
                },
                None => false,
            },
            _ => false,
        }
    }
}

impl PcoSpec for PetriSpec {
    type State = PetriState;

    fn name(&self) -> &'static str {
        "petrinet"
    }

    fn initial_state(&self) -> PetriState {
        self.initial.clone()
    }

    fn transition(&self, state: &PetriState, op: &Operation) -> Option<PetriState> {
        if !self.contains(op) || op.kind == OpKind::Query {
            return None;
        }
        let t = self.fired(op)?;
        if t.inputs.iter().any(|&(p, w)| state[p] < w) {
            return None;
        }
        let mut next = state.clone();
        for &(p, w) in &t.inputs {
            next[p] -= w;
        }
        for &(p, w) in &t.outputs {
            next[p] += w;
        }
        Some(next)
    }

    fn query(&self, state: &PetriState, _q: &Operation) -> Value {
        Value::Map(state.iter().enumerate().map(|(i, &m)| (i as i64, m)).collect())
    }

    fn output(&self, _up: &Operation, _state: &PetriState) -> Value {
        Value::Silent
    }

    fn trace_predicate(&self, trace: &Trace) -> Option<bool> {
        Some(self.marking_of(trace).iter().all(|&m| m >= 0))
    }

    fn queries(&self) -> Vec<Operation> {
        vec![Self::marking_query()]
    }

    fn propose_common(&self, rng: &mut dyn RngCore) -> Option<Operation> {
        let common: Vec<usize> = (0..self.transitions.len())
            .filter(|&i| self.transitions[i].owner.is_none())
            .collect();
        if common.is_empty() {
            return None;
        }
        Some(self.fire_index(common[rng.gen_range(0..common.len())]))
    }

    fn propose_owned(&self, owner: ProcessId, _state: &PetriState, rng: &mut dyn RngCore) -> Option<Operation> {
        let mine: Vec<usize> = (0..self.transitions.len())
            .filter(|&i| self.transitions[i].owner == Some(owner))
            .collect();
        if mine.is_empty() {
            return None;
        }
        Some(self.fire_index(mine[rng.gen_range(0..mine.len())]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::step_word;

    fn single(initial: i64) -> PetriNetDef {
        PetriNetDef {
            places: vec![
                PlaceDef {
                    name: "p".into(),
                    initial,
                },
                PlaceDef {
                    name: "q".into(),
                    initial: 0,
                },
            ],
            transitions: vec![
                TransitionDef {
                    name: "t".into(),
                    inputs: [("p".to_string(), 1)].into(),
                    outputs: [("q".to_string(), 1)].into(),
                    owner: Some(1),
                },
                TransitionDef {
                    name: "src".into(),
                    inputs: BTreeMap::new(),
                    outputs: [("q".to_string(), 2)].into(),
                    owner: None,
                },
            ],
        }
    }

    #[test]
    fn fires_once_per_token() {
        let s = PetriSpec::new(2, single(1)).unwrap();
        let t = s.fire("t").unwrap();
        let once = step_word(&s, std::slice::from_ref(&t)).unwrap();
        assert_eq!(once, vec![0, 1]);
        assert_eq!(s.transition(&once, &t), None);
    }

    #[test]
    fn source_transition_always_fires() {
        let s = PetriSpec::new(2, single(0)).unwrap();
        let src = s.fire("src").unwrap();
        assert_eq!(src.kind, OpKind::Common);
        let st = step_word(&s, &[src.clone(), src.clone(), src]).unwrap();
        assert_eq!(st, vec![0, 6]);
    }

    #[test]
    fn conflicting_transitions_must_share_an_owner() {
        let mut def = single(1);
        def.transitions.push(TransitionDef {
            name: "t2".into(),
            inputs: [("p".to_string(), 1)].into(),
            outputs: BTreeMap::new(),
            owner: Some(2),
        });
        assert!(matches!(
            PetriSpec::new(2, def.clone()),
            Err(ObjectError::InvalidPartition(_))
        ));
        def.transitions.last_mut().unwrap().owner = Some(1);
        assert!(PetriSpec::new(2, def).is_ok());
    }

    #[test]
    fn conflict_closure_is_transitive() {
        // a and b share p, b and c share q: a and c are in one class.
        let place = |name: &str| PlaceDef {
            name: name.into(),
            initial: 1,
        };
        let tr = |name: &str, ins: &[&str], owner| TransitionDef {
            name: name.into(),
            inputs: ins.iter().map(|p| (p.to_string(), 1)).collect(),
            outputs: BTreeMap::new(),
            owner: Some(owner),
        };
        let def = PetriNetDef {
            places: vec![place("p"), place("q")],
            transitions: vec![tr("a", &["p"], 1), tr("b", &["p", "q"], 1), tr("c", &["q"], 2)],
        };
        assert!(matches!(PetriSpec::new(2, def), Err(ObjectError::InvalidPartition(_))));
    }

    #[test]
    fn common_transition_with_input_is_rejected() {
        let mut def = single(1);
        def.transitions[0].owner = None;
        assert!(matches!(PetriSpec::new(2, def), Err(ObjectError::InvalidPartition(_))));
    }

    #[test]
    fn example_net_is_valid() {
        for n in 1..=4 {
            PetriSpec::new(n, PetriNetDef::example(n)).unwrap();
        }
    }
}

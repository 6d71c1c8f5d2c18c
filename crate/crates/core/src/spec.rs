//! Object specifications in state-machine form, plus randomized validators
//! for the three trace-language closure properties and brute-force
//! legality oracles.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::{self, Debug};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::objects::sample_legal_word;
use crate::trace::{Alphabet, OpKind, Operation, ProcessId, Trace, TraceError, Word};

/// Values returned by queries and updates.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    /// Constant output of silent updates.
    Silent,
    /// An output hidden from an observer. Never produced by a spec.
    Masked,
    /// The non-value, e.g. the top of an empty deque.
    Bottom,
    Int(i64),
    Set(BTreeSet<i64>),
    Map(#[serde(deserialize_with = "int_keys::deserialize")] BTreeMap<i64, i64>),
}

/// Integer-keyed maps. Also accepts string keys, since JSON object keys
/// reach tagged or flattened types as strings.
pub(crate) mod int_keys {
    use std::collections::BTreeMap;
    use std::str::FromStr;

    use serde::{de::Error, Deserialize, Deserializer};

    #[derive(Deserialize, PartialEq, Eq, PartialOrd, Ord)]
    #[serde(untagged)]
    enum Key<K> {
        Int(K),
        Str(String),
    }

    pub fn deserialize<'de, D, K, V>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        D: Deserializer<'de>,
        K: Deserialize<'de> + FromStr + Ord,
        V: Deserialize<'de>,
    {
        BTreeMap::<Key<K>, V>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| match k {
                Key::Int(i) => Ok((i, v)),
                Key::Str(s) => s
                    .parse()
                    .map(|i| (i, v))
                    .map_err(|_| D::Error::custom(format!("map key {s:?} is not an integer"))),
            })
            .collect()
    }
}

impl Value {
    pub fn is_visible(&self) -> bool {
        !matches!(self, Value::Masked)
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Silent => f.write_str("silent"),
            Value::Masked => f.write_str("?"),
            Value::Bottom => f.write_str("⊥"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Set(s) => write!(f, "{s:?}"),
            Value::Map(m) => write!(f, "{m:?}"),
        }
    }
}

/// A process-commutative object given as a deterministic partial automaton
/// whose states are the indistinguishability classes of legal traces.
pub trait PcoSpec: Alphabet {
    type State: Clone + PartialEq + Debug;

    /// Registry name of the object.
    fn name(&self) -> &'static str;

    fn initial_state(&self) -> Self::State;

    /// `None` when `op` is not legal in `state`. Never consulted for queries.
    fn transition(&self, state: &Self::State, op: &Operation) -> Option<Self::State>;

    fn query(&self, state: &Self::State, q: &Operation) -> Value;

    /// Value returned by `up` when applied to `state` (the state strictly
    /// before `up`). Silent updates return [`Value::Silent`].
    fn output(&self, up: &Operation, state: &Self::State) -> Value;

    /// Closed-form membership in the trace language, when available.
    fn trace_predicate(&self, _trace: &Trace) -> Option<bool> {
        None
    }

    /// A finite set of queries that together observe the whole state.
    fn queries(&self) -> Vec<Operation>;

    /// A random common update, or `None` if `C` is empty.
    fn propose_common(&self, rng: &mut dyn RngCore) -> Option<Operation>;

    /// A random update of `O_owner`, possibly illegal in `state`, or `None`
    /// if `O_owner` is empty.
    fn propose_owned(
        &self,
        owner: ProcessId,
        state: &Self::State,
        rng: &mut dyn RngCore,
    ) -> Option<Operation>;
}

/// Folds `transition` over `w` from the initial state.
pub fn step_word<S: PcoSpec + ?Sized>(spec: &S, w: &[Operation]) -> Option<S::State> {
    w.iter()
        .try_fold(spec.initial_state(), |s, op| spec.transition(&s, op))
}

/// Applies the operations of `t` greedily: at each point any common update
/// or owner head whose transition is defined. Returns the reached state if
/// every operation could be applied. This is the replica's gate loop run
/// on a whole trace.
pub fn step_reachable<S: PcoSpec + ?Sized>(spec: &S, t: &Trace) -> Option<S::State> {
    let mut state = spec.initial_state();
    let mut common: Vec<(Operation, usize)> = t.common().map(|(op, k)| (op.clone(), k)).collect();
    let mut heads = vec![0usize; t.n()];
    let mut left = t.len();
    while left > 0 {
        let mut progressed = false;
        for (op, k) in common.iter_mut().filter(|(_, k)| *k > 0) {
            while *k > 0 {
                match spec.transition(&state, op) {
                    Some(next) => {
                        state = next;
                        *k -= 1;
                        left -= 1;
                        progressed = true;
                    }
                    None => break,
                }
            }
        }
        for p in ProcessId::all(t.n()) {
            let seq = t.owned(p);
            while heads[p.slot()] < seq.len() {
                match spec.transition(&state, &seq[heads[p.slot()]]) {
                    Some(next) => {
                        state = next;
                        heads[p.slot()] += 1;
                        left -= 1;
                        progressed = true;
                    }
                    None => break,
                }
            }
        }
        if !progressed {
            return None;
        }
    }
    Some(state)
}

/// Brute force: does some representative word of `t` step through the
/// automaton without hitting an undefined transition?
pub fn oracle_word_reachable<S: PcoSpec + ?Sized>(
    spec: &S,
    t: &Trace,
    limit: usize,
) -> Result<bool, TraceError> {
    Ok(t
        .representatives(limit)?
        .iter()
        .any(|w| step_word(spec, w).is_some()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

/// Structured result of a validator or checker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub property: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    pub fn pass(property: &str) -> Self {
        Verdict {
            property: property.to_owned(),
            status: Status::Pass,
            trials: None,
            seed: None,
            witness: None,
            note: None,
        }
    }

    pub fn fail(property: &str, witness: impl Into<String>) -> Self {
        Verdict {
            status: Status::Fail,
            witness: Some(witness.into()),
            ..Verdict::pass(property)
        }
    }

    pub fn inconclusive(property: &str, note: impl Into<String>) -> Self {
        Verdict {
            status: Status::Inconclusive,
            note: Some(note.into()),
            ..Verdict::pass(property)
        }
    }

    pub fn skipped(property: &str, note: impl Into<String>) -> Self {
        Verdict {
            status: Status::Skipped,
            note: Some(note.into()),
            ..Verdict::pass(property)
        }
    }

    pub fn with_trials(mut self, trials: u64, seed: u64) -> Self {
        self.trials = Some(trials);
        self.seed = Some(seed);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
            Status::Skipped => "SKIPPED",
        };
        write!(f, "{status:<12} {}", self.property)?;
        if let (Some(trials), Some(seed)) = (self.trials, self.seed) {
            write!(f, " [{trials} trials, seed {seed}]")?;
        }
        if let Some(w) = &self.witness {
            write!(f, ": {w}")?;
        }
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

/// Default number of randomized trials per closure property.
pub const DEFAULT_TRIALS: u64 = 1000;

/// Upper bound on the length of the sampled legal prefix `v`.
const SAMPLE_LEN: usize = 12;
/// Upper bound on the length of the foreign suffix `z`.
const SUFFIX_LEN: usize = 6;
/// Proposals tried before giving up on finding a legal update.
const PROPOSAL_ATTEMPTS: usize = 32;

fn word_str(w: &[Operation]) -> String {
    let parts: Vec<String> = w.iter().map(Operation::to_string).collect();
    format!("[{}]", parts.join(" "))
}

pub fn check_initial_emptiness<S: PcoSpec + ?Sized>(spec: &S) -> Verdict {
    const PROPERTY: &str = "initial-emptiness";
    let empty = Trace::empty(spec.n());
    match spec.trace_predicate(&empty) {
        Some(false) => Verdict::fail(PROPERTY, "the empty trace violates the trace predicate"),
        _ => Verdict::pass(PROPERTY),
    }
}

/// Every legal state accepts every common update (chains of one to three).
pub fn check_cstar_closure<S: PcoSpec + ?Sized>(spec: &S, seed: u64, trials: u64) -> Verdict {
    const PROPERTY: &str = "cstar-closure";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if spec.propose_common(&mut rng).is_none() {
        return Verdict::pass(PROPERTY)
            .with_trials(trials, seed)
            .with_note("no common updates; holds vacuously");
    }
    for trial in 0..trials {
        let len = rng.gen_range(0..=SAMPLE_LEN);
        let v = sample_legal_word(spec, &mut rng, len);
        let mut state = step_word(spec, &v).expect("sampled words are legal");
        let mut z = Word::new();
        for _ in 0..rng.gen_range(1..=3) {
            let c = spec
                .propose_common(&mut rng)
                .expect("common updates exist");
            z.push(c.clone());
            match spec.transition(&state, &c) {
                Some(next) => state = next,
                None => {
                    return Verdict::fail(
                        PROPERTY,
                        format!(
                            "trial {trial}: v = {} refuses common suffix {}",
                            word_str(&v),
                            word_str(&z)
                        ),
                    )
                    .with_trials(trial + 1, seed)
                }
            }
        }
    }
    Verdict::pass(PROPERTY).with_trials(trials, seed)
}

/// `v ⊕ op_i ∈ L` and `v ⊕ z ∈ L` with `z` free of `O_i` imply
/// `v ⊕ z ⊕ op_i ∈ L`.
pub fn check_idiamond_closure<S: PcoSpec + ?Sized>(spec: &S, seed: u64, trials: u64) -> Verdict {
    const PROPERTY: &str = "idiamond-closure";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n();
    let mut vacuous = 0u64;
    for trial in 0..trials {
        let len = rng.gen_range(0..=SAMPLE_LEN);
        let v = sample_legal_word(spec, &mut rng, len);
        let at_v = step_word(spec, &v).expect("sampled words are legal");
        let owner = ProcessId::new(rng.gen_range(1..=n as u32));
        let op_i = (0..PROPOSAL_ATTEMPTS)
            .filter_map(|_| spec.propose_owned(owner, &at_v, &mut rng))
            .find(|op| spec.transition(&at_v, op).is_some());
        let Some(op_i) = op_i else {
            vacuous += 1;
            continue;
        };
        let mut z = Word::new();
        let mut at_vz = at_v.clone();
        let z_len = rng.gen_range(0..=SUFFIX_LEN);
        'grow: for _ in 0..z_len {
            for _ in 0..PROPOSAL_ATTEMPTS {
                let proposal = if n < 2 || rng.gen_bool(0.3) {
                    spec.propose_common(&mut rng)
                } else {
                    let mut other = ProcessId::new(rng.gen_range(1..=n as u32));
                    if other == owner {
                        other = ProcessId::new(other.index() % n as u32 + 1);
                    }
                    spec.propose_owned(other, &at_vz, &mut rng)
                };
                let Some(op) = proposal else { continue };
                if op.owner() == Some(owner) {
                    continue;
                }
                if let Some(next) = spec.transition(&at_vz, &op) {
                    at_vz = next;
                    z.push(op);
                    continue 'grow;
                }
            }
            break;
        }
        if spec.transition(&at_vz, &op_i).is_none() {
            return Verdict::fail(
                PROPERTY,
                format!(
                    "trial {trial}: v = {}, op = {op_i}, z = {}: v⊕op and v⊕z legal but v⊕z⊕op refused",
                    word_str(&v),
                    word_str(&z)
                ),
            )
            .with_trials(trial + 1, seed);
        }
    }
    let verdict = Verdict::pass(PROPERTY).with_trials(trials, seed);
    if vacuous > 0 {
        verdict.with_note(format!("{vacuous} trials found no legal owned update"))
    } else {
        verdict
    }
}

/// Cross-checks the automaton against the closed-form trace predicate on
/// random words: each prefix steps legally iff every prefix trace so far
/// satisfies the predicate.
pub fn equivalence_vs_predicate<S: PcoSpec + ?Sized>(
    spec: &S,
    seed: u64,
    max_len: usize,
    trials: u64,
) -> Verdict {
    const PROPERTY: &str = "automaton-vs-predicate";
    if spec.trace_predicate(&Trace::empty(spec.n())).is_none() {
        return Verdict::skipped(PROPERTY, "object has no closed-form trace predicate");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n();
    for trial in 0..trials {
        let len = rng.gen_range(1..=max_len.max(1));
        let mut word = Word::new();
        let mut state = Some(spec.initial_state());
        let mut last_defined = spec.initial_state();
        let mut trace = Trace::empty(n);
        let mut by_predicate = true;
        while word.len() < len {
            let proposal = if rng.gen_bool(0.3) {
                spec.propose_common(&mut rng)
            } else {
                let p = ProcessId::new(rng.gen_range(1..=n as u32));
                spec.propose_owned(p, &last_defined, &mut rng)
            };
            let Some(op) = proposal else { continue };
            state = state.and_then(|s| spec.transition(&s, &op));
            if let Some(s) = &state {
                last_defined = s.clone();
            }
            trace.push(op.clone()).expect("proposed operations are updates");
            word.push(op);
            by_predicate = by_predicate && spec.trace_predicate(&trace) == Some(true);
            if state.is_some() != by_predicate {
                return Verdict::fail(
                    PROPERTY,
                    format!(
                        "trial {trial}: word {} steps {} but predicate says {}",
                        word_str(&word),
                        if state.is_some() { "legally" } else { "illegally" },
                        by_predicate
                    ),
                )
                .with_trials(trial + 1, seed);
            }
        }
    }
    Verdict::pass(PROPERTY).with_trials(trials, seed)
}

/// Whether `op` may be invoked by `p`: `C ∪ O_p ∪ Q`.
pub fn may_invoke<S: PcoSpec + ?Sized>(spec: &S, p: ProcessId, op: &Operation) -> bool {
    spec.contains(op)
        && match op.kind {
            OpKind::Common | OpKind::Query => true,
            OpKind::Owned(owner) => owner == p,
        }
}

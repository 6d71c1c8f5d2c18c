//! Canonical Mazurkiewicz traces over a process-commutative alphabet.
//!
//! Two updates are dependent exactly when they are owned by the same process,
//! so a trace is fully described by the multiset of its common updates plus
//! one sequence of owned updates per process. That canonical form is what
//! [`Trace`] stores; words are only needed as representatives.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A process identifier in `1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(u32);

impl ProcessId {
    /// # Panics
    /// Panics if `index` is zero; process ids are 1-based.
    pub fn new(index: u32) -> Self {
        assert!(index >= 1, "process ids start at 1");
        ProcessId(index)
    }

    pub fn index(self) -> u32 {
        self.0
    }

    /// Zero-based slot for per-process vectors.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_slot(slot: usize) -> Self {
        ProcessId(slot as u32 + 1)
    }

    /// All process ids of an `n`-process system, ascending.
    pub fn all(n: usize) -> impl Iterator<Item = ProcessId> + Clone {
        (1..=n as u32).map(ProcessId)
    }

    pub fn in_system(self, n: usize) -> bool {
        self.0 >= 1 && self.0 as usize <= n
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Which part of the alphabet an operation belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Common,
    Owned(ProcessId),
    Query,
}

/// A labeled update or query symbol with its payload.
///
/// Equality is structural over kind, name and arguments.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "RawOperation", try_from = "RawOperation")]
pub struct Operation {
    pub kind: OpKind,
    pub name: String,
    pub args: Vec<i64>,
}

impl Operation {
    pub fn common(name: &str, args: Vec<i64>) -> Self {
        Operation {
            kind: OpKind::Common,
            name: name.to_owned(),
            args,
        }
    }

    pub fn owned(owner: ProcessId, name: &str, args: Vec<i64>) -> Self {
        Operation {
            kind: OpKind::Owned(owner),
            name: name.to_owned(),
            args,
        }
    }

    pub fn query(name: &str, args: Vec<i64>) -> Self {
        Operation {
            kind: OpKind::Query,
            name: name.to_owned(),
            args,
        }
    }

    pub fn is_update(&self) -> bool {
        !matches!(self.kind, OpKind::Query)
    }

    pub fn owner(&self) -> Option<ProcessId> {
        match self.kind {
            OpKind::Owned(p) => Some(p),
            _ => None,
        }
    }

    pub fn arg(&self, i: usize) -> Option<i64> {
        self.args.get(i).copied()
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if let OpKind::Owned(p) = self.kind {
            write!(f, "@{p}")?;
        }
        if !self.args.is_empty() {
            let args: Vec<String> = self.args.iter().map(i64::to_string).collect();
            write!(f, "({})", args.join(","))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawOperation {
    kind: RawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    owner: Option<u32>,
    name: String,
    #[serde(default)]
    args: Vec<i64>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Common,
    Owned,
    Query,
}

impl From<Operation> for RawOperation {
    fn from(op: Operation) -> Self {
        let (kind, owner) = match op.kind {
            OpKind::Common => (RawKind::Common, None),
            OpKind::Owned(p) => (RawKind::Owned, Some(p.index())),
            OpKind::Query => (RawKind::Query, None),
        };
        RawOperation {
            kind,
            owner,
            name: op.name,
            args: op.args,
        }
    }
}

impl TryFrom<RawOperation> for Operation {
    type Error = String;

    fn try_from(raw: RawOperation) -> Result<Self, Self::Error> {
        let kind = match (raw.kind, raw.owner) {
            (RawKind::Common, None) => OpKind::Common,
            (RawKind::Query, None) => OpKind::Query,
            (RawKind::Owned, Some(i)) if i >= 1 => OpKind::Owned(ProcessId(i)),
            (RawKind::Owned, _) => return Err("owned operation needs an owner >= 1".into()),
            (_, Some(_)) => return Err("only owned operations carry an owner".into()),
        };
        Ok(Operation {
            kind,
            name: raw.name,
            args: raw.args,
        })
    }
}

/// A finite sequence of update operations.
pub type Word = Vec<Operation>;

/// Membership test for the update and query alphabet of an object.
pub trait Alphabet {
    /// System size.
    fn n(&self) -> usize;

    /// True iff `op` belongs to `C`, some `O_i` (with the owner its kind
    /// declares), or `Q`.
    fn contains(&self, op: &Operation) -> bool;

    /// `op ∈ C ∪ O_p`.
    fn authorizes(&self, p: ProcessId, op: &Operation) -> bool {
        self.contains(op)
            && match op.kind {
                OpKind::Common => true,
                OpKind::Owned(owner) => owner == p,
                OpKind::Query => false,
            }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("query operation {0} cannot appear in a trace")]
    QueryInTrace(Operation),
    #[error("operation {0} is not in the alphabet")]
    NotInAlphabet(Operation),
    #[error("owner of {0} is outside the system")]
    OwnerOutOfRange(Operation),
    #[error("traces over {left} and {right} processes are not comparable")]
    AlphabetMismatch { left: usize, right: usize },
    #[error("{count} representative words exceed the limit of {limit}")]
    Explosion { count: u128, limit: usize },
}

/// Canonical form of a trace: common multiset plus per-owner sequences.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trace {
    n: usize,
    common: BTreeMap<Operation, usize>,
    owned: Vec<Vec<Operation>>,
}

impl Trace {
    pub fn empty(n: usize) -> Self {
        Trace {
            n,
            common: BTreeMap::new(),
            owned: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.common.values().sum::<usize>() + self.owned.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Common updates with their multiplicities.
    pub fn common(&self) -> impl Iterator<Item = (&Operation, usize)> {
        self.common.iter().map(|(op, &k)| (op, k))
    }

    pub fn owned(&self, p: ProcessId) -> &[Operation] {
        &self.owned[p.slot()]
    }

    /// Appends `op` in place. Owner bounds are checked; alphabet membership
    /// is the caller's business (see [`word_to_trace`]).
    pub fn push(&mut self, op: Operation) -> Result<(), TraceError> {
        match op.kind {
            OpKind::Query => Err(TraceError::QueryInTrace(op)),
            OpKind::Common => {
                *self.common.entry(op).or_insert(0) += 1;
                Ok(())
            }
            OpKind::Owned(p) => {
                if !p.in_system(self.n) {
                    return Err(TraceError::OwnerOutOfRange(op));
                }
                self.owned[p.slot()].push(op);
                Ok(())
            }
        }
    }

    /// `self ⊕ op`, leaving `self` untouched.
    pub fn concat(&self, op: &Operation) -> Result<Trace, TraceError> {
        let mut t = self.clone();
        t.push(op.clone())?;
        Ok(t)
    }

    fn same_system(&self, other: &Trace) -> Result<(), TraceError> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(TraceError::AlphabetMismatch {
                left: self.n,
                right: other.n,
            })
        }
    }

    /// Trace equivalence; errors when the two traces live in different systems.
    pub fn equivalent(&self, other: &Trace) -> Result<bool, TraceError> {
        self.same_system(other)?;
        Ok(self == other)
    }

    /// True iff some trace `x` satisfies `self ⊕ x = other`.
    pub fn is_prefix_of(&self, other: &Trace) -> Result<bool, TraceError> {
        self.same_system(other)?;
        let common_ok = self
            .common
            .iter()
            .all(|(op, &k)| other.common.get(op).is_some_and(|&m| m >= k));
        let owned_ok = self
            .owned
            .iter()
            .zip(&other.owned)
            .all(|(a, b)| b.starts_with(a));
        Ok(common_ok && owned_ok)
    }

    /// Number of operations (with multiplicity) matching `pattern`.
    pub fn count_matching(&self, pattern: impl Fn(&Operation) -> bool) -> usize {
        let common: usize = self
            .common
            .iter()
            .filter(|(op, _)| pattern(op))
            .map(|(_, &k)| k)
            .sum();
        let owned = self.owned.iter().flatten().filter(|op| pattern(op)).count();
        common + owned
    }

    /// All operations, common ones first, owned ones per process in order.
    /// This is one representative word of the trace.
    pub fn to_word(&self) -> Word {
        let mut w = Word::with_capacity(self.len());
        for (op, &k) in &self.common {
            w.extend(std::iter::repeat_n(op.clone(), k));
        }
        for seq in &self.owned {
            w.extend(seq.iter().cloned());
        }
        w
    }

    /// Number of distinct representative words: the multinomial coefficient
    /// `len! / (Π |owned_i|! · Π mult(c)!)`. Saturates at `u128::MAX`.
    pub fn interleaving_count(&self) -> u128 {
        let mut parts: Vec<usize> = self.owned.iter().map(Vec::len).collect();
        parts.extend(self.common.values().copied());
        let mut acc: u128 = 1;
        let mut placed: u128 = 0;
        for k in parts {
            for j in 1..=k as u128 {
                placed += 1;
                // acc * placed / j stays integral at every step.
                acc = match acc.checked_mul(placed) {
                    Some(v) => v / j,
                    None => return u128::MAX,
                };
            }
        }
        acc
    }

    /// Every word whose trace equals `self`.
    pub fn representatives(&self, limit: usize) -> Result<Vec<Word>, TraceError> {
        let count = self.interleaving_count();
        if count > limit as u128 {
            return Err(TraceError::Explosion { count, limit });
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut heads = vec![0usize; self.n];
        let mut common: Vec<(Operation, usize)> =
            self.common.iter().map(|(op, &k)| (op.clone(), k)).collect();
        let mut word = Word::with_capacity(self.len());
        self.interleave(&mut heads, &mut common, &mut word, &mut out);
        Ok(out)
    }

    fn interleave(
        &self,
        heads: &mut [usize],
        common: &mut [(Operation, usize)],
        word: &mut Word,
        out: &mut Vec<Word>,
    ) {
        if word.len() == self.len() {
            out.push(word.clone());
            return;
        }
        for i in 0..common.len() {
            if common[i].1 == 0 {
                continue;
            }
            common[i].1 -= 1;
            word.push(common[i].0.clone());
            self.interleave(heads, common, word, out);
            word.pop();
            common[i].1 += 1;
        }
        for p in 0..self.n {
            if heads[p] == self.owned[p].len() {
                continue;
            }
            word.push(self.owned[p][heads[p]].clone());
            heads[p] += 1;
            self.interleave(heads, common, word, out);
            heads[p] -= 1;
            word.pop();
        }
    }
}

fn check_update<A: Alphabet + ?Sized>(alphabet: &A, op: &Operation) -> Result<(), TraceError> {
    if !op.is_update() {
        return Err(TraceError::QueryInTrace(op.clone()));
    }
    if !alphabet.contains(op) {
        return Err(TraceError::NotInAlphabet(op.clone()));
    }
    Ok(())
}

/// Independence relation: everything commutes except two updates owned by
/// the same process.
pub fn independent<A: Alphabet + ?Sized>(
    alphabet: &A,
    a: &Operation,
    b: &Operation,
) -> Result<bool, TraceError> {
    check_update(alphabet, a)?;
    check_update(alphabet, b)?;
    Ok(match (a.owner(), b.owner()) {
        (Some(p), Some(q)) => p != q,
        _ => true,
    })
}

/// The trace `[w]` represented by a word.
pub fn word_to_trace<A: Alphabet + ?Sized>(alphabet: &A, w: &[Operation]) -> Result<Trace, TraceError> {
    let mut t = Trace::empty(alphabet.n());
    for op in w {
        check_update(alphabet, op)?;
        t.push(op.clone())?;
    }
    Ok(t)
}

/// `t ⊕ op` with alphabet membership checked.
pub fn trace_concat<A: Alphabet + ?Sized>(
    alphabet: &A,
    t: &Trace,
    op: &Operation,
) -> Result<Trace, TraceError> {
    check_update(alphabet, op)?;
    t.concat(op)
}

//! Money transfer with optional minting. Amounts are integers in the
//! smallest currency unit.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::ObjectError;
use crate::spec::{PcoSpec, Value};
use crate::trace::{Alphabet, OpKind, Operation, ProcessId, Trace};

pub const MINT: &str = "mint";
pub const TRANSFER: &str = "transfer";
pub const BALANCE: &str = "balance";

/// Largest amount proposed by the random generators.
const MAX_PROPOSED_AMOUNT: i64 = 12;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoneyParams {
    /// Initial balance per process, in process order. Empty means 10 each.
    #[serde(default)]
    pub init: Vec<i64>,
}

#[derive(Clone, Debug)]
pub struct MoneySpec {
    init: Vec<i64>,
}

/// Account balances indexed by process slot.
pub type MoneyState = Vec<i64>;

impl MoneySpec {
    /// Rejects negative initial balances.
    pub fn new(init: Vec<i64>) -> Result<Self, ObjectError> {
        if init.is_empty() {
            return Err(ObjectError::InvalidParams("at least one account".into()));
        }
        if let Some((i, v)) = init.iter().enumerate().find(|(_, &v)| v < 0) {
            return Err(ObjectError::InvalidParams(format!(
                "initial balance of {} is {v} < 0",
                ProcessId::from_slot(i)
            )));
        }
        Ok(MoneySpec { init })
    }

    /// Skips the non-negativity check; only useful to exercise the
    /// initial-emptiness validator.
    pub fn unchecked(init: Vec<i64>) -> Self {
        MoneySpec { init }
    }

    pub fn from_params(n: usize, params: &MoneyParams) -> Result<Self, ObjectError> {
        if params.init.is_empty() {
            return MoneySpec::new(vec![10; n]);
        }
        if params.init.len() != n {
            return Err(ObjectError::InvalidParams(format!(
                "{} initial balances for {n} processes",
                params.init.len()
            )));
        }
        MoneySpec::new(params.init.clone())
    }

    pub fn init(&self) -> &[i64] {
        &self.init
    }

    pub fn mint(to: ProcessId, amount: i64) -> Operation {
        Operation::common(MINT, vec![to.index() as i64, amount])
    }

    pub fn transfer(from: ProcessId, to: ProcessId, amount: i64) -> Operation {
        Operation::owned(from, TRANSFER, vec![from.index() as i64, to.index() as i64, amount])
    }

    pub fn balance(of: ProcessId) -> Operation {
        Operation::query(BALANCE, vec![of.index() as i64])
    }

    fn account(&self, arg: i64) -> Option<usize> {
        (arg >= 1 && arg as usize <= self.init.len()).then(|| arg as usize - 1)
    }

    /// `acc(i, v) = init_i + plus(i, v) − minus(i, v)`, recomputed from the trace.
    pub fn acc(&self, i: ProcessId, trace: &Trace) -> i64 {
        let me = i.index() as i64;
        let mut plus = 0;
        let mut minus = 0;
        for op in trace.to_word() {
            match (op.name.as_str(), op.args.as_slice()) {
                (MINT, [to, x]) if *to == me => plus += x,
                (TRANSFER, [from, to, x]) => {
                    if *to == me {
                        plus += x;
                    }
                    if *from == me {
                        minus += x;
                    }
                }
                _ => {}
            }
        }
        self.init[i.slot()] + plus - minus
    }

    /// Transfer legality shared with the mutant variant.
    pub(crate) fn apply(&self, state: &MoneyState, op: &Operation) -> Option<MoneyState> {
        if !self.contains(op) {
            return None;
        }
        let mut next = state.clone();
        match (op.name.as_str(), op.args.as_slice()) {
            (MINT, [to, x]) => next[self.account(*to)?] += x,
            (TRANSFER, [from, to, x]) => {
                let (from, to) = (self.account(*from)?, self.account(*to)?);
                // a self-transfer leaves acc unchanged, so L never refuses it
                if from != to && next[from] < *x {
                    return None;
                }
                next[from] -= x;
                next[to] += x;
            }
            _ => return None,
        }
        Some(next)
    }
}

impl Alphabet for MoneySpec {
    fn n(&self) -> usize {
        self.init.len()
    }

    fn contains(&self, op: &Operation) -> bool {
        match (op.kind, op.name.as_str(), op.args.as_slice()) {
            (OpKind::Common, MINT, [to, x]) => self.account(*to).is_some() && *x >= 0,
            (OpKind::Owned(p), TRANSFER, [from, to, x]) => {
                *from == p.index() as i64 && self.account(*from).is_some() && self.account(*to).is_some() && *x >= 0
            }
            (OpKind::Query, BALANCE, [of]) => self.account(*of).is_some(),
            _ => false,
        }
    }
}

impl PcoSpec for MoneySpec {
    type State = MoneyState;

    fn name(&self) -> &'static str {
        "money"
    }

    fn initial_state(&self) -> MoneyState {
        self.init.clone()
    }

    fn transition(&self, state: &MoneyState, op: &Operation) -> Option<MoneyState> {
        self.apply(state, op)
    }

    fn query(&self, state: &MoneyState, q: &Operation) -> Value {
        match q.arg(0).and_then(|a| self.account(a)) {
            Some(i) => Value::Int(state[i]),
            None => Value::Bottom,
        }
    }

    fn output(&self, _up: &Operation, _state: &MoneyState) -> Value {
        Value::Silent
    }

    fn trace_predicate(&self, trace: &Trace) -> Option<bool> {
        Some(ProcessId::all(self.n()).all(|p| self.acc(p, trace) >= 0))
    }

    fn queries(&self) -> Vec<Operation> {
        ProcessId::all(self.n()).map(Self::balance).collect()
    }

    fn propose_common(&self, rng: &mut dyn RngCore) -> Option<Operation> {
        let to = ProcessId::new(rng.gen_range(1..=self.n() as u32));
        Some(Self::mint(to, rng.gen_range(0..=MAX_PROPOSED_AMOUNT)))
    }

    fn propose_owned(&self, owner: ProcessId, state: &MoneyState, rng: &mut dyn RngCore) -> Option<Operation> {
        let to = ProcessId::new(rng.gen_range(1..=self.n() as u32));
        let have = state[owner.slot()];
        let x = if have > 0 && rng.gen_bool(0.75) {
            rng.gen_range(0..=have)
        } else {
            rng.gen_range(0..=MAX_PROPOSED_AMOUNT)
        };
        Some(Self::transfer(owner, to, x))
    }
}

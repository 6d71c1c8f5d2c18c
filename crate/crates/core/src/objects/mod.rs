//! Concrete process-commutative objects and their registry.

pub mod money;
pub mod multiset;
pub mod mutants;
pub mod petri;
pub mod tokenring;
pub mod wsd;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::PcoSpec;
use crate::trace::{ProcessId, Word};

pub use money::{MoneyParams, MoneySpec, MoneyState};
pub use multiset::{MultisetParams, MultisetSpec, MultisetState};
pub use mutants::{CappedMoney, RefusingMultiset};
pub use petri::{PetriNetDef, PetriSpec, PetriState};
pub use tokenring::{Holder, TokenRing};
pub use wsd::{WsdParams, WsdSpec, WsdState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObjectError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid Petri net partition: {0}")]
    InvalidPartition(String),
    #[error("object {object} needs n = {expected}, got {got}")]
    WrongSize {
        object: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Proposals tried per step before declaring a dead end.
const ATTEMPTS: usize = 32;

/// A random word whose every prefix steps legally, built by rejection
/// sampling over the object's proposers. Stops early at a dead end.
pub fn sample_legal_word<S: PcoSpec + ?Sized>(spec: &S, rng: &mut dyn RngCore, max_len: usize) -> Word {
    let n = spec.n();
    let mut state = spec.initial_state();
    let mut word = Word::new();
    'grow: while word.len() < max_len {
        for _ in 0..ATTEMPTS {
            let proposal = if rng.gen_bool(0.3) {
                spec.propose_common(rng)
            } else {
                let p = ProcessId::new(rng.gen_range(1..=n as u32));
                spec.propose_owned(p, &state, rng)
            };
            let Some(op) = proposal else { continue };
            if let Some(next) = spec.transition(&state, &op) {
                state = next;
                word.push(op);
                continue 'grow;
            }
        }
        break;
    }
    word
}

/// Object selection plus parameters, as found in scenario files. A missing
/// or null `params` selects the object's defaults.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "object", content = "params", rename_all = "lowercase")]
pub enum ObjectConfig {
    Multiset(MultisetParams),
    Petrinet(Option<PetriNetDef>),
    Money(MoneyParams),
    Wsd(WsdParams),
    Tokenring,
    /// Negative control: a multiset whose `add` can be refused.
    #[serde(rename = "mutant-multiset")]
    MutantMultiset(MultisetParams),
    /// Negative control: money where minting can disable a transfer.
    #[serde(rename = "mutant-money")]
    MutantMoney(MoneyParams),
}

impl ObjectConfig {
    pub const NAMES: [&'static str; 7] = [
        "multiset",
        "petrinet",
        "money",
        "wsd",
        "tokenring",
        "mutant-multiset",
        "mutant-money",
    ];

    /// Default configuration for a registered object name.
    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "multiset" => ObjectConfig::Multiset(MultisetParams::default()),
            "petrinet" => ObjectConfig::Petrinet(None),
            "money" => ObjectConfig::Money(MoneyParams::default()),
            "wsd" => ObjectConfig::Wsd(WsdParams::default()),
            "tokenring" => ObjectConfig::Tokenring,
            "mutant-multiset" => ObjectConfig::MutantMultiset(MultisetParams::default()),
            "mutant-money" => ObjectConfig::MutantMoney(MoneyParams::default()),
            _ => return None,
        })
    }

    /// Parses `params` (a JSON value, possibly null) for object `name`.
    pub fn from_name_and_params(name: &str, params: serde_json::Value) -> Result<Self, String> {
        if ObjectConfig::default_for(name).is_none() {
            return Err(format!(
                "unknown object {name:?}; expected one of {}",
                ObjectConfig::NAMES.join(", ")
            ));
        }
        if params.is_null() {
            return Ok(ObjectConfig::default_for(name).expect("name checked above"));
        }
        let parsed = match name {
            "multiset" => serde_json::from_value(params).map(ObjectConfig::Multiset),
            "petrinet" => serde_json::from_value(params).map(|d| ObjectConfig::Petrinet(Some(d))),
            "money" => serde_json::from_value(params).map(ObjectConfig::Money),
            "wsd" => serde_json::from_value(params).map(ObjectConfig::Wsd),
            "tokenring" => Ok(ObjectConfig::Tokenring),
            "mutant-multiset" => serde_json::from_value(params).map(ObjectConfig::MutantMultiset),
            "mutant-money" => serde_json::from_value(params).map(ObjectConfig::MutantMoney),
            _ => unreachable!("name checked above"),
        };
        parsed.map_err(|e| format!("params of {name}: {e}"))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectConfig::Multiset(_) => "multiset",
            ObjectConfig::Petrinet(_) => "petrinet",
            ObjectConfig::Money(_) => "money",
            ObjectConfig::Wsd(_) => "wsd",
            ObjectConfig::Tokenring => "tokenring",
            ObjectConfig::MutantMultiset(_) => "mutant-multiset",
            ObjectConfig::MutantMoney(_) => "mutant-money",
        }
    }

    /// Builds the spec for an `n`-process system and hands it to `visitor`.
    pub fn visit<V: SpecVisitor>(&self, n: usize, visitor: V) -> Result<V::Output, ObjectError> {
        Ok(match self {
            ObjectConfig::Multiset(p) => visitor.visit(MultisetSpec::from_params(n, p)?),
            ObjectConfig::Petrinet(def) => {
                let def = match def {
                    Some(d) => d.clone(),
                    None => PetriNetDef::example(n),
                };
                visitor.visit(PetriSpec::new(n, def)?)
            }
            ObjectConfig::Money(p) => visitor.visit(MoneySpec::from_params(n, p)?),
            ObjectConfig::Wsd(p) => visitor.visit(WsdSpec::from_params(n, p)?),
            ObjectConfig::Tokenring => {
                if n != 2 {
                    return Err(ObjectError::WrongSize {
                        object: "tokenring",
                        expected: 2,
                        got: n,
                    });
                }
                visitor.visit(TokenRing)
            }
            ObjectConfig::MutantMultiset(p) => {
                visitor.visit(RefusingMultiset::new(MultisetSpec::from_params(n, p)?))
            }
            ObjectConfig::MutantMoney(p) => {
                visitor.visit(CappedMoney::new(MoneySpec::from_params(n, p)?))
            }
        })
    }
}

impl<'de> Deserialize<'de> for ObjectConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            object: String,
            #[serde(default)]
            params: serde_json::Value,
        }
        let raw = Raw::deserialize(d)?;
        ObjectConfig::from_name_and_params(&raw.object, raw.params).map_err(serde::de::Error::custom)
    }
}

/// Callback for code that is generic over the concrete spec type.
pub trait SpecVisitor {
    type Output;
    fn visit<S: PcoSpec + 'static>(self, spec: S) -> Self::Output;
}

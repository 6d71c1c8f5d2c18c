//! Process-commutative objects: sequential specifications, replicas over
//! crash and Byzantine reliable broadcast, a deterministic simulator, and
//! history checkers.

pub mod objects;
pub mod spec;
pub mod trace;
pub mod broadcast;
pub mod checker;
pub mod replica;
pub mod sim;
pub mod ws;
pub mod commands;

//! Executable model of the pull-stream callback protocol: events and
//! histories, a partial-order algebra, a rule language with an entailment
//! engine, protocol generators and checker, and rule-driven reference modules.

pub mod events;
pub mod lang;
pub mod entail;
pub mod order;
pub mod protocol;
pub mod reference;
pub mod harness;

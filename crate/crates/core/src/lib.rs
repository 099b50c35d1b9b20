//! Verification toolkit for the TSO-CC lazy cache coherence protocol.
//!
//! The toolkit checks TSO-CC against the TSO memory consistency model in
//! three tiers:
//!
//! * [`mcm`] — the axiomatic TSO model (events, herd-style relations, the
//!   four TSO axioms) with brute-force candidate-execution enumeration.
//! * [`tsolb`] — the TSO-LB load-buffer operational model, trace machinery,
//!   and the executable logical-time argument that every TSO-LB trace
//!   satisfies the axiomatic model.
//! * [`protocol`] + [`refinement`] — the TSO-CC protocol as a guarded-command
//!   model with an embedded TSO-LB shadow; exhaustive exploration checks a
//!   weak simulation between the two.
//! * [`param`] — the abstract-cache extension that lifts the refinement
//!   result to any number of processors via restrictions paired with
//!   non-interference lemmas.
//!
//! [`mc`] is the generic explicit-state model checker the protocol tiers run
//! on, and [`litmus`] evaluates litmus tests differentially under the
//! axiomatic and operational engines.

pub mod litmus;
pub mod mc;
pub mod mcm;
pub mod param;
pub mod protocol;
pub mod refinement;
pub mod tsolb;

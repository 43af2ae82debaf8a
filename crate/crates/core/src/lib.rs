//! Bidirectional model synchronization over rewrite rules.
//!
//! A definition written in a small K-flavoured DSL describes how to turn
//! models of one language into models of another by rewriting a cell-based
//! state. From that single forward definition this crate synthesizes an
//! executable forward/backward pair that additionally maintains a
//! *complements store* — the information each direction would otherwise
//! lose — and uses the pair to synchronize edited models, check consistency,
//! and emit independently checkable execution certificates.
//!
//! Module map:
//! - [`term`]: the shared term language and its canonical serialization;
//! - [`grammar`] + [`frontend`]: the definition DSL, model parsing/printing;
//! - [`analysis`]: per-rule variable/token classification and lints;
//! - [`engine`]: the deterministic rewrite interpreter;
//! - [`synth`]: forward and backward synthesis plus placeholder defaults;
//! - [`sync`]: the synchronization workflows built on the synthesized pair;
//! - [`cert`]: trace certificates and their minimal checker.

pub mod analysis;
pub mod cert;
pub mod engine;
pub mod frontend;
pub mod grammar;
pub mod synth;
pub mod sync;
pub mod term;

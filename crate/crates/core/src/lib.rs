//! Obfuscating compiler for a one-instruction machine.
//!
//! Source programs in a small imperative language ([`frontend`]) are lowered
//! to a single `add, compare, jump` instruction ([`isa`]) with every stored
//! value offset by a seeded per-write delta ([`codegen`]). [`analysis`]
//! checks the result against a plain interpreter and measures how much the
//! runtime traces of many compilations of one program reveal.

pub mod codegen;
pub mod frontend;
pub mod isa;
pub mod analysis;
pub mod cli;

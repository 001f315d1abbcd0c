//! Incremental lexical acquisition with a typed unification grammar.
pub mod cli;
pub mod fstruct;
pub mod grammar;
pub mod lexstore;
pub mod parser;
pub mod revision;
pub mod syntax;
pub mod typelattice;

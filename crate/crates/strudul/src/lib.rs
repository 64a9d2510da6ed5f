//! A language toolchain for NIZK programs in which input preparation and the
//! proven predicate are written once, as a single combined block, and a
//! type-directed compiler projects the compute-side program and the prove-side
//! predicate from it.

pub mod classtable;
pub mod eval_combined;
pub mod eval_concurrent;
pub mod eval_core;
pub mod parser;
pub mod projection;
pub mod syntax;
pub mod typing_combined;
pub mod typing_core;

//! Problem data `(φ, G, f)`, its expression language, and the finite-range
//! hypothesis checks.

pub mod condition;
pub mod expr;
pub mod problem;
pub mod quadrature;

pub use condition::{
    check_condition, check_uniqueness_condition, trap_constants, ConditionReport, PsiScan,
    ScanRange, TrapConstants, UniquenessSamples, UniquenessVerdict, Verdict,
};
pub use expr::Expression;
pub use problem::{LpDual, ProblemData, SphereData};

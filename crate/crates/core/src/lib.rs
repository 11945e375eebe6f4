//! Satisfiability tools for bundled fragments of first-order modal logic.

pub mod encodings;
pub mod formula;
pub mod fragment;
pub mod kripke;
pub mod oracle;
pub mod sampler;
pub mod tableau;
pub mod textio;

pub use encodings::TilingInstance;
pub use formula::{alpha_eq, clean_rewrite, is_clean, to_nnf, Formula, FormulaSet, Pred, RawFormula, Var, VariableEnumeration};
pub use fragment::{bundles_used, classify, in_abbabe, in_lbf, Bundle, BundleSet, DomainRegime, FragmentStatus};
pub use kripke::{Assignment, KripkeModel, ModelBuilder, Violation};
pub use oracle::{sat_bounded, OracleResult, SearchBounds};
pub use tableau::{solve_abbabe, solve_lbf, Config, Mode, Outcome, SolveError, SolveResult, Solver, Strategy};
pub use textio::{parse, parse_nnf, print, read_model, write_model};

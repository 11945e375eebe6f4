//! Shared inputs for the solver benchmarks.

use foml_core::encodings::{alpha_n, beta_nt};
use foml_core::sampler::Sampler;
use foml_core::{to_nnf, Formula, TilingInstance};

pub const SEED: u64 = 0xbe7c;

/// A fixed sample of loosely bundled formulas.
pub fn lbf_corpus(count: usize, max_size: usize) -> Vec<Formula> {
    let mut s = Sampler::new(SEED);
    (0..count).map(|_| s.lbf(max_size)).collect()
}

pub fn abbabe_corpus(count: usize, max_size: usize) -> Vec<Formula> {
    let mut s = Sampler::new(SEED);
    (0..count).map(|_| s.abbabe(max_size)).collect()
}

pub fn tilings() -> Vec<(&'static str, TilingInstance)> {
    vec![
        ("one_tile", TilingInstance::new(&["a"], &[("a", "a")], &[("a", "a")], "a")),
        ("no_horizontal", TilingInstance::new(&["a"], &[], &[("a", "a")], "a")),
        ("two_tiles", TilingInstance::new(&["a", "b"], &[("a", "b"), ("b", "a")], &[("a", "a"), ("b", "b")], "a")),
    ]
}

pub fn alpha(n: usize) -> Formula {
    to_nnf(&alpha_n(n).expect("n is positive"))
}

pub fn beta(inst: &TilingInstance, n: usize) -> Formula {
    to_nnf(&beta_nt(inst, n).expect("instance is valid"))
}

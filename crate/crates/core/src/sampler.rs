//! Seeded random generators for test corpora: grammar-directed formulas for
//! each fragment, unrestricted raw formulas, and small increasing-domain
//! models.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formula::{Formula, RawFormula, Var};
use crate::kripke::{Assignment, KripkeModel, ModelBuilder};

/// Environment variable that overrides the corpus seed.
pub const SEED_ENV: &str = "BUNDLED_FOML_SEED";
pub const DEFAULT_SEED: u64 = 0x5eed_f0a1;

/// Predicates used by the generators, with arities.
pub const SIGNATURE: &[(&str, usize)] = &[("A", 0), ("P", 1), ("Q", 2)];

const BOUND: &[&str] = &["x", "y", "z", "u", "v"];
const FREE: &[&str] = &["a", "b"];

pub fn seed_from_env() -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_SEED)
}

/// Which bundles a bundled sample may use. Each bundle stands for itself
/// and its dual (`∀x□` with `∃x◇`, and so on).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BundleGrammar {
    /// AB, BA, BE.
    Abbabe,
    /// AB, EB.
    Abeb,
    /// BA, BE.
    Babe,
    /// EB only.
    Eb,
}

pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn from_env() -> Self {
        Self::new(seed_from_env())
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn literal(&mut self, scope: &[Var]) -> Formula {
        let (p, arity) = *SIGNATURE.choose(&mut self.rng).unwrap();
        let args: Vec<Var> = (0..arity)
            .map(|_| {
                if !scope.is_empty() && self.rng.gen_bool(0.8) {
                    scope.choose(&mut self.rng).unwrap().clone()
                } else {
                    Var::new(FREE.choose(&mut self.rng).unwrap())
                }
            })
            .collect();
        match self.rng.gen_range(0..10) {
            0 => Formula::Top,
            1 => Formula::Bot,
            2..=5 => Formula::Atom(p.into(), args),
            _ => Formula::NegAtom(p.into(), args),
        }
    }

    fn binder(&mut self) -> Var {
        Var::new(BOUND.choose(&mut self.rng).unwrap())
    }

    fn lbf_alpha(&mut self, depth: usize, scope: &mut Vec<Var>) -> Formula {
        match if depth == 0 { 0 } else { self.rng.gen_range(0..6) } {
            0 | 1 => self.lbf_psi(depth, scope),
            2 => {
                let a = self.lbf_alpha(depth - 1, scope);
                Formula::and(a, self.lbf_alpha(depth - 1, scope))
            }
            3 => {
                let a = self.lbf_alpha(depth - 1, scope);
                Formula::or(a, self.lbf_alpha(depth - 1, scope))
            }
            _ => {
                let ne = self.rng.gen_range(0..3);
                let na = self.rng.gen_range(if ne == 0 { 1 } else { 0 }..3);
                let mut prefix = Vec::new();
                for k in 0..ne + na {
                    let v = self.binder();
                    scope.push(v.clone());
                    prefix.push((k < ne, v));
                }
                let mut body = self.lbf_psi(depth - 1, scope);
                for (existential, v) in prefix.into_iter().rev() {
                    scope.pop();
                    body = if existential { Formula::exists(v, body) } else { Formula::forall(v, body) };
                }
                body
            }
        }
    }

    fn lbf_psi(&mut self, depth: usize, scope: &mut Vec<Var>) -> Formula {
        match if depth == 0 { 0 } else { self.rng.gen_range(0..6) } {
            0 | 1 => self.literal(scope),
            2 => {
                let a = self.lbf_psi(depth - 1, scope);
                Formula::and(a, self.lbf_psi(depth - 1, scope))
            }
            3 => {
                let a = self.lbf_psi(depth - 1, scope);
                Formula::or(a, self.lbf_psi(depth - 1, scope))
            }
            4 => Formula::boxed(self.lbf_alpha(depth - 1, scope)),
            _ => Formula::dia(self.lbf_alpha(depth - 1, scope)),
        }
    }

    /// A formula of the loosely bundled grammar with size in `3..=max_size`.
    pub fn lbf(&mut self, max_size: usize) -> Formula {
        loop {
            let f = self.lbf_alpha(4, &mut Vec::new());
            if (3..=max_size).contains(&f.size()) {
                return f;
            }
        }
    }

    fn bundled(&mut self, g: BundleGrammar, depth: usize, scope: &mut Vec<Var>) -> Formula {
        if depth == 0 {
            return self.literal(scope);
        }
        let choice = self.rng.gen_range(0..9);
        let universal = self.rng.gen_bool(0.5);
        match choice {
            0 | 1 => self.literal(scope),
            2 => {
                let a = self.bundled(g, depth - 1, scope);
                Formula::and(a, self.bundled(g, depth - 1, scope))
            }
            3 => {
                let a = self.bundled(g, depth - 1, scope);
                Formula::or(a, self.bundled(g, depth - 1, scope))
            }
            4 => Formula::boxed(self.bundled(g, depth - 1, scope)),
            5 => Formula::dia(self.bundled(g, depth - 1, scope)),
            _ => {
                // Quantifier first (AB, EB) or modality first (BA, BE).
                let quantifier_first = match g {
                    BundleGrammar::Abeb | BundleGrammar::Eb => true,
                    BundleGrammar::Babe => false,
                    BundleGrammar::Abbabe => self.rng.gen_bool(0.5),
                };
                let v = self.binder();
                scope.push(v.clone());
                let body = self.bundled(g, depth - 1, scope);
                scope.pop();
                let quant = |u: bool, v: Var, b: Formula| if u { Formula::forall(v, b) } else { Formula::exists(v, b) };
                if quantifier_first {
                    // AB pairs forall with box; EB pairs forall with diamond.
                    let boxed = match g {
                        BundleGrammar::Abbabe => universal,
                        BundleGrammar::Eb => !universal,
                        _ => self.rng.gen_bool(0.5),
                    };
                    let inner = if boxed { Formula::boxed(body) } else { Formula::dia(body) };
                    quant(universal, v, inner)
                } else {
                    let boxed = self.rng.gen_bool(0.5);
                    let inner = quant(universal, v, body);
                    if boxed {
                        Formula::boxed(inner)
                    } else {
                        Formula::dia(inner)
                    }
                }
            }
        }
    }

    /// A bundled formula over the given bundles with size in `3..=max_size`.
    pub fn bundled_formula(&mut self, g: BundleGrammar, max_size: usize) -> Formula {
        loop {
            let f = self.bundled(g, 4, &mut Vec::new());
            if (3..=max_size).contains(&f.size()) {
                return f;
            }
        }
    }

    pub fn abbabe(&mut self, max_size: usize) -> Formula {
        self.bundled_formula(BundleGrammar::Abbabe, max_size)
    }

    /// Unrestricted formula with every connective, size at most `max_size`.
    pub fn raw(&mut self, max_size: usize) -> RawFormula {
        loop {
            let f = self.raw_at(4, &mut Vec::new());
            if raw_size(&f) <= max_size {
                return f;
            }
        }
    }

    fn raw_at(&mut self, depth: usize, scope: &mut Vec<Var>) -> RawFormula {
        if depth == 0 {
            return self.literal(scope).to_raw();
        }
        let b = |f: RawFormula| Box::new(f);
        match self.rng.gen_range(0..12) {
            0 | 1 => self.literal(scope).to_raw(),
            2 => RawFormula::Not(b(self.raw_at(depth - 1, scope))),
            3 => RawFormula::And(b(self.raw_at(depth - 1, scope)), b(self.raw_at(depth - 1, scope))),
            4 => RawFormula::Or(b(self.raw_at(depth - 1, scope)), b(self.raw_at(depth - 1, scope))),
            5 => RawFormula::Implies(b(self.raw_at(depth - 1, scope)), b(self.raw_at(depth - 1, scope))),
            6 => RawFormula::Iff(b(self.raw_at(depth - 1, scope)), b(self.raw_at(depth - 1, scope))),
            7 => RawFormula::Box(b(self.raw_at(depth - 1, scope))),
            8 => RawFormula::Dia(b(self.raw_at(depth - 1, scope))),
            k => {
                let v = self.binder();
                scope.push(v.clone());
                let body = self.raw_at(depth - 1, scope);
                scope.pop();
                if k == 9 {
                    RawFormula::Forall(v, b(body))
                } else {
                    RawFormula::Exists(v, b(body))
                }
            }
        }
    }

    /// A random finite structure satisfying the increasing-domain
    /// conditions. Edges only go from lower to higher world indices; each
    /// world's domain contains those of its predecessors.
    pub fn model(&mut self, max_worlds: usize, max_elements: usize) -> KripkeModel {
        let nw = self.rng.gen_range(1..=max_worlds.max(1));
        let ne = self.rng.gen_range(1..=max_elements.max(1));
        let worlds: Vec<String> = (0..nw).map(|i| format!("w{i}")).collect();
        let elems: Vec<String> = (0..ne).map(|i| format!("d{i}")).collect();
        let mut b = ModelBuilder::new();
        for w in &worlds {
            b.world(w).expect("distinct");
        }
        for e in &elems {
            b.element(e).expect("distinct");
        }
        let mut doms: Vec<Vec<usize>> = Vec::new();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); nw];
        for j in 0..nw {
            for i in 0..j {
                if self.rng.gen_bool(0.4) {
                    preds[j].push(i);
                }
            }
        }
        for j in 0..nw {
            let mut dom: Vec<usize> = preds[j].iter().flat_map(|&i| doms[i].clone()).collect();
            for e in 0..ne {
                if self.rng.gen_bool(0.5) {
                    dom.push(e);
                }
            }
            if dom.is_empty() {
                dom.push(self.rng.gen_range(0..ne));
            }
            dom.sort_unstable();
            dom.dedup();
            doms.push(dom);
        }
        for j in 0..nw {
            for &i in &preds[j] {
                b.edge(&worlds[i], &worlds[j]).expect("known");
            }
            let names: Vec<&str> = doms[j].iter().map(|&e| elems[e].as_str()).collect();
            b.local_domain(&worlds[j], &names).expect("known");
            for &(p, arity) in SIGNATURE {
                for tuple in tuples(&doms[j], arity) {
                    if self.rng.gen_bool(0.5) {
                        let args: Vec<&str> = tuple.iter().map(|&e| elems[e].as_str()).collect();
                        b.fact(&worlds[j], p, &args).expect("known");
                    }
                }
            }
        }
        b.build()
    }

    /// A world of `m` and an assignment of `vars` to its local domain.
    pub fn placement(&mut self, m: &KripkeModel, vars: impl IntoIterator<Item = Var>) -> (String, Assignment) {
        let w = self.rng.gen_range(0..m.num_worlds());
        let dom: Vec<usize> = m.local_domain(w).iter().copied().collect();
        let sigma = vars
            .into_iter()
            .map(|v| (v, m.element_name(*dom.choose(&mut self.rng).expect("non-empty")).to_string()))
            .collect();
        (m.world_name(w).to_string(), sigma)
    }
}

fn tuples(dom: &[usize], arity: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out.into_iter().flat_map(|t| dom.iter().map(move |&e| [t.clone(), vec![e]].concat())).collect();
    }
    out
}

pub fn raw_size(f: &RawFormula) -> usize {
    match f {
        RawFormula::Top | RawFormula::Bot => 1,
        RawFormula::Atom(_, a) => 1 + a.len(),
        RawFormula::Not(a) | RawFormula::Box(a) | RawFormula::Dia(a) => 1 + raw_size(a),
        RawFormula::Forall(_, a) | RawFormula::Exists(_, a) => 1 + raw_size(a),
        RawFormula::And(a, b) | RawFormula::Or(a, b) | RawFormula::Implies(a, b) | RawFormula::Iff(a, b) => {
            1 + raw_size(a) + raw_size(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragment::{in_abbabe, in_bundled_fragment, in_lbf};
    use crate::fragment::{Bundle, BundleSet};

    #[test]
    fn samples_land_in_their_fragments() {
        let mut s = Sampler::new(7);
        for _ in 0..300 {
            let f = s.lbf(14);
            assert!(in_lbf(&f), "{f}");
            assert!(f.size() <= 14);
            let g = s.abbabe(10);
            assert!(in_abbabe(&g), "{g}");
            let h = s.bundled_formula(BundleGrammar::Abeb, 14);
            assert!(in_bundled_fragment(&h, BundleSet::of(&[Bundle::AB, Bundle::EB])), "{h}");
            let k = s.bundled_formula(BundleGrammar::Babe, 14);
            assert!(in_bundled_fragment(&k, BundleSet::of(&[Bundle::BA, Bundle::BE])), "{k}");
        }
    }

    #[test]
    fn models_are_valid() {
        let mut s = Sampler::new(3);
        for _ in 0..100 {
            let m = s.model(4, 3);
            assert!(m.validate().is_empty());
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a: Vec<Formula> = (0..20).map({
            let mut s = Sampler::new(11);
            move |_| s.lbf(14)
        }).collect();
        let b: Vec<Formula> = (0..20).map({
            let mut s = Sampler::new(11);
            move |_| s.lbf(14)
        }).collect();
        assert_eq!(a, b);
    }
}

use std::collections::BTreeSet;

use foml_core::fragment::{classify, is_bundled, DomainRegime, StatusKind};
use foml_core::kripke::KripkeModel;
use foml_core::oracle::{estimate, sat_bounded, DEFAULT_CEILING};
use foml_core::sampler::{BundleGrammar, Sampler};
use foml_core::*;
use proptest::prelude::*;

fn subformulas(phi: &Formula, out: &mut Vec<Formula>) {
    out.push(phi.clone());
    match phi {
        Formula::And(a, b) | Formula::Or(a, b) => {
            subformulas(a, out);
            subformulas(b, out);
        }
        Formula::Box(a) | Formula::Dia(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => subformulas(a, out),
        _ => {}
    }
}

fn negation_only_on_atoms(f: &RawFormula) -> bool {
    match f {
        RawFormula::Not(a) => matches!(**a, RawFormula::Atom(..)),
        RawFormula::Top | RawFormula::Bot | RawFormula::Atom(..) => true,
        RawFormula::Implies(..) | RawFormula::Iff(..) => false,
        RawFormula::And(a, b) | RawFormula::Or(a, b) => negation_only_on_atoms(a) && negation_only_on_atoms(b),
        RawFormula::Box(a) | RawFormula::Dia(a) | RawFormula::Forall(_, a) | RawFormula::Exists(_, a) => {
            negation_only_on_atoms(a)
        }
    }
}

fn count_dia(phi: &Formula) -> usize {
    phi.count(&|f| matches!(f, Formula::Dia(_)))
}

fn count_exists(phi: &Formula) -> usize {
    phi.count(&|f| matches!(f, Formula::Exists(..)))
}

/// Depth, branching, root domain and growth actually used by a tree model.
fn shape(m: &KripkeModel, root: &str) -> SearchBounds {
    let r = m.world(root).expect("root exists");
    let mut bounds = SearchBounds::new(0, 0, m.local_domain(r).len(), 0);
    let mut stack = vec![(r, 0)];
    while let Some((w, d)) = stack.pop() {
        bounds.max_depth = bounds.max_depth.max(d);
        bounds.max_branching = bounds.max_branching.max(m.successors(w).len());
        for &v in m.successors(w) {
            bounds.max_growth = bounds.max_growth.max(m.local_domain(v).difference(m.local_domain(w)).count());
            stack.push((v, d + 1));
        }
    }
    bounds
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn nnf_preserves_truth(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let raw = s.raw(12);
        let m = s.model(4, 3);
        let (w, sigma) = s.placement(&m, raw.free_vars());
        let nnf = to_nnf(&raw);
        prop_assert!(negation_only_on_atoms(&nnf.to_raw()));
        prop_assert_eq!(m.check_raw(&w, &sigma, &raw).unwrap(), m.check(&w, &sigma, &nnf).unwrap(), "{}", raw);
    }

    #[test]
    fn loosely_bundled_subsumes_abeb_and_babe(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        for g in [BundleGrammar::Abeb, BundleGrammar::Babe] {
            let phi = s.bundled_formula(g, 14);
            prop_assert!(in_lbf(&phi), "{:?}: {}", g, phi);
        }
    }

    #[test]
    fn duality(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let phi = to_nnf(&s.raw(10));
        let m = s.model(4, 3);
        let (w, sigma) = s.placement(&m, phi.free_vars());
        let dia = m.check(&w, &sigma, &Formula::dia(phi.clone())).unwrap();
        let boxed = m.check(&w, &sigma, &Formula::boxed(phi.negate())).unwrap();
        prop_assert_eq!(dia, !boxed);
    }

    #[test]
    fn truth_is_local_to_reachable_worlds(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let phi = to_nnf(&s.raw(10));
        let m = s.model(5, 3);
        let (w, sigma) = s.placement(&m, phi.free_vars());
        let sub = m.reachable_submodel(m.world(&w).unwrap());
        prop_assert!(sub.validate().is_empty());
        prop_assert_eq!(m.check(&w, &sigma, &phi).unwrap(), sub.check(&w, &sigma, &phi).unwrap());
    }

    #[test]
    fn relevant_assignments_stay_relevant(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let m = s.model(5, 3);
        prop_assert!(m.validate().is_empty());
        let (w, sigma) = s.placement(&m, [Var::new("a"), Var::new("b")]);
        let w = m.world(&w).unwrap();
        for &v in m.successors(w) {
            for e in sigma.values() {
                prop_assert!(m.local_domain(v).contains(&m.element(e).unwrap()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn clean_rewrite_yields_clean_alpha_variants(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let mut en = VariableEnumeration::new();
        let start: Vec<Formula> = (0..3).map(|_| s.lbf(10)).collect();
        let gamma = clean_rewrite(&[], &start, &mut en);
        prop_assert!(formula::is_clean(&gamma));
        let mut additions: Vec<Formula> = (0..2).map(|_| s.lbf(10)).collect();
        additions.push(gamma[0].clone());
        additions.push(additions[0].clone());
        let out = clean_rewrite(&gamma, &additions, &mut en);
        let joined: Vec<Formula> = gamma.iter().chain(&out).cloned().collect();
        prop_assert!(formula::is_clean(&joined));
        for (a, b) in additions.iter().zip(&out) {
            prop_assert!(alpha_eq(a, b), "{} vs {}", a, b);
        }
    }

    #[test]
    fn modules_are_their_own_components(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let mut subs = Vec::new();
        subformulas(&to_nnf(&s.raw(14)), &mut subs);
        for m in subs.iter().filter(|f| f.is_module()) {
            let c = m.components();
            prop_assert_eq!(c.as_slice(), std::slice::from_ref(m));
        }
    }

    #[test]
    fn substituting_a_non_free_variable_is_identity(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let phi = to_nnf(&s.raw(14));
        let free = phi.free_vars();
        for x in ["a", "b", "x", "y", "z", "u", "v", "w"].map(Var::new) {
            if !free.contains(&x) {
                prop_assert_eq!(phi.substitute(&Var::new("q"), &x), Ok(phi.clone()));
            }
        }
    }

    #[test]
    fn size_decreases_on_strict_subterms(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let phi = to_nnf(&s.raw(14));
        let mut subs = Vec::new();
        subformulas(&phi, &mut subs);
        for (i, sub) in subs.iter().enumerate() {
            let mut inner = Vec::new();
            subformulas(sub, &mut inner);
            for t in &inner[1..] {
                prop_assert!(t.size() < sub.size(), "{} inside {} at {}", t, sub, i);
            }
        }
    }

    #[test]
    fn abbabe_membership_matches_bundles_used(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let candidates = [
            s.bundled_formula(BundleGrammar::Abbabe, 14),
            s.bundled_formula(BundleGrammar::Abeb, 14),
            s.bundled_formula(BundleGrammar::Babe, 14),
            s.lbf(14),
        ];
        let abbabe = BundleSet::of(&[Bundle::AB, Bundle::BA, Bundle::BE]);
        for phi in &candidates {
            if is_bundled(phi) {
                let used = bundles_used(phi).expect("bundled");
                prop_assert_eq!(used.is_subset(abbabe), in_abbabe(phi), "{}", phi);
            } else {
                prop_assert!(!in_abbabe(phi));
            }
        }
    }

    #[test]
    fn tableau_runs_are_sound_and_shallow(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let phi = s.lbf(14);
        let config = Config { check_invariants: true, ..Config::default() };
        let out = Solver::new(config).solve(&phi, Mode::Lbf).unwrap();
        prop_assert_eq!(out.stats.stuck_nodes, 0);
        prop_assert_eq!(out.stats.clean_violations, 0);
        match &out.result {
            SolveResult::Sat { model, root, assignment } => {
                prop_assert!(model.validate().is_empty());
                prop_assert!(model.check(root, assignment, &phi).unwrap());
                prop_assert!(shape(model, root).max_depth <= phi.modal_depth());
            }
            SolveResult::Unsat => {}
            SolveResult::ResourceExceeded { limit } => prop_assert!(false, "{} on {}", limit, phi),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn oracle_agrees_at_tableau_derived_bounds(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let phi = s.lbf(12);
        let out = Solver::default().solve(&phi, Mode::Lbf).unwrap();
        match &out.result {
            SolveResult::Sat { model, root, .. } => {
                let mut bounds = shape(model, root);
                bounds.max_root_domain = bounds.max_root_domain.max(1);
                prop_assume!(estimate(&phi, &bounds) < DEFAULT_CEILING);
                let found = sat_bounded(&phi, &bounds).unwrap();
                prop_assert!(found.is_found(), "{} at {:?}", phi, bounds);
            }
            SolveResult::Unsat => {
                let bounds = SearchBounds::new(
                    phi.modal_depth(),
                    count_dia(&phi).max(1),
                    phi.free_vars().len() + count_exists(&phi) + 1,
                    1,
                );
                prop_assume!(estimate(&phi, &bounds) < DEFAULT_CEILING);
                prop_assert!(!sat_bounded(&phi, &bounds).unwrap().is_found(), "{}", phi);
            }
            SolveResult::ResourceExceeded { .. } => prop_assert!(false),
        }
    }

    #[test]
    fn oracle_models_check_and_absence_is_anti_monotone(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let phi = to_nnf(&s.raw(10));
        let bounds = SearchBounds::new(2, 2, 2 + phi.free_vars().len(), 1);
        prop_assume!(estimate(&phi, &bounds) < DEFAULT_CEILING);
        match sat_bounded(&phi, &bounds).unwrap() {
            OracleResult::Found { model, world, assignment } => {
                prop_assert!(model.validate().is_empty());
                prop_assert!(model.check(&world, &assignment, &phi).unwrap());
            }
            OracleResult::NoneWithinBounds(_) => {
                for smaller in [
                    SearchBounds { max_depth: 1, ..bounds },
                    SearchBounds { max_branching: 1, ..bounds },
                    SearchBounds { max_root_domain: bounds.max_root_domain - 1, ..bounds },
                    SearchBounds { max_growth: 0, ..bounds },
                ] {
                    if smaller.max_root_domain >= phi.free_vars().len().max(1) {
                        prop_assert!(!sat_bounded(&phi, &smaller).unwrap().is_found(), "{} at {:?}", phi, smaller);
                    }
                }
            }
        }
    }

    #[test]
    fn eb_cannot_tell_increasing_from_constant_domains(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let phi = s.bundled_formula(BundleGrammar::Eb, 10);
        let depth = phi.modal_depth().min(2);
        let branching = count_dia(&phi).clamp(1, 2);
        let worlds: usize = (0..=depth).map(|k| branching.pow(k as u32)).sum();
        let increasing = SearchBounds::new(depth, branching, 2, 1);
        let constant = SearchBounds::new(depth, branching, 2 + worlds, 0);
        prop_assume!(estimate(&phi, &constant) < DEFAULT_CEILING);
        prop_assert_eq!(
            sat_bounded(&phi, &increasing).unwrap().is_found(),
            sat_bounded(&phi, &constant).unwrap().is_found(),
            "{}", phi
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn parse_print_round_trip(seed in any::<u64>()) {
        let mut s = Sampler::new(seed);
        let raw = s.raw(16);
        let text = print(&raw);
        prop_assert_eq!(parse(&text).unwrap(), raw, "{}", text);
    }
}

#[test]
fn classification_is_total_and_undecidability_is_monotone() {
    for regime in [DomainRegime::Constant, DomainRegime::Increasing] {
        for s in BundleSet::all() {
            let status = classify(s, regime);
            assert!(!status.note.is_empty(), "{s} {regime:?}");
            if status.kind == StatusKind::Undecidable {
                for t in BundleSet::all().filter(|t| s.is_subset(*t)) {
                    assert_eq!(classify(t, regime).kind, StatusKind::Undecidable, "{s} ⊆ {t}");
                }
            }
        }
    }
}

#[test]
fn generators_land_in_their_fragments() {
    let one = TilingInstance::new(&["a"], &[("a", "a")], &[("a", "a")], "a");
    let ebba = to_nnf(&encodings::encode_ebba(&one).unwrap());
    let abebbe = to_nnf(&encodings::encode_abebbe(&one).unwrap());
    let only = |bs: &[Bundle]| BundleSet::of(bs);
    assert!(fragment::in_bundled_fragment(&ebba, only(&[Bundle::EB, Bundle::BA])));
    assert!(fragment::in_bundled_fragment(&abebbe, only(&[Bundle::AB, Bundle::EB, Bundle::BE])));
    for n in 1..=3 {
        let beta = to_nnf(&encodings::beta_nt(&one, n).unwrap());
        assert!(in_lbf(&beta), "n = {n}");
        assert!(formula::is_clean(&[formula::make_clean(&beta)]));
    }
    for f in [encodings::phi1(), encodings::phi2(), encodings::phi3()] {
        let nnf = to_nnf(&f);
        let arities: BTreeSet<_> = nnf.signature().into_iter().collect();
        let names: BTreeSet<_> = arities.iter().map(|(p, _)| p.clone()).collect();
        assert_eq!(arities.len(), names.len(), "{f}");
    }
}

fn chain(len: usize) -> KripkeModel {
    let mut b = ModelBuilder::new();
    b.element("d").unwrap();
    for i in 0..len {
        b.world(&format!("c{i}")).unwrap();
        b.local_domain(&format!("c{i}"), &["d"]).unwrap();
        if i > 0 {
            b.edge(&format!("c{}", i - 1), &format!("c{i}")).unwrap();
        }
    }
    b.build()
}

#[test]
fn delta_requires_a_path_of_length_n() {
    for n in 0..=4 {
        let delta = to_nnf(&encodings::delta_n(n));
        let empty = Assignment::new();
        assert!(chain(n + 1).check("c0", &empty, &delta).unwrap(), "n = {n}");
        if n > 0 {
            assert!(!chain(n).check("c0", &empty, &delta).unwrap(), "n = {n}");
        }
    }
}

#[test]
fn beta_grows_polynomially() {
    let two = TilingInstance::new(&["a", "b"], &[("a", "b"), ("b", "a")], &[("a", "a"), ("b", "b")], "a");
    let sizes: Vec<usize> = (1..=4).map(|n| to_nnf(&encodings::beta_nt(&two, n).unwrap()).size()).collect();
    for w in sizes.windows(2) {
        assert!(w[1] < 3 * w[0], "{sizes:?}");
    }
}

//! Exhaustive satisfiability search over small tree-shaped models.
//!
//! The search space is every tree of depth at most `max_depth` with at most
//! `max_branching` children per world, a root domain of `1..=max_root_domain`
//! elements, and `0..=max_growth` new elements per child. Rather than listing
//! those models one by one, the space is grounded into a propositional
//! formula: a complete skeleton tree carries existence variables for worlds
//! and element slots, and one variable per potential atom. A satisfying
//! assignment is decoded into a [`KripkeModel`] and re-checked with the
//! model checker.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use varisat::{ExtendFormula, Lit, Solver};

use crate::formula::{Formula, Pred, Var};
use crate::kripke::{Assignment, BuildError, KripkeModel, ModelBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub max_depth: usize,
    pub max_branching: usize,
    pub max_root_domain: usize,
    pub max_growth: usize,
}

impl SearchBounds {
    pub fn new(max_depth: usize, max_branching: usize, max_root_domain: usize, max_growth: usize) -> Self {
        SearchBounds { max_depth, max_branching, max_root_domain, max_growth }
    }

    /// Componentwise `self <= other`.
    pub fn within(&self, other: &SearchBounds) -> bool {
        self.max_depth <= other.max_depth
            && self.max_branching <= other.max_branching
            && self.max_root_domain <= other.max_root_domain
            && self.max_growth <= other.max_growth
    }
}

#[derive(Clone, Debug)]
pub enum OracleResult {
    Found { model: KripkeModel, world: String, assignment: Assignment },
    NoneWithinBounds(SearchBounds),
}

impl OracleResult {
    pub fn is_found(&self) -> bool {
        matches!(self, OracleResult::Found { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("the root domain must hold at least one element")]
    EmptyRootDomain,
    #[error("{free} free variables do not fit a root domain of {root}")]
    TooManyFreeVariables { free: usize, root: usize },
    #[error("search space of about {estimate:.3e} ground instances exceeds the ceiling {ceiling:.3e}")]
    TooLarge { estimate: f64, ceiling: f64 },
    #[error("the SAT solver failed: {0}")]
    Solver(String),
    #[error("decoded model does not satisfy the formula: {0}")]
    Unsound(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// Default ceiling on the estimated number of ground subformula instances.
pub const DEFAULT_CEILING: f64 = 2.0e7;

pub fn sat_bounded(phi: &Formula, bounds: &SearchBounds) -> Result<OracleResult, OracleError> {
    sat_bounded_with_ceiling(phi, bounds, DEFAULT_CEILING)
}

/// Estimated ground instances for `phi` at `bounds`: each subformula is
/// counted once per skeleton world and per value of the variables in scope.
pub fn estimate(phi: &Formula, bounds: &SearchBounds) -> f64 {
    let b = bounds.max_branching as f64;
    let worlds: f64 = (0..=bounds.max_depth).map(|d| b.powi(d as i32)).sum();
    let slots = (bounds.max_root_domain + bounds.max_depth * bounds.max_growth) as f64;
    fn go(f: &Formula, scope: i32, worlds: f64, slots: f64) -> f64 {
        let here = worlds * slots.powi(scope);
        here + match f {
            Formula::And(a, b) | Formula::Or(a, b) => go(a, scope, worlds, slots) + go(b, scope, worlds, slots),
            Formula::Box(a) | Formula::Dia(a) => go(a, scope, worlds, slots),
            Formula::Forall(_, a) | Formula::Exists(_, a) => go(a, scope + 1, worlds, slots),
            _ => 0.0,
        }
    }
    go(phi, phi.free_vars().len() as i32, worlds, slots)
}

pub fn sat_bounded_with_ceiling(phi: &Formula, bounds: &SearchBounds, ceiling: f64) -> Result<OracleResult, OracleError> {
    if bounds.max_root_domain == 0 {
        return Err(OracleError::EmptyRootDomain);
    }
    let free: Vec<Var> = phi.free_vars().into_iter().collect();
    if free.len() > bounds.max_root_domain {
        return Err(OracleError::TooManyFreeVariables { free: free.len(), root: bounds.max_root_domain });
    }
    let est = estimate(phi, bounds);
    if est > ceiling {
        return Err(OracleError::TooLarge { estimate: est, ceiling });
    }

    let mut g = Grounder::new(phi, bounds);
    let mut maps = Vec::new();
    growth_strings(free.len(), bounds.max_root_domain, &mut Vec::new(), &mut maps);
    for map in maps {
        let mut env: Vec<(Var, usize)> = free.iter().cloned().zip(map.iter().copied()).collect();
        let root = g.encode(0, 0, &mut env);
        let mut assumptions = vec![root];
        assumptions.extend(map.iter().map(|&s| g.slots[s].exists));
        g.solver.assume(&assumptions);
        if !g.solver.solve().map_err(|e| OracleError::Solver(e.to_string()))? {
            continue;
        }
        let lits = g.solver.model().expect("satisfiable");
        let (model, world, slot_names) = g.decode(&lits)?;
        let assignment: Assignment = env.iter().map(|(v, s)| (v.clone(), slot_names[s].clone())).collect();
        let problems = model.validate();
        if let Some(p) = problems.first() {
            return Err(OracleError::Unsound(p.to_string()));
        }
        return match model.check(&world, &assignment, phi) {
            Ok(true) => Ok(OracleResult::Found { model, world, assignment }),
            Ok(false) => Err(OracleError::Unsound("formula false at the decoded root".into())),
            Err(e) => Err(OracleError::Unsound(e.to_string())),
        };
    }
    Ok(OracleResult::NoneWithinBounds(*bounds))
}

/// Restricted growth strings: maps from `n` positions to values below `k`
/// where each value is at most one more than the largest before it.
fn growth_strings(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == n {
        out.push(cur.clone());
        return;
    }
    let top = cur.iter().max().map_or(0, |m| m + 1);
    for v in 0..=top.min(k - 1) {
        cur.push(v);
        growth_strings(n, k, cur, out);
        cur.pop();
    }
}

enum Kind {
    Top,
    Bot,
    Atom(Pred, Vec<Var>, bool),
    And(usize, usize),
    Or(usize, usize),
    Box(usize),
    Dia(usize),
    Forall(Var, usize),
    Exists(Var, usize),
}

struct Node {
    kind: Kind,
    free: Vec<Var>,
}

struct WorldSk {
    exists: Lit,
    children: Vec<usize>,
    /// Slots that may belong to the local domain.
    dom: Vec<usize>,
    name: String,
}

struct SlotSk {
    exists: Lit,
}

struct Grounder {
    solver: Solver<'static>,
    truth: Lit,
    nodes: Vec<Node>,
    worlds: Vec<WorldSk>,
    slots: Vec<SlotSk>,
    atoms: HashMap<(Pred, usize, Vec<usize>), Lit>,
    memo: HashMap<(usize, usize, Vec<usize>), Lit>,
}

impl Grounder {
    fn new(phi: &Formula, bounds: &SearchBounds) -> Self {
        let mut solver = Solver::new();
        let truth = solver.new_lit();
        solver.add_clause(&[truth]);
        let mut g = Grounder {
            solver,
            truth,
            nodes: Vec::new(),
            worlds: Vec::new(),
            slots: Vec::new(),
            atoms: HashMap::new(),
            memo: HashMap::new(),
        };
        g.lower(phi);
        g.nodes.reverse();
        let n = g.nodes.len();
        for node in &mut g.nodes {
            node.kind = match std::mem::replace(&mut node.kind, Kind::Top) {
                Kind::And(a, b) => Kind::And(n - 1 - a, n - 1 - b),
                Kind::Or(a, b) => Kind::Or(n - 1 - a, n - 1 - b),
                Kind::Box(a) => Kind::Box(n - 1 - a),
                Kind::Dia(a) => Kind::Dia(n - 1 - a),
                Kind::Forall(x, a) => Kind::Forall(x, n - 1 - a),
                Kind::Exists(x, a) => Kind::Exists(x, n - 1 - a),
                k => k,
            };
        }
        let root_slots = g.slot_chain(bounds.max_root_domain, truth);
        g.worlds.push(WorldSk { exists: truth, children: Vec::new(), dom: root_slots, name: "w0".into() });
        g.grow(0, 0, bounds);
        g
    }

    /// Lower the formula into the arena in postorder; the root ends up last.
    fn lower(&mut self, f: &Formula) -> usize {
        let kind = match f {
            Formula::Top => Kind::Top,
            Formula::Bot => Kind::Bot,
            Formula::Atom(p, a) => Kind::Atom(p.clone(), a.clone(), true),
            Formula::NegAtom(p, a) => Kind::Atom(p.clone(), a.clone(), false),
            Formula::And(a, b) => Kind::And(self.lower(a), self.lower(b)),
            Formula::Or(a, b) => Kind::Or(self.lower(a), self.lower(b)),
            Formula::Box(a) => Kind::Box(self.lower(a)),
            Formula::Dia(a) => Kind::Dia(self.lower(a)),
            Formula::Forall(x, a) => Kind::Forall(x.clone(), self.lower(a)),
            Formula::Exists(x, a) => Kind::Exists(x.clone(), self.lower(a)),
        };
        self.nodes.push(Node { kind, free: f.free_vars().into_iter().collect() });
        self.nodes.len() - 1
    }

    /// `n` slots whose existence forms a prefix chain guarded by `guard`.
    /// The first slot exists whenever the guard does only for the root.
    fn slot_chain(&mut self, n: usize, guard: Lit) -> Vec<usize> {
        let mut out = Vec::new();
        let mut prev = guard;
        for k in 0..n {
            let e = if k == 0 && guard == self.truth { self.truth } else { self.solver.new_lit() };
            self.solver.add_clause(&[!e, prev]);
            self.slots.push(SlotSk { exists: e });
            out.push(self.slots.len() - 1);
            prev = e;
        }
        out
    }

    fn grow(&mut self, w: usize, depth: usize, bounds: &SearchBounds) {
        if depth == bounds.max_depth {
            return;
        }
        let mut prev = self.worlds[w].exists;
        for k in 0..bounds.max_branching {
            let e = self.solver.new_lit();
            // A child exists only if its parent and its older sibling do.
            self.solver.add_clause(&[!e, prev]);
            self.solver.add_clause(&[!e, self.worlds[w].exists]);
            let own = self.slot_chain(bounds.max_growth, e);
            let mut dom = self.worlds[w].dom.clone();
            dom.extend(own);
            let name = format!("{}.{}", self.worlds[w].name, k + 1);
            self.worlds.push(WorldSk { exists: e, children: Vec::new(), dom, name });
            let c = self.worlds.len() - 1;
            self.worlds[w].children.push(c);
            self.grow(c, depth + 1, bounds);
            prev = e;
        }
    }

    fn fresh(&mut self) -> Lit {
        self.solver.new_lit()
    }

    /// A literal implying that node `n` holds at world `w` under `env`.
    fn encode(&mut self, n: usize, w: usize, env: &mut Vec<(Var, usize)>) -> Lit {
        let lookup = |env: &Vec<(Var, usize)>, v: &Var| env.iter().rev().find(|(u, _)| u == v).expect("bound").1;
        let key_vals: Vec<usize> = self.nodes[n].free.iter().map(|v| lookup(env, v)).collect();
        let key = (n, w, key_vals);
        if let Some(&l) = self.memo.get(&key) {
            return l;
        }
        let lit = match &self.nodes[n].kind {
            Kind::Top => self.truth,
            Kind::Bot => !self.truth,
            Kind::Atom(p, args, pos) => {
                let (p, pos) = (p.clone(), *pos);
                let tuple: Vec<usize> = args.iter().map(|a| lookup(env, a)).collect();
                let fresh = self.solver.new_lit();
                let a = *self.atoms.entry((p, w, tuple)).or_insert(fresh);
                if pos {
                    a
                } else {
                    !a
                }
            }
            &Kind::And(a, b) => {
                let (la, lb) = (self.encode(a, w, env), self.encode(b, w, env));
                let x = self.fresh();
                self.solver.add_clause(&[!x, la]);
                self.solver.add_clause(&[!x, lb]);
                x
            }
            &Kind::Or(a, b) => {
                let (la, lb) = (self.encode(a, w, env), self.encode(b, w, env));
                let x = self.fresh();
                self.solver.add_clause(&[!x, la, lb]);
                x
            }
            &Kind::Box(a) => {
                let x = self.fresh();
                for c in self.worlds[w].children.clone() {
                    let lc = self.encode(a, c, env);
                    let ec = self.worlds[c].exists;
                    self.solver.add_clause(&[!x, !ec, lc]);
                }
                x
            }
            &Kind::Dia(a) => {
                let x = self.fresh();
                let mut clause = vec![!x];
                for c in self.worlds[w].children.clone() {
                    let lc = self.encode(a, c, env);
                    let y = self.fresh();
                    let ec = self.worlds[c].exists;
                    self.solver.add_clause(&[!y, ec]);
                    self.solver.add_clause(&[!y, lc]);
                    clause.push(y);
                }
                self.solver.add_clause(&clause);
                x
            }
            Kind::Forall(v, a) => {
                let (v, a) = (v.clone(), *a);
                let x = self.fresh();
                for s in self.worlds[w].dom.clone() {
                    env.push((v.clone(), s));
                    let la = self.encode(a, w, env);
                    env.pop();
                    let es = self.slots[s].exists;
                    self.solver.add_clause(&[!x, !es, la]);
                }
                x
            }
            Kind::Exists(v, a) => {
                let (v, a) = (v.clone(), *a);
                let x = self.fresh();
                let mut clause = vec![!x];
                for s in self.worlds[w].dom.clone() {
                    env.push((v.clone(), s));
                    let la = self.encode(a, w, env);
                    env.pop();
                    let y = self.fresh();
                    let es = self.slots[s].exists;
                    self.solver.add_clause(&[!y, es]);
                    self.solver.add_clause(&[!y, la]);
                    clause.push(y);
                }
                self.solver.add_clause(&clause);
                x
            }
        };
        self.memo.insert(key, lit);
        lit
    }

    fn decode(&self, lits: &[Lit]) -> Result<(KripkeModel, String, HashMap<usize, String>), OracleError> {
        let mut value = vec![false; lits.iter().map(|l| l.var().index() + 1).max().unwrap_or(0)];
        for l in lits {
            value[l.var().index()] = l.is_positive();
        }
        let holds = |l: Lit| value.get(l.var().index()).copied().unwrap_or(false) == l.is_positive();
        let live_slots: BTreeSet<usize> = (0..self.slots.len()).filter(|&s| holds(self.slots[s].exists)).collect();
        let names: HashMap<usize, String> =
            live_slots.iter().enumerate().map(|(i, &s)| (s, format!("e{i}"))).collect();
        let mut b = ModelBuilder::new();
        for &s in &live_slots {
            b.element(&names[&s])?;
        }
        let live: Vec<usize> = (0..self.worlds.len()).filter(|&w| holds(self.worlds[w].exists)).collect();
        for &w in &live {
            let sk = &self.worlds[w];
            b.world(&sk.name)?;
            let dom: Vec<&str> = sk.dom.iter().filter(|s| live_slots.contains(s)).map(|s| names[s].as_str()).collect();
            b.local_domain(&sk.name, &dom)?;
        }
        for &w in &live {
            for &c in &self.worlds[w].children {
                if holds(self.worlds[c].exists) {
                    b.edge(&self.worlds[w].name, &self.worlds[c].name)?;
                }
            }
        }
        let mut facts: Vec<_> = self.atoms.iter().collect();
        facts.sort_by(|a, b| a.0.cmp(b.0));
        for ((p, w, tuple), &l) in facts {
            if holds(l) && holds(self.worlds[*w].exists) && tuple.iter().all(|s| live_slots.contains(s)) {
                let args: Vec<&str> = tuple.iter().map(|s| names[s].as_str()).collect();
                b.fact(&self.worlds[*w].name, p, &args)?;
            }
        }
        Ok((b.build(), self.worlds[0].name.clone(), names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::phi2;
    use crate::formula::to_nnf;
    use crate::textio::parse_nnf;

    fn f(s: &str) -> Formula {
        parse_nnf(s).unwrap()
    }

    #[test]
    fn finds_small_models() {
        let r = sat_bounded(&f("exists x. box P(x)"), &SearchBounds::new(1, 1, 2, 0)).unwrap();
        assert!(r.is_found());
        let r = sat_bounded(&f("dia P(x) & dia ~P(x)"), &SearchBounds::new(1, 2, 1, 0)).unwrap();
        assert!(r.is_found());
        let r = sat_bounded(&f("dia P(x) & dia ~P(x)"), &SearchBounds::new(1, 1, 1, 0)).unwrap();
        assert!(!r.is_found());
    }

    #[test]
    fn contradiction_has_no_model() {
        for b in [SearchBounds::new(0, 0, 1, 0), SearchBounds::new(2, 2, 3, 1)] {
            let r = sat_bounded(&f("exists x. (P(x) & ~P(x))"), &b).unwrap();
            assert!(!r.is_found());
        }
    }

    #[test]
    fn growth_matters_for_increasing_domains() {
        let phi = f("(dia exists x. P(x)) & (forall y. box ~P(y))");
        assert!(!sat_bounded(&phi, &SearchBounds::new(1, 1, 1, 0)).unwrap().is_found());
        assert!(sat_bounded(&phi, &SearchBounds::new(1, 1, 1, 1)).unwrap().is_found());
        // Depth, diamonds, free plus existential plus one: still too small
        // without growth, although the formula is satisfiable.
        assert!(!sat_bounded(&phi, &SearchBounds::new(1, 1, 2, 0)).unwrap().is_found());
        assert!(crate::tableau::solve_lbf(&phi).unwrap().is_sat());
    }

    #[test]
    fn phi2_has_no_small_model() {
        let r = sat_bounded(&to_nnf(&phi2()), &SearchBounds::new(3, 2, 3, 1)).unwrap();
        assert!(!r.is_found());
    }

    #[test]
    fn free_variables_share_or_split_elements() {
        let r = sat_bounded(&f("P(x) & ~P(y)"), &SearchBounds::new(0, 0, 2, 0)).unwrap();
        let OracleResult::Found { assignment, .. } = r else { panic!() };
        assert_ne!(assignment[&Var::new("x")], assignment[&Var::new("y")]);
        let e = sat_bounded(&f("P(x) & ~P(y)"), &SearchBounds::new(0, 0, 1, 0)).unwrap_err();
        assert!(matches!(e, OracleError::TooManyFreeVariables { .. }));
    }

    #[test]
    fn ceiling_refuses_up_front() {
        let phi = f("forall x. forall y. forall z. box box box P(x,y,z)");
        let e = sat_bounded_with_ceiling(&phi, &SearchBounds::new(3, 3, 4, 2), 1000.0).unwrap_err();
        assert!(matches!(e, OracleError::TooLarge { .. }));
    }

    #[test]
    fn restricted_growth() {
        let mut out = Vec::new();
        growth_strings(3, 3, &mut Vec::new(), &mut out);
        assert_eq!(out.len(), 5);
        out.clear();
        growth_strings(3, 2, &mut Vec::new(), &mut out);
        assert_eq!(out.len(), 4);
    }
}

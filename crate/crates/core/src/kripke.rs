//! Finite Kripke structures with increasing local domains, and the model checker.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::formula::{Formula, Pred, RawFormula, Var};

/// Partial map from variables to domain elements, by element name.
pub type Assignment = BTreeMap<Var, String>;

pub type WorldId = usize;
pub type ElemId = usize;

/// A finite structure `(W, D, δ, R, ρ)`.
///
/// Worlds and elements are stored by index; names are kept for I/O. The
/// structure may violate the increasing-domain conditions; [`KripkeModel::validate`]
/// reports them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KripkeModel {
    worlds: Vec<String>,
    world_ix: HashMap<String, WorldId>,
    elements: Vec<String>,
    element_ix: HashMap<String, ElemId>,
    delta: Vec<BTreeSet<ElemId>>,
    succ: Vec<Vec<WorldId>>,
    valuation: Vec<BTreeMap<Pred, BTreeSet<Vec<ElemId>>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("world {world} has an empty local domain")]
    EmptyLocalDomain { world: String },
    #[error("edge {from} -> {to}: elements {missing:?} of {from} are missing at {to}")]
    Monotonicity { from: String, to: String, missing: Vec<String> },
    #[error("world {world}: predicate {pred} has a tuple of length {found}, expected {expected}")]
    Arity { world: String, pred: String, expected: usize, found: usize },
    #[error("world {world}: tuple {tuple:?} of {pred} leaves the local domain")]
    TupleOutsideDomain { world: String, pred: String, tuple: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("duplicate world {0}")]
    DuplicateWorld(String),
    #[error("duplicate element {0}")]
    DuplicateElement(String),
    #[error("unknown world {0}")]
    UnknownWorld(String),
    #[error("unknown element {0}")]
    UnknownElement(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("unknown world {0}")]
    UnknownWorld(String),
    #[error("variable {var} is assigned the unknown element {element}")]
    UnknownElement { var: Var, element: String },
    #[error("assignment is not relevant at {world}: {var} = {element} lies outside the local domain")]
    IrrelevantAssignment { world: String, var: Var, element: String },
    #[error("free variable {0} has no value")]
    UncoveredVariable(Var),
}

/// Incremental construction by name.
#[derive(Default, Debug)]
pub struct ModelBuilder {
    model: KripkeModel,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn world(&mut self, name: &str) -> Result<WorldId, BuildError> {
        let m = &mut self.model;
        if m.world_ix.contains_key(name) {
            return Err(BuildError::DuplicateWorld(name.to_string()));
        }
        let id = m.worlds.len();
        m.worlds.push(name.to_string());
        m.world_ix.insert(name.to_string(), id);
        m.delta.push(BTreeSet::new());
        m.succ.push(Vec::new());
        m.valuation.push(BTreeMap::new());
        Ok(id)
    }

    pub fn element(&mut self, name: &str) -> Result<ElemId, BuildError> {
        let m = &mut self.model;
        if m.element_ix.contains_key(name) {
            return Err(BuildError::DuplicateElement(name.to_string()));
        }
        let id = m.elements.len();
        m.elements.push(name.to_string());
        m.element_ix.insert(name.to_string(), id);
        Ok(id)
    }

    fn w(&self, name: &str) -> Result<WorldId, BuildError> {
        self.model.world(name).ok_or_else(|| BuildError::UnknownWorld(name.to_string()))
    }

    fn e(&self, name: &str) -> Result<ElemId, BuildError> {
        self.model.element(name).ok_or_else(|| BuildError::UnknownElement(name.to_string()))
    }

    pub fn local_domain<S: AsRef<str>>(&mut self, world: &str, elems: &[S]) -> Result<&mut Self, BuildError> {
        let w = self.w(world)?;
        for e in elems {
            let e = self.e(e.as_ref())?;
            self.model.delta[w].insert(e);
        }
        Ok(self)
    }

    pub fn edge(&mut self, from: &str, to: &str) -> Result<&mut Self, BuildError> {
        let (a, b) = (self.w(from)?, self.w(to)?);
        if !self.model.succ[a].contains(&b) {
            self.model.succ[a].push(b);
        }
        Ok(self)
    }

    pub fn fact<S: AsRef<str>>(&mut self, world: &str, pred: &str, tuple: &[S]) -> Result<&mut Self, BuildError> {
        let w = self.w(world)?;
        let t = tuple.iter().map(|e| self.e(e.as_ref())).collect::<Result<Vec<_>, _>>()?;
        self.model.valuation[w].entry(Pred::from(pred)).or_default().insert(t);
        Ok(self)
    }

    pub fn build(self) -> KripkeModel {
        self.model
    }
}

impl KripkeModel {
    pub fn world(&self, name: &str) -> Option<WorldId> {
        self.world_ix.get(name).copied()
    }

    pub fn element(&self, name: &str) -> Option<ElemId> {
        self.element_ix.get(name).copied()
    }

    pub fn world_names(&self) -> &[String] {
        &self.worlds
    }

    pub fn element_names(&self) -> &[String] {
        &self.elements
    }

    pub fn world_name(&self, w: WorldId) -> &str {
        &self.worlds[w]
    }

    pub fn element_name(&self, e: ElemId) -> &str {
        &self.elements[e]
    }

    pub fn num_worlds(&self) -> usize {
        self.worlds.len()
    }

    pub fn local_domain(&self, w: WorldId) -> &BTreeSet<ElemId> {
        &self.delta[w]
    }

    pub fn successors(&self, w: WorldId) -> &[WorldId] {
        &self.succ[w]
    }

    pub fn edges(&self) -> impl Iterator<Item = (WorldId, WorldId)> + '_ {
        self.succ.iter().enumerate().flat_map(|(a, bs)| bs.iter().map(move |&b| (a, b)))
    }

    pub fn extension(&self, w: WorldId, pred: &str) -> Option<&BTreeSet<Vec<ElemId>>> {
        self.valuation[w].get(pred)
    }

    pub fn valuation_at(&self, w: WorldId) -> &BTreeMap<Pred, BTreeSet<Vec<ElemId>>> {
        &self.valuation[w]
    }

    pub fn holds(&self, w: WorldId, pred: &str, tuple: &[ElemId]) -> bool {
        self.valuation[w].get(pred).is_some_and(|s| s.contains(tuple))
    }

    /// All violations of the increasing-domain conditions, in a fixed order.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (w, d) in self.delta.iter().enumerate() {
            if d.is_empty() {
                out.push(Violation::EmptyLocalDomain { world: self.worlds[w].clone() });
            }
        }
        for (a, b) in self.edges() {
            let missing: Vec<String> =
                self.delta[a].difference(&self.delta[b]).map(|&e| self.elements[e].clone()).collect();
            if !missing.is_empty() {
                out.push(Violation::Monotonicity {
                    from: self.worlds[a].clone(),
                    to: self.worlds[b].clone(),
                    missing,
                });
            }
        }
        let mut arity: BTreeMap<&Pred, usize> = BTreeMap::new();
        for (w, val) in self.valuation.iter().enumerate() {
            for (p, tuples) in val {
                for t in tuples {
                    let expected = *arity.entry(p).or_insert(t.len());
                    if t.len() != expected {
                        out.push(Violation::Arity {
                            world: self.worlds[w].clone(),
                            pred: p.to_string(),
                            expected,
                            found: t.len(),
                        });
                    }
                    if t.iter().any(|e| !self.delta[w].contains(e)) {
                        out.push(Violation::TupleOutsideDomain {
                            world: self.worlds[w].clone(),
                            pred: p.to_string(),
                            tuple: t.iter().map(|&e| self.elements[e].clone()).collect(),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn is_constant_domain(&self) -> bool {
        self.delta.iter().all(|d| d.len() == self.elements.len())
    }

    /// The submodel on worlds reachable from `root`, with names preserved.
    pub fn reachable_submodel(&self, root: WorldId) -> KripkeModel {
        let mut keep = vec![false; self.worlds.len()];
        let mut stack = vec![root];
        keep[root] = true;
        while let Some(w) = stack.pop() {
            for &v in &self.succ[w] {
                if !keep[v] {
                    keep[v] = true;
                    stack.push(v);
                }
            }
        }
        let mut b = ModelBuilder::new();
        for e in &self.elements {
            b.element(e).expect("names are distinct");
        }
        for (w, name) in self.worlds.iter().enumerate() {
            if keep[w] {
                b.world(name).expect("names are distinct");
            }
        }
        let mut m = b.build();
        for (w, name) in self.worlds.iter().enumerate() {
            if !keep[w] {
                continue;
            }
            let nw = m.world(name).expect("kept");
            m.delta[nw] = self.delta[w].clone();
            m.valuation[nw] = self.valuation[w].clone();
            m.succ[nw] = self.succ[w].iter().map(|&v| m.world_ix[&self.worlds[v]]).collect();
        }
        m
    }

    fn resolve(&self, world: &str, sigma: &Assignment, free: &BTreeSet<Var>) -> Result<(WorldId, Env), CheckError> {
        let w = self.world(world).ok_or_else(|| CheckError::UnknownWorld(world.to_string()))?;
        let mut env = Env::default();
        for x in free {
            let name = sigma.get(x).ok_or_else(|| CheckError::UncoveredVariable(x.clone()))?;
            let e = self
                .element(name)
                .ok_or_else(|| CheckError::UnknownElement { var: x.clone(), element: name.clone() })?;
            if !self.delta[w].contains(&e) {
                return Err(CheckError::IrrelevantAssignment {
                    world: world.to_string(),
                    var: x.clone(),
                    element: name.clone(),
                });
            }
            env.push(x.clone(), e);
        }
        Ok((w, env))
    }

    /// `M, w, σ ⊨ φ`. Relevance is required only on the free variables of φ.
    pub fn check(&self, world: &str, sigma: &Assignment, phi: &Formula) -> Result<bool, CheckError> {
        let (w, mut env) = self.resolve(world, sigma, &phi.free_vars())?;
        Ok(self.eval(w, &mut env, phi))
    }

    /// Model checking on unnormalized formulas, clause by clause without NNF.
    pub fn check_raw(&self, world: &str, sigma: &Assignment, phi: &RawFormula) -> Result<bool, CheckError> {
        let (w, mut env) = self.resolve(world, sigma, &phi.free_vars())?;
        Ok(self.eval_raw(w, &mut env, phi))
    }

    fn atom_holds(&self, w: WorldId, env: &Env, p: &Pred, args: &[Var]) -> bool {
        let tuple: Vec<ElemId> = args.iter().map(|a| env.get(a).expect("free variables are covered")).collect();
        self.holds(w, p, &tuple)
    }

    fn eval(&self, w: WorldId, env: &mut Env, phi: &Formula) -> bool {
        match phi {
            Formula::Top => true,
            Formula::Bot => false,
            Formula::Atom(p, args) => self.atom_holds(w, env, p, args),
            Formula::NegAtom(p, args) => !self.atom_holds(w, env, p, args),
            Formula::And(a, b) => self.eval(w, env, a) && self.eval(w, env, b),
            Formula::Or(a, b) => self.eval(w, env, a) || self.eval(w, env, b),
            Formula::Box(a) => self.succ[w].iter().all(|&v| self.eval(v, env, a)),
            Formula::Dia(a) => self.succ[w].iter().any(|&v| self.eval(v, env, a)),
            Formula::Forall(x, a) => self.quantify(w, env, x, |m, env| m.eval(w, env, a), true),
            Formula::Exists(x, a) => self.quantify(w, env, x, |m, env| m.eval(w, env, a), false),
        }
    }

    fn eval_raw(&self, w: WorldId, env: &mut Env, phi: &RawFormula) -> bool {
        match phi {
            RawFormula::Top => true,
            RawFormula::Bot => false,
            RawFormula::Atom(p, args) => self.atom_holds(w, env, p, args),
            RawFormula::Not(a) => !self.eval_raw(w, env, a),
            RawFormula::And(a, b) => self.eval_raw(w, env, a) && self.eval_raw(w, env, b),
            RawFormula::Or(a, b) => self.eval_raw(w, env, a) || self.eval_raw(w, env, b),
            RawFormula::Implies(a, b) => !self.eval_raw(w, env, a) || self.eval_raw(w, env, b),
            RawFormula::Iff(a, b) => self.eval_raw(w, env, a) == self.eval_raw(w, env, b),
            RawFormula::Box(a) => self.succ[w].iter().all(|&v| self.eval_raw(v, env, a)),
            RawFormula::Dia(a) => self.succ[w].iter().any(|&v| self.eval_raw(v, env, a)),
            RawFormula::Forall(x, a) => self.quantify(w, env, x, |m, env| m.eval_raw(w, env, a), true),
            RawFormula::Exists(x, a) => self.quantify(w, env, x, |m, env| m.eval_raw(w, env, a), false),
        }
    }

    fn quantify(
        &self,
        w: WorldId,
        env: &mut Env,
        x: &Var,
        mut body: impl FnMut(&Self, &mut Env) -> bool,
        universal: bool,
    ) -> bool {
        for &e in &self.delta[w] {
            env.push(x.clone(), e);
            let r = body(self, env);
            env.pop();
            if r != universal {
                return !universal;
            }
        }
        universal
    }

    /// A path of refuted clauses showing why `phi` fails, or `None` if it holds.
    pub fn explain(&self, world: &str, sigma: &Assignment, phi: &Formula) -> Result<Option<Vec<String>>, CheckError> {
        let (w, mut env) = self.resolve(world, sigma, &phi.free_vars())?;
        if self.eval(w, &mut env, phi) {
            return Ok(None);
        }
        let mut out = Vec::new();
        self.refute(w, &mut env, phi, &mut out);
        Ok(Some(out))
    }

    fn refute(&self, w: WorldId, env: &mut Env, phi: &Formula, out: &mut Vec<String>) {
        let wn = &self.worlds[w];
        match phi {
            Formula::Top => unreachable!("true is never refuted"),
            Formula::Bot => out.push(format!("at {wn}: false")),
            Formula::Atom(..) | Formula::NegAtom(..) => {
                out.push(format!("at {wn}: literal {} fails under {}", phi, env.describe(self)))
            }
            Formula::And(a, b) => {
                let bad = if self.eval(w, env, a) { b } else { a };
                out.push(format!("at {wn}: conjunct {bad} fails"));
                self.refute(w, env, bad, out);
            }
            Formula::Or(..) => out.push(format!("at {wn}: every disjunct of {phi} fails")),
            Formula::Box(a) => {
                let v = *self.succ[w].iter().find(|&&v| !self.eval(v, env, a)).expect("box is false");
                out.push(format!("at {wn}: box fails, successor {} refutes {a}", self.worlds[v]));
                self.refute(v, env, a, out);
            }
            Formula::Dia(a) => out.push(format!("at {wn}: no successor satisfies {a}")),
            Formula::Forall(x, a) => {
                for &e in &self.delta[w] {
                    env.push(x.clone(), e);
                    if !self.eval(w, env, a) {
                        out.push(format!("at {wn}: forall fails at {x} = {}", self.elements[e]));
                        self.refute(w, env, a, out);
                        env.pop();
                        return;
                    }
                    env.pop();
                }
                unreachable!("forall is false")
            }
            Formula::Exists(x, a) => out.push(format!("at {wn}: no element of the local domain witnesses {x} in {a}")),
        }
    }
}

/// Variable environment with shadowing, searched from the innermost binding.
#[derive(Default, Debug, Clone)]
struct Env(Vec<(Var, ElemId)>);

impl Env {
    fn push(&mut self, x: Var, e: ElemId) {
        self.0.push((x, e));
    }

    fn pop(&mut self) {
        self.0.pop();
    }

    fn get(&self, x: &Var) -> Option<ElemId> {
        self.0.iter().rev().find(|(y, _)| y == x).map(|&(_, e)| e)
    }

    fn describe(&self, m: &KripkeModel) -> String {
        let mut seen = BTreeMap::new();
        for (x, e) in self.0.iter().rev() {
            seen.entry(x.clone()).or_insert_with(|| m.elements[*e].clone());
        }
        let parts: Vec<String> = seen.iter().map(|(x, e)| format!("{x}={e}")).collect();
        format!("[{}]", parts.join(", "))
    }
}

impl fmt::Display for KripkeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (w, name) in self.worlds.iter().enumerate() {
            let dom: Vec<&str> = self.delta[w].iter().map(|&e| self.elements[e].as_str()).collect();
            let succ: Vec<&str> = self.succ[w].iter().map(|&v| self.worlds[v].as_str()).collect();
            write!(f, "{name}: domain {{{}}}", dom.join(", "))?;
            if !succ.is_empty() {
                write!(f, " -> {}", succ.join(", "))?;
            }
            for (p, tuples) in &self.valuation[w] {
                for t in tuples {
                    let args: Vec<&str> = t.iter().map(|&e| self.elements[e].as_str()).collect();
                    write!(f, " {p}({})", args.join(","))?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

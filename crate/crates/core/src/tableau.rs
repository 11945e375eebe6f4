//! Tableau decision procedures for the loosely bundled fragment and for
//! ABBABE, both over increasing-domain models.
//!
//! Two search drivers share the rule set. [`Strategy::Reference`] walks the
//! tableau with [`apply_rule`] in strict priority order and backtracks
//! chronologically; its trace is the one to diff against hand derivations.
//! [`Strategy::Fast`] applies the same rules but defers disjunction splits
//! until the existential and universal rules need them, discharges
//! disjunctions whose outcome is already forced, and backjumps over choice
//! points that did not contribute to a clash.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::rc::Rc;

use serde::Serialize;
use thiserror::Error;

use crate::formula::{make_clean, Formula, FormulaSet, Var, VariableEnumeration};
use crate::fragment::{abbabe_offender, in_abbabe, lbf_violation};
use crate::kripke::{Assignment, BuildError, KripkeModel, ModelBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lbf,
    Abbabe,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Lbf => "lbf",
            Mode::Abbabe => "abbabe",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Rule {
    And,
    Or,
    Exists,
    ForallExistsDia,
    Forall,
    Dia,
    End,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::And => "and",
            Rule::Or => "or",
            Rule::Exists => "exists",
            Rule::ForallExistsDia => "forall-exists-dia",
            Rule::Forall => "forall",
            Rule::Dia => "dia",
            Rule::End => "end",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A triple `(w: Γ, σ)`. `sigma` lists the domain of the partial identity
/// assignment in introduction order. World names are dot-separated: `r`,
/// `r.1`, `r.1.2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableauNode {
    pub world: String,
    pub gamma: FormulaSet,
    pub sigma: Vec<Var>,
}

impl TableauNode {
    pub fn new(world: impl Into<String>, gamma: impl IntoIterator<Item = Formula>, sigma: &[&str]) -> Self {
        TableauNode {
            world: world.into(),
            gamma: gamma.into_iter().collect(),
            sigma: sigma.iter().map(Var::new).collect(),
        }
    }

    /// No `⊥` and no complementary pair of literals.
    pub fn is_open(&self) -> bool {
        self.gamma.iter().all(|f| match f {
            Formula::Bot => false,
            Formula::Atom(..) => !self.gamma.contains(&f.negate()),
            _ => true,
        })
    }

    fn vars(&self) -> HashSet<Var> {
        let mut out: HashSet<Var> = self.sigma.iter().cloned().collect();
        for f in &self.gamma {
            f.all_vars(&mut out);
        }
        out
    }
}

impl fmt::Display for TableauNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gamma: Vec<String> = self.gamma.iter().map(|g| g.to_string()).collect();
        let sigma: Vec<&str> = self.sigma.iter().map(Var::name).collect();
        write!(f, "{}: {{{}}}, {{{}}}", self.world, gamma.join(", "), sigma.join(", "))
    }
}

/// Outcome of one rule step at a node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RuleApplication {
    /// A rule with a single conclusion.
    Expand { rule: Rule, principal: Formula, next: TableauNode },
    /// The disjunction rule: both options, left first.
    Branch { principal: Formula, left: TableauNode, right: TableauNode },
    /// The diamond rule: one successor world per diamond formula.
    Successors { principals: Vec<Formula>, children: Vec<TableauNode> },
    /// Only literals remain.
    Saturated,
    /// Some formula is not a literal but no rule applies.
    Stuck,
}

/// One step of the calculus under the fixed priority
/// and > or > exists > forall-exists-dia > forall > dia > end.
///
/// `witnesses` is the number `l` of witness pairs introduced by the
/// forall-exists-dia rule (abbabe mode only). Fresh names come from `en` and
/// avoid every variable of the node.
pub fn apply_rule(node: &TableauNode, mode: Mode, witnesses: usize, en: &mut VariableEnumeration) -> RuleApplication {
    let gamma = node.gamma.as_slice();
    let pick = |p: &dyn Fn(&Formula) -> bool| gamma.iter().position(p);
    let rest = |i: usize| {
        let mut g = node.gamma.clone();
        let f = g.remove_at(i);
        (f, g)
    };
    let conclude = |rule: Rule, principal: Formula, mut g: FormulaSet, sigma: Vec<Var>, adds: Vec<Formula>| {
        for a in adds {
            if a != Formula::Top {
                g.insert(a);
            }
        }
        RuleApplication::Expand { rule, principal, next: TableauNode { world: node.world.clone(), gamma: g, sigma } }
    };

    if let Some(i) = pick(&|f| matches!(f, Formula::And(..))) {
        let (f, g) = rest(i);
        let Formula::And(a, b) = &f else { unreachable!() };
        let adds = vec![(**a).clone(), (**b).clone()];
        return conclude(Rule::And, f.clone(), g, node.sigma.clone(), adds);
    }
    if let Some(i) = pick(&|f| matches!(f, Formula::Or(..))) {
        let (f, g) = rest(i);
        let Formula::Or(a, b) = &f else { unreachable!() };
        let side = |x: &Formula| {
            let mut g = g.clone();
            if *x != Formula::Top {
                g.insert(x.clone());
            }
            TableauNode { world: node.world.clone(), gamma: g, sigma: node.sigma.clone() }
        };
        return RuleApplication::Branch { principal: f.clone(), left: side(a), right: side(b) };
    }
    if let Some(i) = pick(&|f| matches!(f, Formula::Exists(..))) {
        let (f, g) = rest(i);
        let Formula::Exists(x, body) = &f else { unreachable!() };
        let mut sigma = node.sigma.clone();
        if !sigma.contains(x) {
            sigma.push(x.clone());
        }
        return conclude(Rule::Exists, f.clone(), g, sigma, vec![(**body).clone()]);
    }
    let mut avoid = node.vars();
    if mode == Mode::Abbabe {
        if let Some(i) = pick(&|f| matches!(f, Formula::Forall(_, b) if first_exists_dia(b).is_some())) {
            let (f, g) = rest(i);
            let mut sigma = node.sigma.clone();
            let rewritten = expand_witnesses(&f, witnesses, &mut |witness| {
                let v = en.fresh(&avoid);
                avoid.insert(v.clone());
                if witness {
                    sigma.push(v.clone());
                }
                v
            });
            return conclude(Rule::ForallExistsDia, f, g, sigma, vec![rewritten]);
        }
    }
    if node.gamma.is_existential_safe() {
        if let Some(i) = pick(&|f| matches!(f, Formula::Forall(..))) {
            let (f, g) = rest(i);
            let Formula::Forall(x, body) = &f else { unreachable!() };
            let insts = node
                .sigma
                .iter()
                .map(|z| {
                    let inst = body.substitute(z, x).expect("clean sets admit substitution");
                    rename_apart(&inst, en, &mut avoid)
                })
                .collect();
            return conclude(Rule::Forall, f.clone(), g, node.sigma.clone(), insts);
        }
    }
    if !gamma.iter().all(Formula::is_module) {
        return RuleApplication::Stuck;
    }
    let dias: Vec<&Formula> = gamma.iter().filter(|f| matches!(f, Formula::Dia(_))).collect();
    let bodies: Vec<Formula> = gamma
        .iter()
        .filter_map(|f| match f {
            Formula::Box(b) => Some((**b).clone()),
            _ => None,
        })
        .collect();
    if !dias.is_empty() {
        let children = dias
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let Formula::Dia(body) = d else { unreachable!() };
                let mut g = FormulaSet::new();
                g.insert((**body).clone());
                for b in &bodies {
                    g.insert(b.clone());
                }
                TableauNode { world: format!("{}.{}", node.world, k + 1), gamma: g, sigma: node.sigma.clone() }
            })
            .collect();
        return RuleApplication::Successors { principals: dias.into_iter().cloned().collect(), children };
    }
    if let Some(i) = pick(&|f| matches!(f, Formula::Box(_))) {
        let g: FormulaSet = gamma.iter().filter(|f| f.is_literal()).cloned().collect();
        return RuleApplication::Expand {
            rule: Rule::End,
            principal: gamma[i].clone(),
            next: TableauNode { world: node.world.clone(), gamma: g, sigma: node.sigma.clone() },
        };
    }
    RuleApplication::Saturated
}

/// Rename the binders of `f` to fresh variables, recording them in `avoid`.
fn rename_apart(f: &Formula, en: &mut VariableEnumeration, avoid: &mut HashSet<Var>) -> Formula {
    if !f.has_binder() {
        return f.clone();
    }
    let mut fresh = || {
        let v = en.fresh(avoid);
        avoid.insert(v.clone());
        v
    };
    f.rename_binders(&mut fresh, &mut Vec::new())
}

/// First component of the shape `∃y ◇ψ`, looking through `∧` and `∨` only.
fn first_exists_dia(f: &Formula) -> Option<(&Var, &Formula)> {
    match f {
        Formula::And(a, b) | Formula::Or(a, b) => first_exists_dia(a).or_else(|| first_exists_dia(b)),
        Formula::Exists(y, body) => match &**body {
            Formula::Dia(psi) => Some((y, psi)),
            _ => None,
        },
        _ => None,
    }
}

/// Replace the first `∃y◇ψ` component of `∀x φ` by the disjunction of
/// `◇ψ[v/y]` over `2 * l` witnesses drawn from `fresh`. Each copy gets its
/// binders renamed with the same source.
fn expand_witnesses(forall: &Formula, l: usize, fresh: &mut dyn FnMut(bool) -> Var) -> Formula {
    let Formula::Forall(x, body) = forall else { unreachable!() };
    fn go(f: &Formula, l: usize, fresh: &mut dyn FnMut(bool) -> Var, done: &mut bool) -> Formula {
        if *done {
            return f.clone();
        }
        match f {
            Formula::And(a, b) | Formula::Or(a, b) => {
                let na = go(a, l, fresh, done);
                let nb = go(b, l, fresh, done);
                if matches!(f, Formula::And(..)) {
                    Formula::and(na, nb)
                } else {
                    Formula::or(na, nb)
                }
            }
            Formula::Exists(y, body) if matches!(&**body, Formula::Dia(_)) => {
                *done = true;
                let Formula::Dia(psi) = &**body else { unreachable!() };
                let mut copies = Vec::with_capacity(2 * l);
                for _ in 0..2 * l {
                    let w = fresh(true);
                    let inst = psi.substitute(&w, y).expect("witnesses are fresh");
                    let mut scope = Vec::new();
                    let renamed = if inst.has_binder() {
                        inst.rename_binders(&mut || fresh(false), &mut scope)
                    } else {
                        inst
                    };
                    copies.push(Formula::dia(renamed));
                }
                Formula::disj(copies)
            }
            _ => f.clone(),
        }
    }
    Formula::forall(x.clone(), go(body, l, fresh, &mut false))
}

/// A tableau as a list of nodes with parent links. Each entry records the
/// rule applied at it, if any.
#[derive(Clone, Debug, Default)]
pub struct Tableau {
    pub nodes: Vec<TableauEntry>,
}

#[derive(Clone, Debug)]
pub struct TableauEntry {
    pub node: TableauNode,
    pub parent: Option<usize>,
    pub rule: Option<Rule>,
}

impl Tableau {
    /// Index of `t_w`, the last node carrying world name `w`.
    pub fn last_node(&self, world: &str) -> Option<usize> {
        self.nodes.iter().rposition(|e| e.node.world == world)
    }

    pub fn is_saturated(&self) -> bool {
        let has_child: HashSet<usize> = self.nodes.iter().filter_map(|e| e.parent).collect();
        self.nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| !has_child.contains(i))
            .all(|(_, e)| e.node.gamma.iter().all(Formula::is_literal))
    }
}

pub fn is_open(tableau: &Tableau) -> bool {
    tableau.nodes.iter().all(|e| e.node.is_open())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("the tableau has no nodes")]
    Empty,
    #[error("the tableau is closed at world {0}")]
    NotOpen(String),
    #[error("world {0} has no parent world in the tableau")]
    Orphan(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// The model induced by an open tableau: one world per name, the local
/// domain of `w` is the assignment domain at `t_w`, and the valuation is the
/// set of positive literals at `t_w`. Returns the model, the root world and
/// the identity assignment on the root domain.
pub fn extract_model(tableau: &Tableau) -> Result<(KripkeModel, String, Assignment), ExtractError> {
    let first = tableau.nodes.first().ok_or(ExtractError::Empty)?;
    if let Some(bad) = tableau.nodes.iter().find(|e| !e.node.is_open()) {
        return Err(ExtractError::NotOpen(bad.node.world.clone()));
    }
    let mut worlds: Vec<&str> = Vec::new();
    for e in &tableau.nodes {
        if !worlds.contains(&e.node.world.as_str()) {
            worlds.push(&e.node.world);
        }
    }
    let mut b = ModelBuilder::new();
    let mut elems = HashSet::new();
    for w in &worlds {
        b.world(w)?;
    }
    for e in &tableau.nodes {
        for v in &e.node.sigma {
            if elems.insert(v.clone()) {
                b.element(v.name())?;
            }
        }
    }
    for w in &worlds {
        let tw = &tableau.nodes[tableau.last_node(w).expect("world occurs")].node;
        let dom: Vec<&str> = tw.sigma.iter().map(Var::name).collect();
        b.local_domain(w, &dom)?;
        for f in &tw.gamma {
            if let Formula::Atom(p, args) = f {
                let args: Vec<&str> = args.iter().map(Var::name).collect();
                b.fact(w, p, &args)?;
            }
        }
        if *w != first.node.world {
            let parent = w.rsplit_once('.').map(|(p, _)| p).ok_or_else(|| ExtractError::Orphan(w.to_string()))?;
            if !worlds.contains(&parent) {
                return Err(ExtractError::Orphan(w.to_string()));
            }
            b.edge(parent, w)?;
        }
    }
    let sigma = first.node.sigma.iter().map(|v| (v.clone(), v.name().to_string())).collect();
    Ok((b.build(), first.node.world.clone(), sigma))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Fast,
    Reference,
}

#[derive(Clone, Debug, Serialize)]
pub struct Config {
    /// Rule applications allowed per run before giving up.
    pub max_nodes: u64,
    /// Largest witness count tried by the forall-exists-dia rule.
    pub max_witnesses: usize,
    pub strategy: Strategy,
    pub trace: bool,
    /// Check cleanliness after every rule application.
    pub check_invariants: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config { max_nodes: 20_000_000, max_witnesses: 8, strategy: Strategy::Fast, trace: false, check_invariants: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    /// Rule applications.
    pub nodes: u64,
    pub worlds: u64,
    pub max_domain: usize,
    pub branch_points: u64,
    /// Branch points whose right option was skipped because the clash did not depend on them.
    pub backjumps: u64,
    pub stuck_nodes: u64,
    pub clean_violations: u64,
    pub rules: BTreeMap<Rule, u64>,
    /// Witness count used by the final forall-exists-dia round.
    pub witnesses: usize,
}

#[derive(Clone, Debug)]
pub enum SolveResult {
    Sat { model: KripkeModel, root: String, assignment: Assignment },
    Unsat,
    ResourceExceeded { limit: String },
}

impl SolveResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveResult::Sat { .. })
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SolveResult::Unsat)
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub result: SolveResult,
    pub stats: Stats,
    pub trace: Vec<String>,
    /// The open tableau behind a `Sat` answer. The fast strategy keeps only
    /// the last node of each world.
    pub tableau: Option<Tableau>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("not in the {mode} fragment: {reason} in {subformula}")]
    NotInFragment { mode: Mode, subformula: Formula, reason: String },
    #[error("no rule applies to {0} at a non-saturated node")]
    Stuck(Formula),
    #[error("extracted model does not satisfy the input: {0}")]
    Unsound(String),
    #[error("model extraction failed: {0}")]
    Extract(#[from] ExtractError),
}

pub fn solve_lbf(theta: &Formula) -> Result<SolveResult, SolveError> {
    Solver::default().solve(theta, Mode::Lbf).map(|o| o.result)
}

pub fn solve_abbabe(theta: &Formula) -> Result<SolveResult, SolveError> {
    Solver::default().solve(theta, Mode::Abbabe).map(|o| o.result)
}

#[derive(Clone, Debug, Default)]
pub struct Solver {
    pub config: Config,
}

const STACK_BYTES: usize = 1 << 29;

impl Solver {
    pub fn new(config: Config) -> Self {
        Solver { config }
    }

    /// Decide `theta` (in negation normal form) in the given fragment.
    pub fn solve(&self, theta: &Formula, mode: Mode) -> Result<Outcome, SolveError> {
        match mode {
            Mode::Lbf => {
                if let Some(v) = lbf_violation(theta) {
                    return Err(SolveError::NotInFragment { mode, subformula: v.subformula, reason: v.reason.into() });
                }
            }
            Mode::Abbabe => {
                if !in_abbabe(theta) {
                    let sub = abbabe_offender(theta).unwrap_or_else(|| theta.clone());
                    return Err(SolveError::NotInFragment {
                        mode,
                        subformula: sub,
                        reason: "formula has no bundle reading avoiding EB".into(),
                    });
                }
            }
        }
        std::thread::scope(|s| {
            std::thread::Builder::new()
                .stack_size(STACK_BYTES)
                .spawn_scoped(s, || self.solve_here(theta, mode))
                .expect("spawn solver thread")
                .join()
                .expect("solver thread panicked")
        })
    }

    fn solve_here(&self, theta: &Formula, mode: Mode) -> Result<Outcome, SolveError> {
        let clean = make_clean(theta);
        let mut stats = Stats::default();
        let mut trace = Vec::new();
        let mut l = 1;
        loop {
            let mut run = Run::new(&self.config, mode, l, &clean);
            let res = match self.config.strategy {
                Strategy::Fast => run.fast(),
                Strategy::Reference => run.reference(),
            };
            merge_stats(&mut stats, &run.stats);
            stats.witnesses = l;
            trace.append(&mut run.trace);
            match res {
                Ok(tableau) => {
                    let (model, root, assignment) = extract_model(&tableau)?;
                    if let Some(v) = model.validate().first() {
                        return Err(SolveError::Unsound(v.to_string()));
                    }
                    match model.check(&root, &assignment, theta) {
                        Ok(true) => {}
                        Ok(false) => return Err(SolveError::Unsound("the formula is false at the root".into())),
                        Err(e) => return Err(SolveError::Unsound(e.to_string())),
                    }
                    let result = SolveResult::Sat { model, root, assignment };
                    return Ok(Outcome { result, stats, trace, tableau: Some(tableau) });
                }
                Err(Fail::Closed(_)) if !run.incomplete => {
                    return Ok(Outcome { result: SolveResult::Unsat, stats, trace, tableau: None });
                }
                Err(Fail::Closed(_)) => {
                    if l >= self.config.max_witnesses {
                        let limit = format!("forall-exists-dia witness count {l} is below the complete bound");
                        return Ok(Outcome { result: SolveResult::ResourceExceeded { limit }, stats, trace, tableau: None });
                    }
                    l = (l * 2).min(self.config.max_witnesses);
                }
                Err(Fail::Limit) => {
                    let limit = format!("node limit {} reached", self.config.max_nodes);
                    return Ok(Outcome { result: SolveResult::ResourceExceeded { limit }, stats, trace, tableau: None });
                }
                Err(Fail::Stuck(f)) => return Err(SolveError::Stuck(f)),
            }
        }
    }
}

fn merge_stats(into: &mut Stats, from: &Stats) {
    into.nodes += from.nodes;
    into.worlds += from.worlds;
    into.max_domain = into.max_domain.max(from.max_domain);
    into.branch_points += from.branch_points;
    into.backjumps += from.backjumps;
    into.stuck_nodes += from.stuck_nodes;
    into.clean_violations += from.clean_violations;
    for (r, n) in &from.rules {
        *into.rules.entry(*r).or_default() += n;
    }
}

/// Sorted branch levels a formula depends on.
type Deps = Rc<[u32]>;

fn no_deps() -> Deps {
    Rc::from(Vec::new())
}

fn union(a: &Deps, b: &Deps) -> Deps {
    if b.is_empty() || Rc::ptr_eq(a, b) {
        return a.clone();
    }
    if a.is_empty() {
        return b.clone();
    }
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    Rc::from(out)
}

fn with_level(a: &Deps, level: u32) -> Deps {
    union(a, &Rc::from(vec![level]))
}

fn without_level(a: &Deps, level: u32) -> Deps {
    Rc::from(a.iter().copied().filter(|&x| x != level).collect::<Vec<_>>())
}

enum Fail {
    Closed(Deps),
    Limit,
    Stuck(Formula),
}

enum Status {
    Sat,
    Refuted(Deps),
    Open,
}

/// Γ of the current node of one world, split by rule.
#[derive(Clone)]
struct WorldState {
    name: String,
    dom: Vec<(Var, Deps)>,
    seen: HashSet<Formula>,
    ands: VecDeque<(Formula, Deps)>,
    ors: Vec<(Formula, Deps, bool)>,
    exists: VecDeque<(Formula, Deps)>,
    foralls: Vec<(Formula, Deps, bool)>,
    lits: std::collections::HashMap<Formula, Deps>,
    lit_order: Vec<Formula>,
    boxes: Vec<(Formula, Deps)>,
    dias: Vec<(Formula, Deps)>,
    unsafe_pending: usize,
    en: VariableEnumeration,
}

impl WorldState {
    fn new(name: String, dom: Vec<(Var, Deps)>, en: VariableEnumeration) -> Self {
        WorldState {
            name,
            dom,
            seen: HashSet::new(),
            ands: VecDeque::new(),
            ors: Vec::new(),
            exists: VecDeque::new(),
            foralls: Vec::new(),
            lits: Default::default(),
            lit_order: Vec::new(),
            boxes: Vec::new(),
            dias: Vec::new(),
            unsafe_pending: 0,
            en,
        }
    }

    fn insert(&mut self, f: Formula, d: Deps) -> Result<(), Deps> {
        match f {
            Formula::Top => return Ok(()),
            Formula::Bot => return Err(d),
            _ => {}
        }
        if !self.seen.insert(f.clone()) {
            return Ok(());
        }
        match &f {
            Formula::Atom(..) | Formula::NegAtom(..) => {
                if let Some(cd) = self.lits.get(&f.negate()) {
                    return Err(union(&d, cd));
                }
                self.lits.insert(f.clone(), d);
                self.lit_order.push(f);
            }
            Formula::And(..) => self.ands.push_back((f, d)),
            Formula::Or(..) | Formula::Forall(..) => {
                let safe = f.is_existential_safe();
                if !safe {
                    self.unsafe_pending += 1;
                }
                if matches!(f, Formula::Or(..)) {
                    self.ors.push((f, d, safe));
                } else {
                    self.foralls.push((f, d, safe));
                }
            }
            Formula::Exists(..) => self.exists.push_back((f, d)),
            Formula::Box(_) => self.boxes.push((f, d)),
            Formula::Dia(_) => self.dias.push((f, d)),
            Formula::Top | Formula::Bot => unreachable!(),
        }
        Ok(())
    }

    fn status(&self, f: &Formula) -> Status {
        match f {
            Formula::Top => Status::Sat,
            Formula::Bot => Status::Refuted(no_deps()),
            Formula::Atom(..) | Formula::NegAtom(..) => {
                if self.lits.contains_key(f) {
                    Status::Sat
                } else if let Some(d) = self.lits.get(&f.negate()) {
                    Status::Refuted(d.clone())
                } else {
                    Status::Open
                }
            }
            _ if self.seen.contains(f) => Status::Sat,
            Formula::Or(a, b) => match (self.status(a), self.status(b)) {
                (Status::Sat, _) | (_, Status::Sat) => Status::Sat,
                (Status::Refuted(x), Status::Refuted(y)) => Status::Refuted(union(&x, &y)),
                _ => Status::Open,
            },
            Formula::And(a, b) => match self.status(a) {
                Status::Refuted(x) => Status::Refuted(x),
                sa => match (sa, self.status(b)) {
                    (_, Status::Refuted(y)) => Status::Refuted(y),
                    (Status::Sat, Status::Sat) => Status::Sat,
                    _ => Status::Open,
                },
            },
            _ => Status::Open,
        }
    }

    fn remove_or(&mut self, i: usize) -> (Formula, Deps) {
        let (f, d, safe) = self.ors.remove(i);
        if !safe {
            self.unsafe_pending -= 1;
        }
        (f, d)
    }

    fn formulas(&self) -> Vec<Formula> {
        let mut out: Vec<Formula> = self.lit_order.clone();
        out.extend(self.ands.iter().map(|(f, _)| f.clone()));
        out.extend(self.ors.iter().map(|(f, _, _)| f.clone()));
        out.extend(self.exists.iter().map(|(f, _)| f.clone()));
        out.extend(self.foralls.iter().map(|(f, _, _)| f.clone()));
        out.extend(self.boxes.iter().map(|(f, _)| f.clone()));
        out.extend(self.dias.iter().map(|(f, _)| f.clone()));
        out
    }

    fn gamma_size(&self) -> usize {
        self.formulas().iter().map(Formula::size).sum()
    }

    fn node(&self, with_modal: bool) -> TableauNode {
        let mut gamma: FormulaSet = self.lit_order.iter().cloned().collect();
        if with_modal {
            for (f, _) in self.boxes.iter().chain(&self.dias) {
                gamma.insert(f.clone());
            }
        }
        TableauNode { world: self.name.clone(), gamma, sigma: self.dom.iter().map(|(v, _)| v.clone()).collect() }
    }
}

/// Successful expansion of one world and its subtree, with the enumeration
/// cursor left behind.
struct WorldOut {
    node: TableauNode,
    rule: Option<Rule>,
    children: Vec<WorldOut>,
    en: VariableEnumeration,
}

struct Run<'a> {
    cfg: &'a Config,
    mode: Mode,
    witnesses: usize,
    theta: &'a Formula,
    avoid: HashSet<Var>,
    stats: Stats,
    trace: Vec<String>,
    /// A forall-exists-dia step used fewer witnesses than the complete bound.
    incomplete: bool,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a Config, mode: Mode, witnesses: usize, theta: &'a Formula) -> Self {
        let mut avoid = HashSet::new();
        theta.all_vars(&mut avoid);
        Run { cfg, mode, witnesses, theta, avoid, stats: Stats::default(), trace: Vec::new(), incomplete: false }
    }

    fn root_sigma(&mut self, en: &mut VariableEnumeration) -> Vec<Var> {
        let mut sigma: Vec<Var> = self.theta.free_vars().into_iter().collect();
        let z = en.fresh(&self.avoid);
        self.avoid.insert(z.clone());
        sigma.push(z);
        sigma
    }

    fn step(&mut self, rule: Rule, world: &str, principal: &dyn fmt::Display) -> Result<(), Fail> {
        self.stats.nodes += 1;
        *self.stats.rules.entry(rule).or_default() += 1;
        if self.cfg.trace {
            self.trace.push(format!("{rule} {world} {principal}"));
        }
        if self.stats.nodes > self.cfg.max_nodes {
            return Err(Fail::Limit);
        }
        Ok(())
    }

    /// Record whether `l` witnesses reach the complete bound `2^(|Γ|+|φ|)`.
    fn note_witness_bound(&mut self, exponent: usize) {
        if exponent >= 64 || (self.witnesses as u64) < (1u64 << exponent) {
            self.incomplete = true;
        }
    }

    fn fast(&mut self) -> Result<Tableau, Fail> {
        let mut en = VariableEnumeration::new();
        let sigma = self.root_sigma(&mut en);
        let dom = sigma.into_iter().map(|v| (v, no_deps())).collect();
        let mut root = WorldState::new("r".into(), dom, en);
        self.stats.worlds += 1;
        root.insert(self.theta.clone(), no_deps()).map_err(Fail::Closed)?;
        self.stats.max_domain = self.stats.max_domain.max(root.dom.len());
        let out = self.expand(root, 0)?;
        let mut tableau = Tableau::default();
        fn flatten(out: WorldOut, parent: Option<usize>, t: &mut Tableau) {
            let ix = t.nodes.len();
            t.nodes.push(TableauEntry { node: out.node, parent, rule: out.rule });
            for c in out.children {
                flatten(c, Some(ix), t);
            }
        }
        flatten(out, None, &mut tableau);
        Ok(tableau)
    }

    fn audit(&mut self, st: &WorldState) {
        if self.cfg.check_invariants && !crate::formula::is_clean(&st.formulas()) {
            self.stats.clean_violations += 1;
        }
    }

    fn expand(&mut self, mut st: WorldState, level: u32) -> Result<WorldOut, Fail> {
        loop {
            self.audit(&st);
            if let Some((f, d)) = st.ands.pop_front() {
                self.step(Rule::And, &st.name, &f)?;
                let Formula::And(a, b) = &f else { unreachable!() };
                st.insert((**a).clone(), d.clone()).map_err(Fail::Closed)?;
                st.insert((**b).clone(), d).map_err(Fail::Closed)?;
                continue;
            }
            if self.propagate(&mut st)? {
                continue;
            }
            if let Some((f, d)) = st.exists.pop_front() {
                self.step(Rule::Exists, &st.name, &f)?;
                let Formula::Exists(x, body) = &f else { unreachable!() };
                if st.dom.iter().any(|(v, _)| v == x) {
                    self.stats.clean_violations += 1;
                } else {
                    st.dom.push((x.clone(), d.clone()));
                }
                self.stats.max_domain = self.stats.max_domain.max(st.dom.len());
                st.insert((**body).clone(), d).map_err(Fail::Closed)?;
                continue;
            }
            if self.mode == Mode::Abbabe {
                let hit = st.foralls.iter().position(|(f, _, _)| matches!(f, Formula::Forall(_, b) if first_exists_dia(b).is_some()));
                if let Some(i) = hit {
                    let (f, d, safe) = st.foralls.remove(i);
                    if !safe {
                        st.unsafe_pending -= 1;
                    }
                    self.step(Rule::ForallExistsDia, &st.name, &f)?;
                    let Formula::Forall(_, body) = &f else { unreachable!() };
                    self.note_witness_bound(st.gamma_size() + body.size());
                    let (avoid, en) = (&mut self.avoid, &mut st.en);
                    let mut added = Vec::new();
                    let rewritten = expand_witnesses(&f, self.witnesses, &mut |witness| {
                        let v = en.fresh(avoid);
                        avoid.insert(v.clone());
                        if witness {
                            added.push(v.clone());
                        }
                        v
                    });
                    st.dom.extend(added.into_iter().map(|v| (v, d.clone())));
                    self.stats.max_domain = self.stats.max_domain.max(st.dom.len());
                    st.insert(rewritten, d).map_err(Fail::Closed)?;
                    continue;
                }
            }
            if st.unsafe_pending == 0 && !st.foralls.is_empty() {
                let (f, d, _) = st.foralls.remove(0);
                self.step(Rule::Forall, &st.name, &f)?;
                let Formula::Forall(x, body) = &f else { unreachable!() };
                for (z, zd) in st.dom.clone() {
                    let inst = body.substitute(&z, x).expect("clean sets admit substitution");
                    let inst = rename_apart(&inst, &mut st.en, &mut self.avoid);
                    st.insert(inst, union(&d, &zd)).map_err(Fail::Closed)?;
                }
                continue;
            }
            if !st.ors.is_empty() {
                let i = if st.unsafe_pending > 0 { st.ors.iter().position(|o| !o.2).unwrap_or(0) } else { 0 };
                return self.branch(st, i, level);
            }
            if st.unsafe_pending > 0 {
                self.stats.stuck_nodes += 1;
                let f = st.foralls.iter().find(|f| !f.2).map(|f| f.0.clone()).unwrap_or(Formula::Top);
                return Err(Fail::Stuck(f));
            }
            return self.finish(st, level);
        }
    }

    /// Discharge disjunctions that are already satisfied or have one refuted
    /// side. Returns true when something changed.
    fn propagate(&mut self, st: &mut WorldState) -> Result<bool, Fail> {
        let mut changed = false;
        let mut i = 0;
        while i < st.ors.len() {
            let Formula::Or(a, b) = &st.ors[i].0 else { unreachable!() };
            let (a, b) = (a.clone(), b.clone());
            let chosen = match (st.status(&a), st.status(&b)) {
                (Status::Sat, _) | (_, Status::Sat) => None,
                (Status::Refuted(x), Status::Refuted(y)) => {
                    return Err(Fail::Closed(union(&union(&st.ors[i].1, &x), &y)));
                }
                (Status::Refuted(x), Status::Open) => Some(((*b).clone(), x)),
                (Status::Open, Status::Refuted(y)) => Some(((*a).clone(), y)),
                (Status::Open, Status::Open) => {
                    i += 1;
                    continue;
                }
            };
            let (f, d) = st.remove_or(i);
            self.step(Rule::Or, &st.name, &f)?;
            changed = true;
            if let Some((side, why)) = chosen {
                st.insert(side, union(&d, &why)).map_err(Fail::Closed)?;
                if !st.ands.is_empty() {
                    return Ok(true);
                }
            }
        }
        Ok(changed)
    }

    fn branch(&mut self, mut st: WorldState, i: usize, level: u32) -> Result<WorldOut, Fail> {
        let (f, d) = st.remove_or(i);
        self.step(Rule::Or, &st.name, &f)?;
        self.stats.branch_points += 1;
        let Formula::Or(a, b) = &f else { unreachable!() };
        let here = level + 1;
        let mut left = st.clone();
        let left_res = match left.insert((**a).clone(), with_level(&d, here)) {
            Err(c) => Err(Fail::Closed(c)),
            Ok(()) => self.expand(left, here),
        };
        let why = match left_res {
            Err(Fail::Closed(c)) => c,
            other => return other,
        };
        if !why.contains(&here) {
            self.stats.backjumps += 1;
            return Err(Fail::Closed(why));
        }
        let d_right = union(&d, &without_level(&why, here));
        st.insert((**b).clone(), d_right).map_err(Fail::Closed)?;
        self.expand(st, here)
    }

    fn finish(&mut self, st: WorldState, level: u32) -> Result<WorldOut, Fail> {
        if st.dias.is_empty() {
            let rule = if let Some((b, _)) = st.boxes.first() {
                self.step(Rule::End, &st.name, b)?;
                Some(Rule::End)
            } else {
                None
            };
            return Ok(WorldOut { node: st.node(false), rule, children: Vec::new(), en: st.en });
        }
        let names: Vec<String> = st.dias.iter().map(|(f, _)| f.to_string()).collect();
        self.step(Rule::Dia, &st.name, &names.join(", "))?;
        let mut en = st.en.clone();
        let mut children = Vec::new();
        for (k, (dia, dd)) in st.dias.iter().enumerate() {
            let Formula::Dia(body) = dia else { unreachable!() };
            let mut child = WorldState::new(format!("{}.{}", st.name, k + 1), st.dom.clone(), en);
            self.stats.worlds += 1;
            child.insert((**body).clone(), dd.clone()).map_err(Fail::Closed)?;
            for (bx, bd) in &st.boxes {
                let Formula::Box(b) = bx else { unreachable!() };
                child.insert((**b).clone(), bd.clone()).map_err(Fail::Closed)?;
            }
            let out = self.expand(child, level)?;
            en = out.en.clone();
            children.push(out);
        }
        Ok(WorldOut { node: st.node(true), rule: Some(Rule::Dia), children, en })
    }

    fn reference(&mut self) -> Result<Tableau, Fail> {
        let mut en = VariableEnumeration::new();
        let sigma = self.root_sigma(&mut en);
        let root = TableauNode { world: "r".into(), gamma: std::iter::once(self.theta.clone()).collect(), sigma };
        self.stats.worlds += 1;
        let mut tableau = Tableau::default();
        self.walk(root, None, &mut en, &mut tableau)?;
        Ok(tableau)
    }

    fn walk(&mut self, node: TableauNode, parent: Option<usize>, en: &mut VariableEnumeration, t: &mut Tableau) -> Result<(), Fail> {
        if self.cfg.check_invariants && !node.gamma.is_clean() {
            self.stats.clean_violations += 1;
        }
        self.stats.max_domain = self.stats.max_domain.max(node.sigma.len());
        if !node.is_open() {
            return Err(Fail::Closed(no_deps()));
        }
        let ix = t.nodes.len();
        t.nodes.push(TableauEntry { node: node.clone(), parent, rule: None });
        let app = apply_rule(&node, self.mode, self.witnesses, en);
        match app {
            RuleApplication::Saturated => Ok(()),
            RuleApplication::Stuck => {
                self.stats.stuck_nodes += 1;
                let f = node.gamma.iter().find(|f| !f.is_module()).cloned().unwrap_or(Formula::Top);
                Err(Fail::Stuck(f))
            }
            RuleApplication::Expand { rule, principal, next } => {
                t.nodes[ix].rule = Some(rule);
                self.step(rule, &node.world, &principal)?;
                if rule == Rule::ForallExistsDia {
                    let Formula::Forall(_, body) = &principal else { unreachable!() };
                    self.note_witness_bound(node.gamma.size() - principal.size() + body.size());
                }
                self.walk(next, Some(ix), en, t)
            }
            RuleApplication::Branch { principal, left, right } => {
                t.nodes[ix].rule = Some(Rule::Or);
                self.step(Rule::Or, &node.world, &principal)?;
                self.stats.branch_points += 1;
                let saved = (t.nodes.len(), en.clone());
                match self.walk(left, Some(ix), en, t) {
                    Err(Fail::Closed(_)) => {}
                    other => return other,
                }
                t.nodes.truncate(saved.0);
                *en = saved.1;
                self.walk(right, Some(ix), en, t)
            }
            RuleApplication::Successors { principals, children } => {
                t.nodes[ix].rule = Some(Rule::Dia);
                let names: Vec<String> = principals.iter().map(|f| f.to_string()).collect();
                self.step(Rule::Dia, &node.world, &names.join(", "))?;
                for child in children {
                    self.stats.worlds += 1;
                    self.walk(child, Some(ix), en, t)?;
                }
                Ok(())
            }
        }
    }
}

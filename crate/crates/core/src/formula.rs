//! Formula representation and the syntactic operations the solvers build on.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// A first-order variable.
///
/// Variables are totally ordered by a natural order: the alphabetic prefix
/// first, then the numeric suffix as a number. Machine variables `x0, x1, ...`
/// therefore enumerate in increasing order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: impl AsRef<str>) -> Self {
        Var(Arc::from(name.as_ref()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    fn split(&self) -> (&str, Option<u64>) {
        let s = self.name();
        let cut = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (prefix, digits) = s.split_at(cut);
        (prefix, digits.parse().ok())
    }
}

impl Ord for Var {
    fn cmp(&self, other: &Self) -> Ordering {
        let (pa, na) = self.split();
        let (pb, nb) = other.split();
        pa.cmp(pb).then(na.cmp(&nb)).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var::new(s)
    }
}

/// Predicate symbol.
pub type Pred = Arc<str>;

/// Formula in negation normal form: negation only occurs on atoms.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Top,
    Bot,
    Atom(Pred, Vec<Var>),
    NegAtom(Pred, Vec<Var>),
    And(Arc<Formula>, Arc<Formula>),
    Or(Arc<Formula>, Arc<Formula>),
    Box(Arc<Formula>),
    Dia(Arc<Formula>),
    Forall(Var, Arc<Formula>),
    Exists(Var, Arc<Formula>),
}

/// Unrestricted formula as written by a user: arbitrary negation and the
/// derived connectives. Converted with [`to_nnf`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RawFormula {
    Top,
    Bot,
    Atom(Pred, Vec<Var>),
    Not(Box<RawFormula>),
    And(Box<RawFormula>, Box<RawFormula>),
    Or(Box<RawFormula>, Box<RawFormula>),
    Implies(Box<RawFormula>, Box<RawFormula>),
    Iff(Box<RawFormula>, Box<RawFormula>),
    Box(Box<RawFormula>),
    Dia(Box<RawFormula>),
    Forall(Var, Box<RawFormula>),
    Exists(Var, Box<RawFormula>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubstError {
    #[error("substituting {fresh} for {old} would be captured by a binder of {fresh}")]
    Capture { fresh: Var, old: Var },
}

impl Formula {
    pub fn atom(p: &str, args: &[&str]) -> Self {
        Formula::Atom(Arc::from(p), args.iter().map(Var::new).collect())
    }

    pub fn neg_atom(p: &str, args: &[&str]) -> Self {
        Formula::NegAtom(Arc::from(p), args.iter().map(Var::new).collect())
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Arc::new(a), Arc::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Arc::new(a), Arc::new(b))
    }

    pub fn boxed(a: Formula) -> Self {
        Formula::Box(Arc::new(a))
    }

    pub fn dia(a: Formula) -> Self {
        Formula::Dia(Arc::new(a))
    }

    pub fn forall(x: impl Into<Var>, a: Formula) -> Self {
        Formula::Forall(x.into(), Arc::new(a))
    }

    pub fn exists(x: impl Into<Var>, a: Formula) -> Self {
        Formula::Exists(x.into(), Arc::new(a))
    }

    /// Right-nested conjunction; the empty conjunction is `Top`.
    pub fn conj(items: impl IntoIterator<Item = Formula>) -> Self {
        let mut v: Vec<Formula> = items.into_iter().collect();
        let Some(mut acc) = v.pop() else { return Formula::Top };
        while let Some(f) = v.pop() {
            acc = Formula::and(f, acc);
        }
        acc
    }

    /// Right-nested disjunction; the empty disjunction is `Bot`.
    pub fn disj(items: impl IntoIterator<Item = Formula>) -> Self {
        let mut v: Vec<Formula> = items.into_iter().collect();
        let Some(mut acc) = v.pop() else { return Formula::Bot };
        while let Some(f) = v.pop() {
            acc = Formula::or(f, acc);
        }
        acc
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        self.collect_free(&mut bound, &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        match self {
            Formula::Top | Formula::Bot => {}
            Formula::Atom(_, args) | Formula::NegAtom(_, args) => {
                for a in args {
                    if !bound.contains(a) {
                        out.insert(a.clone());
                    }
                }
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Box(a) | Formula::Dia(a) => a.collect_free(bound, out),
            Formula::Forall(x, a) | Formula::Exists(x, a) => {
                bound.push(x.clone());
                a.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Every variable occurring anywhere, free or bound (including binders).
    pub fn all_vars(&self, out: &mut HashSet<Var>) {
        match self {
            Formula::Top | Formula::Bot => {}
            Formula::Atom(_, args) | Formula::NegAtom(_, args) => out.extend(args.iter().cloned()),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.all_vars(out);
                b.all_vars(out);
            }
            Formula::Box(a) | Formula::Dia(a) => a.all_vars(out),
            Formula::Forall(x, a) | Formula::Exists(x, a) => {
                out.insert(x.clone());
                a.all_vars(out);
            }
        }
    }

    /// Binder variables in preorder, with repetitions.
    pub fn binders(&self, out: &mut Vec<Var>) {
        match self {
            Formula::Top | Formula::Bot | Formula::Atom(..) | Formula::NegAtom(..) => {}
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.binders(out);
                b.binders(out);
            }
            Formula::Box(a) | Formula::Dia(a) => a.binders(out),
            Formula::Forall(x, a) | Formula::Exists(x, a) => {
                out.push(x.clone());
                a.binders(out);
            }
        }
    }

    /// `self[fresh/old]`: replace free occurrences of `old` by `fresh`.
    pub fn substitute(&self, fresh: &Var, old: &Var) -> Result<Formula, SubstError> {
        if fresh == old {
            return Ok(self.clone());
        }
        self.subst_inner(fresh, old, false)
            .map(|r| r.unwrap_or_else(|| self.clone()))
    }

    // Returns Ok(None) when nothing changed so untouched subtrees stay shared.
    fn subst_inner(&self, fresh: &Var, old: &Var, under_fresh: bool) -> Result<Option<Formula>, SubstError> {
        let map_args = |args: &Vec<Var>| -> Result<Option<Vec<Var>>, SubstError> {
            if !args.contains(old) {
                return Ok(None);
            }
            if under_fresh {
                return Err(SubstError::Capture { fresh: fresh.clone(), old: old.clone() });
            }
            Ok(Some(args.iter().map(|a| if a == old { fresh.clone() } else { a.clone() }).collect()))
        };
        Ok(match self {
            Formula::Top | Formula::Bot => None,
            Formula::Atom(p, args) => map_args(args)?.map(|a| Formula::Atom(p.clone(), a)),
            Formula::NegAtom(p, args) => map_args(args)?.map(|a| Formula::NegAtom(p.clone(), a)),
            Formula::And(a, b) | Formula::Or(a, b) => {
                let na = a.subst_inner(fresh, old, under_fresh)?;
                let nb = b.subst_inner(fresh, old, under_fresh)?;
                if na.is_none() && nb.is_none() {
                    None
                } else {
                    let na = na.map(Arc::new).unwrap_or_else(|| a.clone());
                    let nb = nb.map(Arc::new).unwrap_or_else(|| b.clone());
                    Some(if matches!(self, Formula::And(..)) { Formula::And(na, nb) } else { Formula::Or(na, nb) })
                }
            }
            Formula::Box(a) => a.subst_inner(fresh, old, under_fresh)?.map(Formula::boxed),
            Formula::Dia(a) => a.subst_inner(fresh, old, under_fresh)?.map(Formula::dia),
            Formula::Forall(x, a) | Formula::Exists(x, a) => {
                if x == old {
                    None
                } else {
                    let inner = a.subst_inner(fresh, old, under_fresh || x == fresh)?;
                    inner.map(|b| {
                        if matches!(self, Formula::Forall(..)) {
                            Formula::Forall(x.clone(), Arc::new(b))
                        } else {
                            Formula::Exists(x.clone(), Arc::new(b))
                        }
                    })
                }
            }
        })
    }

    /// Symbol count: one per AST node plus one per variable occurrence in an
    /// atom. A negated atom counts its negation sign as a separate symbol.
    pub fn size(&self) -> usize {
        match self {
            Formula::Top | Formula::Bot => 1,
            Formula::Atom(_, args) => 1 + args.len(),
            Formula::NegAtom(_, args) => 2 + args.len(),
            Formula::And(a, b) | Formula::Or(a, b) => 1 + a.size() + b.size(),
            Formula::Box(a) | Formula::Dia(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => 1 + a.size(),
        }
    }

    pub fn modal_depth(&self) -> usize {
        match self {
            Formula::Top | Formula::Bot | Formula::Atom(..) | Formula::NegAtom(..) => 0,
            Formula::And(a, b) | Formula::Or(a, b) => a.modal_depth().max(b.modal_depth()),
            Formula::Box(a) | Formula::Dia(a) => 1 + a.modal_depth(),
            Formula::Forall(_, a) | Formula::Exists(_, a) => a.modal_depth(),
        }
    }

    /// Number of subformula occurrences satisfying `pred`.
    pub fn count(&self, pred: &dyn Fn(&Formula) -> bool) -> usize {
        let own = usize::from(pred(self));
        own + match self {
            Formula::Top | Formula::Bot | Formula::Atom(..) | Formula::NegAtom(..) => 0,
            Formula::And(a, b) | Formula::Or(a, b) => a.count(pred) + b.count(pred),
            Formula::Box(a) | Formula::Dia(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.count(pred),
        }
    }

    /// Predicate symbols with their arities, in first-occurrence order.
    pub fn signature(&self) -> Vec<(Pred, usize)> {
        fn walk(f: &Formula, out: &mut Vec<(Pred, usize)>) {
            match f {
                Formula::Top | Formula::Bot => {}
                Formula::Atom(p, args) | Formula::NegAtom(p, args) => {
                    if !out.iter().any(|(q, _)| q == p) {
                        out.push((p.clone(), args.len()));
                    }
                }
                Formula::And(a, b) | Formula::Or(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Formula::Box(a) | Formula::Dia(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => walk(a, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Formula::Atom(..) | Formula::NegAtom(..) | Formula::Top | Formula::Bot)
    }

    pub fn is_module(&self) -> bool {
        self.is_literal() || matches!(self, Formula::Box(_) | Formula::Dia(_))
    }

    /// The component set: subformulas evaluated at the current world.
    pub fn components(&self) -> FormulaSet {
        let mut out = FormulaSet::new();
        self.collect_components(&mut out);
        out
    }

    fn collect_components(&self, out: &mut FormulaSet) {
        match self {
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_components(out);
                b.collect_components(out);
            }
            Formula::Forall(_, a) | Formula::Exists(_, a) => {
                out.insert(self.clone());
                a.collect_components(out);
            }
            _ => {
                out.insert(self.clone());
            }
        }
    }

    pub fn is_existential_safe(&self) -> bool {
        self.components().iter().all(|c| c.is_module() || matches!(c, Formula::Forall(..)))
    }

    /// The NNF of the negation of this formula.
    pub fn negate(&self) -> Formula {
        match self {
            Formula::Top => Formula::Bot,
            Formula::Bot => Formula::Top,
            Formula::Atom(p, a) => Formula::NegAtom(p.clone(), a.clone()),
            Formula::NegAtom(p, a) => Formula::Atom(p.clone(), a.clone()),
            Formula::And(a, b) => Formula::or(a.negate(), b.negate()),
            Formula::Or(a, b) => Formula::and(a.negate(), b.negate()),
            Formula::Box(a) => Formula::dia(a.negate()),
            Formula::Dia(a) => Formula::boxed(a.negate()),
            Formula::Forall(x, a) => Formula::exists(x.clone(), a.negate()),
            Formula::Exists(x, a) => Formula::forall(x.clone(), a.negate()),
        }
    }

    /// Embed back into the raw syntax (negated atoms become `Not(Atom)`).
    pub fn to_raw(&self) -> RawFormula {
        let b = |f: &Arc<Formula>| Box::new(f.to_raw());
        match self {
            Formula::Top => RawFormula::Top,
            Formula::Bot => RawFormula::Bot,
            Formula::Atom(p, a) => RawFormula::Atom(p.clone(), a.clone()),
            Formula::NegAtom(p, a) => RawFormula::Not(Box::new(RawFormula::Atom(p.clone(), a.clone()))),
            Formula::And(x, y) => RawFormula::And(b(x), b(y)),
            Formula::Or(x, y) => RawFormula::Or(b(x), b(y)),
            Formula::Box(x) => RawFormula::Box(b(x)),
            Formula::Dia(x) => RawFormula::Dia(b(x)),
            Formula::Forall(v, x) => RawFormula::Forall(v.clone(), b(x)),
            Formula::Exists(v, x) => RawFormula::Exists(v.clone(), b(x)),
        }
    }

    /// Rename every binder (preorder) using `fresh`, keeping free variables.
    pub(crate) fn rename_binders(&self, fresh: &mut dyn FnMut() -> Var, scope: &mut Vec<(Var, Var)>) -> Formula {
        let look = |v: &Var, scope: &Vec<(Var, Var)>| {
            scope.iter().rev().find(|(o, _)| o == v).map(|(_, n)| n.clone()).unwrap_or_else(|| v.clone())
        };
        match self {
            Formula::Top | Formula::Bot => self.clone(),
            Formula::Atom(p, args) => Formula::Atom(p.clone(), args.iter().map(|a| look(a, scope)).collect()),
            Formula::NegAtom(p, args) => Formula::NegAtom(p.clone(), args.iter().map(|a| look(a, scope)).collect()),
            Formula::And(a, b) => {
                let na = a.rename_binders(fresh, scope);
                Formula::and(na, b.rename_binders(fresh, scope))
            }
            Formula::Or(a, b) => {
                let na = a.rename_binders(fresh, scope);
                Formula::or(na, b.rename_binders(fresh, scope))
            }
            Formula::Box(a) => Formula::boxed(a.rename_binders(fresh, scope)),
            Formula::Dia(a) => Formula::dia(a.rename_binders(fresh, scope)),
            Formula::Forall(x, a) | Formula::Exists(x, a) => {
                let y = fresh();
                scope.push((x.clone(), y.clone()));
                let body = a.rename_binders(fresh, scope);
                scope.pop();
                if matches!(self, Formula::Forall(..)) {
                    Formula::forall(y, body)
                } else {
                    Formula::exists(y, body)
                }
            }
        }
    }

    pub(crate) fn has_binder(&self) -> bool {
        match self {
            Formula::Top | Formula::Bot | Formula::Atom(..) | Formula::NegAtom(..) => false,
            Formula::And(a, b) | Formula::Or(a, b) => a.has_binder() || b.has_binder(),
            Formula::Box(a) | Formula::Dia(a) => a.has_binder(),
            Formula::Forall(..) | Formula::Exists(..) => true,
        }
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::textio::print(&self.to_raw()))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::textio::print(&self.to_raw()))
    }
}

impl fmt::Display for RawFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::textio::print(self))
    }
}

impl RawFormula {
    pub fn atom(p: &str, args: &[&str]) -> Self {
        RawFormula::Atom(Arc::from(p), args.iter().map(Var::new).collect())
    }

    pub fn not(a: RawFormula) -> Self {
        RawFormula::Not(Box::new(a))
    }

    pub fn and(a: RawFormula, b: RawFormula) -> Self {
        RawFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: RawFormula, b: RawFormula) -> Self {
        RawFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: RawFormula, b: RawFormula) -> Self {
        RawFormula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: RawFormula, b: RawFormula) -> Self {
        RawFormula::Iff(Box::new(a), Box::new(b))
    }

    pub fn boxed(a: RawFormula) -> Self {
        RawFormula::Box(Box::new(a))
    }

    pub fn dia(a: RawFormula) -> Self {
        RawFormula::Dia(Box::new(a))
    }

    pub fn forall(x: impl Into<Var>, a: RawFormula) -> Self {
        RawFormula::Forall(x.into(), Box::new(a))
    }

    pub fn exists(x: impl Into<Var>, a: RawFormula) -> Self {
        RawFormula::Exists(x.into(), Box::new(a))
    }

    pub fn conj(items: impl IntoIterator<Item = RawFormula>) -> Self {
        let mut v: Vec<RawFormula> = items.into_iter().collect();
        let Some(mut acc) = v.pop() else { return RawFormula::Top };
        while let Some(f) = v.pop() {
            acc = RawFormula::and(f, acc);
        }
        acc
    }

    pub fn disj(items: impl IntoIterator<Item = RawFormula>) -> Self {
        let mut v: Vec<RawFormula> = items.into_iter().collect();
        let Some(mut acc) = v.pop() else { return RawFormula::Bot };
        while let Some(f) = v.pop() {
            acc = RawFormula::or(f, acc);
        }
        acc
    }

    /// `□ⁿ a`
    pub fn box_n(n: usize, a: RawFormula) -> Self {
        (0..n).fold(a, |acc, _| RawFormula::boxed(acc))
    }

    /// `◇ⁿ a`
    pub fn dia_n(n: usize, a: RawFormula) -> Self {
        (0..n).fold(a, |acc, _| RawFormula::dia(acc))
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        to_nnf(self).free_vars()
    }
}

/// Negation normal form. Implications and biconditionals are expanded.
pub fn to_nnf(phi: &RawFormula) -> Formula {
    nnf(phi, true)
}

fn nnf(phi: &RawFormula, pos: bool) -> Formula {
    match phi {
        RawFormula::Top => if pos { Formula::Top } else { Formula::Bot },
        RawFormula::Bot => if pos { Formula::Bot } else { Formula::Top },
        RawFormula::Atom(p, a) => {
            if pos {
                Formula::Atom(p.clone(), a.clone())
            } else {
                Formula::NegAtom(p.clone(), a.clone())
            }
        }
        RawFormula::Not(a) => nnf(a, !pos),
        RawFormula::And(a, b) => {
            if pos {
                Formula::and(nnf(a, true), nnf(b, true))
            } else {
                Formula::or(nnf(a, false), nnf(b, false))
            }
        }
        RawFormula::Or(a, b) => {
            if pos {
                Formula::or(nnf(a, true), nnf(b, true))
            } else {
                Formula::and(nnf(a, false), nnf(b, false))
            }
        }
        RawFormula::Implies(a, b) => {
            if pos {
                Formula::or(nnf(a, false), nnf(b, true))
            } else {
                Formula::and(nnf(a, true), nnf(b, false))
            }
        }
        RawFormula::Iff(a, b) => {
            if pos {
                Formula::and(
                    Formula::or(nnf(a, false), nnf(b, true)),
                    Formula::or(nnf(a, true), nnf(b, false)),
                )
            } else {
                Formula::or(
                    Formula::and(nnf(a, true), nnf(b, false)),
                    Formula::and(nnf(a, false), nnf(b, true)),
                )
            }
        }
        RawFormula::Box(a) => if pos { Formula::boxed(nnf(a, true)) } else { Formula::dia(nnf(a, false)) },
        RawFormula::Dia(a) => if pos { Formula::dia(nnf(a, true)) } else { Formula::boxed(nnf(a, false)) },
        RawFormula::Forall(x, a) => {
            if pos {
                Formula::forall(x.clone(), nnf(a, true))
            } else {
                Formula::exists(x.clone(), nnf(a, false))
            }
        }
        RawFormula::Exists(x, a) => {
            if pos {
                Formula::exists(x.clone(), nnf(a, true))
            } else {
                Formula::forall(x.clone(), nnf(a, false))
            }
        }
    }
}

/// Finite set of formulas that remembers insertion order.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct FormulaSet {
    items: Vec<Formula>,
    index: HashSet<Formula>,
}

impl FormulaSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the formula was already present.
    pub fn insert(&mut self, f: Formula) -> bool {
        if self.index.contains(&f) {
            return false;
        }
        self.index.insert(f.clone());
        self.items.push(f);
        true
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.index.contains(f)
    }

    pub fn remove_at(&mut self, i: usize) -> Formula {
        let f = self.items.remove(i);
        self.index.remove(&f);
        f
    }

    pub fn remove(&mut self, f: &Formula) -> bool {
        if !self.index.remove(f) {
            return false;
        }
        let pos = self.items.iter().position(|g| g == f).expect("index and items agree");
        self.items.remove(pos);
        true
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Formula> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn as_slice(&self) -> &[Formula] {
        &self.items
    }

    /// Sum of member sizes.
    pub fn size(&self) -> usize {
        self.items.iter().map(Formula::size).sum()
    }

    pub fn is_existential_safe(&self) -> bool {
        self.items.iter().all(Formula::is_existential_safe)
    }

    pub fn is_clean(&self) -> bool {
        is_clean(&self.items)
    }
}

impl fmt::Debug for FormulaSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.items.iter()).finish()
    }
}

impl FromIterator<Formula> for FormulaSet {
    fn from_iter<I: IntoIterator<Item = Formula>>(iter: I) -> Self {
        let mut s = FormulaSet::new();
        for f in iter {
            s.insert(f);
        }
        s
    }
}

impl<'a> IntoIterator for &'a FormulaSet {
    type Item = &'a Formula;
    type IntoIter = std::slice::Iter<'a, Formula>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// True iff the conjunction of `gamma` is clean: no variable is both bound
/// and free, and no variable is bound twice.
pub fn is_clean(gamma: &[Formula]) -> bool {
    let mut free = BTreeSet::new();
    let mut binders = Vec::new();
    for f in gamma {
        free.extend(f.free_vars());
        f.binders(&mut binders);
    }
    let mut seen = HashSet::new();
    binders.iter().all(|b| seen.insert(b.clone()) && !free.contains(b))
}

/// The fixed enumeration `x0, x1, x2, ...` with a cursor.
#[derive(Clone, Debug, Default)]
pub struct VariableEnumeration {
    cursor: u64,
}

impl VariableEnumeration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// First variable from the cursor onwards that is not in `avoid`.
    pub fn fresh(&mut self, avoid: &HashSet<Var>) -> Var {
        loop {
            let v = Var::new(format!("x{}", self.cursor));
            self.cursor += 1;
            if !avoid.contains(&v) {
                return v;
            }
        }
    }
}

/// Rename the bound variables of each addition, one formula after another,
/// to the first fresh variables of `en` that occur neither in `gamma` nor in
/// any addition. The result joined with `gamma` is clean.
pub fn clean_rewrite(gamma: &[Formula], additions: &[Formula], en: &mut VariableEnumeration) -> Vec<Formula> {
    let mut used = HashSet::new();
    for f in gamma.iter().chain(additions) {
        f.all_vars(&mut used);
    }
    additions
        .iter()
        .map(|a| {
            if !a.has_binder() {
                return a.clone();
            }
            let mut scope = Vec::new();
            let mut fresh = || {
                let v = en.fresh(&used);
                used.insert(v.clone());
                v
            };
            a.rename_binders(&mut fresh, &mut scope)
        })
        .collect()
}

/// Structural equality up to renaming of bound variables.
pub fn alpha_eq(a: &Formula, b: &Formula) -> bool {
    fn go(a: &Formula, b: &Formula, ea: &mut Vec<Var>, eb: &mut Vec<Var>) -> bool {
        // De Bruijn index of a variable, or its name when free.
        fn idx<'a>(v: &'a Var, env: &[Var]) -> Result<usize, &'a Var> {
            env.iter().rposition(|x| x == v).map(|p| env.len() - p).ok_or(v)
        }
        let args_eq = |xa: &Vec<Var>, xb: &Vec<Var>, ea: &Vec<Var>, eb: &Vec<Var>| {
            xa.len() == xb.len() && xa.iter().zip(xb).all(|(u, v)| idx(u, ea) == idx(v, eb))
        };
        match (a, b) {
            (Formula::Top, Formula::Top) | (Formula::Bot, Formula::Bot) => true,
            (Formula::Atom(p, xa), Formula::Atom(q, xb)) | (Formula::NegAtom(p, xa), Formula::NegAtom(q, xb)) => {
                p == q && args_eq(xa, xb, ea, eb)
            }
            (Formula::And(a1, a2), Formula::And(b1, b2)) | (Formula::Or(a1, a2), Formula::Or(b1, b2)) => {
                go(a1, b1, ea, eb) && go(a2, b2, ea, eb)
            }
            (Formula::Box(x), Formula::Box(y)) | (Formula::Dia(x), Formula::Dia(y)) => go(x, y, ea, eb),
            (Formula::Forall(u, x), Formula::Forall(v, y)) | (Formula::Exists(u, x), Formula::Exists(v, y)) => {
                ea.push(u.clone());
                eb.push(v.clone());
                let r = go(x, y, ea, eb);
                ea.pop();
                eb.pop();
                r
            }
            _ => false,
        }
    }
    go(a, b, &mut Vec::new(), &mut Vec::new())
}

/// Clean copy of `phi`: bound variables renamed apart only if needed.
pub fn make_clean(phi: &Formula) -> Formula {
    if is_clean(std::slice::from_ref(phi)) {
        return phi.clone();
    }
    let mut en = VariableEnumeration::new();
    clean_rewrite(&[], std::slice::from_ref(phi), &mut en).remove(0)
}

/// Map from variable to the replacement used when instantiating many copies.
pub type Renaming = HashMap<Var, Var>;

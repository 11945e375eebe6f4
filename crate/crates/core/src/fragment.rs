//! Fragment membership (bundled, loosely bundled, ABBABE) and the decidability table.

use std::fmt;

use serde::Serialize;

use crate::formula::Formula;

/// A quantifier-modality pair used as one operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Bundle {
    /// `∀x□`, dual `∃x◇`
    AB,
    /// `∃x□`, dual `∀x◇`
    EB,
    /// `□∀x`, dual `◇∃x`
    BA,
    /// `□∃x`, dual `◇∀x`
    BE,
}

impl Bundle {
    pub const ALL: [Bundle; 4] = [Bundle::AB, Bundle::EB, Bundle::BA, Bundle::BE];

    fn bit(self) -> u8 {
        1 << self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Bundle::AB => "AB",
            Bundle::EB => "EB",
            Bundle::BA => "BA",
            Bundle::BE => "BE",
        }
    }

    pub fn parse(s: &str) -> Option<Bundle> {
        Bundle::ALL.into_iter().find(|b| b.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A subset of the four bundles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BundleSet(u8);

impl BundleSet {
    pub const EMPTY: BundleSet = BundleSet(0);

    pub fn of(bundles: &[Bundle]) -> Self {
        BundleSet(bundles.iter().fold(0, |m, b| m | b.bit()))
    }

    pub fn from_bits(bits: u8) -> Self {
        BundleSet(bits & 0xF)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, b: Bundle) -> bool {
        self.0 & b.bit() != 0
    }

    pub fn is_subset(self, other: BundleSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: BundleSet) -> Self {
        BundleSet(self.0 | other.0)
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Bundle> {
        Bundle::ALL.into_iter().filter(move |b| self.contains(*b))
    }

    /// All sixteen subsets in increasing bit order.
    pub fn all() -> impl Iterator<Item = BundleSet> {
        (0u8..16).map(BundleSet)
    }
}

impl fmt::Display for BundleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(Bundle::name).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

impl Serialize for BundleSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Modality {
    Box,
    Dia,
}

fn modality_then_quantifier(m: Modality, universal: bool) -> Bundle {
    match (m, universal) {
        (Modality::Box, true) | (Modality::Dia, false) => Bundle::BA,
        (Modality::Box, false) | (Modality::Dia, true) => Bundle::BE,
    }
}

fn quantifier_then_modality(universal: bool, m: Modality) -> Bundle {
    match (universal, m) {
        (true, Modality::Box) | (false, Modality::Dia) => Bundle::AB,
        (false, Modality::Box) | (true, Modality::Dia) => Bundle::EB,
    }
}

// Bit `m` of the result is set iff the formula parses as bundled using
// exactly the bundle set `m`. `avail` is the enclosing modality when it is
// still free to pair with a quantifier.
fn parses(phi: &Formula, avail: Option<Modality>) -> u16 {
    match phi {
        Formula::Top | Formula::Bot | Formula::Atom(..) | Formula::NegAtom(..) => 1,
        Formula::And(a, b) | Formula::Or(a, b) => combine(parses(a, None), parses(b, None)),
        Formula::Box(a) => parses(a, Some(Modality::Box)),
        Formula::Dia(a) => parses(a, Some(Modality::Dia)),
        Formula::Forall(_, body) | Formula::Exists(_, body) => {
            let universal = matches!(phi, Formula::Forall(..));
            let mut out = 0;
            if let Some(m) = avail {
                out |= shift(parses(body, None), modality_then_quantifier(m, universal));
            }
            match &**body {
                Formula::Box(c) => out |= shift(parses(c, None), quantifier_then_modality(universal, Modality::Box)),
                Formula::Dia(c) => out |= shift(parses(c, None), quantifier_then_modality(universal, Modality::Dia)),
                _ => {}
            }
            out
        }
    }
}

fn combine(a: u16, b: u16) -> u16 {
    let mut out = 0;
    for i in 0..16 {
        if a & (1 << i) == 0 {
            continue;
        }
        for j in 0..16 {
            if b & (1 << j) != 0 {
                out |= 1 << (i | j);
            }
        }
    }
    out
}

fn shift(masks: u16, b: Bundle) -> u16 {
    let mut out = 0;
    for i in 0..16 {
        if masks & (1 << i) != 0 {
            out |= 1 << (i | b.bit() as usize);
        }
    }
    out
}

/// Every bundle set under which `phi` parses as a bundled formula. A formula
/// like `□∃x□P(x)` admits several readings.
pub fn bundle_readings(phi: &Formula) -> Vec<BundleSet> {
    let m = parses(phi, None);
    (0u8..16).filter(|i| m & (1 << i) != 0).map(BundleSet).collect()
}

/// The bundles a bundled formula uses, or `None` if it is not bundled.
///
/// When several readings exist, one avoiding `EB` is preferred, then the
/// smallest set.
pub fn bundles_used(phi: &Formula) -> Option<BundleSet> {
    bundle_readings(phi)
        .into_iter()
        .min_by_key(|s| (s.contains(Bundle::EB), s.len(), s.bits()))
}

pub fn is_bundled(phi: &Formula) -> bool {
    parses(phi, None) != 0
}

/// Bundled with readings restricted to `{AB, BA, BE}`.
pub fn in_abbabe(phi: &Formula) -> bool {
    bundle_readings(phi).iter().any(|s| !s.contains(Bundle::EB))
}

/// Bundled with some reading inside `allowed`.
pub fn in_bundled_fragment(phi: &Formula, allowed: BundleSet) -> bool {
    bundle_readings(phi).iter().any(|s| s.is_subset(allowed))
}

fn allows_abbabe(masks: u16) -> bool {
    (0..16).any(|i| masks & (1 << i) != 0 && i & Bundle::EB.bit() as usize == 0)
}

/// The innermost subformula responsible for `phi` falling outside ABBABE.
pub fn abbabe_offender(phi: &Formula) -> Option<Formula> {
    offender(phi, None)
}

fn offender(phi: &Formula, avail: Option<Modality>) -> Option<Formula> {
    if allows_abbabe(parses(phi, avail)) {
        return None;
    }
    let deeper = match phi {
        Formula::And(a, b) | Formula::Or(a, b) => offender(a, None).or_else(|| offender(b, None)),
        Formula::Box(a) => offender(a, Some(Modality::Box)),
        Formula::Dia(a) => offender(a, Some(Modality::Dia)),
        Formula::Forall(_, body) | Formula::Exists(_, body) => match &**body {
            Formula::Box(c) | Formula::Dia(c) => offender(c, None),
            _ => offender(body, None),
        },
        _ => None,
    };
    deeper.or_else(|| Some(phi.clone()))
}

/// Why a formula is outside the loosely bundled fragment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LbfViolation {
    pub subformula: Formula,
    pub reason: &'static str,
}

impl fmt::Display for LbfViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in {}", self.reason, self.subformula)
    }
}

pub const FORBIDDEN_ALTERNATION: &str = "forbidden forall-exists alternation";
pub const NESTED_QUANTIFIER: &str = "quantifier inside the matrix of a quantifier prefix";

pub fn in_lbf(phi: &Formula) -> bool {
    lbf_violation(phi).is_none()
}

/// First violation of the loosely bundled grammar, in left-to-right order.
pub fn lbf_violation(phi: &Formula) -> Option<LbfViolation> {
    lbf_alpha(phi)
}

fn lbf_alpha(phi: &Formula) -> Option<LbfViolation> {
    match phi {
        Formula::And(a, b) | Formula::Or(a, b) => lbf_alpha(a).or_else(|| lbf_alpha(b)),
        Formula::Forall(..) | Formula::Exists(..) => {
            let mut body = phi;
            while let Formula::Exists(_, b) = body {
                body = b;
            }
            while let Formula::Forall(_, b) = body {
                body = b;
            }
            if let Formula::Exists(..) = body {
                return Some(LbfViolation { subformula: phi.clone(), reason: FORBIDDEN_ALTERNATION });
            }
            lbf_psi(body)
        }
        _ => lbf_psi(phi),
    }
}

fn lbf_psi(phi: &Formula) -> Option<LbfViolation> {
    match phi {
        Formula::Top | Formula::Bot | Formula::Atom(..) | Formula::NegAtom(..) => None,
        Formula::And(a, b) | Formula::Or(a, b) => lbf_psi(a).or_else(|| lbf_psi(b)),
        Formula::Box(a) | Formula::Dia(a) => lbf_alpha(a),
        Formula::Forall(..) | Formula::Exists(..) => {
            Some(LbfViolation { subformula: phi.clone(), reason: NESTED_QUANTIFIER })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum DomainRegime {
    Constant,
    Increasing,
}

/// Complexity class labels, ordered by inclusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Complexity {
    PSpace,
    NexpTime,
    ExpSpace,
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Complexity::PSpace => "PSpace",
            Complexity::NexpTime => "NexpTime",
            Complexity::ExpSpace => "ExpSpace",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StatusKind {
    Decidable { upper: Complexity, lower: Complexity },
    Undecidable,
    NoFmp,
}

impl fmt::Display for StatusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatusKind::Decidable { upper, lower } if upper == lower => write!(f, "{upper}-complete"),
            StatusKind::Decidable { upper, lower } => write!(f, "{upper}/{lower}"),
            StatusKind::Undecidable => f.write_str("Undecidable"),
            StatusKind::NoFmp => f.write_str("No FMP"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FragmentStatus {
    #[serde(flatten)]
    pub kind: StatusKind,
    pub note: String,
    /// True when no printed row matches and the answer comes from closure.
    pub derived: bool,
}

impl fmt::Display for FragmentStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.kind, self.note)
    }
}

/// One printed row of the classification table. `pattern[i]` is `Some(true)`
/// for a required bundle, `Some(false)` for an excluded one, `None` for either.
#[derive(Clone, Copy, Debug)]
pub struct TableRow {
    pub regime: DomainRegime,
    pub pattern: [Option<bool>; 4],
    pub kind: StatusKind,
    pub note: &'static str,
}

impl TableRow {
    pub fn matches(&self, s: BundleSet) -> bool {
        Bundle::ALL.iter().zip(self.pattern).all(|(b, p)| p.is_none_or(|want| s.contains(*b) == want))
    }

    /// The smallest bundle set matched by the row.
    pub fn minimal_set(&self) -> BundleSet {
        let v: Vec<Bundle> = Bundle::ALL.iter().zip(self.pattern).filter(|(_, p)| *p == Some(true)).map(|(b, _)| *b).collect();
        BundleSet::of(&v)
    }
}

const Y: Option<bool> = Some(true);
const N: Option<bool> = Some(false);
const ANY: Option<bool> = None;

const fn dec(upper: Complexity, lower: Complexity) -> StatusKind {
    StatusKind::Decidable { upper, lower }
}

/// The rows of the classification table, columns ordered AB, EB, BA, BE.
pub const TABLE: &[TableRow] = &[
    TableRow { regime: DomainRegime::Constant, pattern: [Y, ANY, ANY, ANY], kind: StatusKind::Undecidable, note: "constant domains: forall-box present" },
    TableRow { regime: DomainRegime::Constant, pattern: [ANY, ANY, Y, ANY], kind: StatusKind::Undecidable, note: "constant domains: box-forall present" },
    TableRow { regime: DomainRegime::Constant, pattern: [N, Y, N, N], kind: dec(Complexity::PSpace, Complexity::PSpace), note: "constant domains: exists-box alone" },
    TableRow { regime: DomainRegime::Constant, pattern: [N, N, N, Y], kind: StatusKind::NoFmp, note: "constant domains: box-exists alone" },
    TableRow { regime: DomainRegime::Constant, pattern: [N, Y, N, Y], kind: StatusKind::NoFmp, note: "constant domains: exists-box with box-exists" },
    TableRow { regime: DomainRegime::Increasing, pattern: [Y, N, N, N], kind: dec(Complexity::PSpace, Complexity::PSpace), note: "increasing domains: forall-box alone" },
    TableRow { regime: DomainRegime::Increasing, pattern: [N, Y, N, N], kind: dec(Complexity::PSpace, Complexity::PSpace), note: "increasing domains: exists-box alone" },
    TableRow { regime: DomainRegime::Increasing, pattern: [N, N, Y, N], kind: dec(Complexity::PSpace, Complexity::PSpace), note: "increasing domains: box-forall alone" },
    TableRow { regime: DomainRegime::Increasing, pattern: [N, N, N, Y], kind: dec(Complexity::ExpSpace, Complexity::PSpace), note: "increasing domains: box-exists alone" },
    TableRow { regime: DomainRegime::Increasing, pattern: [Y, Y, N, N], kind: dec(Complexity::ExpSpace, Complexity::NexpTime), note: "increasing domains: ABEB" },
    TableRow { regime: DomainRegime::Increasing, pattern: [N, N, Y, Y], kind: dec(Complexity::ExpSpace, Complexity::NexpTime), note: "increasing domains: BABE" },
    TableRow { regime: DomainRegime::Increasing, pattern: [ANY, Y, Y, ANY], kind: StatusKind::Undecidable, note: "increasing domains: exists-box with box-forall" },
    TableRow { regime: DomainRegime::Increasing, pattern: [N, Y, N, Y], kind: StatusKind::NoFmp, note: "increasing domains: EBBE" },
    TableRow { regime: DomainRegime::Increasing, pattern: [Y, Y, N, Y], kind: StatusKind::Undecidable, note: "increasing domains: ABEBBE" },
    TableRow { regime: DomainRegime::Increasing, pattern: [Y, N, Y, Y], kind: dec(Complexity::ExpSpace, Complexity::NexpTime), note: "increasing domains: ABBABE" },
];

/// The loosely bundled row: decidable over increasing domains.
pub fn classify_lbf() -> FragmentStatus {
    FragmentStatus {
        kind: dec(Complexity::ExpSpace, Complexity::NexpTime),
        note: "increasing domains: loosely bundled fragment".to_string(),
        derived: false,
    }
}

fn rank(k: &StatusKind) -> u8 {
    match k {
        StatusKind::Undecidable => 2,
        StatusKind::NoFmp => 1,
        StatusKind::Decidable { .. } => 0,
    }
}

/// Classification of a bundle combination. Total over all inputs.
///
/// Printed rows win, with Undecidable over No FMP over decidable when rows
/// overlap. Other cells are closed as follows: a superset of an undecidable
/// or no-FMP row inherits that status; a decidable cell takes the least upper
/// bound among decidable supersets and the greatest lower bound among
/// decidable subsets, never below PSpace. The empty set is plain modal logic.
pub fn classify(bundles: BundleSet, regime: DomainRegime) -> FragmentStatus {
    let rows: Vec<&TableRow> = TABLE.iter().filter(|r| r.regime == regime).collect();
    if let Some(row) = rows.iter().filter(|r| r.matches(bundles)).max_by_key(|r| rank(&r.kind)) {
        return FragmentStatus { kind: row.kind, note: row.note.to_string(), derived: false };
    }
    if bundles.is_empty() {
        return FragmentStatus {
            kind: dec(Complexity::PSpace, Complexity::PSpace),
            note: "no bundles: propositional modal logic".to_string(),
            derived: true,
        };
    }
    let explicit = |s: BundleSet| rows.iter().filter(|r| r.matches(s)).max_by_key(|r| rank(&r.kind)).copied();
    for kind in [StatusKind::Undecidable, StatusKind::NoFmp] {
        if let Some(row) = rows
            .iter()
            .find(|r| r.kind == kind && r.minimal_set().is_subset(bundles))
        {
            return FragmentStatus {
                kind,
                note: format!("contains {}: {}", row.minimal_set(), row.note),
                derived: true,
            };
        }
    }
    let mut upper: Option<(Complexity, BundleSet)> = None;
    let mut lower = (Complexity::PSpace, BundleSet::EMPTY);
    for s in BundleSet::all() {
        let Some(row) = explicit(s) else { continue };
        let StatusKind::Decidable { upper: u, lower: l } = row.kind else { continue };
        if bundles.is_subset(s) && upper.is_none_or(|(best, _)| u < best) {
            upper = Some((u, s));
        }
        if s.is_subset(bundles) && l > lower.0 {
            lower = (l, s);
        }
    }
    match upper {
        Some((u, via)) => FragmentStatus {
            kind: dec(u, lower.0),
            note: format!("covered by the decidable fragment {via}; lower bound from {}", lower.1),
            derived: true,
        },
        None => FragmentStatus {
            kind: StatusKind::Undecidable,
            note: "no decidable superset; treated as undecidable".to_string(),
            derived: true,
        },
    }
}

//! Formula families: shorthand formulas, tiling encodings, formulas without the
//! finite model property, and the exponential-grid encodings.
//!
//! Generators return raw formulas so that implications and biconditionals
//! survive printing. Empty conjunctions are `true` and empty disjunctions are
//! `false`; nothing is simplified.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{RawFormula, Var};

/// Tiles with horizontal and vertical adjacency constraints and a corner tile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilingInstance {
    pub tiles: Vec<String>,
    pub h: Vec<(String, String)>,
    pub v: Vec<(String, String)>,
    pub t0: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("unknown tile {0}")]
    UnknownTile(String),
    #[error("the tile set is empty")]
    NoTiles,
    #[error("duplicate tile {0}")]
    DuplicateTile(String),
    #[error("tile name {0:?} is not an identifier")]
    BadTileName(String),
    #[error("grid exponent must be at least 1")]
    ZeroExponent,
}

impl TilingInstance {
    pub fn new(tiles: &[&str], h: &[(&str, &str)], v: &[(&str, &str)], t0: &str) -> Self {
        let pairs = |ps: &[(&str, &str)]| ps.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        TilingInstance {
            tiles: tiles.iter().map(|t| t.to_string()).collect(),
            h: pairs(h),
            v: pairs(v),
            t0: t0.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        if self.tiles.is_empty() {
            return Err(EncodingError::NoTiles);
        }
        let mut seen = BTreeSet::new();
        for t in &self.tiles {
            let ok = t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && !t.is_empty();
            if !ok {
                return Err(EncodingError::BadTileName(t.clone()));
            }
            if !seen.insert(t.as_str()) {
                return Err(EncodingError::DuplicateTile(t.clone()));
            }
        }
        self.tile(&self.t0)?;
        for (a, b) in self.h.iter().chain(&self.v) {
            self.tile(a)?;
            self.tile(b)?;
        }
        Ok(())
    }

    fn tile(&self, t: &str) -> Result<(), EncodingError> {
        if self.tiles.iter().any(|u| u == t) {
            Ok(())
        } else {
            Err(EncodingError::UnknownTile(t.to_string()))
        }
    }
}

/// Predicate name carrying tile `t`.
pub fn tile_pred(t: &str) -> String {
    format!("tile_{t}")
}

/// Predicate name of bit `i`.
pub fn bit_pred(i: usize) -> String {
    format!("bit_{i}")
}

fn atom(p: &str, args: &[&str]) -> RawFormula {
    RawFormula::atom(p, args)
}

fn not(a: RawFormula) -> RawFormula {
    RawFormula::not(a)
}

fn and(a: RawFormula, b: RawFormula) -> RawFormula {
    RawFormula::and(a, b)
}

fn bx(a: RawFormula) -> RawFormula {
    RawFormula::boxed(a)
}

fn dia(a: RawFormula) -> RawFormula {
    RawFormula::dia(a)
}

fn all(x: &str, a: RawFormula) -> RawFormula {
    RawFormula::forall(Var::new(x), a)
}

fn ex(x: &str, a: RawFormula) -> RawFormula {
    RawFormula::exists(Var::new(x), a)
}

/// `Δ⁰ = ⊤`, `Δⁿ = ◇⊤ ∧ □Δⁿ⁻¹`: a path of length `n` exists and every path
/// extends to length `n`.
pub fn delta_n(n: usize) -> RawFormula {
    (0..n).fold(RawFormula::Top, |acc, _| and(dia(RawFormula::Top), bx(acc)))
}

/// Tile `t` and no other tile at `x`.
pub fn only_t(inst: &TilingInstance, t: &str, x: &str) -> Result<RawFormula, EncodingError> {
    inst.tile(t)?;
    let others = inst.tiles.iter().filter(|u| *u != t).map(|u| not(atom(&tile_pred(u), &[x])));
    Ok(and(atom(&tile_pred(t), &[x]), RawFormula::conj(others)))
}

fn adjacency(edge: &str, pairs: &[(String, String)], x: &str, y: &str) -> RawFormula {
    let allowed = pairs.iter().map(|(t, u)| and(atom(&tile_pred(t), &[x]), atom(&tile_pred(u), &[y])));
    RawFormula::implies(atom(edge, &[x, y]), RawFormula::disj(allowed))
}

/// `P(x,y) → ⋁_{(t,t')∈H} (t(x) ∧ t'(y))`
pub fn hsuc(inst: &TilingInstance, x: &str, y: &str) -> RawFormula {
    adjacency("P", &inst.h, x, y)
}

/// `Q(x,y) → ⋁_{(t,t')∈V} (t(x) ∧ t'(y))`
pub fn vsuc(inst: &TilingInstance, x: &str, y: &str) -> RawFormula {
    adjacency("Q", &inst.v, x, y)
}

fn some_only_t(inst: &TilingInstance, x: &str) -> RawFormula {
    RawFormula::disj(inst.tiles.iter().map(|t| bx(bx(only_t(inst, t, x).expect("tile of the instance")))))
}

fn uniform(edge: &str, x: &str, y: &str) -> RawFormula {
    RawFormula::iff(dia(atom(edge, &[x, y])), bx(atom(edge, &[x, y])))
}

/// The named conjuncts of the exists-box / box-forall tiling encoding.
pub fn ebba_parts(inst: &TilingInstance) -> Result<Vec<(&'static str, RawFormula)>, EncodingError> {
    inst.validate()?;
    let start = RawFormula::conj([
        dia(ex("x0", bx(bx(only_t(inst, &inst.t0, "x0")?)))),
        bx(all("x", some_only_t(inst, "x"))),
        delta_n(3),
    ]);
    let successor = |edge: &str, w: &str| bx(all("x", ex(w, bx(bx(atom(edge, &["x", w]))))));
    let constraint = |c: RawFormula| bx(all("x", bx(all("y", bx(c)))));
    let uniform_edge = |edge: &str| bx(all("x", bx(all("y", uniform(edge, "x", "y")))));
    let grid = bx(all(
        "x",
        bx(all(
            "y",
            RawFormula::implies(
                ex("w", bx(and(atom("Q", &["x", "w"]), atom("P", &["w", "y"])))),
                bx(all("z", RawFormula::implies(atom("P", &["x", "z"]), atom("Q", &["z", "y"])))),
            ),
        )),
    ));
    Ok(vec![
        ("start", start),
        ("horizontal", successor("P", "x1")),
        ("vertical", successor("Q", "x2")),
        ("horizontal_tiles", constraint(hsuc(inst, "x", "y"))),
        ("vertical_tiles", constraint(vsuc(inst, "x", "y"))),
        ("horizontal_uniform", uniform_edge("P")),
        ("vertical_uniform", uniform_edge("Q")),
        ("grid", grid),
    ])
}

/// Tiling encoding over exists-box and box-forall bundles.
pub fn encode_ebba(inst: &TilingInstance) -> Result<RawFormula, EncodingError> {
    Ok(RawFormula::conj(ebba_parts(inst)?.into_iter().map(|(_, f)| f)))
}

/// The named conjuncts of the forall-box / exists-box / box-exists encoding.
/// All but `start` sit inside one `◇∀x` block.
pub fn abebbe_parts(inst: &TilingInstance) -> Result<Vec<(&'static str, RawFormula)>, EncodingError> {
    inst.validate()?;
    let start = and(bx(ex("x0", bx(bx(only_t(inst, &inst.t0, "x0")?)))), delta_n(3));
    let successor = |edge: &str, w: &str| ex(w, bx(bx(atom(edge, &["x", w]))));
    let each_y = |c: RawFormula| all("y", bx(c));
    let grid = each_y(RawFormula::implies(
        ex("w", bx(and(atom("Q", &["x", "w"]), atom("P", &["w", "y"])))),
        all("z", bx(RawFormula::implies(atom("P", &["x", "z"]), atom("Q", &["z", "y"])))),
    ));
    Ok(vec![
        ("start", start),
        ("tiled", some_only_t(inst, "x")),
        ("horizontal", successor("P", "x1")),
        ("vertical", successor("Q", "x2")),
        ("horizontal_tiles", each_y(bx(hsuc(inst, "x", "y")))),
        ("vertical_tiles", each_y(bx(vsuc(inst, "x", "y")))),
        ("horizontal_uniform", each_y(uniform("P", "x", "y"))),
        ("vertical_uniform", each_y(uniform("Q", "x", "y"))),
        ("grid", grid),
    ])
}

/// Tiling encoding over forall-box, exists-box and box-exists bundles.
pub fn encode_abebbe(inst: &TilingInstance) -> Result<RawFormula, EncodingError> {
    let mut parts = abebbe_parts(inst)?.into_iter().map(|(_, f)| f);
    let start = parts.next().expect("start conjunct");
    Ok(and(start, dia(all("x", RawFormula::conj(parts)))))
}

fn transitive(x: &str, y: &str, z: &str) -> RawFormula {
    RawFormula::implies(and(atom("P", &[x, y]), atom("P", &[y, z])), atom("P", &[x, z]))
}

/// Satisfiable only with an infinite local domain at some successor.
pub fn phi1() -> RawFormula {
    dia(all(
        "x",
        RawFormula::conj([
            ex("y", bx(bx(atom("P", &["x", "y"])))),
            bx(bx(not(atom("P", &["x", "x"])))),
            dia(all("y", and(uniform("P", "x", "y"), dia(all("z", transitive("x", "y", "z")))))),
        ]),
    ))
}

/// Satisfiable only with an infinite local domain at the evaluation world.
pub fn phi2() -> RawFormula {
    RawFormula::conj([
        all("x", ex("y", bx(bx(bx(atom("P", &["x", "y"])))))),
        all("x", bx(bx(bx(not(atom("P", &["x", "x"])))))),
        all("x", bx(all("y", bx(all("z", bx(transitive("x", "y", "z"))))))),
        RawFormula::dia_n(3, RawFormula::Top),
    ])
}

/// Satisfiable over constant domains only with an infinite domain.
pub fn phi3() -> RawFormula {
    dia(all(
        "x",
        RawFormula::conj([
            bx(ex("y", bx(bx(atom("P", &["x", "y"]))))),
            RawFormula::box_n(3, not(atom("P", &["x", "x"]))),
            dia(dia(all("y", and(uniform("P", "x", "y"), dia(all("z", transitive("x", "y", "z"))))))),
        ]),
    ))
}

fn bit(i: usize, x: &str) -> RawFormula {
    atom(&bit_pred(i), &[x])
}

fn tile2(t: &str, x: &str, y: &str) -> RawFormula {
    atom(&tile_pred(t), &[x, y])
}

/// `y` is the binary successor of `x` over `n` bits, least significant bit first.
pub fn succ_formula(n: usize, x: &str, y: &str) -> RawFormula {
    RawFormula::disj((0..n).map(|i| {
        RawFormula::conj([
            not(bit(i, x)),
            bit(i, y),
            RawFormula::conj((0..i).map(|j| and(bit(j, x), not(bit(j, y))))),
            RawFormula::conj((i + 1..n).map(|j| RawFormula::iff(bit(j, x), bit(j, y)))),
        ])
    }))
}

/// Some element has every bit off at all successors.
pub fn zero_element(n: usize) -> RawFormula {
    ex("x", bx(RawFormula::conj((0..n).map(|i| not(bit(i, "x"))))))
}

/// Bits persist to all successors.
pub fn bits_persist(n: usize) -> RawFormula {
    all(
        "x",
        bx(RawFormula::conj((0..n).map(|i| {
            and(
                RawFormula::implies(bit(i, "x"), bx(bit(i, "x"))),
                RawFormula::implies(not(bit(i, "x")), bx(not(bit(i, "x")))),
            )
        }))),
    )
}

/// Every element with bit `i` off has a partner with bit `i` on and all other bits equal.
pub fn bits_flip(n: usize) -> RawFormula {
    all(
        "x",
        bx(RawFormula::conj((0..n).map(|i| {
            let y = format!("y{i}");
            let same = RawFormula::conj((0..n).filter(|&j| j != i).map(|j| RawFormula::iff(bit(j, "x"), bit(j, &y))));
            RawFormula::implies(not(bit(i, "x")), ex(&y, bx(and(bit(i, &y), same))))
        }))),
    )
}

/// `ψ` at every distance `0..=n`: `ψ ∧ □ψ ∧ … ∧ □ⁿψ`.
pub fn box_up_to(n: usize, psi: RawFormula) -> RawFormula {
    RawFormula::conj((0..=n).map(|k| RawFormula::box_n(k, psi.clone())))
}

/// Forces `2ⁿ` elements with distinct bit profiles within modal depth `n`.
pub fn alpha_n(n: usize) -> Result<RawFormula, EncodingError> {
    if n == 0 {
        return Err(EncodingError::ZeroExponent);
    }
    let step = RawFormula::conj([bits_persist(n), bits_flip(n), dia(RawFormula::Top)]);
    Ok(and(zero_element(n), box_up_to(n, step)))
}

/// The named conjuncts placed `n` steps below the root of the grid encoding.
pub fn beta_parts(inst: &TilingInstance, n: usize) -> Result<Vec<(&'static str, RawFormula)>, EncodingError> {
    inst.validate()?;
    if n == 0 {
        return Err(EncodingError::ZeroExponent);
    }
    let persist = bits_persist(n);
    let origin = all(
        "x",
        RawFormula::box_n(
            3,
            RawFormula::implies(RawFormula::conj((0..n).map(|i| not(bit(i, "x")))), tile2(&inst.t0, "x", "x")),
        ),
    );
    let unique = all(
        "x",
        bx(all(
            "y",
            bx(bx(RawFormula::disj(inst.tiles.iter().map(|t| {
                let others = inst.tiles.iter().filter(|u| *u != t).map(|u| not(tile2(u, "x", "y")));
                and(tile2(t, "x", "y"), RawFormula::conj(others))
            })))),
        )),
    );
    let adjacent = |pairs: &[(String, String)], horizontal: bool| {
        let allowed = RawFormula::disj(pairs.iter().map(|(t, u)| {
            if horizontal {
                and(tile2(t, "x", "z"), tile2(u, "y", "z"))
            } else {
                and(tile2(t, "z", "x"), tile2(u, "z", "y"))
            }
        }));
        all("x", bx(all("y", bx(all("z", bx(RawFormula::implies(succ_formula(n, "x", "y"), allowed)))))))
    };
    Ok(vec![
        ("persist", persist.clone()),
        ("persist_1", bx(persist.clone())),
        ("persist_2", bx(bx(persist))),
        ("depth", RawFormula::dia_n(3, RawFormula::Top)),
        ("origin", origin),
        ("unique", unique),
        ("horizontal", adjacent(&inst.h, true)),
        ("vertical", adjacent(&inst.v, false)),
    ])
}

/// Satisfiable iff the `2ⁿ × 2ⁿ` grid has a tiling.
pub fn beta_nt(inst: &TilingInstance, n: usize) -> Result<RawFormula, EncodingError> {
    let body = RawFormula::conj(beta_parts(inst, n)?.into_iter().map(|(_, f)| f));
    Ok(and(alpha_n(n)?, RawFormula::box_n(n, body)))
}

/// Side length of the grid encoded by exponent `n`.
pub fn grid_side(n: usize) -> usize {
    1 << n
}

/// Brute-force search for a tiling of the `side × side` grid with the corner
/// tile at `(0,0)`. `H` constrains `(i,j)`/`(i+1,j)`, `V` constrains `(i,j)`/`(i,j+1)`.
pub fn tiling_oracle(inst: &TilingInstance, side: usize) -> bool {
    if side == 0 {
        return true;
    }
    let Some(t0) = inst.tiles.iter().position(|t| *t == inst.t0) else { return false };
    let k = inst.tiles.len();
    let ix = |name: &String| inst.tiles.iter().position(|t| t == name);
    let mut h = vec![vec![false; k]; k];
    let mut v = vec![vec![false; k]; k];
    for (a, b) in &inst.h {
        if let (Some(a), Some(b)) = (ix(a), ix(b)) {
            h[a][b] = true;
        }
    }
    for (a, b) in &inst.v {
        if let (Some(a), Some(b)) = (ix(a), ix(b)) {
            v[a][b] = true;
        }
    }
    let mut grid = vec![usize::MAX; side * side];
    fn place(cell: usize, side: usize, k: usize, t0: usize, h: &[Vec<bool>], v: &[Vec<bool>], grid: &mut [usize]) -> bool {
        if cell == side * side {
            return true;
        }
        let (i, j) = (cell % side, cell / side);
        for t in 0..k {
            if cell == 0 && t != t0 {
                continue;
            }
            if i > 0 && !h[grid[cell - 1]][t] {
                continue;
            }
            if j > 0 && !v[grid[cell - side]][t] {
                continue;
            }
            grid[cell] = t;
            if place(cell + 1, side, k, t0, h, v, grid) {
                return true;
            }
        }
        false
    }
    place(0, side, k, t0, &h, &v, &mut grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::{parse, print};

    fn two_tiles() -> TilingInstance {
        TilingInstance::new(&["t0", "t1"], &[("t0", "t1")], &[], "t0")
    }

    #[test]
    fn delta_unfolds() {
        assert_eq!(delta_n(0), RawFormula::Top);
        assert_eq!(print(&delta_n(1)), "(dia true) & (box true)");
        assert_eq!(print(&delta_n(2)), "(dia true) & (box ((dia true) & (box true)))");
    }

    #[test]
    fn shorthands() {
        let inst = two_tiles();
        assert_eq!(only_t(&inst, "t0", "x").unwrap(), parse("tile_t0(x) & ~tile_t1(x)").unwrap());
        assert_eq!(hsuc(&inst, "x", "y"), parse("P(x,y) -> (tile_t0(x) & tile_t1(y))").unwrap());
        assert_eq!(vsuc(&inst, "x", "y"), parse("Q(x,y) -> false").unwrap());
        assert_eq!(only_t(&inst, "t9", "x"), Err(EncodingError::UnknownTile("t9".into())));
    }

    #[test]
    fn succ_for_two_bits() {
        let expected = parse(
            "(~bit_0(x) & (bit_0(y) & (true & (bit_1(x) <-> bit_1(y))))) \
             | (~bit_1(x) & (bit_1(y) & ((bit_0(x) & ~bit_0(y)) & true)))",
        )
        .unwrap();
        assert_eq!(succ_formula(2, "x", "y"), expected);
    }

    #[test]
    fn tiling_oracle_examples() {
        let one = TilingInstance::new(&["a"], &[("a", "a")], &[("a", "a")], "a");
        assert!(tiling_oracle(&one, 2));
        let no_h = TilingInstance::new(&["a"], &[], &[("a", "a")], "a");
        assert!(!tiling_oracle(&no_h, 2));
        assert!(tiling_oracle(&no_h, 1));
        let striped = TilingInstance::new(&["a", "b"], &[("a", "b"), ("b", "a")], &[("a", "a"), ("b", "b")], "a");
        assert!(tiling_oracle(&striped, 2));
        assert!(tiling_oracle(&striped, 4));
    }

    #[test]
    fn instance_validation() {
        let bad = TilingInstance::new(&["a"], &[("a", "b")], &[], "a");
        assert_eq!(bad.validate(), Err(EncodingError::UnknownTile("b".into())));
        assert!(encode_ebba(&bad).is_err());
    }

    #[test]
    fn box_up_to_reading() {
        assert_eq!(print(&box_up_to(1, RawFormula::atom("A", &[]))), "A & (box A)");
    }
}

//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Lines go straight to the process stdout so they show up without
//! `--nocapture`. The corpus seed comes from `BUNDLED_FOML_SEED`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use foml_core::encodings::{alpha_n, beta_nt, bit_pred, grid_side, phi1, phi2, phi3, tiling_oracle};
use foml_core::fragment::{classify_lbf, DomainRegime};
use foml_core::kripke::KripkeModel;
use foml_core::oracle::{estimate, DEFAULT_CEILING};
use foml_core::sampler::Sampler;
use foml_core::tableau::Stats;
use foml_core::textio::{read_tiling, write_tiling};
use foml_core::*;
use serde::Deserialize;

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn read_fixture(name: &str) -> String {
    fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn formula(text: &str) -> Formula {
    to_nnf(&parse(text).unwrap_or_else(|e| panic!("{text}: {e}")))
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let took = start.elapsed();
    if took > limit {
        Err(format!("{detail}; took {took:.1?}, limit {limit:?}"))
    } else {
        Ok(format!("{detail} in {took:.1?}"))
    }
}

fn example_models() -> Outcome {
    let start = Instant::now();
    let models: BTreeMap<&str, KripkeModel> = [("w1", "m1.json"), ("w2", "m2.json"), ("w3", "m3.json")]
        .into_iter()
        .map(|(w, f)| (w, read_model(&read_fixture(f)).expect("fixture model is valid")))
        .collect();
    let facts: [(&str, [bool; 3]); 4] = [
        ("box exists x. P(x)", [true, false, true]),
        ("exists x. box P(x)", [false, false, true]),
        ("~forall x. box P(x)", [true, true, false]),
        ("~box forall x. ~P(x)", [true, true, true]),
    ];
    let mut wrong = Vec::new();
    let mut checks = 0;
    for (text, expected) in facts {
        let phi = formula(text);
        for (w, want) in ["w1", "w2", "w3"].into_iter().zip(expected) {
            checks += 1;
            let got = models[w].check(w, &Assignment::new(), &phi).map_err(|e| e.to_string())?;
            if got != want {
                wrong.push(format!("{text} at {w}: got {got}"));
            }
        }
    }
    if !wrong.is_empty() {
        return Err(wrong.join("; "));
    }
    within(Duration::from_secs(1), start, format!("{checks} checks agree"))
}

struct Corpus {
    lbf: Vec<(Formula, SolveResult)>,
    stats: Vec<Stats>,
}

fn check_sat(phi: &Formula, result: &SolveResult) -> Result<(), String> {
    if let SolveResult::Sat { model, root, assignment } = result {
        let v = model.validate();
        if !v.is_empty() {
            return Err(format!("{phi}: invalid model {v:?}"));
        }
        if !model.check(root, assignment, phi).map_err(|e| format!("{phi}: {e}"))? {
            return Err(format!("{phi}: extracted model refutes the formula"));
        }
    }
    Ok(())
}

fn soundness(corpus: &mut Corpus) -> Outcome {
    let start = Instant::now();
    let mut s = Sampler::from_env();
    let solver = Solver::new(Config { check_invariants: true, ..Config::default() });
    let mut sat = [0usize; 2];
    let mut exceeded = Vec::new();
    for (i, (mode, size, count)) in [(Mode::Lbf, 14, 500), (Mode::Abbabe, 10, 100)].into_iter().enumerate() {
        for _ in 0..count {
            let phi = if mode == Mode::Lbf { s.lbf(size) } else { s.abbabe(size) };
            let out = solver.solve(&phi, mode).map_err(|e| format!("{phi}: {e}"))?;
            check_sat(&phi, &out.result)?;
            if out.result.is_sat() {
                sat[i] += 1;
            }
            if let SolveResult::ResourceExceeded { limit } = &out.result {
                exceeded.push(format!("{phi}: {limit}"));
            }
            corpus.stats.push(out.stats);
            if mode == Mode::Lbf {
                corpus.lbf.push((phi, out.result));
            }
        }
    }
    if !exceeded.is_empty() {
        return Err(format!("no verdict for {}", exceeded.join("; ")));
    }
    within(
        Duration::from_secs(300),
        start,
        format!("500 LBF ({} sat) and 100 ABBABE ({} sat) verdicts, every model re-checked", sat[0], sat[1]),
    )
}

fn oracle_agreement(corpus: &mut Corpus) -> Outcome {
    let start = Instant::now();
    let mut disagree = Vec::new();
    for (phi, result) in &corpus.lbf {
        let bounds = SearchBounds::new(
            phi.modal_depth(),
            phi.count(&|f| matches!(f, Formula::Dia(_))),
            phi.free_vars().len() + phi.count(&|f| matches!(f, Formula::Exists(..))) + 1,
            0,
        );
        let found = sat_bounded(phi, &bounds).map_err(|e| format!("{phi}: {e}"))?.is_found();
        if found != result.is_sat() {
            disagree.push(format!("{phi}: tableau {}, oracle {found}", result.is_sat()));
        }
    }
    // The reference driver must reach the same verdicts.
    let reference = Solver::new(Config { strategy: Strategy::Reference, check_invariants: true, ..Config::default() });
    for (phi, result) in &corpus.lbf {
        let out = reference.solve(phi, Mode::Lbf).map_err(|e| format!("{phi}: {e}"))?;
        check_sat(phi, &out.result)?;
        if out.result.is_sat() != result.is_sat() {
            disagree.push(format!("{phi}: fast and reference drivers differ"));
        }
        corpus.stats.push(out.stats);
    }
    if !disagree.is_empty() {
        return Err(format!("{} disagreements: {}", disagree.len(), disagree.join("; ")));
    }
    within(Duration::from_secs(600), start, format!("{}/{} agree", corpus.lbf.len(), corpus.lbf.len()))
}

fn rule_applicability(corpus: &Corpus) -> Outcome {
    let stuck: u64 = corpus.stats.iter().map(|s| s.stuck_nodes).sum();
    let unclean: u64 = corpus.stats.iter().map(|s| s.clean_violations).sum();
    let nodes: u64 = corpus.stats.iter().map(|s| s.nodes).sum();
    if stuck + unclean > 0 {
        return Err(format!("{stuck} stuck nodes, {unclean} cleanliness violations"));
    }
    Ok(format!("0 stuck, 0 unclean over {} runs and {nodes} rule applications", corpus.stats.len()))
}

fn no_small_models() -> Outcome {
    let mut parts = Vec::new();
    for (name, raw, bounds) in [
        ("phi1", phi1(), SearchBounds::new(3, 2, 2, 1)),
        ("phi2", phi2(), SearchBounds::new(3, 2, 3, 1)),
        ("phi3", phi3(), SearchBounds::new(3, 2, 2, 1)),
    ] {
        let start = Instant::now();
        let phi = to_nnf(&raw);
        let est = estimate(&phi, &bounds);
        if est > DEFAULT_CEILING {
            return Err(format!("{name}: estimate {est:.2e} over the ceiling"));
        }
        match sat_bounded(&phi, &bounds).map_err(|e| format!("{name}: {e}"))? {
            OracleResult::Found { .. } => return Err(format!("{name}: found a model within {bounds:?}")),
            OracleResult::NoneWithinBounds(_) => parts.push(within(Duration::from_secs(300), start, format!("{name} none"))?),
        }
    }
    Ok(parts.join(", "))
}

fn distinct_profiles(m: &KripkeModel, w: usize, child: usize, n: usize) -> usize {
    let profiles: BTreeSet<Vec<bool>> = m
        .local_domain(w)
        .iter()
        .map(|&d| (0..n).map(|i| m.holds(child, &bit_pred(i), &[d])).collect())
        .collect();
    profiles.len()
}

fn exponential_domain() -> Outcome {
    let mut parts = Vec::new();
    for n in 1..=2 {
        let start = Instant::now();
        let phi = to_nnf(&alpha_n(n).map_err(|e| e.to_string())?);
        let SolveResult::Sat { model, root, .. } = solve_lbf(&phi).map_err(|e| e.to_string())? else {
            return Err(format!("alpha^{n} is not sat"));
        };
        let mut at_n = Vec::new();
        let mut queue = VecDeque::from([(model.world(&root).expect("root"), 0)]);
        while let Some((w, d)) = queue.pop_front() {
            if d == n {
                at_n.push(w);
                continue;
            }
            queue.extend(model.successors(w).iter().map(|&v| (v, d + 1)));
        }
        let best = at_n
            .iter()
            .flat_map(|&w| model.successors(w).iter().map(move |&c| (w, c)))
            .map(|(w, c)| distinct_profiles(&model, w, c, n))
            .max()
            .unwrap_or(0);
        if best < 1 << n {
            return Err(format!("alpha^{n}: at most {best} distinct bit profiles at distance {n}"));
        }
        parts.push(within(Duration::from_secs(120), start, format!("alpha^{n} {best} profiles"))?);
    }
    Ok(parts.join(", "))
}

fn tilings() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for name in ["one_tile", "no_horizontal", "two_tiles"] {
        let inst = read_tiling(&read_fixture(&format!("{name}.json"))).map_err(|e| e.to_string())?;
        let raw = beta_nt(&inst, 1).map_err(|e| e.to_string())?;
        let stored = parse(&read_fixture(&format!("beta1_{name}.fml"))).map_err(|e| e.to_string())?;
        if stored != raw {
            return Err(format!("{name}: fixture differs from the generator"));
        }
        let phi = to_nnf(&raw);
        if !in_lbf(&phi) {
            return Err(format!("{name}: not loosely bundled"));
        }
        let tiles = tiling_oracle(&inst, grid_side(1));
        let result = solve_lbf(&phi).map_err(|e| format!("{name}: {e}"))?;
        check_sat(&phi, &result)?;
        match result {
            SolveResult::ResourceExceeded { limit } => parts.push(format!("{name} exceeded {limit}, fixture checks hold")),
            r if r.is_sat() == tiles => parts.push(format!("{name} {}", if tiles { "sat" } else { "unsat" })),
            r => return Err(format!("{name}: tableau sat {}, tiling exists {tiles}", r.is_sat())),
        }
    }
    within(Duration::from_secs(600), start, parts.join(", "))
}

#[derive(Deserialize)]
struct TableRow {
    domain: String,
    #[serde(default)]
    lbf: bool,
    #[serde(default)]
    ab: String,
    #[serde(default)]
    eb: String,
    #[serde(default)]
    ba: String,
    #[serde(default)]
    be: String,
    status: String,
}

fn classification_table() -> Outcome {
    let rows: Vec<TableRow> = serde_json::from_str(&read_fixture("classification.json")).map_err(|e| e.to_string())?;
    let mut cells = 0;
    for row in &rows {
        if row.lbf {
            let got = classify_lbf().kind.to_string();
            if got != row.status {
                return Err(format!("loosely bundled: {got}, expected {}", row.status));
            }
            cells += 1;
            continue;
        }
        let regime = if row.domain == "constant" { DomainRegime::Constant } else { DomainRegime::Increasing };
        let pattern = [&row.ab, &row.eb, &row.ba, &row.be];
        for s in BundleSet::all() {
            let fits = Bundle::ALL.iter().zip(pattern).all(|(b, p)| match p.as_str() {
                "y" => s.contains(*b),
                "n" => !s.contains(*b),
                _ => true,
            });
            if !fits {
                continue;
            }
            cells += 1;
            let got = fragment::classify(s, regime).kind.to_string();
            if got != row.status {
                return Err(format!("{s} over {} domains: {got}, expected {}", row.domain, row.status));
            }
        }
    }
    Ok(format!("{} rows, {cells} cells", rows.len()))
}

fn normal_forms_and_round_trips() -> Outcome {
    let start = Instant::now();
    let mut s = Sampler::from_env();
    for _ in 0..1000 {
        let raw = s.raw(12);
        let m = s.model(4, 3);
        let (w, sigma) = s.placement(&m, raw.free_vars());
        let before = m.check_raw(&w, &sigma, &raw).map_err(|e| e.to_string())?;
        let after = m.check(&w, &sigma, &to_nnf(&raw)).map_err(|e| e.to_string())?;
        if before != after {
            return Err(format!("{raw}: {before} before, {after} after normalizing"));
        }
    }
    for _ in 0..10_000 {
        let raw = s.raw(16);
        let text = print(&raw);
        if parse(&text).as_ref() != Ok(&raw) {
            return Err(format!("round trip fails on {text}"));
        }
    }
    let mut files = 0;
    for entry in fs::read_dir(fixture("")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
        if name.ends_with(".fml") {
            let once = print(&parse(&text).map_err(|e| format!("{name}: {e}"))?);
            let twice = print(&parse(&once).map_err(|e| format!("{name}: {e}"))?);
            if once != twice || text.trim_end() != once {
                return Err(format!("{name} is not canonical"));
            }
            files += 1;
        } else if name.starts_with('m') && name.ends_with(".json") {
            if write_model(&read_model(&text).map_err(|e| format!("{name}: {e}"))?) != text {
                return Err(format!("{name} is not canonical"));
            }
            files += 1;
        } else if name.ends_with(".json") && name != "classification.json" {
            if write_tiling(&read_tiling(&text).map_err(|e| format!("{name}: {e}"))?) != text {
                return Err(format!("{name} is not canonical"));
            }
            files += 1;
        }
    }
    within(Duration::from_secs(120), start, format!("1000 equivalences, 10000 round trips, {files} canonical fixtures"))
}

#[test]
fn acceptance() {
    let mut corpus = Corpus { lbf: Vec::new(), stats: Vec::new() };
    let results: Vec<(&str, Outcome)> = vec![
        ("example models", example_models()),
        ("tableau soundness", soundness(&mut corpus)),
        ("tableau and oracle agree", oracle_agreement(&mut corpus)),
        ("rule applicability and cleanliness", rule_applicability(&corpus)),
        ("no small models", no_small_models()),
        ("exponential domain", exponential_domain()),
        ("tilings", tilings()),
        ("classification table", classification_table()),
        ("normal forms and round trips", normal_forms_and_round_trips()),
    ];
    let mut out = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (i, (name, r)) in results.iter().enumerate() {
        let line = match r {
            Ok(detail) => format!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed.push(i + 1);
                format!("FAIL criterion {}: {name}: {why}", i + 1)
            }
        };
        writeln!(out, "{line}").unwrap();
    }
    out.flush().unwrap();
    assert!(failed.is_empty(), "failed criteria {failed:?}");
}

//! `foml`: satisfiability, model checking, classification and formula
//! generation for bundled first-order modal logic.
//!
//! Exit codes: 0 on a definite answer, 1 on an internal failure, 2 on usage
//! errors (bad flags, unreadable input, formula outside the requested
//! fragment, uncovered free variable), 3 when a resource limit stopped the
//! search before an answer.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use foml_core::encodings::{self, TilingInstance};
use foml_core::fragment::{classify, classify_lbf, is_bundled, lbf_violation, DomainRegime};
use foml_core::oracle::{self, estimate, OracleError, DEFAULT_CEILING};
use foml_core::sampler::{seed_from_env, Sampler};
use foml_core::tableau::Stats;
use foml_core::textio::{read_tiling, ModelJson};
use foml_core::*;

const EXIT_INTERNAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_LIMIT: u8 = 3;

#[derive(Parser)]
#[command(name = "foml", version, about = "Decide and inspect bundled first-order modal formulas")]
struct Cli {
    /// Emit a JSON verdict instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide satisfiability with the tableau for a fragment.
    Sat(SatArgs),
    /// Evaluate a formula at a world of a model.
    Check(CheckArgs),
    /// Report fragment membership of a formula, or the status of a bundle set.
    Classify(ClassifyArgs),
    /// Write a formula from one of the built-in families.
    Generate(GenerateArgs),
    /// Search for a model within explicit size bounds.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Fragment {
    Lbf,
    Abbabe,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Fast,
    Reference,
}

#[derive(Args)]
struct SatArgs {
    #[arg(long, value_enum)]
    fragment: Fragment,
    /// Formula file, or `-` for stdin.
    #[arg(long)]
    formula: PathBuf,
    /// Write the extracted model here when satisfiable.
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    max_nodes: Option<u64>,
    /// Largest witness count for the forall-exists-dia rule.
    #[arg(long)]
    max_witnesses: Option<usize>,
    #[arg(long, value_enum, default_value = "fast")]
    strategy: StrategyArg,
    /// Print each rule application.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    world: String,
    #[arg(long)]
    formula: PathBuf,
    /// Free-variable assignment, `x=d,y=e`.
    #[arg(long, default_value = "")]
    assign: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Constant,
    Increasing,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long, conflicts_with_all = ["bundles", "domain"], required_unless_present = "bundles")]
    formula: Option<PathBuf>,
    /// Comma-separated bundles: ab, eb, ba, be. Empty for none.
    #[arg(long, requires = "domain")]
    bundles: Option<String>,
    #[arg(long, value_enum)]
    domain: Option<Domain>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Delta,
    Ebba,
    Abebbe,
    Phi1,
    Phi2,
    Phi3,
    AlphaN,
    BetaNt,
    /// Seeded sample of loosely bundled formulas, one per line.
    SampleLbf,
    /// Seeded sample of ABBABE formulas, one per line.
    SampleAbbabe,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    family: Family,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Tiling instance JSON for ebba, abebbe and beta-nt.
    #[arg(long)]
    tiling: Option<PathBuf>,
    /// Number of formulas for the sample families.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Largest formula size for the sample families.
    #[arg(long, default_value_t = 14)]
    max_size: usize,
    /// Sampler seed; defaults to BUNDLED_FOML_SEED or a fixed value.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    formula: PathBuf,
    /// Defaults to the modal depth of the formula.
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 2)]
    max_branching: usize,
    /// Defaults to free variables plus existentials plus one.
    #[arg(long)]
    max_domain: Option<usize>,
    #[arg(long, default_value_t = 1)]
    max_growth: usize,
    /// Refuse searches estimated above this many ground instances.
    #[arg(long, default_value_t = DEFAULT_CEILING)]
    ceiling: f64,
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Limit(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Limit(_) => EXIT_LIMIT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

/// Machine-readable result of one invocation.
#[derive(Serialize, Default)]
struct Verdict {
    command: Vec<String>,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    world: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assignment: Option<BTreeMap<String, String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    formula: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    trace: Vec<String>,
    notes: Vec<String>,
}

impl Verdict {
    fn new(status: &str) -> Self {
        Verdict { command: std::env::args().collect(), status: status.to_string(), ..Verdict::default() }
    }
}

struct Report {
    verdict: Verdict,
    text: String,
    code: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    let outcome = match cli.command {
        Command::Sat(a) => sat(a),
        Command::Check(a) => check(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Generate(a) => generate(a),
        Command::Oracle(a) => oracle_cmd(a),
    };
    match outcome {
        Ok(r) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&r.verdict).expect("verdict serializes"));
            } else {
                print!("{}", r.text);
            }
            ExitCode::from(r.code)
        }
        Err(e) => {
            if json {
                let mut v = Verdict::new("error");
                v.notes.push(e.to_string());
                println!("{}", serde_json::to_string_pretty(&v).expect("verdict serializes"));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.code())
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| CliError::Usage(format!("stdin: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_formula(path: &Path) -> Result<RawFormula, CliError> {
    let text = read_input(path)?;
    parse(&text).map_err(|e| CliError::Usage(format!("{}:{e}", path.display())))
}

fn read_tiling_file(path: &Path) -> Result<TilingInstance, CliError> {
    read_tiling(&read_input(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn assignment_strings(a: &Assignment) -> BTreeMap<String, String> {
    a.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn show_assignment(a: &Assignment) -> String {
    let parts: Vec<String> = a.iter().map(|(k, v)| format!("{k}={v}")).collect();
    parts.join(",")
}

fn stats_json(stats: &Stats, start: Instant) -> serde_json::Value {
    let mut v = serde_json::to_value(stats).expect("stats serialize");
    v["wall_ms"] = json!(start.elapsed().as_secs_f64() * 1000.0);
    v
}

fn sat(a: SatArgs) -> Result<Report, CliError> {
    let phi = to_nnf(&read_formula(&a.formula)?);
    let mode = match a.fragment {
        Fragment::Lbf => Mode::Lbf,
        Fragment::Abbabe => Mode::Abbabe,
    };
    let mut config = Config {
        strategy: match a.strategy {
            StrategyArg::Fast => Strategy::Fast,
            StrategyArg::Reference => Strategy::Reference,
        },
        trace: a.trace,
        ..Config::default()
    };
    if let Some(n) = a.max_nodes {
        config.max_nodes = n;
    }
    if let Some(n) = a.max_witnesses {
        config.max_witnesses = n;
    }
    let start = Instant::now();
    let out = Solver::new(config).solve(&phi, mode).map_err(|e| match e {
        SolveError::NotInFragment { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Internal(e.to_string()),
    })?;
    let stats = &out.stats;
    let mut text = String::new();
    for line in &out.trace {
        text.push_str(line);
        text.push('\n');
    }
    let summary = format!("nodes {}, worlds {}, max domain {}", stats.nodes, stats.worlds, stats.max_domain);
    let (status, code) = match &out.result {
        SolveResult::Sat { .. } => ("sat", 0),
        SolveResult::Unsat => ("unsat", 0),
        SolveResult::ResourceExceeded { .. } => ("resource-exceeded", EXIT_LIMIT),
    };
    let mut v = Verdict::new(status);
    v.stats = Some(stats_json(stats, start));
    v.trace = out.trace.clone();
    v.notes.push(format!("fragment {mode}"));
    text.push_str(&format!("{status} ({summary})\n"));
    match &out.result {
        SolveResult::Sat { model, root, assignment } => {
            if let Some(p) = &a.model_out {
                write_output(p, &write_model(model))?;
                v.model_path = Some(p.display().to_string());
            }
            text.push_str(&format!("root {root}"));
            if !assignment.is_empty() {
                text.push_str(&format!(" under {}", show_assignment(assignment)));
            }
            text.push('\n');
            text.push_str(&model.to_string());
            v.world = Some(root.clone());
            v.assignment = Some(assignment_strings(assignment));
            v.model = Some(ModelJson::from_model(model));
        }
        SolveResult::ResourceExceeded { limit } => {
            text.push_str(&format!("limit: {limit}\n"));
            v.notes.push(limit.clone());
        }
        SolveResult::Unsat => {}
    }
    Ok(Report { verdict: v, text, code })
}

fn parse_assign(spec: &str) -> Result<Assignment, CliError> {
    let mut out = Assignment::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (x, d) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("assignment entry `{part}` is not of the form x=d")))?;
        out.insert(Var::new(x.trim()), d.trim().to_string());
    }
    Ok(out)
}

fn check(a: CheckArgs) -> Result<Report, CliError> {
    let m = read_model(&read_input(&a.model)?).map_err(|e| CliError::Usage(format!("{}: {e}", a.model.display())))?;
    let phi = to_nnf(&read_formula(&a.formula)?);
    let sigma = parse_assign(&a.assign)?;
    let path = m.explain(&a.world, &sigma, &phi).map_err(|e| CliError::Usage(e.to_string()))?;
    let holds = path.is_none();
    let mut v = Verdict::new(if holds { "true" } else { "false" });
    v.world = Some(a.world.clone());
    v.assignment = Some(assignment_strings(&sigma));
    v.formula = Some(phi.to_string());
    let mut text = format!("{holds}\n");
    if let Some(steps) = path {
        for s in &steps {
            text.push_str(&format!("  {s}\n"));
        }
        v.notes = steps;
    }
    Ok(Report { verdict: v, text, code: 0 })
}

fn parse_bundles(spec: &str) -> Result<BundleSet, CliError> {
    let mut bs = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        bs.push(Bundle::parse(name).ok_or_else(|| CliError::Usage(format!("unknown bundle `{name}`")))?);
    }
    Ok(BundleSet::of(&bs))
}

fn classify_cmd(a: ClassifyArgs) -> Result<Report, CliError> {
    if let Some(path) = &a.formula {
        let phi = to_nnf(&read_formula(path)?);
        let mut v = Verdict::new("classified");
        v.formula = Some(phi.to_string());
        let mut lines = Vec::new();
        match bundles_used(&phi) {
            Some(bs) => lines.push(format!("bundled: {bs}")),
            None => lines.push("not bundled".to_string()),
        }
        match lbf_violation(&phi) {
            None => lines.push("LBF".to_string()),
            Some(why) => lines.push(format!("not LBF: {why}")),
        }
        lines.push(if in_abbabe(&phi) { "ABBABE" } else { "not ABBABE" }.to_string());
        let status = if in_lbf(&phi) {
            Some(classify_lbf())
        } else if is_bundled(&phi) {
            bundles_used(&phi).map(|bs| classify(bs, DomainRegime::Increasing))
        } else {
            None
        };
        if let Some(s) = &status {
            lines.push(format!("increasing domains: {s}"));
        }
        v.stats = Some(json!({
            "bundled": is_bundled(&phi),
            "bundles": bundles_used(&phi),
            "lbf": in_lbf(&phi),
            "abbabe": in_abbabe(&phi),
            "status": status,
        }));
        let text = lines.iter().map(|l| format!("{l}\n")).collect();
        v.notes = lines;
        return Ok(Report { verdict: v, text, code: 0 });
    }
    let bundles = parse_bundles(a.bundles.as_deref().unwrap_or_default())?;
    let regime = match a.domain.ok_or_else(|| CliError::Usage("--domain is required with --bundles".into()))? {
        Domain::Constant => DomainRegime::Constant,
        Domain::Increasing => DomainRegime::Increasing,
    };
    let status = classify(bundles, regime);
    let mut v = Verdict::new(&status.kind.to_string());
    v.stats = Some(json!({ "bundles": bundles, "regime": format!("{regime:?}").to_lowercase(), "status": status }));
    v.notes.push(status.note.clone());
    Ok(Report { verdict: v, text: format!("{status}\n"), code: 0 })
}

fn generate(a: GenerateArgs) -> Result<Report, CliError> {
    let tiling = || {
        a.tiling
            .as_deref()
            .ok_or_else(|| CliError::Usage("this family needs --tiling FILE".into()))
            .and_then(read_tiling_file)
    };
    let enc = |r: Result<RawFormula, encodings::EncodingError>| r.map_err(|e| CliError::Usage(e.to_string()));
    let mut sampler = Sampler::new(a.seed.unwrap_or_else(seed_from_env));
    let text = match a.family {
        Family::Delta => print(&encodings::delta_n(a.n)),
        Family::Ebba => print(&enc(encodings::encode_ebba(&tiling()?))?),
        Family::Abebbe => print(&enc(encodings::encode_abebbe(&tiling()?))?),
        Family::Phi1 => print(&encodings::phi1()),
        Family::Phi2 => print(&encodings::phi2()),
        Family::Phi3 => print(&encodings::phi3()),
        Family::AlphaN => print(&enc(encodings::alpha_n(a.n))?),
        Family::BetaNt => print(&enc(encodings::beta_nt(&tiling()?, a.n))?),
        Family::SampleLbf => {
            let lines: Vec<String> = (0..a.count).map(|_| print(&sampler.lbf(a.max_size).to_raw())).collect();
            lines.join("\n")
        }
        Family::SampleAbbabe => {
            let lines: Vec<String> = (0..a.count).map(|_| print(&sampler.abbabe(a.max_size).to_raw())).collect();
            lines.join("\n")
        }
    } + "\n";
    let mut v = Verdict::new("generated");
    if let Some(p) = &a.out {
        write_output(p, &text)?;
        v.notes.push(format!("written to {}", p.display()));
        v.formula = Some(text);
        return Ok(Report { verdict: v, text: String::new(), code: 0 });
    }
    v.formula = Some(text.clone());
    Ok(Report { verdict: v, text, code: 0 })
}

fn oracle_cmd(a: OracleArgs) -> Result<Report, CliError> {
    let phi = to_nnf(&read_formula(&a.formula)?);
    let exists = phi.count(&|f| matches!(f, Formula::Exists(..)));
    let bounds = SearchBounds::new(
        a.max_depth.unwrap_or_else(|| phi.modal_depth()),
        a.max_branching,
        a.max_domain.unwrap_or(phi.free_vars().len() + exists + 1),
        a.max_growth,
    );
    let start = Instant::now();
    let result = oracle::sat_bounded_with_ceiling(&phi, &bounds, a.ceiling).map_err(|e| match e {
        OracleError::TooLarge { .. } => CliError::Limit(e.to_string()),
        OracleError::EmptyRootDomain | OracleError::TooManyFreeVariables { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Internal(e.to_string()),
    })?;
    let stats = json!({
        "bounds": bounds,
        "estimate": estimate(&phi, &bounds),
        "wall_ms": start.elapsed().as_secs_f64() * 1000.0,
    });
    match result {
        OracleResult::Found { model, world, assignment } => {
            let mut v = Verdict::new("found");
            if let Some(p) = &a.model_out {
                write_output(p, &write_model(&model))?;
                v.model_path = Some(p.display().to_string());
            }
            let mut text = format!("found at {world}");
            if !assignment.is_empty() {
                text.push_str(&format!(" under {}", show_assignment(&assignment)));
            }
            text.push('\n');
            text.push_str(&model.to_string());
            v.world = Some(world);
            v.assignment = Some(assignment_strings(&assignment));
            v.model = Some(ModelJson::from_model(&model));
            v.stats = Some(stats);
            Ok(Report { verdict: v, text, code: 0 })
        }
        OracleResult::NoneWithinBounds(b) => {
            let mut v = Verdict::new("none-within-bounds");
            v.stats = Some(stats);
            let text = format!(
                "none within bounds (depth {}, branching {}, root domain {}, growth {})\n",
                b.max_depth, b.max_branching, b.max_root_domain, b.max_growth
            );
            Ok(Report { verdict: v, text, code: 0 })
        }
    }
}

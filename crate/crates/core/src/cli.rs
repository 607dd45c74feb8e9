//! Command-line front end. Every run is reproducible from its seed and flags,
//! and every output document echoes the configuration that produced it.
//!
//! Exit codes: 0 success, 1 a certificate or invariant failed, 2 bad input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::coherence_tree::{
    build_tree, generate_chain, minimal_horizon, schedule_for_tolerance, verify_tree, Certificate, CoherenceTree,
    DEFAULT_EPSILON, DEFAULT_J0,
};
use crate::derived_limits::{
    build_paper_model_with, flasque_check, lim1_tower, lim_tower, random_finite_ses, six_term_check, Lim1Verdict,
    SesTower, SixTermCase, Tower,
};
use crate::error::Error;
use crate::linalg::{op_norm, parse_matrix, unit_gaussian, CMatrix};
use crate::operator_lab::{ad_sandwich, dd_check, stratify, BlockStructure, SANDWICH_SLACK};
use crate::torus_metrics::{lij_bound_check, IndexSet, TorusElement};
use crate::weak_units::{
    build_tent_unit, epsilon_witness, interval_power_gap, power_gap, quasi_unitary_residual, weak_sandwich,
    Contraction, PositiveUnit,
};

pub const SEED_ENV: &str = "CORONA_LAB_SEED";
const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Parser)]
#[command(
    name = "corona-lab",
    version,
    about = "Certified finite-horizon constructions and checks"
)]
pub struct Cli {
    /// Master seed. The CORONA_LAB_SEED environment variable takes precedence.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the output document here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Blocks,
    Tent,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a coherent tree with all certificates.
    Tree {
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long, default_value_t = 100_000)]
        horizon: usize,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = DEFAULT_J0)]
        j0: usize,
        /// Number of schedule entries per successor step.
        #[arg(long, default_value_t = 8)]
        schedule_len: usize,
        /// Also certify the jump profile of every node.
        #[arg(long)]
        z_variant: bool,
    },
    /// Stratify a multiplier given as a matrix file, or a random one.
    Stratify {
        /// Matrix in the `re+imj` text format.
        file: Option<PathBuf>,
        /// Dimension of the random matrix used when no file is given.
        #[arg(long, default_value_t = 256)]
        dim: usize,
        #[arg(long, default_value_t = 4)]
        block_size: usize,
        /// Explicit comma-separated block sizes.
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
        #[arg(long, default_value_t = 64)]
        j_max: usize,
    },
    /// Fuzz the two-sided conjugation estimate and emit a CSV table.
    Sandwich {
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, value_enum, default_value_t = Model::Blocks)]
        model: Model,
        /// Random elements sampled per row.
        #[arg(long, default_value_t = 4)]
        samples: usize,
        /// Witness tolerance for the tent model.
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Corrupt the first row to exercise the failure path.
        #[arg(long)]
        self_test: bool,
    },
    /// Limits and derived limits of a tower or a short exact sequence of towers.
    Limits {
        /// JSON tower, or JSON sequence with `f`, `t`, `g`, `iota`, `sigma`.
        file: Option<PathBuf>,
        #[arg(long)]
        paper_model: bool,
        #[arg(long, default_value_t = 12)]
        depth: usize,
    },
    /// Run the invariant suites of every module.
    Verify {
        /// Smaller instances.
        #[arg(long)]
        fast: bool,
        /// Re-verify a tree document written by `tree --out`.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
}

/// Echoed into every output document.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub options: Value,
}

impl RunConfig {
    fn new(command: &'static str, seed: u64, cli: &Cli) -> Self {
        Self {
            command,
            seed,
            horizon: None,
            depth: None,
            epsilon: None,
            j0: None,
            dim: None,
            k_max: None,
            workers: cli.workers,
            out: cli.out.clone(),
            options: Value::Null,
        }
    }
}

/// Failure carried to the exit code.
#[derive(Debug)]
enum Failure {
    Input(Value),
    Certified(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let payload = error_payload(&e);
        if exit_code(&e) == 1 {
            Failure::Certified(payload)
        } else {
            Failure::Input(payload)
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CertificateFailure(_)
        | Error::WitnessNotFound { .. }
        | Error::NoStratification
        | Error::ConstructionError(_) => 1,
        _ => 2,
    }
}

pub fn error_payload(e: &Error) -> Value {
    let kind = format!("{e:?}")
        .split(['{', '(', ' '])
        .next()
        .unwrap_or_default()
        .to_string();
    let mut v = json!({ "error": kind, "message": e.to_string() });
    match e {
        Error::HorizonTooSmall { have, need } => {
            v["have"] = json!(have);
            v["need"] = json!(need);
        }
        Error::WitnessNotFound { i, j, best } => {
            v["pair"] = json!([i, j]);
            v["best"] = json!(best);
        }
        _ => {}
    }
    v
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    run_with_io(args, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with_io(args: impl IntoIterator<Item = OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let seed = match std::env::var(SEED_ENV) {
        Ok(s) => match s.trim().parse() {
            Ok(v) => v,
            Err(_) => {
                let _ = writeln!(
                    stderr,
                    "{}",
                    json!({ "error": "InvalidInput", "message": format!("{SEED_ENV}={s:?} is not a u64") })
                );
                return 2;
            }
        },
        Err(_) => cli.seed.unwrap_or(DEFAULT_SEED),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(
                stderr,
                "{}",
                json!({ "error": "InvalidInput", "message": e.to_string() })
            );
            return 2;
        }
    };
    let start = Instant::now();
    let (outcome, buffer) = pool.install(|| {
        let mut buffer = Vec::new();
        (dispatch(&cli, seed, &mut buffer), buffer)
    });
    let _ = stdout.write_all(&buffer);
    let _ = writeln!(
        stderr,
        "{}",
        json!({ "elapsed_seconds": start.elapsed().as_secs_f64() })
    );
    match outcome {
        Ok(()) => 0,
        Err(Failure::Certified(v)) => {
            let _ = writeln!(stderr, "{v}");
            1
        }
        Err(Failure::Input(v)) => {
            let _ = writeln!(stderr, "{v}");
            2
        }
    }
}

fn dispatch(cli: &Cli, seed: u64, stdout: &mut dyn Write) -> Outcome {
    match &cli.command {
        Command::Tree {
            depth,
            horizon,
            epsilon,
            j0,
            schedule_len,
            z_variant,
        } => cmd_tree(
            cli,
            seed,
            *depth,
            *horizon,
            *epsilon,
            *j0,
            *schedule_len,
            *z_variant,
            stdout,
        ),
        Command::Stratify {
            file,
            dim,
            block_size,
            blocks,
            j_max,
        } => cmd_stratify(
            cli,
            seed,
            file.as_deref(),
            *dim,
            *block_size,
            blocks.clone(),
            *j_max,
            stdout,
        ),
        Command::Sandwich {
            rows,
            model,
            samples,
            epsilon,
            self_test,
        } => cmd_sandwich(cli, seed, *rows, *model, *samples, *epsilon, *self_test, stdout),
        Command::Limits {
            file,
            paper_model,
            depth,
        } => cmd_limits(cli, seed, file.as_deref(), *paper_model, *depth, stdout),
        Command::Verify { fast, certificate } => cmd_verify(cli, seed, *fast, certificate.as_deref(), stdout),
    }
}

fn emit(cli: &Cli, text: &str, stdout: &mut dyn Write) -> Outcome {
    let io = |e: std::io::Error| Failure::Input(json!({ "error": "Io", "message": e.to_string() }));
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(io),
        None => stdout.write_all(text.as_bytes()).map_err(io),
    }
}

fn to_json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("documents serialize");
    s.push('\n');
    s
}

fn read_file(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(json!({ "error": "Io", "message": format!("{}: {e}", path.display()) })))
}

#[allow(clippy::too_many_arguments)]
fn cmd_tree(
    cli: &Cli,
    seed: u64,
    depth: usize,
    horizon: usize,
    epsilon: f64,
    j0: usize,
    schedule_len: usize,
    z_variant: bool,
    stdout: &mut dyn Write,
) -> Outcome {
    let mut config = RunConfig::new("tree", seed, cli);
    config.depth = Some(depth);
    config.horizon = Some(horizon);
    config.epsilon = Some(epsilon);
    config.j0 = Some(j0);
    config.options = json!({ "z_variant": z_variant, "schedule_len": schedule_len });
    if !(epsilon > 0.0 && epsilon < 2.0) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0, 2), got {epsilon}")).into());
    }
    let schedule = schedule_for_tolerance(epsilon, schedule_len);
    let need = minimal_horizon(depth, &schedule);
    if horizon < need {
        return Err(Error::HorizonTooSmall { have: horizon, need }.into());
    }
    let chain = generate_chain(depth, horizon, &schedule, seed)?;
    let tree = build_tree(&chain, depth, z_variant, epsilon, j0)?;
    let verification = verify_tree(&tree)?;
    let summary = tree_summary(&tree);
    let doc = if cli.out.is_some() {
        json!({ "config": config, "schedule": schedule, "verification": verification, "tree": tree })
    } else {
        json!({ "config": config, "schedule": schedule, "verification": verification, "summary": summary })
    };
    // full trees carry every phase, so they are written compactly
    let text = if cli.out.is_some() {
        serde_json::to_string(&doc).expect("documents serialize") + "\n"
    } else {
        to_json(&doc)
    };
    emit(cli, &text, stdout)?;
    if !verification.passed() {
        return Err(Failure::Certified(
            json!({ "error": "CertificateFailure", "failures": verification.failures }),
        ));
    }
    Ok(())
}

fn tree_summary(tree: &CoherenceTree) -> Value {
    let mut coherence = 0;
    let mut divergence = Vec::new();
    let mut jumps = 0;
    for c in &tree.certificates {
        match c {
            Certificate::Coherence { .. } => coherence += 1,
            Certificate::Divergence {
                left, right, blocks, ..
            } => divergence.push(json!({
                "left": left,
                "right": right,
                "blocks": blocks.len(),
                "max_delta": blocks.iter().map(|b| b.delta).fold(0.0, f64::max),
            })),
            Certificate::JumpBound { .. } => jumps += 1,
        }
    }
    json!({
        "leaves": tree.leaves().iter().map(|n| n.label.clone()).collect::<Vec<_>>(),
        "coherence_certificates": coherence,
        "jump_certificates": jumps,
        "divergence": divergence,
        "limit_stages": tree.limits.iter().map(|s| json!({
            "leaf": s.leaf,
            "x_inf_points": s.sparsification.x_inf.elements().len(),
            "checked_blocks": s.sparsification.checks.len(),
        })).collect::<Vec<_>>(),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_stratify(
    cli: &Cli,
    seed: u64,
    file: Option<&Path>,
    dim: usize,
    block_size: usize,
    blocks: Option<Vec<usize>>,
    j_max: usize,
    stdout: &mut dyn Write,
) -> Outcome {
    let m: CMatrix = match file {
        Some(path) => parse_matrix(&read_file(path)?)?,
        None => unit_gaussian(&mut ChaCha8Rng::seed_from_u64(seed), dim, dim),
    };
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())).into());
    }
    let structure = match blocks {
        Some(sizes) => BlockStructure::new(sizes)?,
        None => {
            if block_size == 0 || !m.nrows().is_multiple_of(block_size) {
                return Err(Error::InvalidInput(format!(
                    "block size {block_size} does not divide dimension {}",
                    m.nrows()
                ))
                .into());
            }
            BlockStructure::uniform(m.nrows() / block_size, block_size)?
        }
    };
    let mut config = RunConfig::new("stratify", seed, cli);
    config.dim = Some(m.nrows());
    config.options = json!({
        "file": file.map(|p| p.display().to_string()),
        "blocks": structure.sizes(),
        "j_max": j_max,
    });
    let w = stratify(&m, &structure, j_max)?;
    let band_exact = dd_check(&w.d(), &w.x, &structure)?;
    let tolerance = 1e-12 * op_norm(&m).max(1.0);
    let doc = json!({
        "config": config,
        "witness": w.summary(),
        "band_exact": band_exact,
        "tail_violations": w.tail_violations(),
        "residual_tolerance": tolerance,
    });
    emit(cli, &to_json(&doc), stdout)?;
    if !band_exact || !w.tail_violations().is_empty() || w.residual > tolerance {
        return Err(Failure::Certified(
            json!({ "error": "CertificateFailure", "message": "stratification witness failed" }),
        ));
    }
    Ok(())
}

/// One fuzzed sandwich instance.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichRow {
    pub index: usize,
    pub blocks: usize,
    pub set_size: usize,
    pub delta: f64,
    pub lower: f64,
    pub sampled: f64,
    pub upper: f64,
    /// Allowed shortfall of the lower witness below `Δ`.
    pub slack: f64,
}

impl SandwichRow {
    pub fn holds(&self) -> bool {
        self.delta - self.slack - SANDWICH_SLACK <= self.lower
            && self.lower <= self.upper + SANDWICH_SLACK
            && self.sampled <= self.upper + SANDWICH_SLACK
    }
}

fn row_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> IndexSet {
    loop {
        let picked: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if !picked.is_empty() {
            return IndexSet::new(picked).expect("distinct sorted indices");
        }
    }
}

/// Fuzzed instance `index` of the block-projection sandwich.
pub fn block_sandwich_row(seed: u64, index: usize, samples: usize) -> crate::Result<SandwichRow> {
    let mut rng = row_rng(seed, index);
    let count = rng.random_range(1..=6usize);
    let sizes: Vec<usize> = (0..count).map(|_| rng.random_range(1..=4)).collect();
    let blocks = BlockStructure::new(sizes)?;
    let phases: Vec<f64> = (0..count)
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    let alpha = TorusElement::from_fn(count, |i| phases[i])?;
    let set = random_subset(&mut rng, count);
    let r = ad_sandwich(&alpha, &blocks, &set, samples, rng.random())?;
    Ok(SandwichRow {
        index,
        blocks: count,
        set_size: set.len(),
        delta: r.delta,
        lower: r.lower_witness,
        sampled: r.sampled_max,
        upper: r.upper,
        slack: 0.0,
    })
}

/// Fuzzed instance `index` of the tent-unit sandwich.
pub fn tent_sandwich_row(seed: u64, index: usize, samples: usize, epsilon: f64) -> crate::Result<SandwichRow> {
    let mut rng = row_rng(seed, index);
    let count = rng.random_range(2..=8usize);
    let unit = PositiveUnit::from_tents(&build_tent_unit(count, 0.25)?);
    let phases: Vec<f64> = (0..count)
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    let alpha = TorusElement::from_fn(count, |i| phases[i])?;
    let set = random_subset(&mut rng, count);
    let r = weak_sandwich(&alpha, &unit, &set, epsilon, samples, rng.random())?;
    Ok(SandwichRow {
        index,
        blocks: count,
        set_size: set.len(),
        delta: r.delta,
        lower: r.lower_witness,
        sampled: r.sampled_max,
        upper: r.upper,
        slack: r.probe_slack,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_sandwich(
    cli: &Cli,
    seed: u64,
    rows: usize,
    model: Model,
    samples: usize,
    epsilon: f64,
    self_test: bool,
    stdout: &mut dyn Write,
) -> Outcome {
    let mut config = RunConfig::new("sandwich", seed, cli);
    config.epsilon = (model == Model::Tent).then_some(epsilon);
    config.options = json!({ "rows": rows, "model": model, "samples": samples, "self_test": self_test });
    let mut table: Vec<SandwichRow> = (0..rows)
        .into_par_iter()
        .map(|i| match model {
            Model::Blocks => block_sandwich_row(seed, i, samples),
            Model::Tent => tent_sandwich_row(seed, i, samples, epsilon),
        })
        .collect::<crate::Result<_>>()?;
    if self_test {
        if let Some(first) = table.first_mut() {
            first.sampled = first.upper + 1.0;
        }
    }
    let mut csv = format!(
        "# config: {}\n",
        serde_json::to_string(&config).expect("config serializes")
    );
    csv.push_str("index,blocks,set_size,delta,lower,sampled,upper,holds\n");
    for r in &table {
        csv.push_str(&format!(
            "{},{},{},{:?},{:?},{:?},{:?},{}\n",
            r.index,
            r.blocks,
            r.set_size,
            r.delta,
            r.lower,
            r.sampled,
            r.upper,
            r.holds()
        ));
    }
    emit(cli, &csv, stdout)?;
    let violations: Vec<usize> = table.iter().filter(|r| !r.holds()).map(|r| r.index).collect();
    if !violations.is_empty() {
        return Err(Failure::Certified(
            json!({ "error": "CertificateFailure", "violating_rows": violations }),
        ));
    }
    Ok(())
}

fn cmd_limits(
    cli: &Cli,
    seed: u64,
    file: Option<&Path>,
    paper_model: bool,
    depth: usize,
    stdout: &mut dyn Write,
) -> Outcome {
    let mut config = RunConfig::new("limits", seed, cli);
    config.depth = Some(depth);
    config.options = json!({ "file": file.map(|p| p.display().to_string()), "paper_model": paper_model });
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be positive".into()).into());
    }
    let invalid = |e: serde_json::Error| Failure::Input(json!({ "error": "InvalidInput", "message": e.to_string() }));
    let ses: Option<SesTower>;
    let tower: Option<Tower>;
    match (file, paper_model) {
        (None, true) => {
            ses = Some(build_paper_model_with(depth)?);
            tower = None;
        }
        (Some(path), false) => {
            let value: Value = serde_json::from_str(&read_file(path)?).map_err(invalid)?;
            if value.get("f").is_some() {
                ses = Some(serde_json::from_value(value).map_err(invalid)?);
                tower = None;
            } else {
                ses = None;
                tower = Some(serde_json::from_value(value).map_err(invalid)?);
            }
        }
        _ => return Err(Error::InvalidInput("give exactly one of a file or --paper-model".into()).into()),
    }
    if let Some(ses) = ses {
        let report = six_term_check(&ses, depth)?;
        emit(cli, &to_json(&json!({ "config": config, "six_term": report })), stdout)?;
        if !report.holds {
            return Err(Failure::Certified(
                json!({ "error": "CertificateFailure", "message": report.detail }),
            ));
        }
        return Ok(());
    }
    let tower = tower.expect("one input was read");
    let lim = lim_tower(&tower, depth)?;
    let lim1 = lim1_tower(&tower, depth)?;
    let flasque = flasque_check(&tower)?;
    let doc = json!({ "config": config, "lim": lim, "lim1": lim1, "flasque": flasque });
    emit(cli, &to_json(&doc), stdout)?;
    if flasque && lim1.verdict != Lim1Verdict::Zero {
        return Err(Failure::Certified(
            json!({ "error": "CertificateFailure", "message": "flasque tower with nonzero lim^1" }),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub checked: usize,
    pub detail: String,
}

fn suite(name: &'static str, f: impl FnOnce() -> crate::Result<(usize, Vec<String>)>) -> SuiteResult {
    match f() {
        Ok((checked, failures)) => SuiteResult {
            name,
            passed: failures.is_empty(),
            checked,
            detail: if failures.is_empty() {
                "ok".into()
            } else {
                failures.join("; ")
            },
        },
        Err(e) => SuiteResult {
            name,
            passed: false,
            checked: 0,
            detail: e.to_string(),
        },
    }
}

/// Runs every invariant suite; `fast` shrinks the instances.
pub fn verify_suites(seed: u64, fast: bool) -> Vec<SuiteResult> {
    let scale = |full: usize, small: usize| if fast { small } else { full };
    vec![
        suite("torus_metrics", || {
            let n = scale(20_000, 2_000);
            let failures: Vec<String> = (0..n)
                .into_par_iter()
                .map(|k| -> crate::Result<Option<String>> {
                    let mut rng = row_rng(seed, k);
                    let h = rng.random_range(2..=24usize);
                    let alpha = TorusElement::from_fn(h, |_| rng.random_range(-4.0..4.0))?;
                    let mut rng2 = row_rng(seed ^ 0x5eed, k);
                    let beta = TorusElement::from_fn(h, |_| rng2.random_range(-4.0..4.0))?;
                    let i_set = random_subset(&mut rng2, h);
                    let j_set = random_subset(&mut rng2, h);
                    let (i0, j0) = (i_set.indices()[0], j_set.indices()[0]);
                    let r = lij_bound_check(&alpha, &beta, &i_set, &j_set, i0, j0)?;
                    Ok((!r.holds).then(|| format!("instance {k}: {} > {}", r.lhs, r.rhs)))
                })
                .collect::<crate::Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            Ok((n, failures))
        }),
        suite("coherence_tree", || {
            let (depth, horizon) = if fast { (2, 40_000) } else { (3, 100_000) };
            let schedule = schedule_for_tolerance(DEFAULT_EPSILON, 8);
            let chain = generate_chain(depth, horizon, &schedule, seed)?;
            let mut checked = 0;
            let mut failures = Vec::new();
            for z in [false, true] {
                let tree = build_tree(&chain, depth, z, DEFAULT_EPSILON, DEFAULT_J0)?;
                let v = verify_tree(&tree)?;
                checked += v.certificates_checked;
                failures.extend(v.failures);
            }
            Ok((checked, failures))
        }),
        suite("operator_lab", || {
            let n = scale(10, 2);
            let dim = scale(256, 128);
            let blocks = BlockStructure::uniform(dim / 4, 4)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut failures = Vec::new();
            for k in 0..n {
                let m = unit_gaussian(&mut rng, dim, dim);
                let w = stratify(&m, &blocks, 64)?;
                if w.residual > 1e-12 || !dd_check(&w.d(), &w.x, &blocks)? || !w.tail_violations().is_empty() {
                    failures.push(format!(
                        "matrix {k}: residual {} tails {:?}",
                        w.residual,
                        w.tail_violations()
                    ));
                }
            }
            let rows = scale(400, 100);
            let table: Vec<SandwichRow> = (0..rows)
                .into_par_iter()
                .map(|i| block_sandwich_row(seed, i, 4))
                .collect::<crate::Result<_>>()?;
            failures.extend(
                table
                    .iter()
                    .filter(|r| !r.holds())
                    .map(|r| format!("sandwich row {}", r.index)),
            );
            Ok((n + rows, failures))
        }),
        suite("weak_units", || {
            let unit = PositiveUnit::from_tents(&build_tent_unit(50, 0.25)?);
            let top = scale(10, 4);
            let mut failures = Vec::new();
            let mut checked = 0;
            for i in 0..=top {
                for j in 0..=top {
                    checked += 1;
                    if !epsilon_witness(&unit, i, j, 0.1)?.norms.certified() {
                        failures.push(format!("witness ({i}, {j})"));
                    }
                }
            }
            for k in 1..=8 {
                let g = power_gap(Contraction::FullInterval, k)?;
                if (g - interval_power_gap(k)).abs() > 1e-12 {
                    failures.push(format!("power gap at {k}"));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in 0..scale(100, 20) {
                let rate = rng.random_range(0.2..1.5);
                let offset = rng.random_range(-3.0..3.0);
                let alpha = TorusElement::from_fn(50, |i| offset + rate * ((i + 1) as f64).ln())?;
                for n in 0..49 {
                    checked += 1;
                    if !quasi_unitary_residual(&alpha, &unit, n)?.holds() {
                        failures.push(format!("quasi-unitary instance {t} at {n}"));
                    }
                }
            }
            let rows = scale(100, 20);
            let table: Vec<SandwichRow> = (0..rows)
                .into_par_iter()
                .map(|i| tent_sandwich_row(seed, i, 2, 0.01))
                .collect::<crate::Result<_>>()?;
            failures.extend(
                table
                    .iter()
                    .filter(|r| !r.holds())
                    .map(|r| format!("tent sandwich row {}", r.index)),
            );
            Ok((checked + rows, failures))
        }),
        suite("derived_limits", || {
            let mut failures = Vec::new();
            let report = six_term_check(&build_paper_model_with(12)?, 12)?;
            if !report.holds || report.case != SixTermCase::DiagonalNotSurjective {
                failures.push(format!("2-adic model: {}", report.detail));
            }
            let n = scale(50, 10);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in 0..n {
                let ses = random_finite_ses(&mut rng, 4)?;
                let r = six_term_check(&ses, 4)?;
                if !r.holds || r.lim1_f.verdict != Lim1Verdict::Zero {
                    failures.push(format!("random sequence {k}"));
                }
            }
            Ok((n + 1, failures))
        }),
    ]
}

fn cmd_verify(cli: &Cli, seed: u64, fast: bool, certificate: Option<&Path>, stdout: &mut dyn Write) -> Outcome {
    let mut config = RunConfig::new("verify", seed, cli);
    config.options = json!({ "fast": fast, "certificate": certificate.map(|p| p.display().to_string()) });
    if let Some(path) = certificate {
        let text = read_file(path)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Input(json!({ "error": "InvalidInput", "message": e.to_string() })))?;
        let tree_value = value.get("tree").cloned().unwrap_or(value);
        // a document that no longer parses as a tree counts as corrupted
        let verification = match serde_json::from_value::<CoherenceTree>(tree_value) {
            Ok(tree) => verify_tree(&tree)?,
            Err(e) => crate::coherence_tree::TreeVerification {
                certificates_checked: 0,
                limit_blocks_checked: 0,
                failures: vec![format!("document does not describe a tree: {e}")],
            },
        };
        emit(
            cli,
            &to_json(&json!({ "config": config, "verification": verification })),
            stdout,
        )?;
        if !verification.passed() {
            return Err(Failure::Certified(
                json!({ "error": "CertificateFailure", "failures": verification.failures }),
            ));
        }
        return Ok(());
    }
    let results = verify_suites(seed, fast);
    let passed = results.iter().all(|r| r.passed);
    emit(
        cli,
        &to_json(&json!({ "config": config, "passed": passed, "suites": results })),
        stdout,
    )?;
    if !passed {
        let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        return Err(Failure::Certified(
            json!({ "error": "CertificateFailure", "failed_suites": failed }),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("corona-lab")
            .chain(args.iter().copied())
            .map(OsString::from);
        let code = run_with_io(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn exit_codes_for_errors() {
        assert_eq!(exit_code(&Error::HorizonTooSmall { have: 1, need: 2 }), 2);
        assert_eq!(exit_code(&Error::CertificateFailure("x".into())), 1);
        let p = error_payload(&Error::HorizonTooSmall { have: 1, need: 2 });
        assert_eq!(p["error"], "HorizonTooSmall");
        assert_eq!(p["need"], 2);
    }

    #[test]
    fn unknown_flag_is_an_input_error() {
        assert_eq!(run_args(&["tree", "--bogus"]).0, 2);
        assert_eq!(run_args(&["--help"]).0, 0);
    }

    #[test]
    fn small_sandwich_sweep() {
        let (code, out, _) = run_args(&["sandwich", "--rows", "20"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 22);
        let (code, _, err) = run_args(&["sandwich", "--rows", "3", "--self-test"]);
        assert_eq!(code, 1);
        assert!(err.contains("violating_rows"));
    }

    #[test]
    fn row_streams_are_independent() {
        let a = block_sandwich_row(1, 0, 2).unwrap();
        let b = block_sandwich_row(1, 1, 2).unwrap();
        let again = block_sandwich_row(1, 0, 2).unwrap();
        assert_eq!(a.delta, again.delta);
        assert!(a.delta != b.delta || a.blocks != b.blocks);
    }
}

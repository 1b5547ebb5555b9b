//! Command-line driver for experiment design, estimator simulation under
//! network interference, distributional verification, and worst-case
//! design LPs.
//!
//! Exit codes: 0 on success, 2 on usage errors, 3 on model or domain
//! errors, 4 when a verification check fails.

use clap::{Parser, Subcommand, ValueEnum};
use rct_core::designs::{
    imbalance_probability, BlockSpec, DesignSampler, GswConfig, GswDesign, IidDesign,
    PermutedBlockDesign, RandomAllocationDesign,
};
use rct_core::estimation::{tau_net, tau_true, PotentialOutcomes};
use rct_core::interference::{
    components, enumerate_bernoulli_realizations, enumerate_error_moments,
    exact_network_variance, k_tensor, per_component_variance, simulate_observed, DesignMoments,
    GraphModel,
};
use rct_core::numerics::{self, Matrix};
use rct_core::report::RunReport;
use rct_core::rng;
use rct_core::verification::{
    eigenvalue_sum_check, estimate_cov, estimate_transformed_cov, gswd_variance_bound_check,
    lambda_max_slack, loewner_check, loewner_slack, projection_matrix, ridge_identity_check,
    Verdict,
};
use rct_core::worstcase::{
    brute_force_worst_case, build_lp_with, export_lp, solve_lp, validate_lp_text, TripleSign,
    MAX_BRUTE_UNITS, MAX_LP_UNITS,
};
use rand::Rng;
use serde::Deserialize;
use serde_json::json;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "rct", version, about = "Randomized experiment designs and estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw assignments from a design, one comma-separated row per sample.
    Design(DesignArgs),
    /// Monte-Carlo estimator distribution under an interference model.
    Simulate(SimulateArgs),
    /// Run distributional checks and report verdicts.
    Verify(VerifyArgs),
    /// Solve the worst-case design LP for a small interference model.
    Lp(LpArgs),
    /// Tabulate the balance tail probability over a range of sizes.
    Imbalance(ImbalanceArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Iid,
    Allocation,
    Block,
    Gsw,
}

impl Scheme {
    fn name(self) -> &'static str {
        match self {
            Scheme::Iid => "iid",
            Scheme::Allocation => "allocation",
            Scheme::Block => "block",
            Scheme::Gsw => "gsw",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Estimator {
    Ht,
    Net,
}

impl Estimator {
    fn name(self) -> &'static str {
        match self {
            Estimator::Ht => "ht",
            Estimator::Net => "net",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Spectral,
    Gswd,
    Network,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SignConvention {
    Ijk,
    Ikk,
}

#[derive(clap::Args)]
struct DesignArgs {
    #[arg(long, value_enum)]
    scheme: Scheme,
    /// Population size; inferred from --covariates or --blocks when omitted.
    #[arg(long)]
    n: Option<usize>,
    /// Headerless CSV, one row of covariates per unit (gsw only).
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Robustness weight in (0, 1] (gsw only).
    #[arg(long)]
    phi: Option<f64>,
    /// JSON list of blocks of 0-based unit indices (block only).
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Interference model as JSON.
    #[arg(long)]
    graph: PathBuf,
    /// CSV with columns `a` and `b`, one row per unit.
    #[arg(long)]
    outcomes: PathBuf,
    #[arg(long, value_enum)]
    design_scheme: Scheme,
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    replicates: usize,
    #[arg(long, value_enum, default_value_t = Estimator::Net)]
    estimator: Estimator,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    phi: f64,
    #[arg(long, default_value_t = 20_000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; verdicts also print to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct LpArgs {
    /// Interference model as JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Write the LP as plain text and re-validate its structure.
    #[arg(long)]
    export: Option<PathBuf>,
    /// Sign product weighting the odd-moment coefficient term.
    #[arg(long, value_enum, default_value_t = SignConvention::Ijk)]
    sign_convention: SignConvention,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ImbalanceArgs {
    /// Imbalance threshold as a fraction of the population in one arm.
    #[arg(long)]
    t: f64,
    #[arg(long)]
    n_from: usize,
    #[arg(long)]
    n_to: usize,
    #[arg(long, default_value_t = 1)]
    step: usize,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Domain(m) => m,
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure::Domain(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Design(args) => run_design(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Verify(args) => run_verify(args),
        Command::Lp(args) => run_lp(args),
        Command::Imbalance(args) => run_imbalance(args),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(domain),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_covariates(path: &PathBuf) -> Result<Matrix, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(domain)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(domain)?;
        let row: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| domain(format!("covariate row {}: {e}", rows.len() + 1)))?);
    }
    if rows.is_empty() {
        return Err(domain("covariates file has no rows"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(domain("covariate rows have inconsistent lengths"));
    }
    Ok(Matrix::from_rows(&rows))
}

#[derive(Deserialize)]
struct OutcomeRow {
    a: f64,
    b: f64,
}

fn read_outcomes(path: &PathBuf) -> Result<PotentialOutcomes, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(domain)?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for row in reader.deserialize::<OutcomeRow>() {
        let row = row.map_err(|e| domain(format!("outcomes file: {e}")))?;
        a.push(row.a);
        b.push(row.b);
    }
    PotentialOutcomes::new(a, b).map_err(domain)
}

fn load_model(path: &PathBuf) -> Result<GraphModel, Failure> {
    let text = fs::read_to_string(path).map_err(domain)?;
    GraphModel::from_json_str(&text).map_err(domain)
}

fn build_sampler(
    scheme: Scheme,
    n: Option<usize>,
    covariates: &Option<PathBuf>,
    phi: Option<f64>,
    blocks: &Option<String>,
) -> Result<Box<dyn DesignSampler>, Failure> {
    match scheme {
        Scheme::Iid => {
            let n = n.ok_or_else(|| usage("--n is required for scheme iid"))?;
            if n == 0 {
                return Err(domain("population must be positive"));
            }
            Ok(Box::new(IidDesign { n }))
        }
        Scheme::Allocation => {
            let n = n.ok_or_else(|| usage("--n is required for scheme allocation"))?;
            Ok(Box::new(RandomAllocationDesign::new(n).map_err(domain)?))
        }
        Scheme::Block => {
            let text =
                blocks.as_ref().ok_or_else(|| usage("--blocks is required for scheme block"))?;
            let parsed: Vec<Vec<usize>> = serde_json::from_str(text)
                .map_err(|e| usage(format!("--blocks must be a JSON list of index lists: {e}")))?;
            let inferred = parsed.iter().flatten().max().map_or(0, |&m| m + 1);
            let n = n.unwrap_or(inferred);
            let spec = BlockSpec::new(n, parsed).map_err(domain)?;
            Ok(Box::new(PermutedBlockDesign::new(spec).map_err(domain)?))
        }
        Scheme::Gsw => {
            let path = covariates
                .as_ref()
                .ok_or_else(|| usage("--covariates is required for scheme gsw"))?;
            let x = read_covariates(path)?;
            if let Some(n) = n {
                if n != x.rows() {
                    return Err(usage(format!(
                        "--n is {n} but the covariates file has {} rows",
                        x.rows()
                    )));
                }
            }
            let phi = phi.ok_or_else(|| usage("--phi is required for scheme gsw"))?;
            Ok(Box::new(GswDesign::new(GswConfig::new(phi, x).map_err(domain)?)))
        }
    }
}

fn run_design(args: DesignArgs) -> Result<ExitCode, Failure> {
    if args.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let sampler = build_sampler(args.scheme, args.n, &args.covariates, args.phi, &args.blocks)?;
    let mut text = String::new();
    for k in 0..args.samples {
        let z = sampler.sample(&mut rng::stream(args.seed, k as u64));
        let row: Vec<String> = (0..z.len()).map(|i| format!("{}", z.sign(i) as i64)).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_or_print(&args.out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run_simulate(args: SimulateArgs) -> Result<ExitCode, Failure> {
    let started = Instant::now();
    if args.replicates < 2 {
        return Err(usage("--replicates must be at least 2"));
    }
    let model = load_model(&args.graph)?;
    let po = read_outcomes(&args.outcomes)?;
    let n = model.n();
    if po.len() != n {
        return Err(domain(format!(
            "outcomes file has {} rows but the graph has {n} units",
            po.len()
        )));
    }
    let sampler =
        build_sampler(args.design_scheme, Some(n), &args.covariates, args.phi, &args.blocks)?;
    let adjacency = model.expected_adjacency();
    let truth = tau_true(&po);
    let mut estimates = Vec::with_capacity(args.replicates);
    // Streams 2r and 2r + 1 keep the assignment and contamination draws of
    // replicate r identical across estimator choices.
    for rep in 0..args.replicates {
        let z = sampler.sample(&mut rng::stream(args.seed, 2 * rep as u64));
        let y_prime =
            simulate_observed(&po, &z, &model, &mut rng::stream(args.seed, 2 * rep as u64 + 1))
                .map_err(domain)?;
        let est = match args.estimator {
            Estimator::Ht => 2.0 / n as f64 * z.dot(&y_prime),
            Estimator::Net => tau_net(&y_prime, &z, &adjacency).map_err(domain)?,
        };
        estimates.push(est);
    }
    let r = args.replicates as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let se = (variance / r).sqrt();
    let mut report = RunReport::new(json!({
        "command": "simulate",
        "graph": args.graph.display().to_string(),
        "outcomes": args.outcomes.display().to_string(),
        "design_scheme": args.design_scheme.name(),
        "estimator": args.estimator.name(),
        "replicates": args.replicates,
        "seed": args.seed,
    }));
    report.push_summary("tau_true", truth);
    report.push_summary("estimate_mean", mean);
    report.push_summary("estimate_variance", variance);
    report.push_summary("se_of_mean", se);
    report.push_summary("bias", mean - truth);
    if se > 0.0 {
        report.push_summary("bias_z", (mean - truth) / se);
    }
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    let text = report.to_json_pretty().map_err(domain)? + "\n";
    write_or_print(&args.out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn random_covariates(n: usize, d: usize, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, 0);
    Matrix::from_fn(n, d, |_, _| r.random_range(-1.5..1.5))
}

fn spectral_suite(args: &VerifyArgs) -> Result<Vec<Verdict>, Failure> {
    let x = random_covariates(args.n, args.d, args.seed);
    let cfg = GswConfig::new(args.phi, x).map_err(domain)?;
    let walk = cfg.walk_matrix();
    let design = GswDesign::new(cfg);
    let mut verdicts = Vec::new();
    let transformed = estimate_transformed_cov(&design, &walk, args.replicates, args.seed + 1);
    verdicts.push(
        loewner_check(
            &transformed.cov,
            &projection_matrix(&walk),
            100,
            loewner_slack(args.replicates),
            args.seed + 2,
        )
        .map_err(domain)?,
    );
    let est = estimate_cov(&design, args.replicates, args.seed + 3);
    verdicts.push(eigenvalue_sum_check(&est));
    let top = numerics::sym_eigen(&est.cov.symmetrized()).map_err(domain)?.values[0];
    verdicts.push(Verdict::new(
        "assignment-covariance-spectral-cap",
        top,
        1.0 / args.phi + lambda_max_slack(args.replicates),
        format!(
            "largest covariance eigenvalue over {} replicates at phi = {}",
            args.replicates, args.phi
        ),
    ));
    Ok(verdicts)
}

fn gswd_suite(args: &VerifyArgs) -> Result<Vec<Verdict>, Failure> {
    let mut verdicts = Vec::new();
    let mut worst = 0.0f64;
    let mut all_passed = true;
    for i in 0..20 {
        let mut r = rng::stream(args.seed, 100 + i);
        let n = r.random_range(4..12);
        let d = r.random_range(1..4);
        let phi = r.random_range(0.1..0.9);
        let x = Matrix::from_fn(n, d, |_, _| r.random_range(-2.0..2.0));
        let mu: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let verdict = ridge_identity_check(&mu, &x, phi).map_err(domain)?;
        worst = worst.max(verdict.statistic);
        all_passed &= verdict.passed;
    }
    let mut ridge = Verdict::new(
        "ridge-identity-worst-of-20",
        worst,
        1e-8,
        "largest relative gap between the two ridge evaluations".to_string(),
    );
    ridge.passed &= all_passed;
    verdicts.push(ridge);

    let x = random_covariates(args.n, args.d, args.seed + 200);
    let cfg = GswConfig::new(args.phi, x.clone()).map_err(domain)?;
    let mut r = rng::stream(args.seed, 201);
    let beta: Vec<f64> = (0..args.d).map(|_| r.random_range(-1.0..1.0)).collect();
    let mu_in = x.matvec(&beta);
    let probe: Vec<f64> = (0..args.n).map(|_| r.random_range(-2.0..2.0)).collect();
    let coef = numerics::least_squares(&x, &probe).map_err(domain)?;
    let fit = x.matvec(&coef);
    let mu_perp: Vec<f64> = probe.iter().zip(&fit).map(|(p, f)| p - f).collect();
    for (mu, tag) in [(mu_in, "in-span"), (mu_perp, "orthogonal")] {
        let mut verdict = gswd_variance_bound_check(&cfg, &mu, args.replicates, args.seed + 202);
        verdict.name = format!("{}-{tag}", verdict.name);
        verdicts.push(verdict);
    }
    Ok(verdicts)
}

fn network_suite() -> Result<Vec<Verdict>, Failure> {
    let p = Matrix::from_rows(&[
        vec![0.0, 0.6, 0.0],
        vec![0.3, 0.0, 0.5],
        vec![0.0, 0.4, 0.0],
    ]);
    let model = GraphModel::bernoulli(p, 0.2).map_err(domain)?;
    let n = model.n();
    let mut verdicts = Vec::new();

    let tensor = k_tensor(&model).map_err(domain)?;
    let realizations = enumerate_bernoulli_realizations(&model, 20).map_err(domain)?;
    let a = model.expected_adjacency();
    let mut system = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            system.add_to(i, j, a.get(i, j));
        }
    }
    let inv = numerics::invert(&system).map_err(domain)?;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut empirical = 0.0;
                for (c, w) in &realizations {
                    let e = inv.matmul(&c.sub(&a));
                    empirical += w * e.get(i, j) * e.get(k, j);
                }
                worst = worst.max((empirical - tensor.get(i, j, k)).abs());
            }
        }
    }
    verdicts.push(Verdict::new(
        "covariance-tensor-vs-enumeration",
        worst,
        1e-12,
        format!("worst entry gap across all {} triples", n * n * n),
    ));

    let po = PotentialOutcomes::new(vec![1.5, -0.5, 0.75], vec![0.25, 1.0, -1.25])
        .map_err(domain)?;
    let tensor_route =
        exact_network_variance(&po, &model, &DesignMoments::iid(n)).map_err(domain)?;
    let enumerated = enumerate_error_moments(&po, &model, n).map_err(domain)?;
    verdicts.push(Verdict::new(
        "network-variance-vs-enumeration",
        (tensor_route - enumerated.network_second_moment).abs(),
        1e-10,
        format!("tensor route {tensor_route:.9} vs enumeration over all realizations"),
    ));

    let split_p = Matrix::from_rows(&[
        vec![0.0, 0.5, 0.0],
        vec![0.4, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
    ]);
    let split_model = GraphModel::bernoulli(split_p, 0.3).map_err(domain)?;
    let split = components(&split_model);
    let split_tensor = k_tensor(&split_model).map_err(domain)?;
    let mut cross = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let same = split.label(i) == split.label(j) && split.label(j) == split.label(k);
                if !same {
                    cross = cross.max(split_tensor.get(i, j, k).abs());
                }
            }
        }
    }
    verdicts.push(Verdict::new(
        "cross-component-tensor-zero",
        cross,
        1e-14,
        format!("{} support components", split.count()),
    ));
    let parts = per_component_variance(&po, &split_model, &DesignMoments::iid(n)).map_err(domain)?;
    let total = exact_network_variance(&po, &split_model, &DesignMoments::iid(n)).map_err(domain)?;
    verdicts.push(Verdict::new(
        "per-component-variance-splits-total",
        (parts.iter().sum::<f64>() - total).abs(),
        1e-10,
        format!("component contributions {parts:?} against total {total:.9}"),
    ));
    Ok(verdicts)
}

fn run_verify(args: VerifyArgs) -> Result<ExitCode, Failure> {
    let started = Instant::now();
    if args.replicates < 2 {
        return Err(usage("--replicates must be at least 2"));
    }
    let mut verdicts = Vec::new();
    if matches!(args.suite, Suite::Spectral | Suite::All) {
        verdicts.extend(spectral_suite(&args)?);
    }
    if matches!(args.suite, Suite::Gswd | Suite::All) {
        verdicts.extend(gswd_suite(&args)?);
    }
    if matches!(args.suite, Suite::Network | Suite::All) {
        verdicts.extend(network_suite()?);
    }
    for v in &verdicts {
        println!(
            "[{}] {}: statistic {:.6e} vs threshold {:.6e} ({})",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.statistic,
            v.threshold,
            v.detail
        );
    }
    let passed = verdicts.iter().filter(|v| v.passed).count();
    println!("verification: {passed}/{} checks passed", verdicts.len());
    let mut report = RunReport::new(json!({
        "command": "verify",
        "suite": match args.suite {
            Suite::Spectral => "spectral",
            Suite::Gswd => "gswd",
            Suite::Network => "network",
            Suite::All => "all",
        },
        "n": args.n,
        "d": args.d,
        "phi": args.phi,
        "replicates": args.replicates,
        "seed": args.seed,
    }));
    report.verdicts = verdicts;
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    if let Some(path) = &args.out {
        fs::write(path, report.to_json_pretty().map_err(domain)? + "\n").map_err(domain)?;
    }
    Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(4) })
}

fn run_lp(args: LpArgs) -> Result<ExitCode, Failure> {
    let started = Instant::now();
    let model = load_model(&args.graph)?;
    if model.n() > MAX_LP_UNITS {
        return Err(domain(format!(
            "the LP enumerates 4^n outcome rows and is capped at n = {MAX_LP_UNITS}; \
             the graph has {} units",
            model.n()
        )));
    }
    let convention = match args.sign_convention {
        SignConvention::Ijk => TripleSign::Ijk,
        SignConvention::Ikk => TripleSign::Ikk,
    };
    let lp = build_lp_with(&model, convention).map_err(domain)?;
    let solution = solve_lp(&lp).map_err(domain)?;
    let mut verdicts = vec![
        Verdict::new(
            "lp-primal-feasibility",
            solution.max_primal_residual,
            1e-9,
            format!("largest constraint violation after {} pivots", solution.iterations),
        ),
        Verdict::new(
            "lp-duality-gap",
            solution.duality_gap,
            1e-7,
            format!("independently recomputed dual certificate, value {:.9}", solution.value),
        ),
    ];
    if model.n() <= MAX_BRUTE_UNITS {
        let recomputed = brute_force_worst_case(&model, &solution.design).map_err(domain)?;
        verdicts.push(Verdict::new(
            "lp-value-matches-direct-evaluation",
            (solution.value - recomputed).abs(),
            1e-7,
            format!("direct worst case over outcome grids {recomputed:.9}"),
        ));
    }
    if let Some(path) = &args.export {
        let text = export_lp(&lp);
        validate_lp_text(&text, &lp).map_err(domain)?;
        fs::write(path, text).map_err(domain)?;
        verdicts.push(Verdict::new(
            "lp-export-structure",
            0.0,
            0.5,
            format!("exported text re-parsed with matching sections at {}", path.display()),
        ));
    }
    for v in &verdicts {
        println!(
            "[{}] {}: statistic {:.6e} vs threshold {:.6e} ({})",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.statistic,
            v.threshold,
            v.detail
        );
    }
    let mut report = RunReport::new(json!({
        "command": "lp",
        "graph": args.graph.display().to_string(),
        "sign_convention": match args.sign_convention {
            SignConvention::Ijk => "ijk",
            SignConvention::Ikk => "ikk",
        },
    }));
    report.push_summary("lp_value", solution.value);
    report.push_summary("iterations", solution.iterations as f64);
    for (u, p) in solution.design.probs.iter().enumerate() {
        report.push_summary(format!("p_{u}"), *p);
    }
    report.verdicts = verdicts;
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    let text = report.to_json_pretty().map_err(domain)? + "\n";
    match &args.out {
        Some(path) => fs::write(path, text).map_err(domain)?,
        None => print!("{text}"),
    }
    Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(4) })
}

fn run_imbalance(args: ImbalanceArgs) -> Result<ExitCode, Failure> {
    if args.step == 0 {
        return Err(usage("--step must be at least 1"));
    }
    if args.n_from > args.n_to {
        return Err(usage("--n-from must not exceed --n-to"));
    }
    let mut text = String::from("n,probability\n");
    let mut n = args.n_from;
    while n <= args.n_to {
        let p = imbalance_probability(n, args.t).map_err(domain)?;
        text.push_str(&format!("{n},{p}\n"));
        n += args.step;
    }
    write_or_print(&args.out, &text)?;
    Ok(ExitCode::SUCCESS)
}

//! `lindlab` — command-line driver for the random-Lindbladian laboratory.
//!
//! Five subcommands tie JSON configs to the library experiments and the two
//! authentication-protocol demos. Every run is fully determined by
//! (config, seed): CSV data sections are byte-identical across reruns,
//! including under `--threads > 1`. Exit status is 0 iff every requested
//! assertion passed; failures end with one machine-readable JSON line.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lindlab_core::distributions::{computational_povm, tv_distance, TestFunction};
use lindlab_core::experiments::{
    csv_emit, delta_had, eps_sq, fit_linear, format_float, frac_estimate, kappa_had, levy_bound,
    mean_tv_sweep, nonincreasing_up_to_intervals, qpstat_concentration, CsvDocument,
    ExperimentSetup, IntervalEstimate, ReferenceKind, SweepRow,
};
use lindlab_core::lindblad::{
    all_ones_state, amp_damp_chain_family, EnsembleMode, Generator, JumpTerm, ParametrizedFamily,
    Propagator,
};
use lindlab_core::operators::{
    dagger, embed_qubit_op, random_gaussian_matrix, sample_sphere, sigma_z, RandomStream,
};
use lindlab_core::oracles::{NoiseMode, QPStatOracle, StatOracle};
use lindlab_core::puf_hadamard::{
    enroll_exact, enroll_sampled, reconstruction_adversary, run_authentication,
    table_lookup_adversary, Encoding, HonestProver, ProbabilityFingerprint, Transcript,
};
use lindlab_core::puf_tomography::{
    channel_matrix, fingerprint, fingerprint_of_map, matrix_residual, norm_chain_check,
    pauli_string, pauli_tomographic_basis, reconstruct_channel, tom_norm, verify,
    FingerprintMatrix,
};
use lindlab_core::response::{
    amp_damp_analytic_distribution, kappa, m0, response_matrix, toy_prediction, QuadratureSpec,
};

#[derive(Parser)]
#[command(
    name = "lindlab",
    version,
    about = "Random-Lindbladian ensemble experiments and authentication demos"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file (schema per subcommand, see docs/cli.md); omitted
    /// fields take the documented defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output path
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for internal parallelism (0 = library default)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo mean-TV sweep over a δ grid with per-size linear fits
    MeanTvSweep,
    /// Linear-response coefficients against closed forms (κ_M, m₀, toy prediction)
    LinresCheck,
    /// Concentration trend of frac/QPStat estimates across an M grid
    Concentration,
    /// Distribution-level authentication demo (enrollment, honest prover, adversaries)
    PufADemo,
    /// Tomography-based authentication demo (fingerprint, verify, reconstruct)
    PufBDemo,
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    passed: bool,
    detail: String,
}

struct Report {
    checks: Vec<Check>,
}

impl Report {
    fn new() -> Self {
        Self { checks: Vec::new() }
    }

    fn record(&mut self, name: &str, passed: bool, detail: String) {
        println!("[{}] {name} — {detail}", if passed { "PASS" } else { "FAIL" });
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("invalid config {}", p.display()))
        }
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            println!(
                "{}",
                serde_json::json!({"status": "error", "error": format!("thread pool: {e}")})
            );
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::MeanTvSweep => cmd_mean_tv_sweep(&cli),
        Command::LinresCheck => cmd_linres_check(&cli),
        Command::Concentration => cmd_concentration(&cli),
        Command::PufADemo => cmd_puf_a_demo(&cli),
        Command::PufBDemo => cmd_puf_b_demo(&cli),
    };
    match result {
        Ok(report) => {
            let failures: Vec<&Check> = report.checks.iter().filter(|c| !c.passed).collect();
            if failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                println!(
                    "{}",
                    serde_json::json!({"status": "failed", "failures": failures})
                );
                ExitCode::from(1)
            }
        }
        Err(e) => {
            println!(
                "{}",
                serde_json::json!({"status": "error", "error": format!("{e:#}")})
            );
            ExitCode::from(2)
        }
    }
}

// ---------------------------------------------------------------- mean-tv-sweep

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MeanTvSweepConfig {
    n_qubits: Vec<usize>,
    delta_min: f64,
    delta_max: f64,
    delta_points: usize,
    n_samples: usize,
    gamma: f64,
    time: f64,
    reference: ReferenceKind,
    /// Fitted slope of the largest register must land in this window
    /// (set to null to disable the assertion)
    slope_window: Option<[f64; 2]>,
    seed: u64,
    out: PathBuf,
}

impl Default for MeanTvSweepConfig {
    fn default() -> Self {
        Self {
            n_qubits: vec![2, 4],
            delta_min: 0.1,
            delta_max: 0.2,
            delta_points: 10,
            n_samples: 200,
            gamma: 1.0,
            time: 1.0,
            reference: ReferenceKind::RefDynamics,
            slope_window: Some([0.37, 0.44]),
            seed: 7,
            out: PathBuf::from("mean_tv_sweep.csv"),
        }
    }
}

fn cmd_mean_tv_sweep(cli: &Cli) -> anyhow::Result<Report> {
    let mut cfg: MeanTvSweepConfig = load_config(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if cfg.n_qubits.is_empty() {
        bail!("config field n_qubits: need at least one register size");
    }
    let grid = linspace(cfg.delta_min, cfg.delta_max, cfg.delta_points);
    let (gamma, time) = (cfg.gamma, cfg.time);
    let builder = |n: usize, delta: f64| ExperimentSetup::toy_chain(n, gamma, delta, time);
    let rows = mean_tv_sweep(
        builder,
        &cfg.n_qubits,
        &grid,
        cfg.n_samples,
        cfg.reference,
        cfg.seed,
    )?;

    let mut report = Report::new();
    let mut metadata = vec![
        ("command".to_string(), "mean-tv-sweep".to_string()),
        ("config".to_string(), serde_json::to_string(&cfg)?),
    ];
    let n_max = *cfg.n_qubits.iter().max().unwrap();
    for &n in &cfg.n_qubits {
        let group: Vec<SweepRow> = rows.iter().filter(|r| r.n_qubits == n).cloned().collect();
        match fit_linear(&group) {
            Ok(fit) => {
                println!(
                    "N={n}: slope {:.4} ± {:.4}, intercept {:.4}, r² {:.3}",
                    fit.slope, fit.slope_stderr, fit.intercept, fit.r_squared
                );
                metadata.push((
                    format!("fit_n{n}"),
                    format!(
                        "slope={},intercept={},slope_stderr={},r_squared={}",
                        format_float(fit.slope),
                        format_float(fit.intercept),
                        format_float(fit.slope_stderr),
                        format_float(fit.r_squared)
                    ),
                ));
                if n == n_max {
                    if let Some([lo, hi]) = cfg.slope_window {
                        report.record(
                            "slope_window",
                            fit.slope >= lo && fit.slope <= hi,
                            format!("N={n} slope {:.4} vs window [{lo}, {hi}]", fit.slope),
                        );
                    }
                }
            }
            Err(e) => {
                println!("N={n}: fit refused ({e})");
                metadata.push((format!("fit_n{n}"), format!("refused: {e}")));
            }
        }
    }
    let doc = CsvDocument {
        metadata,
        header: SweepRow::CSV_HEADER.iter().map(|s| s.to_string()).collect(),
        rows: rows.iter().map(|r| r.csv_fields()).collect(),
    };
    csv_emit(&doc, &cfg.out)?;
    println!("wrote {}", cfg.out.display());
    Ok(report)
}

// ---------------------------------------------------------------- linres-check

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LinresConfig {
    /// Toy chain size = number of coupling directions (2..=6)
    m: usize,
    gamma: f64,
    time: f64,
    /// Ensemble radius entering the first-order prediction
    delta: f64,
    quad_nodes: usize,
    /// Use zero direction generators instead of the damping chain
    /// (all responses must vanish and m₀ = 0)
    zero_family: bool,
    seed: u64,
    out: PathBuf,
}

impl Default for LinresConfig {
    fn default() -> Self {
        Self {
            m: 4,
            gamma: 1.0,
            time: 1.0,
            delta: 0.3,
            quad_nodes: 16,
            zero_family: false,
            seed: 0,
            out: PathBuf::from("linres_check.csv"),
        }
    }
}

fn cmd_linres_check(cli: &Cli) -> anyhow::Result<Report> {
    let mut cfg: LinresConfig = load_config(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if !(2..=6).contains(&cfg.m) {
        bail!("config field m: computational-basis registers support 2..=6, got {}", cfg.m);
    }
    let m = cfg.m;
    let d = 1usize << m;
    let family = if cfg.zero_family {
        ParametrizedFamily::new(
            Generator::zero(d),
            (0..m).map(|_| Generator::zero(d)).collect(),
            cfg.delta.max(1e-12),
            EnsembleMode::Sphere,
        )?
    } else {
        amp_damp_chain_family(m, cfg.gamma, cfg.delta.max(1e-12), EnsembleMode::Sphere)?
    };
    let povm = computational_povm(m)?;
    let rho_in = all_ones_state(m);
    let quad = QuadratureSpec {
        nodes: cfg.quad_nodes,
    };
    let resp = response_matrix(&family, &rho_in, &povm, cfg.time, &quad)?;

    // closed form: a_{j,x} = tγ(δ_{x, ones with bit j cleared} − δ_{x, all ones})
    let all_ones = d - 1;
    let closed = |x: usize, j: usize| -> f64 {
        if cfg.zero_family {
            return 0.0;
        }
        let flipped = all_ones ^ (1 << (m - 1 - j));
        let mut v = 0.0;
        if x == flipped {
            v += cfg.time * cfg.gamma;
        }
        if x == all_ones {
            v -= cfg.time * cfg.gamma;
        }
        v
    };
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for x in 0..d {
        for j in 0..m {
            let a_quad = resp.coefficient(x, j);
            let a_closed = closed(x, j);
            worst = worst.max((a_quad - a_closed).abs());
            rows.push(vec![
                j.to_string(),
                resp.labels()[x].clone(),
                format_float(a_quad),
                format_float(a_closed),
            ]);
        }
    }

    let avg = resp.averaged_row_norm();
    let avg_target = if cfg.zero_family {
        0.0
    } else {
        cfg.gamma * cfg.time * (1.0 + 1.0 / (m as f64).sqrt())
    };
    let kappa_m = kappa(m)?;
    let m0_value = m0(&resp);
    let predicted = if cfg.zero_family {
        0.0
    } else {
        toy_prediction(cfg.gamma, cfg.time, m, cfg.delta)
    };

    println!("quadrature nodes: {}", cfg.quad_nodes);
    println!("max |a_quadrature − a_closed_form| = {:.3e}", worst);
    println!("averaged row norm (1/M)Σ_x‖a⁽ˣ⁾‖₂ = {:.12} (target {:.12})", avg, avg_target);
    println!("κ_{m} = {:.12}", kappa_m);
    println!("m₀ = {:.12}", m0_value);
    println!("toy first-order prediction δ·m₀ = {:.12} (δ = {})", predicted, cfg.delta);

    let mut report = Report::new();
    report.record(
        "coefficient_closed_form",
        worst <= 1e-10,
        format!("max deviation {worst:.3e} vs 1e-10"),
    );
    report.record(
        "averaged_norm_identity",
        (avg - avg_target).abs() <= 1e-10,
        format!("averaged norm {avg:.12} vs {avg_target:.12}"),
    );
    report.record(
        "prediction_consistency",
        (cfg.delta * m0_value - predicted).abs() <= 1e-12,
        format!("δ·m₀ = {} vs prediction {}", cfg.delta * m0_value, predicted),
    );

    let doc = CsvDocument {
        metadata: vec![
            ("command".to_string(), "linres-check".to_string()),
            ("config".to_string(), serde_json::to_string(&cfg)?),
            ("kappa_m".to_string(), format_float(kappa_m)),
            ("m0".to_string(), format_float(m0_value)),
            ("toy_prediction".to_string(), format_float(predicted)),
            ("max_coefficient_deviation".to_string(), format_float(worst)),
        ],
        header: ["direction", "outcome", "a_quadrature", "a_closed_form"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    };
    csv_emit(&doc, &cfg.out)?;
    println!("wrote {}", cfg.out.display());
    Ok(report)
}

// ---------------------------------------------------------------- concentration

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConcentrationConfig {
    m_grid: Vec<usize>,
    n_qubits: usize,
    gamma: f64,
    delta: f64,
    time: f64,
    tau: f64,
    n_samples: usize,
    /// Seed of the random local coupling directions (kept apart from the
    /// sampling seed so the family is stable across sampling reruns)
    family_seed: u64,
    reference: ReferenceKind,
    /// Which estimators to run: any of "frac", "qpstat"
    experiments: Vec<String>,
    /// Concentration constant for an optional Lévy bound column
    c_par: Option<f64>,
    assert_trend: bool,
    seed: u64,
    out: PathBuf,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            m_grid: vec![4, 8, 16, 32],
            n_qubits: 2,
            gamma: 1.0,
            delta: 0.6,
            time: 1.0,
            tau: 0.05,
            n_samples: 200,
            family_seed: 77,
            reference: ReferenceKind::EnsembleMean,
            experiments: vec!["frac".to_string(), "qpstat".to_string()],
            c_par: None,
            assert_trend: true,
            seed: 31,
            out: PathBuf::from("concentration.csv"),
        }
    }
}

fn cmd_concentration(cli: &Cli) -> anyhow::Result<Report> {
    let mut cfg: ConcentrationConfig = load_config(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if cfg.m_grid.is_empty() {
        bail!("config field m_grid: need at least one direction count");
    }
    for e in &cfg.experiments {
        if e != "frac" && e != "qpstat" {
            bail!("config field experiments: unknown estimator {e:?} (use \"frac\" or \"qpstat\")");
        }
    }
    let d = 1usize << cfg.n_qubits;
    // parity test function over the computational basis
    let phi = TestFunction::new(
        (0..d)
            .map(|x| if (x as u32).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
            .collect(),
    )?;
    let obs = embed_qubit_op(&sigma_z(), 0, cfg.n_qubits);
    let sigma = all_ones_state(cfg.n_qubits);

    let mut report = Report::new();
    let mut rows = Vec::new();
    for kind in &cfg.experiments {
        let mut estimates: Vec<IntervalEstimate> = Vec::new();
        for &m in &cfg.m_grid {
            let setup = ExperimentSetup::random_local(
                cfg.n_qubits,
                m,
                cfg.gamma,
                cfg.delta,
                cfg.time,
                cfg.family_seed,
            )?;
            let est = if kind == "frac" {
                frac_estimate(&setup, &phi, cfg.tau, cfg.n_samples, cfg.reference, cfg.seed)?
            } else {
                qpstat_concentration(&setup, &sigma, &obs, cfg.tau, cfg.n_samples, cfg.seed)?
            };
            // expectation-level Lipschitz constant of the sampled functional
            let lipschitz = if kind == "frac" {
                0.5 * cfg.time * cfg.delta * setup.family.c_g()
            } else {
                cfg.time * cfg.delta * setup.family.c_g()
            };
            let mut row = vec![
                kind.clone(),
                m.to_string(),
                format_float(cfg.tau),
                format_float(est.estimate),
                format_float(est.lo),
                format_float(est.hi),
                est.successes.to_string(),
                est.trials.to_string(),
            ];
            if let Some(c_par) = cfg.c_par {
                row.push(format_float(levy_bound(m, cfg.tau, lipschitz, c_par)?));
            } else {
                row.push(String::new());
            }
            rows.push(row);
            estimates.push(est);
        }
        let values: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
        println!("{kind}: estimates across M {:?} = {values:?}", cfg.m_grid);
        if cfg.assert_trend {
            report.record(
                &format!("{kind}_trend_nonincreasing"),
                nonincreasing_up_to_intervals(&estimates),
                format!("estimates {values:?} (rises allowed only with overlapping intervals)"),
            );
        }
    }

    let doc = CsvDocument {
        metadata: vec![
            ("command".to_string(), "concentration".to_string()),
            ("config".to_string(), serde_json::to_string(&cfg)?),
        ],
        header: [
            "experiment",
            "m",
            "tau",
            "estimate",
            "wilson_lo",
            "wilson_hi",
            "successes",
            "trials",
            "levy_bound",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        rows,
    };
    csv_emit(&doc, &cfg.out)?;
    println!("wrote {}", cfg.out.display());
    Ok(report)
}

// ---------------------------------------------------------------- puf-a-demo

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PufADemoConfig {
    n_qubits: usize,
    /// Challenge bit length; 0 means the minimal ⌈log₂|X|⌉
    l: usize,
    gamma: f64,
    delta: f64,
    time: f64,
    /// Device couplings (nonnegative, length n_qubits); default: the
    /// absolute value of a seeded sphere sample
    theta: Option<Vec<f64>>,
    tau: f64,
    eta: f64,
    delta_puf: f64,
    /// "sampled" (Hoeffding shot count) or "exact"
    enrollment: String,
    /// SQ oracle noise for provers/adversaries: "uniform", "exact", "empirical"
    prover_noise: String,
    /// Shots per query in "empirical" mode
    shots: u64,
    n_chal: usize,
    n_sessions: usize,
    /// Attack-phase query budget of the table-lookup adversary
    table_budget: usize,
    assert_completeness: bool,
    assert_zero_budget: bool,
    seed: u64,
    out: PathBuf,
}

impl Default for PufADemoConfig {
    fn default() -> Self {
        Self {
            n_qubits: 4,
            l: 0,
            gamma: 1.0,
            delta: 0.8,
            time: 1.0,
            theta: None,
            tau: 0.05,
            eta: 0.02,
            delta_puf: 0.01,
            enrollment: "sampled".to_string(),
            prover_noise: "uniform".to_string(),
            shots: 2000,
            n_chal: 16,
            n_sessions: 50,
            table_budget: 4,
            assert_completeness: true,
            assert_zero_budget: true,
            seed: 5,
            out: PathBuf::from("puf_a_demo.csv"),
        }
    }
}

fn noise_mode(kind: &str, tau: f64, shots: u64) -> anyhow::Result<NoiseMode> {
    match kind {
        "exact" => Ok(NoiseMode::Exact),
        "uniform" => Ok(NoiseMode::Uniform),
        "empirical" => {
            if tau <= 0.0 {
                bail!("empirical noise needs tau > 0");
            }
            Ok(NoiseMode::Empirical { shots })
        }
        other => bail!("config field prover_noise: unknown mode {other:?}"),
    }
}

fn session_rate(passes: u64, sessions: u64) -> (f64, f64, f64) {
    let rate = passes as f64 / sessions as f64;
    let (lo, hi) = lindlab_core::experiments::wilson_interval(passes, sessions);
    (rate, lo, hi)
}

fn cmd_puf_a_demo(cli: &Cli) -> anyhow::Result<Report> {
    let mut cfg: PufADemoConfig = load_config(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if cfg.n_qubits == 0 || cfg.n_qubits > 6 {
        bail!("config field n_qubits: need 1..=6, got {}", cfg.n_qubits);
    }
    if cfg.n_sessions == 0 {
        bail!("config field n_sessions: need at least one session");
    }
    let m = cfg.n_qubits;
    let card_x = 1usize << m;

    // device: fixed nonnegative couplings so the damping rates are physical
    let theta = match &cfg.theta {
        Some(t) => {
            if t.len() != m {
                bail!("config field theta: expected {m} entries, got {}", t.len());
            }
            if t.iter().any(|v| *v < 0.0) {
                bail!("config field theta: device rates must be nonnegative");
            }
            t.clone()
        }
        None => {
            let mut rng = RandomStream::new(cfg.seed, 9_000).rng();
            sample_sphere(m, &mut rng).iter().map(|v| v.abs()).collect()
        }
    };
    let device = amp_damp_analytic_distribution(&theta, cfg.gamma, cfg.time, cfg.delta, m)?;

    // public encoding: minimal index-binary, or a random full-rank embedding
    // into an inflated challenge space
    let l_min = usize::try_from(card_x.next_power_of_two().trailing_zeros()).unwrap();
    let l = if cfg.l == 0 { l_min } else { cfg.l };
    let enc = if l == l_min {
        Encoding::default_index(device.labels().to_vec(), l)?
    } else {
        let mut rng = RandomStream::new(cfg.seed, 9_100).rng();
        Encoding::random(device.labels().to_vec(), l, &mut rng)?
    };

    // enrollment
    let fp: ProbabilityFingerprint = match cfg.enrollment.as_str() {
        "exact" => enroll_exact(&device, cfg.delta_puf)?,
        "sampled" => {
            let mut rng = RandomStream::new(cfg.seed, 9_200).rng();
            enroll_sampled(&device, cfg.eta, cfg.delta_puf, &mut rng)?
        }
        other => bail!("config field enrollment: unknown mode {other:?}"),
    };
    println!(
        "enrolled fingerprint over |X| = {card_x}, L = {l}, shots = {}",
        fp.shots_used
    );

    let mode_of = |stream: u64| -> anyhow::Result<StatOracle> {
        Ok(StatOracle::new(
            device.clone(),
            cfg.tau,
            noise_mode(&cfg.prover_noise, cfg.tau, cfg.shots)?,
            RandomStream::new(cfg.seed, stream),
        ))
    };

    let mut report = Report::new();
    let mut rows = Vec::new();
    let mut transcript_samples: Vec<(String, Transcript)> = Vec::new();

    // honest prover: fresh oracle per session, one query per round
    let mut honest_passes = 0u64;
    for s in 0..cfg.n_sessions as u64 {
        let oracle = mode_of(10_000 + s)?;
        let mut prover = HonestProver::new(oracle, enc.clone())?;
        let mut rng = RandomStream::new(cfg.seed, 40_000 + s).rng();
        let t = run_authentication(&fp, &mut prover, &enc, cfg.tau, cfg.n_chal, &mut rng)?;
        if t.verdict {
            honest_passes += 1;
        }
        if s == 0 {
            transcript_samples.push(("honest".to_string(), t));
        }
    }

    // table-lookup adversary: one attack phase, cache reused across sessions
    let mut attack_oracle = mode_of(20_000)?;
    let mut attack_rng = RandomStream::new(cfg.seed, 20_001).rng();
    let mut table = table_lookup_adversary(
        &mut attack_oracle,
        &enc,
        cfg.table_budget,
        0.0,
        &mut attack_rng,
    )?;
    let mut table_passes = 0u64;
    for s in 0..cfg.n_sessions as u64 {
        let mut rng = RandomStream::new(cfg.seed, 50_000 + s).rng();
        let t = run_authentication(&fp, &mut table, &enc, cfg.tau, cfg.n_chal, &mut rng)?;
        if t.verdict {
            table_passes += 1;
        }
        if s == 0 {
            transcript_samples.push(("table_lookup".to_string(), t));
        }
    }

    // reconstruction adversary: full challenge table, inverse transform
    let mut recon_oracle = mode_of(30_000)?;
    let (mut recon, recon_dist) = reconstruction_adversary(&mut recon_oracle, &enc)?;
    let recon_tv = tv_distance(&recon_dist, &device)?;
    let mut recon_passes = 0u64;
    for s in 0..cfg.n_sessions as u64 {
        let mut rng = RandomStream::new(cfg.seed, 60_000 + s).rng();
        let t = run_authentication(&fp, &mut recon, &enc, cfg.tau, cfg.n_chal, &mut rng)?;
        if t.verdict {
            recon_passes += 1;
        }
        if s == 0 {
            transcript_samples.push(("reconstruction".to_string(), t));
        }
    }

    // zero-budget adversary: no queries at all, answers the range midpoint
    let mut zero = |_bits: u64| -> lindlab_core::Result<f64> { Ok(0.0) };
    let mut zero_passes = 0u64;
    for s in 0..cfg.n_sessions as u64 {
        let mut rng = RandomStream::new(cfg.seed, 70_000 + s).rng();
        let t = run_authentication(&fp, &mut zero, &enc, cfg.tau, cfg.n_chal, &mut rng)?;
        if t.verdict {
            zero_passes += 1;
        }
        if s == 0 {
            transcript_samples.push(("zero_budget".to_string(), t));
        }
    }

    let sessions = cfg.n_sessions as u64;
    for (name, passes, queries) in [
        ("honest", honest_passes, cfg.n_chal as u64 * sessions),
        ("table_lookup", table_passes, cfg.table_budget as u64),
        ("reconstruction", recon_passes, enc.challenge_space()),
        ("zero_budget", zero_passes, 0),
    ] {
        let (rate, lo, hi) = session_rate(passes, sessions);
        println!(
            "{name}: {passes}/{sessions} sessions passed (rate {rate:.3}, 95% interval [{lo:.3}, {hi:.3}], oracle queries {queries})"
        );
        rows.push(vec![
            name.to_string(),
            sessions.to_string(),
            passes.to_string(),
            format_float(rate),
            format_float(lo),
            format_float(hi),
            queries.to_string(),
        ]);
    }

    println!("reconstruction adversary tv distance to device: {recon_tv:.6}");
    let exact_noise = cfg.prover_noise == "exact";
    if cfg.assert_completeness && cfg.prover_noise != "empirical" {
        report.record(
            "honest_completeness",
            honest_passes == sessions,
            format!("honest prover passed {honest_passes}/{sessions}"),
        );
    }
    let recon_bound = if exact_noise {
        1e-10
    } else {
        (card_x as f64).sqrt() * cfg.tau * 1.01
    };
    if cfg.prover_noise != "empirical" {
        report.record(
            "reconstruction_tv_bound",
            recon_tv <= recon_bound,
            format!("tv {recon_tv:.3e} vs bound {recon_bound:.3e}"),
        );
    }
    if cfg.assert_zero_budget {
        let (rate, _, _) = session_rate(zero_passes, sessions);
        report.record(
            "zero_budget_rejected",
            rate < 0.05,
            format!("zero-budget adversary pass rate {rate:.3} vs 0.05"),
        );
    }

    // soundness calculator for a hypothetical adversary pass rate
    let alpha0 = 0.9;
    let dh = delta_had(alpha0, cfg.n_chal.max(1) as u32)?;
    let kh = kappa_had(2.0, cfg.tau, dh)?;
    let (eps_tv, eps_half) = eps_sq(card_x, kh);
    println!(
        "soundness calculator at hypothetical pass rate α₀ = {alpha0}: δ_had = {dh:.4}, κ_had = {kh:.4}, ε_SQ = {eps_tv:.4} (tv {eps_half:.4})"
    );

    let log_path = cfg.out.with_extension("log");
    let mut log = String::new();
    for (name, t) in &transcript_samples {
        log.push_str(&format!("## session 0, responder = {name}\n"));
        log.push_str(&t.to_log());
    }
    std::fs::write(&log_path, log)?;

    let doc = CsvDocument {
        metadata: vec![
            ("command".to_string(), "puf-a-demo".to_string()),
            ("config".to_string(), serde_json::to_string(&cfg)?),
            ("theta".to_string(), theta.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(";")),
            ("enrollment_shots".to_string(), fp.shots_used.to_string()),
            ("reconstruction_tv".to_string(), format_float(recon_tv)),
            ("reconstruction_tv_bound".to_string(), format_float(recon_bound)),
        ],
        header: [
            "responder",
            "sessions",
            "passes",
            "rate",
            "wilson_lo",
            "wilson_hi",
            "oracle_queries",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        rows,
    };
    csv_emit(&doc, &cfg.out)?;
    println!("wrote {} and {}", cfg.out.display(), log_path.display());
    Ok(report)
}

// ---------------------------------------------------------------- puf-b-demo

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PufBDemoConfig {
    /// Register size (1..=3: the fingerprint costs d⁴ queries)
    n_qubits: usize,
    /// "random" (seeded CPTP channel), "identity", or "depolarizing"
    channel: String,
    time: f64,
    tau: f64,
    /// Response oracle noise: "uniform" or "exact"
    prover_noise: String,
    /// Haar probe pairs for the 1→1 norm lower bound
    norm_probes: usize,
    seed: u64,
    out: PathBuf,
}

impl Default for PufBDemoConfig {
    fn default() -> Self {
        Self {
            n_qubits: 1,
            channel: "random".to_string(),
            time: 0.7,
            tau: 0.04,
            prover_noise: "uniform".to_string(),
            norm_probes: 200,
            seed: 9,
            out: PathBuf::from("puf_b_demo.csv"),
        }
    }
}

fn cmd_puf_b_demo(cli: &Cli) -> anyhow::Result<Report> {
    let mut cfg: PufBDemoConfig = load_config(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if !(1..=3).contains(&cfg.n_qubits) {
        bail!(
            "config field n_qubits: fingerprinting is limited to 1..=3 (d⁴ queries), got {}",
            cfg.n_qubits
        );
    }
    let n = cfg.n_qubits;
    let d = 1usize << n;
    let basis = pauli_tomographic_basis(n)?;

    let device: Propagator = match cfg.channel.as_str() {
        "identity" => Propagator::new(Generator::zero(d), cfg.time),
        "depolarizing" => {
            // Pauli-twirl semigroup run to its fixed point (residual e^{−60})
            let jumps = (0..d * d)
                .map(|idx| JumpTerm::new(pauli_string(idx, n).0, 1.0 / (d * d) as f64))
                .collect();
            Propagator::new(Generator::new(d, None, jumps)?, 60.0)
        }
        "random" => {
            use rand::Rng;
            let mut rng = RandomStream::new(cfg.seed, 100).rng();
            let raw = random_gaussian_matrix(d, d, &mut rng);
            let h = (&raw + &dagger(&raw)).mapv(|z| z * 0.5);
            let jumps = (0..2)
                .map(|_| {
                    JumpTerm::new(
                        random_gaussian_matrix(d, d, &mut rng),
                        rng.random_range(0.02..0.2),
                    )
                })
                .collect();
            Propagator::new(Generator::new(d, Some(h), jumps)?, cfg.time)
        }
        other => bail!("config field channel: unknown kind {other:?}"),
    };

    let mut report = Report::new();
    let d4 = (d * d * d * d) as u64;

    // enrollment: the manufacturer's exact characterization
    let mut enroll_oracle = QPStatOracle::new(
        device.clone(),
        0.0,
        NoiseMode::Exact,
        true,
        RandomStream::new(cfg.seed, 200),
    );
    let y = fingerprint(&mut enroll_oracle, &basis)?;
    report.record(
        "enrollment_query_accounting",
        enroll_oracle.count() == d4,
        format!("counter {} vs d⁴ = {d4}", enroll_oracle.count()),
    );
    if cfg.channel == "identity" {
        let mut worst = 0.0f64;
        for k in 0..basis.operator_dim() {
            for j in 0..basis.operator_dim() {
                let expected = if k == j { 1.0 } else { 0.0 };
                worst = worst.max((y.entries()[(k, j)] - expected).abs());
            }
        }
        report.record(
            "identity_fingerprint",
            worst <= 1e-12,
            format!("max deviation from identity matrix {worst:.3e}"),
        );
    }

    // honest verification round: fresh noisy responses against the table
    let prover_mode = match cfg.prover_noise.as_str() {
        "exact" => NoiseMode::Exact,
        "uniform" => NoiseMode::Uniform,
        other => bail!("config field prover_noise: unknown mode {other:?}"),
    };
    let mut respond_oracle = QPStatOracle::new(
        device.clone(),
        cfg.tau,
        prover_mode,
        true,
        RandomStream::new(cfg.seed, 300),
    );
    let y_prime = fingerprint(&mut respond_oracle, &basis)?;
    let (verdict, worst_entry) = verify(&y, &y_prime, cfg.tau)?;
    println!("honest verification: verdict {verdict}, worst entry deviation {worst_entry:.3e}");
    report.record(
        "honest_verification",
        verdict,
        format!("worst deviation {worst_entry:.3e} vs 2τ = {:.3e}", 2.0 * cfg.tau),
    );
    report.record(
        "response_query_accounting",
        respond_oracle.count() == d4,
        format!("counter {} vs d⁴ = {d4}", respond_oracle.count()),
    );

    // reconstruction round trip
    let s_hat = reconstruct_channel(&y, &basis)?;
    let y_round = fingerprint_of_map(&s_hat, &basis)?;
    let residual = tom_norm(&FingerprintMatrix::new(
        (y_round.entries() - y.entries()).to_owned(),
        0.0,
    )?);
    println!("reconstruction round-trip residual (tom norm): {residual:.3e}");
    report.record(
        "reconstruction_round_trip",
        residual <= 1e-10,
        format!("residual {residual:.3e} vs 1e-10"),
    );
    let s_true = channel_matrix(&device)?;
    let matrix_gap = matrix_residual(&s_hat, &s_true);
    println!("reconstructed vs true superoperator, max-abs entry gap: {matrix_gap:.3e}");

    // norm chain on the device-versus-idle difference
    let idle = lindlab_core::operators::identity(d * d);
    let diff = &s_true - &idle;
    let mut chain_rng = RandomStream::new(cfg.seed, 400).rng();
    let (lb, tom_can, ratio) = norm_chain_check(&diff, &basis, cfg.norm_probes, &mut chain_rng)?;
    println!(
        "norm chain on (device − identity): 1→1 lower bound {lb:.6}, canonical tom norm {tom_can:.6}, ratio {ratio:.4} (must stay ≤ 1)"
    );
    report.record(
        "norm_chain",
        ratio <= 1.0 + 1e-9,
        format!("lb {lb:.6} ≤ d^(5/2)·tom_can with ratio {ratio:.4}"),
    );

    let mut doc = y.to_csv_document(&basis)?;
    doc.metadata.insert(0, ("command".to_string(), "puf-b-demo".to_string()));
    doc.metadata.insert(1, ("config".to_string(), serde_json::to_string(&cfg)?));
    doc.metadata.push(("honest_verdict".to_string(), verdict.to_string()));
    doc.metadata.push(("worst_entry".to_string(), format_float(worst_entry)));
    doc.metadata.push(("round_trip_residual".to_string(), format_float(residual)));
    doc.metadata.push(("norm_chain_lb_1to1".to_string(), format_float(lb)));
    doc.metadata.push(("norm_chain_tom_can".to_string(), format_float(tom_can)));
    doc.metadata.push(("norm_chain_ratio".to_string(), format_float(ratio)));
    csv_emit(&doc, &cfg.out)?;
    println!("wrote {}", cfg.out.display());
    Ok(report)
}

//! Monte Carlo experiments over random generator ensembles: mean-TV sweeps
//! with linear fits, finite-size deviation curves, concentration
//! estimators with Wilson intervals, closed-form tail-bound evaluators, and
//! deterministic CSV emission.
//!
//! Sampled outputs are treated as device distributions: a signed-rate draw
//! can produce a quasi-distribution, which is projected back to the
//! probability simplex (negative entries clipped, then renormalized) before
//! any distance is taken, and the fraction of affected samples is reported
//! as `frac_unphysical`. Map-level property tests elsewhere keep the raw
//! quasi values; the projection belongs to the measurement pipeline only.
//!
//! Determinism: every sample i of every row r draws from its own
//! `RandomStream(seed, stream_id(r, i))`, results are collected in index
//! order, and means use compensated summation — so outputs are identical
//! for any thread count.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    computational_povm, expectation, output_distribution, tv_distance, OutputDistribution, Povm,
    TestFunction,
};
use crate::lindblad::{
    amp_damp_chain_family, all_ones_state, Backend, EnsembleMode, ParametrizedFamily, Propagator,
};
use crate::operators::{
    hermiticity_residual, operator_norm, trace_norm, CMat, RandomStream,
};
use crate::{Error, Result};

/// One experiment instance: the ensemble plus the fixed measurement setup.
#[derive(Clone, Debug)]
pub struct ExperimentSetup {
    pub family: ParametrizedFamily,
    pub rho_in: CMat,
    pub povm: Povm,
    pub time: f64,
}

impl ExperimentSetup {
    /// Amplitude-damping chain measured in the computational basis from
    /// |1…1⟩ (M = N directions).
    pub fn toy_chain(n_qubits: usize, gamma: f64, delta: f64, time: f64) -> Result<Self> {
        Ok(Self {
            family: amp_damp_chain_family(n_qubits, gamma, delta, EnsembleMode::Sphere)?,
            rho_in: all_ones_state(n_qubits),
            povm: computational_povm(n_qubits)?,
            time,
        })
    }

    /// M random local couplings on a fixed small register, for
    /// concentration scans where M varies independently of the dimension.
    pub fn random_local(
        n_qubits: usize,
        m: usize,
        gamma: f64,
        delta: f64,
        time: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            family: crate::lindblad::random_local_family(
                n_qubits,
                m,
                gamma,
                delta,
                EnsembleMode::Sphere,
                seed,
            )?,
            rho_in: all_ones_state(n_qubits),
            povm: computational_povm(n_qubits)?,
            time,
        })
    }
}

/// Which reference distribution the sweep compares against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// The output of the reference dynamics e^{tL_ref}.
    RefDynamics,
    /// Empirical ensemble mean from a dedicated pre-pass with its own
    /// sample budget.
    EnsembleMean,
}

/// One (δ, N) cell of a mean-TV sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub n_qubits: usize,
    pub n_samples: usize,
    pub mean_tv: f64,
    pub stderr: f64,
    pub frac_unphysical: f64,
    pub seed: u64,
}

impl SweepRow {
    pub const CSV_HEADER: [&'static str; 7] = [
        "delta",
        "n_qubits",
        "n_samples",
        "mean_tv",
        "stderr",
        "frac_unphysical",
        "seed",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            format_float(self.delta),
            self.n_qubits.to_string(),
            self.n_samples.to_string(),
            format_float(self.mean_tv),
            format_float(self.stderr),
            format_float(self.frac_unphysical),
            self.seed.to_string(),
        ]
    }
}

/// Ordinary least squares result for mean_tv against δ.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Binomial estimate with a 95% Wilson score interval.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub successes: u64,
    pub trials: u64,
}

fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = kahan_sum(values.iter().copied()) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / ((n - 1) as f64 * n as f64)).sqrt())
}

/// Clip negative entries to zero and renormalize; the flag reports whether
/// the input was unphysical (and thus actually moved).
pub fn physical_projection(dist: &OutputDistribution) -> Result<(OutputDistribution, bool)> {
    if dist.is_physical() {
        return Ok((dist.clone(), false));
    }
    let clipped: Vec<f64> = dist.values().iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numerical {
            context: "physical_projection",
            message: "quasi-distribution has no positive mass".into(),
        });
    }
    let values = clipped.into_iter().map(|v| v / total).collect();
    Ok((OutputDistribution::new(dist.labels().to_vec(), values)?, true))
}

fn sample_distribution(setup: &ExperimentSetup, theta: &[f64]) -> Result<OutputDistribution> {
    let g = setup.family.assemble(theta)?;
    let rho_t = Propagator::new(g, setup.time)
        .with_backend(Backend::Matfree)
        .evolve(&setup.rho_in)?;
    output_distribution(&rho_t, &setup.povm)
}

fn reference_dynamics_distribution(setup: &ExperimentSetup) -> Result<OutputDistribution> {
    let rho_t = Propagator::new(setup.family.l_ref.clone(), setup.time)
        .with_backend(Backend::Matfree)
        .evolve(&setup.rho_in)?;
    output_distribution(&rho_t, &setup.povm)
}

const PREPASS_FLAG: u64 = 1 << 31;

fn sample_streams(
    setup: &ExperimentSetup,
    n_samples: usize,
    seed: u64,
    base: u64,
) -> Result<Vec<(OutputDistribution, bool)>> {
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RandomStream::new(seed, base + i as u64).rng();
            let theta = setup.family.sample_theta(&mut rng);
            let dist = sample_distribution(setup, &theta)?;
            physical_projection(&dist)
        })
        .collect()
}

fn reference_distribution(
    setup: &ExperimentSetup,
    reference: ReferenceKind,
    n_samples: usize,
    seed: u64,
    base: u64,
) -> Result<OutputDistribution> {
    match reference {
        ReferenceKind::RefDynamics => reference_dynamics_distribution(setup),
        ReferenceKind::EnsembleMean => {
            let samples = sample_streams(setup, n_samples, seed, base | PREPASS_FLAG)?;
            let n_out = setup.povm.len();
            let values: Vec<f64> = (0..n_out)
                .map(|x| {
                    kahan_sum(samples.iter().map(|(d, _)| d.values()[x])) / n_samples as f64
                })
                .collect();
            OutputDistribution::new(setup.povm.labels().to_vec(), values)
        }
    }
}

/// Mean TV distance to the reference across a (N, δ) grid. Each sample
/// draws θ from its own stream, evolves, projects to a physical
/// distribution, and measures TV. δ = 0 rows are emitted exactly (zero
/// mean, zero spread) without sampling.
pub fn mean_tv_sweep<F>(
    builder: F,
    n_list: &[usize],
    delta_grid: &[f64],
    n_samples: usize,
    reference: ReferenceKind,
    seed: u64,
) -> Result<Vec<SweepRow>>
where
    F: Fn(usize, f64) -> Result<ExperimentSetup>,
{
    if n_samples < 2 {
        return Err(Error::Invalid {
            context: "mean_tv_sweep",
            message: format!("need at least 2 samples, got {n_samples}"),
        });
    }
    let mut rows = Vec::with_capacity(n_list.len() * delta_grid.len());
    let mut row_index: u64 = 0;
    for &n in n_list {
        for &delta in delta_grid {
            row_index += 1;
            if delta == 0.0 {
                rows.push(SweepRow {
                    delta,
                    n_qubits: n,
                    n_samples,
                    mean_tv: 0.0,
                    stderr: 0.0,
                    frac_unphysical: 0.0,
                    seed,
                });
                continue;
            }
            let setup = builder(n, delta)?;
            let base = row_index << 32;
            let q = reference_distribution(&setup, reference, n_samples, seed, base)?;
            let samples = sample_streams(&setup, n_samples, seed, base)?;
            let tvs = samples
                .iter()
                .map(|(p, _)| tv_distance(p, &q))
                .collect::<Result<Vec<_>>>()?;
            let (mean_tv, stderr) = mean_and_stderr(&tvs);
            let unphysical = samples.iter().filter(|(_, moved)| *moved).count();
            rows.push(SweepRow {
                delta,
                n_qubits: n,
                n_samples,
                mean_tv,
                stderr,
                frac_unphysical: unphysical as f64 / n_samples as f64,
                seed,
            });
        }
    }
    Ok(rows)
}

/// OLS fit of mean_tv against δ with the residual-variance slope error.
pub fn fit_linear(rows: &[SweepRow]) -> Result<FitResult> {
    let x: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean_tv).collect();
    let n = x.len();
    let distinct = {
        let mut xs = x.clone();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    };
    if n < 2 || distinct < 2 {
        return Err(Error::Invalid {
            context: "fit_linear",
            message: format!("degenerate grid: {n} rows, {distinct} distinct δ values"),
        });
    }
    let xb = kahan_sum(x.iter().copied()) / n as f64;
    let yb = kahan_sum(y.iter().copied()) / n as f64;
    let sxx = kahan_sum(x.iter().map(|v| (v - xb) * (v - xb)));
    let sxy = kahan_sum(x.iter().zip(&y).map(|(xv, yv)| (xv - xb) * (yv - yb)));
    let slope = sxy / sxx;
    let intercept = yb - slope * xb;
    let ssr = kahan_sum(
        x.iter()
            .zip(&y)
            .map(|(xv, yv)| {
                let r = yv - slope * xv - intercept;
                r * r
            }),
    );
    let sst = kahan_sum(y.iter().map(|v| (v - yb) * (v - yb)));
    let slope_stderr = if n > 2 {
        (ssr / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0 // two points interpolate exactly
    };
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(FitResult {
        slope,
        intercept,
        slope_stderr,
        r_squared,
    })
}

/// Mean TV at a single δ with streams keyed by N, so equal N means an
/// identical estimate. Returns (mean, stderr).
pub fn mean_tv_at<F>(
    builder: F,
    n_qubits: usize,
    delta: f64,
    n_samples: usize,
    reference: ReferenceKind,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(usize, f64) -> Result<ExperimentSetup>,
{
    let setup = builder(n_qubits, delta)?;
    let base = (n_qubits as u64) << 32;
    let q = reference_distribution(&setup, reference, n_samples, seed, base)?;
    let samples = sample_streams(&setup, n_samples, seed, base)?;
    let tvs = samples
        .iter()
        .map(|(p, _)| tv_distance(p, &q))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_stderr(&tvs))
}

/// Finite-size deviation proxy |m̂(δ;N) − m̂(δ;N_max)| per N. N = N_max
/// reuses the identical estimator, so its deviation is exactly zero.
pub fn eps_mean_curve<F>(
    builder: F,
    delta: f64,
    n_list: &[usize],
    n_max: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>>
where
    F: Fn(usize, f64) -> Result<ExperimentSetup> + Copy,
{
    let (m_max, _) = mean_tv_at(builder, n_max, delta, n_samples, ReferenceKind::RefDynamics, seed)?;
    n_list
        .iter()
        .map(|&n| {
            let m_n = if n == n_max {
                m_max
            } else {
                mean_tv_at(builder, n, delta, n_samples, ReferenceKind::RefDynamics, seed)?.0
            };
            Ok((n, (m_n - m_max).abs()))
        })
        .collect()
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0, "need at least one trial");
    let z = 1.959963984540054_f64; // two-sided 95%
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn interval_estimate(successes: u64, trials: u64) -> IntervalEstimate {
    let (lo, hi) = wilson_interval(successes, trials);
    IntervalEstimate {
        estimate: successes as f64 / trials as f64,
        lo,
        hi,
        successes,
        trials,
    }
}

/// Fraction of sampled θ whose test-function expectation deviates from the
/// reference by at least τ.
pub fn frac_estimate(
    setup: &ExperimentSetup,
    phi: &TestFunction,
    tau: f64,
    n_samples: usize,
    reference: ReferenceKind,
    seed: u64,
) -> Result<IntervalEstimate> {
    if n_samples < 10 {
        return Err(Error::Invalid {
            context: "frac_estimate",
            message: format!("need at least 10 samples, got {n_samples}"),
        });
    }
    let q = reference_distribution(setup, reference, n_samples, seed, 0)?;
    let q_phi = expectation(&q, phi)?;
    let samples = sample_streams(setup, n_samples, seed, 0)?;
    let mut successes = 0;
    for (p, _) in &samples {
        if (expectation(p, phi)? - q_phi).abs() >= tau {
            successes += 1;
        }
    }
    Ok(interval_estimate(successes, n_samples as u64))
}

/// Empirical probability that TV(P_θ, d_ref) ≥ eps.
pub fn far_from_d(
    setup: &ExperimentSetup,
    d_ref: &OutputDistribution,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<IntervalEstimate> {
    let samples = sample_streams(setup, n_samples, seed, 0)?;
    let mut successes = 0;
    for (p, _) in &samples {
        if tv_distance(p, d_ref)? >= eps {
            successes += 1;
        }
    }
    Ok(interval_estimate(successes, n_samples as u64))
}

/// Two-pass concentration of Tr[O E_θ(σ)] around its empirical mean:
/// fraction of θ with |vᵢ − v̄| ≥ τ over the same sample set.
pub fn qpstat_concentration(
    setup: &ExperimentSetup,
    sigma: &CMat,
    obs: &CMat,
    tau: f64,
    n_samples: usize,
    seed: u64,
) -> Result<IntervalEstimate> {
    if trace_norm(sigma) > 1.0 + 1e-10
        || operator_norm(obs) > 1.0 + 1e-10
        || hermiticity_residual(sigma) > 1e-12
        || hermiticity_residual(obs) > 1e-12
    {
        return Err(Error::Invalid {
            context: "qpstat_concentration",
            message: "need Hermitian σ with ‖σ‖₁ ≤ 1 and Hermitian O with ‖O‖∞ ≤ 1".into(),
        });
    }
    let d = setup.family.dim();
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = RandomStream::new(seed, i as u64).rng();
            let theta = setup.family.sample_theta(&mut rng);
            let g = setup.family.assemble(&theta)?;
            let out = Propagator::new(g, setup.time)
                .with_backend(Backend::Matfree)
                .propagate_matrix(sigma)?;
            let mut v = 0.0;
            for a in 0..d {
                for b in 0..d {
                    v += (obs[(a, b)] * out[(b, a)]).re;
                }
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = kahan_sum(values.iter().copied()) / n_samples as f64;
    let successes = values.iter().filter(|v| (*v - mean).abs() >= tau).count() as u64;
    Ok(interval_estimate(successes, n_samples as u64))
}

/// "Nonincreasing up to overlapping intervals": a rise between consecutive
/// estimates is tolerated only when their intervals overlap.
pub fn nonincreasing_up_to_intervals(estimates: &[IntervalEstimate]) -> bool {
    estimates.windows(2).all(|w| {
        w[1].estimate <= w[0].estimate || w[1].lo <= w[0].hi
    })
}

/// Spherical concentration tail 2·exp(−c_par·M·τ²/L²). The constant c_par
/// is never pinned down analytically, so it is an explicit argument.
pub fn levy_bound(m: usize, tau: f64, l: f64, c_par: f64) -> Result<f64> {
    if m < 1 || tau < 0.0 || l <= 0.0 || c_par <= 0.0 {
        return Err(Error::Invalid {
            context: "levy_bound",
            message: "need m ≥ 1, τ ≥ 0, L > 0, c_par > 0".into(),
        });
    }
    Ok(2.0 * (-c_par * m as f64 * tau * tau / (l * l)).exp())
}

/// Bounded-difference tail 2·exp(−τ²/(2Mδ²L₁²)) for the product ensemble.
pub fn mcdiarmid_bound(m: usize, tau: f64, delta: f64, l1: f64) -> Result<f64> {
    if m < 1 || tau < 0.0 || delta <= 0.0 || l1 <= 0.0 {
        return Err(Error::Invalid {
            context: "mcdiarmid_bound",
            message: "need m ≥ 1, τ ≥ 0, δ > 0, L₁ > 0".into(),
        });
    }
    Ok(2.0 * (-tau * tau / (2.0 * m as f64 * delta * delta * l1 * l1)).exp())
}

/// Per-round defect rate 1 − α₀^{1/n_chal} implied by an n_chal-round pass
/// probability α₀.
pub fn delta_had(alpha0: f64, n_chal: u32) -> Result<f64> {
    if !(alpha0 > 0.0 && alpha0 <= 1.0) || n_chal == 0 {
        return Err(Error::Invalid {
            context: "delta_had",
            message: format!("need α₀ ∈ (0, 1] and n_chal ≥ 1, got ({alpha0}, {n_chal})"),
        });
    }
    Ok(1.0 - alpha0.powf(1.0 / n_chal as f64))
}

/// Majority-fraction constant 1/(3 − 2·α_auth) of the authentication
/// analysis; α_auth must exceed 1/2 for this to be above 1/2.
pub fn p0(alpha_auth: f64) -> Result<f64> {
    if !(alpha_auth > 0.5 && alpha_auth <= 1.0) {
        return Err(Error::Invalid {
            context: "p0",
            message: format!("need α_auth ∈ (1/2, 1], got {alpha_auth}"),
        });
    }
    Ok(1.0 / (3.0 - 2.0 * alpha_auth))
}

/// Combined coefficient κ_Had = √((c₀+1)²τ² + 4·δ_Had).
pub fn kappa_had(c0: f64, tau: f64, delta_had: f64) -> Result<f64> {
    if c0 < 0.0 || tau < 0.0 || delta_had < 0.0 {
        return Err(Error::Invalid {
            context: "kappa_had",
            message: "need nonnegative c₀, τ, δ_Had".into(),
        });
    }
    Ok(((c0 + 1.0) * (c0 + 1.0) * tau * tau + 4.0 * delta_had).sqrt())
}

/// The two distribution-distance coefficients in circulation: the lemma's
/// √|X|·κ and the security proof's ½√|X|·κ. Both are returned; assertions
/// elsewhere use the conservative first.
pub fn eps_sq(card_x: usize, kappa_had: f64) -> (f64, f64) {
    let root = (card_x as f64).sqrt() * kappa_had;
    (root, 0.5 * root)
}

/// ≥ 12 significant digits; 17 are printed so parsing recovers the exact
/// f64 bit pattern.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV payload: '#'-prefixed metadata lines, a header row, data rows.
#[derive(Clone, Debug, Default)]
pub struct CsvDocument {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Render a CSV document to its exact output text: the artifact version is
/// always stamped first so reruns are attributable; identical documents
/// produce identical bytes.
pub fn csv_render(doc: &CsvDocument) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# artifact_version = {}\n",
        env!("CARGO_PKG_VERSION")
    ));
    for (k, v) in &doc.metadata {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str(&doc.header.join(","));
    out.push('\n');
    for row in &doc.rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Write a CSV document to a file (see [`csv_render`] for the format).
pub fn csv_emit(doc: &CsvDocument, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(csv_render(doc).as_bytes())?;
    Ok(())
}

//! Statistical-query oracles: the access boundary every protocol party goes
//! through. A [`StatOracle`] hides a distribution and answers test-function
//! expectations to tolerance τ; a [`QPStatOracle`] hides a channel and
//! answers Tr[O E(σ)] to tolerance τ, optionally extended to Hermitian
//! inputs with trace norm ≤ 1. Both count queries and can enforce a budget,
//! failing with a distinct catchable error once it is spent.

use ndarray_linalg::{Eigh, UPLO};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::distributions::{expectation, OutputDistribution, TestFunction};
use crate::lindblad::Propagator;
use crate::operators::{hermiticity_residual, operator_norm, trace_norm, CMat, RandomStream};
use crate::{Error, Result};

/// How an oracle perturbs the hidden truth.
pub enum NoiseMode {
    /// Answer the truth exactly.
    Exact,
    /// Truth plus an independent uniform draw from [−τ, +τ].
    Uniform,
    /// Average of `shots` simulated measurement outcomes. The hard ±τ
    /// guarantee is traded for a Hoeffding failure probability, reported by
    /// `hoeffding_delta`.
    Empirical { shots: u64 },
    /// Adversary-chosen answer, clamped into [truth−τ, truth+τ]. The
    /// callback receives the hidden truth and the current query index.
    Adversarial(Box<dyn FnMut(f64, u64) -> f64 + Send>),
}

impl std::fmt::Debug for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseMode::Exact => write!(f, "Exact"),
            NoiseMode::Uniform => write!(f, "Uniform"),
            NoiseMode::Empirical { shots } => write!(f, "Empirical {{ shots: {shots} }}"),
            NoiseMode::Adversarial(_) => write!(f, "Adversarial(..)"),
        }
    }
}

fn check_budget(count: u64, budget: Option<u64>) -> Result<()> {
    if let Some(b) = budget {
        if count >= b {
            return Err(Error::BudgetExhausted {
                used: count,
                budget: b,
            });
        }
    }
    Ok(())
}

fn perturb(
    truth: f64,
    tau: f64,
    mode: &mut NoiseMode,
    count: u64,
    rng: &mut ChaCha8Rng,
    empirical: impl FnOnce(u64, &mut ChaCha8Rng) -> Result<f64>,
) -> Result<f64> {
    match mode {
        NoiseMode::Exact => Ok(truth),
        NoiseMode::Uniform => Ok(truth + tau * rng.random_range(-1.0..=1.0)),
        NoiseMode::Empirical { shots } => empirical(*shots, rng),
        NoiseMode::Adversarial(cb) => {
            let proposed = cb(truth, count);
            Ok(proposed.clamp(truth - tau, truth + tau))
        }
    }
}

/// Draw `shots` outcome indices from a physical distribution and return the
/// empirical frequency vector. Shared by the empirical oracle modes and by
/// protocol enrollment.
pub fn empirical_frequencies(
    dist: &[f64],
    shots: u64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if dist.iter().any(|&p| p < -1e-12) {
        return Err(Error::Invalid {
            context: "empirical_frequencies",
            message: "cannot sample a quasi-distribution with negative values".into(),
        });
    }
    let total: f64 = dist.iter().sum();
    let mut counts = vec![0u64; dist.len()];
    for _ in 0..shots {
        let mut u = rng.random::<f64>() * total;
        let mut idx = dist.len() - 1;
        for (i, &p) in dist.iter().enumerate() {
            if u < p.max(0.0) {
                idx = i;
                break;
            }
            u -= p.max(0.0);
        }
        counts[idx] += 1;
    }
    Ok(counts.iter().map(|&k| k as f64 / shots as f64).collect())
}

/// Oracle Stat_τ(P): answers v with |v − P[φ]| ≤ τ (exact, uniform, and
/// adversarial modes; empirical mode instead carries a Hoeffding failure
/// probability).
pub struct StatOracle {
    dist: OutputDistribution,
    tau: f64,
    mode: NoiseMode,
    count: u64,
    budget: Option<u64>,
    rng: ChaCha8Rng,
}

impl StatOracle {
    pub fn new(dist: OutputDistribution, tau: f64, mode: NoiseMode, stream: RandomStream) -> Self {
        assert!(tau >= 0.0, "tolerance must be nonnegative");
        Self {
            dist,
            tau,
            mode,
            count: 0,
            budget: None,
            rng: stream.rng(),
        }
    }

    /// Exact-mode oracle (the default for unit tests).
    pub fn exact(dist: OutputDistribution, tau: f64) -> Self {
        Self::new(dist, tau, NoiseMode::Exact, RandomStream::new(0, 0))
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    /// Number of outcomes of the hidden distribution (its labels are public
    /// protocol data; the probabilities stay hidden).
    pub fn outcome_labels(&self) -> &[String] {
        self.dist.labels()
    }

    /// Probability that an empirical-mode answer violates the ±τ contract:
    /// 2·exp(−shots·τ²/2) for test functions with range [−1, 1]. None for
    /// the modes with a hard guarantee.
    pub fn hoeffding_delta(&self) -> Option<f64> {
        match self.mode {
            NoiseMode::Empirical { shots } => {
                Some(2.0 * (-(shots as f64) * self.tau * self.tau / 2.0).exp())
            }
            _ => None,
        }
    }
}

/// Query the SQ oracle. Increments the count only on success; a spent budget
/// yields [`Error::BudgetExhausted`] (catchable, relied on by adversaries).
pub fn stat_query(o: &mut StatOracle, phi: &TestFunction) -> Result<f64> {
    check_budget(o.count, o.budget)?;
    let truth = expectation(&o.dist, phi)?;
    let values = o.dist.values().to_vec();
    let answer = perturb(
        truth,
        o.tau,
        &mut o.mode,
        o.count,
        &mut o.rng,
        |shots, rng| {
            let freqs = empirical_frequencies(&values, shots, rng)?;
            Ok(freqs
                .iter()
                .zip(phi.values())
                .map(|(f, v)| f * v)
                .sum())
        },
    )?;
    o.count += 1;
    Ok(answer)
}

/// Set a fresh query budget and zero the counter.
pub fn reset_budget_stat(o: &mut StatOracle, q: u64) {
    o.budget = Some(q);
    o.count = 0;
}

/// Oracle QPStat_τ(E): answers α with |α − Tr[O E(σ)]| ≤ τ for queries
/// (σ, O) with ‖σ‖₁ ≤ 1 and ‖O‖∞ ≤ 1. With `extended = false`, σ must be a
/// positive unit-trace state; with `extended = true` any Hermitian σ with
/// trace norm ≤ 1 is accepted.
pub struct QPStatOracle {
    channel: Propagator,
    tau: f64,
    mode: NoiseMode,
    count: u64,
    budget: Option<u64>,
    extended: bool,
    rng: ChaCha8Rng,
}

impl QPStatOracle {
    pub fn new(
        channel: Propagator,
        tau: f64,
        mode: NoiseMode,
        extended: bool,
        stream: RandomStream,
    ) -> Self {
        assert!(tau >= 0.0, "tolerance must be nonnegative");
        Self {
            channel,
            tau,
            mode,
            count: 0,
            budget: None,
            extended,
            rng: stream.rng(),
        }
    }

    pub fn exact(channel: Propagator, tau: f64) -> Self {
        Self::new(channel, tau, NoiseMode::Exact, false, RandomStream::new(0, 0))
    }

    pub fn dim(&self) -> usize {
        self.channel.generator.dim()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn extended(&self) -> bool {
        self.extended
    }

    /// Same Hoeffding report as [`StatOracle::hoeffding_delta`]: observables
    /// with ‖O‖∞ ≤ 1 have eigenvalues in [−1, 1].
    pub fn hoeffding_delta(&self) -> Option<f64> {
        match self.mode {
            NoiseMode::Empirical { shots } => {
                Some(2.0 * (-(shots as f64) * self.tau * self.tau / 2.0).exp())
            }
            _ => None,
        }
    }
}

/// Query the QPStat oracle with input σ and observable O.
pub fn qpstat_query(o: &mut QPStatOracle, sigma: &CMat, obs: &CMat) -> Result<f64> {
    check_budget(o.count, o.budget)?;
    let d = o.dim();
    if sigma.dim() != (d, d) || obs.dim() != (d, d) {
        return Err(Error::Dimension {
            context: "qpstat_query",
            expected: d,
            got: sigma.nrows().max(obs.nrows()),
        });
    }
    if hermiticity_residual(sigma) > 1e-12 {
        return Err(Error::Invalid {
            context: "qpstat_query",
            message: "input σ is not Hermitian".into(),
        });
    }
    if hermiticity_residual(obs) > 1e-12 {
        return Err(Error::Invalid {
            context: "qpstat_query",
            message: "observable is not Hermitian".into(),
        });
    }
    let sigma_tn = trace_norm(sigma);
    if sigma_tn > 1.0 + 1e-10 {
        return Err(Error::Invalid {
            context: "qpstat_query",
            message: format!("trace norm of σ is {sigma_tn:.6}, above 1"),
        });
    }
    if operator_norm(obs) > 1.0 + 1e-10 {
        return Err(Error::Invalid {
            context: "qpstat_query",
            message: "operator norm of O is above 1".into(),
        });
    }
    if !o.extended {
        let eigs = sigma.eigh(UPLO::Upper).map_err(|e| Error::Numerical {
            context: "qpstat_query eigendecomposition",
            message: format!("{e}"),
        })?;
        let min_eig = eigs.0.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::Invalid {
                context: "qpstat_query",
                message: format!(
                    "non-extended oracle requires positive σ; min eigenvalue {min_eig:.3e}"
                ),
            });
        }
        let tr = crate::operators::trace(sigma);
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Invalid {
                context: "qpstat_query",
                message: format!("non-extended oracle requires unit trace; got {tr}"),
            });
        }
    }
    let evolved = o.channel.propagate_matrix(sigma)?;
    let mut truth_c = crate::operators::c(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            truth_c += obs[(i, j)] * evolved[(j, i)];
        }
    }
    debug_assert!(truth_c.im.abs() <= 1e-9, "Tr[O E(σ)] imaginary residue");
    let truth = truth_c.re;

    let answer = perturb(
        truth,
        o.tau,
        &mut o.mode,
        o.count,
        &mut o.rng,
        |shots, rng| {
            // shot noise: measure O's eigenbasis on E(σ)
            let (vals, vecs) = obs.eigh(UPLO::Upper).map_err(|e| Error::Numerical {
                context: "qpstat_query eigendecomposition",
                message: format!("{e}"),
            })?;
            let probs: Vec<f64> = (0..d)
                .map(|i| {
                    let col = vecs.column(i);
                    let mut p = crate::operators::c(0.0, 0.0);
                    for a in 0..d {
                        for b in 0..d {
                            p += col[a].conj() * evolved[(a, b)] * col[b];
                        }
                    }
                    p.re
                })
                .collect();
            let freqs = empirical_frequencies(&probs, shots, rng)?;
            Ok(freqs.iter().zip(vals.iter()).map(|(f, v)| f * v).sum())
        },
    )?;
    o.count += 1;
    Ok(answer)
}

/// Set a fresh query budget and zero the counter.
pub fn reset_budget_qpstat(o: &mut QPStatOracle, q: u64) {
    o.budget = Some(q);
    o.count = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{Generator, JumpTerm};
    use crate::operators::{basis_state, outer, sigma_minus, sigma_z};
    use approx::assert_abs_diff_eq;

    fn uniform_01() -> OutputDistribution {
        OutputDistribution::new(vec!["0".into(), "1".into()], vec![0.5, 0.5]).unwrap()
    }

    fn parity() -> TestFunction {
        TestFunction::new(vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn exact_query_on_uniform_parity() {
        let mut o = StatOracle::exact(uniform_01(), 0.0);
        assert_eq!(stat_query(&mut o, &parity()).unwrap(), 0.0);
        assert_eq!(o.count(), 1);
    }

    #[test]
    fn uniform_mode_respects_tolerance_and_nesting() {
        let dist =
            OutputDistribution::new(vec!["0".into(), "1".into()], vec![0.3, 0.7]).unwrap();
        let truth = -0.4; // 0.3 − 0.7
        let tau = 0.01;
        let mut o = StatOracle::new(dist, tau, NoiseMode::Uniform, RandomStream::new(5, 0));
        let mut saw_offset = false;
        for _ in 0..1000 {
            let v = stat_query(&mut o, &parity()).unwrap();
            assert!((v - truth).abs() <= tau + 1e-15);
            // monotone tolerance: an answer valid at τ is valid at any τ' > τ
            assert!((v - truth).abs() <= 0.05 + 1e-15);
            if v != truth {
                saw_offset = true;
            }
        }
        assert!(saw_offset);
        assert_eq!(o.count(), 1000);
    }

    #[test]
    fn empirical_mode_hoeffding_failure_rate() {
        // range-1 test function (indicator of outcome 0), so
        // shots = ⌈ln(2/δ)/(2τ²)⌉ gives failure probability ≤ δ
        let (tau, delta) = (0.05, 0.05);
        let shots = ((2.0_f64 / delta).ln() / (2.0 * tau * tau)).ceil() as u64;
        assert_eq!(shots, 738);
        let indicator = TestFunction::new(vec![1.0, 0.0]).unwrap();
        let dist =
            OutputDistribution::new(vec!["0".into(), "1".into()], vec![0.35, 0.65]).unwrap();
        let mut failures = 0;
        for trial in 0..1000u64 {
            let mut o = StatOracle::new(
                dist.clone(),
                tau,
                NoiseMode::Empirical { shots },
                RandomStream::new(99, trial),
            );
            let v = stat_query(&mut o, &indicator).unwrap();
            if (v - 0.35).abs() > tau {
                failures += 1;
            }
        }
        assert!(failures <= 50, "{failures} Hoeffding failures in 1000 trials");
    }

    #[test]
    fn hoeffding_delta_is_reported() {
        let mut o = StatOracle::new(
            uniform_01(),
            0.1,
            NoiseMode::Empirical { shots: 200 },
            RandomStream::new(1, 1),
        );
        let d = o.hoeffding_delta().unwrap();
        assert_abs_diff_eq!(d, 2.0 * (-200.0 * 0.01 / 2.0_f64).exp(), epsilon = 1e-15);
        assert!(stat_query(&mut o, &parity()).is_ok());
        assert!(StatOracle::exact(uniform_01(), 0.1).hoeffding_delta().is_none());
    }

    #[test]
    fn adversarial_answers_are_clamped_every_call() {
        let tau = 0.02;
        let cb = Box::new(|truth: f64, k: u64| truth + if k % 2 == 0 { 100.0 } else { -100.0 });
        let mut o = StatOracle::new(
            uniform_01(),
            tau,
            NoiseMode::Adversarial(cb),
            RandomStream::new(2, 0),
        );
        for k in 0..50u64 {
            let v = stat_query(&mut o, &parity()).unwrap();
            let expected = if k % 2 == 0 { tau } else { -tau };
            assert_abs_diff_eq!(v, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn budget_gates_queries() {
        let mut o = StatOracle::exact(uniform_01(), 0.0);
        reset_budget_stat(&mut o, 0);
        assert!(matches!(
            stat_query(&mut o, &parity()),
            Err(Error::BudgetExhausted { .. })
        ));
        assert_eq!(o.count(), 0);

        reset_budget_stat(&mut o, 5);
        for _ in 0..5 {
            stat_query(&mut o, &parity()).unwrap();
        }
        assert!(matches!(
            stat_query(&mut o, &parity()),
            Err(Error::BudgetExhausted { used: 5, budget: 5 })
        ));
        assert_eq!(o.count(), 5);
    }

    fn amp_damp_channel(c_rate: f64, t: f64) -> Propagator {
        let g = Generator::new(2, None, vec![JumpTerm::new(sigma_minus(), c_rate)]).unwrap();
        Propagator::new(g, t)
    }

    fn identity_channel(d: usize) -> Propagator {
        Propagator::new(Generator::zero(d), 1.0)
    }

    #[test]
    fn qpstat_identity_channel_example() {
        let mut o = QPStatOracle::exact(identity_channel(2), 0.0);
        let sigma = outer(&basis_state(2, 0), &basis_state(2, 0));
        let v = qpstat_query(&mut o, &sigma, &sigma_z()).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        assert_eq!(o.count(), 1);
    }

    #[test]
    fn qpstat_amp_damp_closed_form() {
        // populations from |1⟩⟨1| damp to (1−e^{−ct}, e^{−ct}); with the
        // convention Z|0⟩ = +|0⟩ this gives Tr[Z ρ_t] = 1 − 2e^{−ct}
        let (c_rate, t) = (0.8, 0.9);
        let mut o = QPStatOracle::exact(amp_damp_channel(c_rate, t), 0.0);
        let sigma = outer(&basis_state(2, 1), &basis_state(2, 1));
        let v = qpstat_query(&mut o, &sigma, &sigma_z()).unwrap();
        assert_abs_diff_eq!(v, 1.0 - 2.0 * (-c_rate * t).exp(), epsilon = 1e-10);
    }

    #[test]
    fn qpstat_extended_flag_controls_input_domain() {
        let half_diff = (&outer(&basis_state(2, 0), &basis_state(2, 0))
            - &outer(&basis_state(2, 1), &basis_state(2, 1)))
            .mapv(|z| z * 0.5);
        assert_abs_diff_eq!(trace_norm(&half_diff), 1.0, epsilon = 1e-12);

        let mut strict = QPStatOracle::exact(identity_channel(2), 0.0);
        assert!(matches!(
            qpstat_query(&mut strict, &half_diff, &sigma_z()),
            Err(Error::Invalid { .. })
        ));
        assert_eq!(strict.count(), 0);

        let mut ext = QPStatOracle::new(
            identity_channel(2),
            0.0,
            NoiseMode::Exact,
            true,
            RandomStream::new(3, 0),
        );
        let v = qpstat_query(&mut ext, &half_diff, &sigma_z()).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn qpstat_rejects_norm_violations() {
        let mut o = QPStatOracle::exact(identity_channel(2), 0.0);
        let sigma = outer(&basis_state(2, 0), &basis_state(2, 0));
        let big_obs = sigma_z().mapv(|z| z * 2.0);
        assert!(matches!(
            qpstat_query(&mut o, &sigma, &big_obs),
            Err(Error::Invalid { .. })
        ));
        let two_sigma = sigma.mapv(|z| z * 2.0);
        assert!(matches!(
            qpstat_query(&mut o, &two_sigma, &sigma_z()),
            Err(Error::Invalid { .. })
        ));
        assert_eq!(o.count(), 0);
    }

    #[test]
    fn qpstat_budget_and_empirical_mode() {
        let (c_rate, t, tau) = (0.5_f64, 1.0_f64, 0.05_f64);
        let sigma = outer(&basis_state(2, 1), &basis_state(2, 1));
        let truth = 1.0 - 2.0 * (-c_rate * t).exp();
        let shots = ((2.0_f64 / 0.01).ln() * 2.0 / (tau * tau)).ceil() as u64;
        let mut failures = 0;
        for trial in 0..200u64 {
            let mut o = QPStatOracle::new(
                amp_damp_channel(c_rate, t),
                tau,
                NoiseMode::Empirical { shots },
                false,
                RandomStream::new(17, trial),
            );
            let v = qpstat_query(&mut o, &sigma, &sigma_z()).unwrap();
            if (v - truth).abs() > tau {
                failures += 1;
            }
        }
        assert!(failures <= 4, "{failures} empirical failures in 200 trials");

        let mut o = QPStatOracle::exact(identity_channel(2), 0.0);
        reset_budget_qpstat(&mut o, 2);
        qpstat_query(&mut o, &sigma, &sigma_z()).unwrap();
        qpstat_query(&mut o, &sigma, &sigma_z()).unwrap();
        assert!(matches!(
            qpstat_query(&mut o, &sigma, &sigma_z()),
            Err(Error::BudgetExhausted { .. })
        ));
    }

    #[test]
    fn empirical_frequencies_rejects_quasi_distributions() {
        let mut rng = RandomStream::new(4, 0).rng();
        assert!(empirical_frequencies(&[0.5, 0.6, -0.1], 10, &mut rng).is_err());
        let f = empirical_frequencies(&[0.25, 0.75], 10_000, &mut rng).unwrap();
        assert!((f[0] - 0.25).abs() < 0.05);
        assert_abs_diff_eq!(f[0] + f[1], 1.0, epsilon = 1e-12);
    }
}

//! GKSL generators as structured term lists, the linearly parametrized
//! family L(θ) = L_ref + (δ/√M) Σ_j θ_j G_j, and semigroup evolution e^{tL}.
//!
//! Generators are kept as jump-term lists so they can be applied matrix-free;
//! a dense d²×d² superoperator is materialized only on demand and only below
//! a size cap. Sphere sampling produces signed coefficients, so an assembled
//! generator may fail to be GKSL; the exponential still exists and evolution
//! proceeds, with the `signed_rates` flag surfacing the situation to callers
//! (outputs are then quasi-distributions).

use ndarray::Array2;
use rand::Rng;

use crate::expm::{expm, taylor_action};
use crate::operators::{
    basis_state, c, dagger, embed_qubit_op, hermiticity_residual, identity, kron, operator_norm,
    outer, random_gaussian_matrix, random_pure_state, sample_product_cube, sample_sphere,
    sigma_minus, trace, trace_norm, unvec, vec, CMat, RandomStream,
};
use crate::{Error, Result};

/// Default cap on d² for dense superoperator materialization (d ≤ 64).
pub const SUPEROP_CAP: usize = 4096;
/// Default evolution tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// One dissipator term: jump operator L with a signed rate coefficient.
#[derive(Clone, Debug)]
pub struct JumpTerm {
    pub operator: CMat,
    pub weight: f64,
}

impl JumpTerm {
    pub fn new(operator: CMat, weight: f64) -> Self {
        Self { operator, weight }
    }
}

/// Lindblad generator L(ρ) = −i[H, ρ] + Σ_α w_α (L_α ρ L_α† − ½{L_α†L_α, ρ}).
#[derive(Clone, Debug)]
pub struct Generator {
    dim: usize,
    hamiltonian: Option<CMat>,
    jumps: Vec<JumpTerm>,
}

impl Generator {
    /// Build a generator, validating dimensions and Hamiltonian hermiticity.
    pub fn new(dim: usize, hamiltonian: Option<CMat>, jumps: Vec<JumpTerm>) -> Result<Self> {
        if let Some(h) = &hamiltonian {
            if h.dim() != (dim, dim) {
                return Err(Error::Dimension {
                    context: "Generator hamiltonian",
                    expected: dim,
                    got: h.nrows(),
                });
            }
            let res = hermiticity_residual(h);
            if res > 1e-12 {
                return Err(Error::Invalid {
                    context: "Generator hamiltonian",
                    message: format!("not Hermitian: residual {res:.3e} > 1e-12"),
                });
            }
        }
        for (k, j) in jumps.iter().enumerate() {
            if j.operator.dim() != (dim, dim) {
                return Err(Error::Dimension {
                    context: "Generator jump operator",
                    expected: dim,
                    got: j.operator.nrows() * (k + 1) / (k + 1),
                });
            }
        }
        Ok(Self {
            dim,
            hamiltonian,
            jumps,
        })
    }

    /// The zero generator (no Hamiltonian, no jumps).
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            hamiltonian: None,
            jumps: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> Option<&CMat> {
        self.hamiltonian.as_ref()
    }

    pub fn jumps(&self) -> &[JumpTerm] {
        &self.jumps
    }

    /// True iff any dissipator weight is negative (the generator is then not
    /// of GKSL form even though the exponential exists).
    pub fn signed_rates(&self) -> bool {
        self.jumps.iter().any(|j| j.weight < 0.0)
    }

    /// Apply the generator to a matrix (see [`generator_apply`]).
    pub fn apply(&self, x: &CMat) -> CMat {
        generator_apply(self, x)
    }

    /// Certified upper bound on ‖L‖₁→₁ from the term list:
    /// 2‖H‖∞ + Σ_α |w_α| · 2‖L_α‖∞².
    pub fn one_to_one_norm_bound(&self) -> f64 {
        let mut bound = 0.0;
        if let Some(h) = &self.hamiltonian {
            bound += 2.0 * operator_norm(h);
        }
        for j in &self.jumps {
            let n = operator_norm(&j.operator);
            bound += 2.0 * j.weight.abs() * n * n;
        }
        bound
    }
}

/// Apply one dissipator term: weight · (L x L† − ½{L†L, x}).
pub fn dissipator_apply(jump: &JumpTerm, x: &CMat) -> CMat {
    assert_eq!(
        jump.operator.dim(),
        x.dim(),
        "dissipator_apply dimension mismatch"
    );
    let l = &jump.operator;
    let ld = dagger(l);
    let ldl = ld.dot(l);
    let sandwich = l.dot(x).dot(&ld);
    let anti = ldl.dot(x) + x.dot(&ldl);
    (sandwich - anti.mapv(|z| z * 0.5)).mapv(|z| z * jump.weight)
}

/// Apply the full generator −i[H, x] + Σ_α dissipator terms, matrix-free.
pub fn generator_apply(g: &Generator, x: &CMat) -> CMat {
    assert_eq!(x.dim(), (g.dim, g.dim), "generator_apply dimension mismatch");
    let mut out: CMat = Array2::zeros((g.dim, g.dim));
    if let Some(h) = &g.hamiltonian {
        let comm = h.dot(x) - x.dot(h);
        out = out + comm.mapv(|z| z * c(0.0, -1.0));
    }
    for j in &g.jumps {
        out = out + dissipator_apply(j, x);
    }
    out
}

/// Ensemble over parameter vectors θ.
#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleMode {
    /// θ uniform on the unit sphere S^{M−1}; coefficients δθ_j/√M.
    Sphere,
    /// θ_j independent uniform on [−halfwidth, +halfwidth]; coefficients θ_j.
    Product { halfwidth: f64 },
}

/// Linearly parametrized family L(θ) = L_ref + (δ/√M) Σ_j θ_j G_j (sphere
/// mode) or L_ref + Σ_j θ_j G_j with θ from a product cube (product mode).
#[derive(Clone, Debug)]
pub struct ParametrizedFamily {
    pub l_ref: Generator,
    pub directions: Vec<Generator>,
    pub delta: f64,
    pub mode: EnsembleMode,
    c_g: f64,
}

impl ParametrizedFamily {
    /// Validate dimensions and record the analytic uniform direction bound
    /// c_g = max_j Σ_α 2|w_α|·‖L_α‖∞² (for single unit-weight jumps this is
    /// 2·max_j ‖L_j‖∞²).
    pub fn new(
        l_ref: Generator,
        directions: Vec<Generator>,
        delta: f64,
        mode: EnsembleMode,
    ) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::Invalid {
                context: "ParametrizedFamily",
                message: "at least one direction required".into(),
            });
        }
        if delta <= 0.0 {
            return Err(Error::Invalid {
                context: "ParametrizedFamily",
                message: format!("delta must be positive, got {delta}"),
            });
        }
        if let EnsembleMode::Product { halfwidth } = mode {
            if halfwidth <= 0.0 {
                return Err(Error::Invalid {
                    context: "ParametrizedFamily",
                    message: format!("product halfwidth must be positive, got {halfwidth}"),
                });
            }
        }
        let mut c_g = 0.0_f64;
        for (j, g) in directions.iter().enumerate() {
            if g.dim() != l_ref.dim() {
                return Err(Error::Dimension {
                    context: "ParametrizedFamily direction",
                    expected: l_ref.dim(),
                    got: g.dim(),
                });
            }
            if g.hamiltonian().is_some() {
                return Err(Error::Invalid {
                    context: "ParametrizedFamily",
                    message: format!("direction {j} has a Hamiltonian part; directions must be pure dissipators"),
                });
            }
            c_g = c_g.max(g.one_to_one_norm_bound());
        }
        Ok(Self {
            l_ref,
            directions,
            delta,
            mode,
            c_g,
        })
    }

    pub fn dim(&self) -> usize {
        self.l_ref.dim()
    }

    /// Number of directions M.
    pub fn m(&self) -> usize {
        self.directions.len()
    }

    /// Analytic uniform bound on ‖G_j‖₁→₁ recorded at construction.
    pub fn c_g(&self) -> f64 {
        self.c_g
    }

    /// Draw one parameter vector from the family's ensemble.
    pub fn sample_theta(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self.mode {
            EnsembleMode::Sphere => sample_sphere(self.m(), rng),
            EnsembleMode::Product { halfwidth } => sample_product_cube(self.m(), halfwidth, rng),
        }
    }

    /// Merge L_ref with the directions at the given parameter point: each
    /// direction's jump weights are scaled by δθ_j/√M (sphere) or θ_j
    /// (product).
    pub fn assemble(&self, theta: &[f64]) -> Result<Generator> {
        let m = self.m();
        if theta.len() != m {
            return Err(Error::Dimension {
                context: "assemble theta",
                expected: m,
                got: theta.len(),
            });
        }
        if self.mode == EnsembleMode::Sphere {
            let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid {
                    context: "assemble",
                    message: format!("sphere-mode theta has norm {norm}, expected 1 within 1e-9"),
                });
            }
        }
        let mut jumps = self.l_ref.jumps().to_vec();
        for (j, g) in self.directions.iter().enumerate() {
            let coeff = match self.mode {
                EnsembleMode::Sphere => self.delta * theta[j] / (m as f64).sqrt(),
                EnsembleMode::Product { .. } => theta[j],
            };
            for term in g.jumps() {
                jumps.push(JumpTerm::new(term.operator.clone(), coeff * term.weight));
            }
        }
        Generator::new(self.dim(), self.l_ref.hamiltonian().cloned(), jumps)
    }
}

/// Exponential backend selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Padé scaling-and-squaring on the materialized d²×d² superoperator.
    Dense,
    /// Sliced truncated-Taylor action using only generator applications.
    Matfree,
}

impl Backend {
    /// Default rule: dense while the superoperator fits under the cap
    /// (d² ≤ 4096, i.e. up to 6 qubits), matrix-free above.
    pub fn auto(dim: usize) -> Self {
        if dim * dim <= SUPEROP_CAP {
            Backend::Dense
        } else {
            Backend::Matfree
        }
    }
}

/// Semigroup propagator Λ_t = e^{tL} for a fixed generator and time.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub generator: Generator,
    pub time: f64,
    pub backend: Backend,
    pub tolerance: f64,
}

impl Propagator {
    /// Propagator with the automatic backend rule and default tolerance.
    pub fn new(generator: Generator, time: f64) -> Self {
        let backend = Backend::auto(generator.dim());
        Self {
            generator,
            time,
            backend,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// Apply e^{tL} to an arbitrary matrix (no state preconditions). This is
    /// the raw semigroup action; [`Propagator::evolve`] adds the state
    /// contracts on top.
    pub fn propagate_matrix(&self, x: &CMat) -> Result<CMat> {
        if x.dim() != (self.generator.dim(), self.generator.dim()) {
            return Err(Error::Dimension {
                context: "propagate_matrix",
                expected: self.generator.dim(),
                got: x.nrows(),
            });
        }
        match self.backend {
            Backend::Dense => {
                let s = materialize_superoperator(&self.generator)?;
                let e = expm(&s.mapv(|z| z * self.time))?;
                unvec(&e.dot(&vec(x)))
            }
            Backend::Matfree => taylor_action(
                |y| generator_apply(&self.generator, y),
                self.time,
                x,
                self.generator.one_to_one_norm_bound(),
                self.tolerance,
            ),
        }
    }

    /// Evolve a state: requires Tr ρ = 1 ± 1e−10 and checks that the trace is
    /// preserved to the same tolerance (a violation indicates series failure).
    pub fn evolve(&self, rho: &CMat) -> Result<CMat> {
        let tr_in = trace(rho);
        if (tr_in.re - 1.0).abs() > 1e-10 || tr_in.im.abs() > 1e-10 {
            return Err(Error::Invalid {
                context: "evolve",
                message: format!("input trace {tr_in} is not 1 within 1e-10"),
            });
        }
        let out = self.propagate_matrix(rho)?;
        let tr_out = trace(&out);
        if (tr_out.re - tr_in.re).abs() > 1e-10 || (tr_out.im - tr_in.im).abs() > 1e-10 {
            return Err(Error::Numerical {
                context: "evolve",
                message: format!(
                    "trace not preserved: {tr_in} -> {tr_out} (backend {:?}, t = {}, tolerance {})",
                    self.backend, self.time, self.tolerance
                ),
            });
        }
        Ok(out)
    }
}

/// Dense d²×d² matrix S with S·vec(x) = vec(L(x)), column-major convention.
/// Errors above the materialization cap d² ≤ [`SUPEROP_CAP`].
pub fn materialize_superoperator(g: &Generator) -> Result<CMat> {
    let d = g.dim();
    if d * d > SUPEROP_CAP {
        return Err(Error::Invalid {
            context: "materialize_superoperator",
            message: format!("d² = {} exceeds cap {}", d * d, SUPEROP_CAP),
        });
    }
    let id = identity(d);
    let mut s: CMat = Array2::zeros((d * d, d * d));
    if let Some(h) = g.hamiltonian() {
        // vec(Hx) = (I⊗H)vec(x); vec(xH) = (Hᵀ⊗I)vec(x)
        let left = kron(&id, h);
        let right = kron(&h.t().to_owned(), &id);
        s = s + (left - right).mapv(|z| z * c(0.0, -1.0));
    }
    for j in g.jumps() {
        let l = &j.operator;
        let ld = dagger(l);
        let ldl = ld.dot(l);
        let sandwich = kron(&l.mapv(|z| z.conj()), l);
        let anti = kron(&id, &ldl) + kron(&ldl.t().to_owned(), &id);
        s = s + (sandwich - anti.mapv(|z| z * 0.5)).mapv(|z| z * j.weight);
    }
    Ok(s)
}

/// Sampled lower bound on the 1→1 norm of a superoperator: the running
/// maximum of trace_norm(map(|ψ⟩⟨φ|)) over Haar-random unit pairs, which is
/// monotone nondecreasing in `n_samples` for a fixed stream prefix.
pub fn one_to_one_norm_lb<F>(map: F, dim: usize, n_samples: usize, rng: &mut impl Rng) -> f64
where
    F: Fn(&CMat) -> CMat,
{
    assert!(n_samples >= 1, "need at least one sample");
    let mut best = 0.0_f64;
    for _ in 0..n_samples {
        let psi = random_pure_state(dim, rng);
        let phi = random_pure_state(dim, rng);
        best = best.max(trace_norm(&map(&outer(&psi, &phi))));
    }
    best
}

/// Lower bound on the 1→1 norm over caller-chosen unit-trace-norm probes.
pub fn one_to_one_norm_lb_probes<F>(map: F, probes: &[CMat]) -> f64
where
    F: Fn(&CMat) -> CMat,
{
    probes
        .iter()
        .map(|x| trace_norm(&map(x)))
        .fold(0.0, f64::max)
}

/// Amplitude-damping chain: N qubits, direction G_j the σ⁻ dissipator at
/// site j with rate γ, reference generator zero. The standard testbed for
/// the linear-response and mean-TV experiments (M = N).
pub fn amp_damp_chain_family(
    n_qubits: usize,
    gamma: f64,
    delta: f64,
    mode: EnsembleMode,
) -> Result<ParametrizedFamily> {
    assert!(n_qubits >= 1, "need at least one qubit");
    let d = 1 << n_qubits;
    let directions = (0..n_qubits)
        .map(|site| {
            let l = embed_qubit_op(&sigma_minus(), site, n_qubits);
            Generator::new(d, None, vec![JumpTerm::new(l, gamma)])
        })
        .collect::<Result<Vec<_>>>()?;
    ParametrizedFamily::new(Generator::zero(d), directions, delta, mode)
}

/// Fully excited chain state |1…1⟩⟨1…1|.
pub fn all_ones_state(n_qubits: usize) -> CMat {
    let d = 1 << n_qubits;
    let k = basis_state(d, d - 1);
    outer(&k, &k)
}

/// Family with M directions on a fixed small register: direction j is a
/// dissipator with a random unit-operator-norm jump on site j mod n, drawn
/// deterministically from `seed`. Used by the concentration experiments,
/// where M grows while the system dimension stays fixed; c_g = 2γ uniformly.
pub fn random_local_family(
    n_qubits: usize,
    m: usize,
    gamma: f64,
    delta: f64,
    mode: EnsembleMode,
    seed: u64,
) -> Result<ParametrizedFamily> {
    assert!(n_qubits >= 1 && m >= 1);
    let d = 1 << n_qubits;
    let directions = (0..m)
        .map(|j| {
            let mut rng = RandomStream::new(seed, j as u64).rng();
            let raw = random_gaussian_matrix(2, 2, &mut rng);
            let jump = raw.mapv(|z| z / operator_norm(&raw));
            let l = embed_qubit_op(&jump, j % n_qubits, n_qubits);
            Generator::new(d, None, vec![JumpTerm::new(l, gamma)])
        })
        .collect::<Result<Vec<_>>>()?;
    ParametrizedFamily::new(Generator::zero(d), directions, delta, mode)
}

//! Dense complex matrices, Schatten norms, vectorization, and the random
//! draws used everywhere else: sphere points, product-cube points, Haar
//! states, and the deterministic stream splitter that keeps parallel Monte
//! Carlo runs bit-identical to serial ones.

use ndarray::{Array1, Array2};
use ndarray_linalg::{QR, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Dense complex matrix, the working representation for states, observables,
/// POVM elements, and jump operators.
pub type CMat = Array2<Complex64>;
/// Dense complex vector (kets and vectorized matrices).
pub type CVec = Array1<Complex64>;

/// Shorthand complex constructor.
#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// d×d identity.
pub fn identity(d: usize) -> CMat {
    Array2::eye(d).mapv(|x: f64| c(x, 0.0))
}

/// Conjugate transpose.
pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Computational basis ket |k⟩ in dimension d.
pub fn basis_state(d: usize, k: usize) -> CVec {
    assert!(k < d, "basis index {k} out of range for dimension {d}");
    let mut v = Array1::zeros(d);
    v[k] = c(1.0, 0.0);
    v
}

/// Rank-1 projector |v⟩⟨v| (v need not be normalized; no normalization applied).
pub fn outer(v: &CVec, w: &CVec) -> CMat {
    let d = v.len();
    let mut m = Array2::zeros((d, w.len()));
    for i in 0..d {
        for j in 0..w.len() {
            m[(i, j)] = v[i] * w[j].conj();
        }
    }
    m
}

/// Pauli X.
pub fn sigma_x() -> CMat {
    ndarray::array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
}

/// Pauli Y.
pub fn sigma_y() -> CMat {
    ndarray::array![[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]
}

/// Pauli Z (convention Z|0⟩ = +|0⟩, basis ordered |0⟩, |1⟩).
pub fn sigma_z() -> CMat {
    ndarray::array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]]
}

/// Lowering operator σ⁻ = |0⟩⟨1|.
pub fn sigma_minus() -> CMat {
    ndarray::array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]
}

/// Kronecker product with block ordering a⊗b.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    ndarray::linalg::kron(a, b)
}

/// Embed a single-site operator at `site` (0-based, leftmost tensor factor is
/// site 0) of an `n`-site register of qubits.
pub fn embed_qubit_op(op: &CMat, site: usize, n: usize) -> CMat {
    assert!(site < n, "site {site} out of range for {n} qubits");
    let mut out = if site == 0 { op.clone() } else { identity(1 << site) };
    if site > 0 {
        out = kron(&out, op);
    }
    if site + 1 < n {
        out = kron(&out, &identity(1 << (n - site - 1)));
    }
    out
}

fn singular_values(a: &CMat) -> Array1<f64> {
    let (_, s, _) = a
        .svd(false, false)
        .expect("LAPACK SVD failed on a finite dense matrix");
    s
}

/// Trace norm ‖a‖₁: sum of singular values.
pub fn trace_norm(a: &CMat) -> f64 {
    singular_values(a).sum()
}

/// Operator norm ‖a‖∞: largest singular value.
pub fn operator_norm(a: &CMat) -> f64 {
    singular_values(a).iter().fold(0.0, |m, &s| m.max(s))
}

/// Largest absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Largest absolute entry of a − b.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.dim(), b.dim(), "max_abs_diff shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

/// Max-abs deviation of a from its own conjugate transpose.
pub fn hermiticity_residual(a: &CMat) -> f64 {
    max_abs_diff(a, &dagger(a))
}

/// Matrix trace.
pub fn trace(a: &CMat) -> Complex64 {
    a.diag().sum()
}

/// Column-major vectorization: columns of `a` stacked top to bottom.
pub fn vec(a: &CMat) -> CVec {
    let (rows, cols) = a.dim();
    let mut v = Array1::zeros(rows * cols);
    for j in 0..cols {
        for i in 0..rows {
            v[j * rows + i] = a[(i, j)];
        }
    }
    v
}

/// Inverse of [`vec`] for square matrices; the length must be a perfect square.
pub fn unvec(v: &CVec) -> Result<CMat> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(Error::Dimension {
            context: "unvec (length must be a perfect square)",
            expected: d * d,
            got: n,
        });
    }
    let mut a = Array2::zeros((d, d));
    for j in 0..d {
        for i in 0..d {
            a[(i, j)] = v[j * d + i];
        }
    }
    Ok(a)
}

/// Sandwich factor for column-major vectorization:
/// vec(A X B†) = (conj(B) ⊗ A) vec(X).
pub fn sandwich_factor(a: &CMat, b: &CMat) -> CMat {
    kron(&b.mapv(|z| z.conj()), a)
}

/// A reproducible random stream: `(seed, stream_id)` fully determines the
/// draw sequence, independent of thread schedule. Monte Carlo loops create
/// one stream per sample index so parallel and serial runs agree bit-for-bit.
///
/// Generator: ChaCha8, key derived from `seed` via the standard
/// `seed_from_u64` expansion, 64-bit stream counter set to `stream_id`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Instantiate the generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Uniform point on the unit sphere S^{m−1} via Gaussian normalization.
/// An exactly-zero Gaussian draw (probability 0 up to rounding) is resampled.
pub fn sample_sphere(m: usize, rng: &mut impl Rng) -> Vec<f64> {
    assert!(m >= 1, "sphere dimension must be at least 1");
    loop {
        let g: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return g.iter().map(|x| x / norm).collect();
        }
    }
}

/// Independent uniform draws on [−halfwidth, +halfwidth]^m.
pub fn sample_product_cube(m: usize, halfwidth: f64, rng: &mut impl Rng) -> Vec<f64> {
    assert!(
        halfwidth > 0.0,
        "product-cube halfwidth must be positive, got {halfwidth}"
    );
    (0..m).map(|_| rng.random_range(-halfwidth..=halfwidth)).collect()
}

/// Haar-random pure state via complex Gaussian normalization.
pub fn random_pure_state(d: usize, rng: &mut impl Rng) -> CVec {
    assert!(d >= 1, "state dimension must be at least 1");
    loop {
        let g: CVec = (0..d)
            .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            return g.mapv(|z| z / norm);
        }
    }
}

/// Random full-rank density matrix: AA†/Tr(AA†) for complex Gaussian A.
pub fn random_density_matrix(d: usize, rng: &mut impl Rng) -> CMat {
    loop {
        let a = random_gaussian_matrix(d, d, rng);
        let m = a.dot(&dagger(&a));
        let tr = trace(&m).re;
        if tr > 0.0 {
            return m.mapv(|z| z / tr);
        }
    }
}

/// Matrix with independent standard complex Gaussian entries (test utility).
pub fn random_gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    Array2::from_shape_fn((rows, cols), |_| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar-random unitary: QR of a complex Gaussian matrix with the phase fix
/// U = Q·diag(r_ii/|r_ii|).
pub fn random_unitary(d: usize, rng: &mut impl Rng) -> CMat {
    let g = random_gaussian_matrix(d, d, rng);
    let (q, r) = g.qr().expect("QR of a finite dense matrix");
    let phases: Vec<Complex64> = (0..d)
        .map(|i| {
            let z = r[(i, i)];
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                c(1.0, 0.0)
            }
        })
        .collect();
    let mut u = q;
    for j in 0..d {
        for i in 0..d {
            u[(i, j)] *= phases[j];
        }
    }
    u
}

//! Tomography-based channel authentication. The verifier probes the device
//! channel with a tomographically complete family — Hermitian inputs F_j of
//! trace norm ≤ 1 against observables G_k of operator norm ≤ 1 — and stores
//! the full D×D fingerprint y[k][j] ≈ Tr[G_k E(F_j)], D = d². Acceptance of
//! fresh responses within 2τ entrywise pins the prover's channel in the
//! tomographic norm, and the fingerprint inverts to a superoperator estimate.

use ndarray::Array2;
use ndarray_linalg::{Inverse, SVD};
use num_complex::Complex64;

use crate::expm::expm;
use crate::experiments::{format_float, CsvDocument};
use crate::lindblad::{materialize_superoperator, one_to_one_norm_lb, Propagator};
use crate::operators::{
    hermiticity_residual, identity, kron, operator_norm, sigma_x, sigma_y, sigma_z, trace,
    trace_norm, unvec, vec, CMat,
};
use crate::oracles::{qpstat_query, QPStatOracle};
use crate::{Error, Result};

/// Largest operator-space dimension D = d² accepted for a tomographic basis
/// (D² probe results must be stored and inverted).
pub const BASIS_CAP: usize = 256;

/// Tensor Pauli string for a base-4 index, digits ordered I < X < Y < Z with
/// the most significant digit acting on qubit 0. Index 0 is the identity.
pub fn pauli_string(index: usize, n_qubits: usize) -> (CMat, String) {
    assert!(n_qubits >= 1 && index < 1 << (2 * n_qubits));
    let mut op = identity(1);
    let mut label = String::with_capacity(n_qubits);
    for site in (0..n_qubits).rev() {
        let digit = index >> (2 * site) & 3;
        let (factor, letter) = match digit {
            0 => (identity(2), 'I'),
            1 => (sigma_x(), 'X'),
            2 => (sigma_y(), 'Y'),
            _ => (sigma_z(), 'Z'),
        };
        op = kron(&op, &factor);
        label.push(letter);
    }
    (op, label)
}

/// A probe family for channel tomography: D = d² Hermitian inputs with
/// trace norm ≤ 1 and D Hermitian observables with operator norm ≤ 1,
/// jointly of full real rank (certified through the Gram matrix at
/// construction).
#[derive(Clone, Debug)]
pub struct TomographicBasis {
    dim: usize,
    inputs: Vec<CMat>,
    observables: Vec<CMat>,
    labels: Vec<String>,
}

impl TomographicBasis {
    pub fn new(
        dim: usize,
        inputs: Vec<CMat>,
        observables: Vec<CMat>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let d2 = dim * dim;
        if d2 > BASIS_CAP {
            return Err(Error::Invalid {
                context: "TomographicBasis",
                message: format!("operator-space dimension {d2} exceeds cap {BASIS_CAP}"),
            });
        }
        for (name, family, count) in [
            ("inputs", &inputs, d2),
            ("observables", &observables, d2),
        ] {
            if family.len() != count {
                return Err(Error::Dimension {
                    context: "TomographicBasis",
                    expected: count,
                    got: family.len(),
                });
            }
            for op in family.iter() {
                if op.dim() != (dim, dim) {
                    return Err(Error::Dimension {
                        context: "TomographicBasis",
                        expected: dim,
                        got: op.nrows(),
                    });
                }
                if hermiticity_residual(op) > 1e-12 {
                    return Err(Error::Invalid {
                        context: "TomographicBasis",
                        message: format!("non-Hermitian operator in {name}"),
                    });
                }
            }
        }
        if labels.len() != d2 {
            return Err(Error::Dimension {
                context: "TomographicBasis",
                expected: d2,
                got: labels.len(),
            });
        }
        for f in &inputs {
            let tn = trace_norm(f);
            if tn > 1.0 + 1e-9 {
                return Err(Error::Invalid {
                    context: "TomographicBasis",
                    message: format!("input trace norm {tn:.6} exceeds 1"),
                });
            }
        }
        for g in &observables {
            let on = operator_norm(g);
            if on > 1.0 + 1e-9 {
                return Err(Error::Invalid {
                    context: "TomographicBasis",
                    message: format!("observable operator norm {on:.6} exceeds 1"),
                });
            }
        }
        // full real rank: the pairing Gram matrix S[k][j] = Re Tr[G_k F_j]
        // must be nonsingular, which certifies both families span Herm(d)
        let gram = pairing_matrix(&observables, &inputs);
        let (_, sv, _) = gram.svd(false, false).map_err(|e| Error::Numerical {
            context: "TomographicBasis",
            message: format!("Gram SVD failed: {e}"),
        })?;
        let max_sv = sv.iter().cloned().fold(0.0, f64::max);
        let min_sv = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_sv > 1e-8 * max_sv.max(1e-300)) {
            return Err(Error::Invalid {
                context: "TomographicBasis",
                message: format!(
                    "families are not tomographically complete (singular values {min_sv:.3e}..{max_sv:.3e})"
                ),
            });
        }
        Ok(Self {
            dim,
            inputs,
            observables,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Operator-space dimension D = d².
    pub fn operator_dim(&self) -> usize {
        self.dim * self.dim
    }

    pub fn inputs(&self) -> &[CMat] {
        &self.inputs
    }

    pub fn observables(&self) -> &[CMat] {
        &self.observables
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

fn pairing_matrix(observables: &[CMat], inputs: &[CMat]) -> Array2<f64> {
    let d2 = observables.len();
    let mut s = Array2::zeros((d2, d2));
    for (k, g) in observables.iter().enumerate() {
        for (j, f) in inputs.iter().enumerate() {
            s[(k, j)] = trace(&g.dot(f)).re;
        }
    }
    s
}

/// The Pauli probe family: observables G_k = P_k (operator norm 1), inputs
/// F_j = P_j/d (trace norm 1), in lexicographic {I,X,Y,Z}^n order with
/// index 0 the identity string.
pub fn pauli_tomographic_basis(n_qubits: usize) -> Result<TomographicBasis> {
    if n_qubits == 0 {
        return Err(Error::Invalid {
            context: "pauli_tomographic_basis",
            message: "need at least one qubit".into(),
        });
    }
    let d = 1usize << n_qubits;
    if d * d > BASIS_CAP {
        return Err(Error::Invalid {
            context: "pauli_tomographic_basis",
            message: format!("d² = {} exceeds cap {BASIS_CAP}", d * d),
        });
    }
    let scale = Complex64::new(1.0 / d as f64, 0.0);
    let mut inputs = Vec::with_capacity(d * d);
    let mut observables = Vec::with_capacity(d * d);
    let mut labels = Vec::with_capacity(d * d);
    for idx in 0..d * d {
        let (p, label) = pauli_string(idx, n_qubits);
        inputs.push(p.mapv(|z| z * scale));
        observables.push(p);
        labels.push(label);
    }
    TomographicBasis::new(d, inputs, observables, labels)
}

/// The verifier's stored probe table y[k][j] (row = observable, column =
/// input), with the accuracy τ it was produced at.
#[derive(Clone, Debug)]
pub struct FingerprintMatrix {
    entries: Array2<f64>,
    pub tau: f64,
}

impl FingerprintMatrix {
    pub fn new(entries: Array2<f64>, tau: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Dimension {
                context: "FingerprintMatrix",
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid {
                context: "FingerprintMatrix",
                message: "entries must be finite".into(),
            });
        }
        Ok(Self { entries, tau })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn operator_dim(&self) -> usize {
        self.entries.nrows()
    }

    /// CSV table: one row per observable index k, one column per input
    /// index j, labeled by the basis's canonical operator labels.
    pub fn to_csv_document(&self, basis: &TomographicBasis) -> Result<CsvDocument> {
        let d2 = basis.operator_dim();
        if self.operator_dim() != d2 {
            return Err(Error::Dimension {
                context: "FingerprintMatrix::to_csv_document",
                expected: d2,
                got: self.operator_dim(),
            });
        }
        let mut header = vec!["observable".to_string()];
        header.extend(basis.labels().iter().cloned());
        let mut rows = Vec::with_capacity(d2);
        for k in 0..d2 {
            let mut row = vec![basis.labels()[k].clone()];
            row.extend((0..d2).map(|j| format_float(self.entries[(k, j)])));
            rows.push(row);
        }
        Ok(CsvDocument {
            metadata: vec![
                ("tau".into(), format_float(self.tau)),
                ("dim".into(), basis.dim().to_string()),
            ],
            header,
            rows,
        })
    }
}

/// Probe the device channel on the full basis: y[k][j] = query(F_j, G_k),
/// exactly D² oracle calls, sequential so the counter is exact. Requires an
/// extended oracle because the inputs beyond F_0 are traceless.
pub fn fingerprint(
    oracle: &mut QPStatOracle,
    basis: &TomographicBasis,
) -> Result<FingerprintMatrix> {
    if !oracle.extended() {
        return Err(Error::Invalid {
            context: "fingerprint",
            message: "tomographic probing needs the extended (Hermitian-input) oracle".into(),
        });
    }
    if oracle.dim() != basis.dim() {
        return Err(Error::Dimension {
            context: "fingerprint",
            expected: basis.dim(),
            got: oracle.dim(),
        });
    }
    let d2 = basis.operator_dim();
    let mut entries = Array2::zeros((d2, d2));
    for k in 0..d2 {
        for j in 0..d2 {
            let v = qpstat_query(oracle, &basis.inputs()[j], &basis.observables()[k])?;
            debug_assert!(v.abs() <= 1.0 + oracle.tau() + 1e-9);
            entries[(k, j)] = v;
        }
    }
    FingerprintMatrix::new(entries, oracle.tau())
}

/// Exact fingerprint of a raw superoperator matrix (no oracle, no noise):
/// y[k][j] = Re Tr[G_k · map(F_j)]. Used for round-trip checks and for
/// evaluating the tomographic norm of map differences.
pub fn fingerprint_of_map(map: &CMat, basis: &TomographicBasis) -> Result<FingerprintMatrix> {
    let d2 = basis.operator_dim();
    if map.dim() != (d2, d2) {
        return Err(Error::Dimension {
            context: "fingerprint_of_map",
            expected: d2,
            got: map.nrows(),
        });
    }
    let mut entries = Array2::zeros((d2, d2));
    for (j, f) in basis.inputs().iter().enumerate() {
        let image = unvec(&map.dot(&vec(f)))?;
        for (k, g) in basis.observables().iter().enumerate() {
            entries[(k, j)] = trace(&g.dot(&image)).re;
        }
    }
    FingerprintMatrix::new(entries, 0.0)
}

/// Dense superoperator matrix e^{tL} of a propagator (column-major vec
/// convention), for comparing a reconstruction against the true channel.
pub fn channel_matrix(p: &Propagator) -> Result<CMat> {
    let s = materialize_superoperator(&p.generator)?;
    expm(&s.mapv(|z| z * p.time))
}

/// Invert a fingerprint to the unique real-linear map Ê with
/// Re Tr[G_k Ê(F_j)] = y[k][j]: each column determines the Hermitian image
/// X_j = Σ_k c[k][j] G_k through the observables' Gram matrix, and the d²×d²
/// superoperator follows from Ê(F_j) = X_j extended complex-linearly. For
/// the Pauli basis this is X_j = Σ_k y[k][j] P_k/d. The result need not be
/// CPTP.
pub fn reconstruct_channel(y: &FingerprintMatrix, basis: &TomographicBasis) -> Result<CMat> {
    let d2 = basis.operator_dim();
    if y.operator_dim() != d2 {
        return Err(Error::Dimension {
            context: "reconstruct_channel",
            expected: d2,
            got: y.operator_dim(),
        });
    }
    // dual coefficients: W c = y with W[k][l] = Re Tr[G_k G_l]
    let gram = pairing_matrix(basis.observables(), basis.observables());
    let gram_inv = gram.inv().map_err(|_| Error::Invalid {
        context: "reconstruct_channel",
        message: "observable family is singular".into(),
    })?;
    let coeff = gram_inv.dot(y.entries());

    // columns vec(X_j) and vec(F_j)
    let mut x_mat: CMat = Array2::zeros((d2, d2));
    let mut f_mat: CMat = Array2::zeros((d2, d2));
    for j in 0..d2 {
        let mut xj: CMat = Array2::zeros((basis.dim(), basis.dim()));
        for (k, g) in basis.observables().iter().enumerate() {
            let w = Complex64::new(coeff[(k, j)], 0.0);
            xj = xj + g.mapv(|z| z * w);
        }
        let xv = vec(&xj);
        let fv = vec(&basis.inputs()[j]);
        for i in 0..d2 {
            x_mat[(i, j)] = xv[i];
            f_mat[(i, j)] = fv[i];
        }
    }
    let f_inv = f_mat.inv().map_err(|_| Error::Invalid {
        context: "reconstruct_channel",
        message: "input family is singular".into(),
    })?;
    Ok(x_mat.dot(&f_inv))
}

/// Max-abs entry of a fingerprint difference — the tomographic norm of the
/// corresponding map difference when both fingerprints share a basis.
pub fn tom_norm(delta_y: &FingerprintMatrix) -> f64 {
    delta_y.entries.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Authentication decision: every response entry within 2τ of the enrolled
/// table. Returns the verdict together with the worst deviation.
pub fn verify(
    y_enrolled: &FingerprintMatrix,
    y_prime: &FingerprintMatrix,
    tau: f64,
) -> Result<(bool, f64)> {
    if y_enrolled.operator_dim() != y_prime.operator_dim() {
        return Err(Error::Dimension {
            context: "verify",
            expected: y_enrolled.operator_dim(),
            got: y_prime.operator_dim(),
        });
    }
    let mut worst = 0.0f64;
    for (a, b) in y_enrolled.entries.iter().zip(y_prime.entries.iter()) {
        worst = worst.max((a - b).abs());
    }
    Ok((worst <= 2.0 * tau, worst))
}

/// The 1→1-versus-tomographic-norm chain for a map T on a 2^n-dimensional
/// system: a sampled lower bound on ‖T‖₁→₁ must sit below d^{5/2} times the
/// canonical tomographic norm max_{μν} |Tr[H_μ T(H_ν)]|, H_μ = P_μ/√d.
/// Returns (lb_1to1, tom_can, ratio) with ratio = lb/(d^{5/2}·tom_can),
/// defined as 0 for the zero map; errors if the chain inequality fails.
pub fn norm_chain_check(
    map: &CMat,
    basis: &TomographicBasis,
    n_probes: usize,
    rng: &mut impl rand::Rng,
) -> Result<(f64, f64, f64)> {
    let d = basis.dim();
    let d2 = basis.operator_dim();
    if map.dim() != (d2, d2) {
        return Err(Error::Dimension {
            context: "norm_chain_check",
            expected: d2,
            got: map.nrows(),
        });
    }
    if !d.is_power_of_two() {
        return Err(Error::Invalid {
            context: "norm_chain_check",
            message: "canonical Pauli family needs d = 2^n".into(),
        });
    }
    let n = d.trailing_zeros() as usize;
    let scale = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    let h_family: Vec<CMat> = (0..d2)
        .map(|idx| pauli_string(idx, n).0.mapv(|z| z * scale))
        .collect();
    let mut tom_can = 0.0f64;
    for h_nu in &h_family {
        let image = unvec(&map.dot(&vec(h_nu)))?;
        for h_mu in &h_family {
            tom_can = tom_can.max(trace(&h_mu.dot(&image)).re.abs());
        }
    }
    let lb_1to1 = one_to_one_norm_lb(
        |x| unvec(&map.dot(&vec(x))).expect("dimension checked above"),
        d,
        n_probes,
        rng,
    );
    let cap = (d as f64).powf(2.5) * tom_can;
    if lb_1to1 > cap * (1.0 + 1e-6) {
        return Err(Error::Numerical {
            context: "norm_chain_check",
            message: format!("1→1 lower bound {lb_1to1:.6e} exceeds d^(5/2)·tom_can = {cap:.6e}"),
        });
    }
    let ratio = if lb_1to1 == 0.0 && cap == 0.0 {
        0.0
    } else {
        lb_1to1 / cap
    };
    Ok((lb_1to1, tom_can, ratio))
}

/// Convenience: the Frobenius-orthonormality defect of a complex matrix
/// against the identity, used when asserting a reconstruction equals a
/// known superoperator.
pub fn matrix_residual(a: &CMat, b: &CMat) -> f64 {
    crate::operators::max_abs_diff(a, b)
}

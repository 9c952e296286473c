//! POVMs, output measurement distributions, total-variation distance, and
//! test-function expectations.
//!
//! Distributions produced by signed-rate generators may carry slightly
//! negative values; TV and expectations are computed on the raw values with
//! no clipping, and the `is_physical` flag lets callers track the fraction of
//! unphysical draws. Outcome labels are canonical strings fixed at POVM
//! construction and flow unchanged into all downstream CSV output.

use ndarray_linalg::{EigValsh, UPLO};

use crate::operators::{
    basis_state, c, hermiticity_residual, identity, operator_norm, outer, CMat,
};
use crate::{Error, Result};

/// Cap on the register size for dense computational POVMs; d = 2⁶ keeps the
/// stored element list at a few megabytes.
pub const COMPUTATIONAL_POVM_MAX_QUBITS: usize = 6;

/// Positive-operator-valued measure over a finite labeled outcome set.
#[derive(Clone, Debug)]
pub struct Povm {
    dim: usize,
    labels: Vec<String>,
    elements: Vec<CMat>,
}

impl Povm {
    /// Validate POVM axioms: each element Hermitian with spectrum in
    /// [0, 1] (min eigenvalue ≥ −1e−10, operator norm ≤ 1 + 1e−10) and
    /// completeness Σ_x M_x = I to 1e−10.
    pub fn new(dim: usize, labels: Vec<String>, elements: Vec<CMat>) -> Result<Self> {
        if labels.len() != elements.len() {
            return Err(Error::Dimension {
                context: "Povm labels vs elements",
                expected: elements.len(),
                got: labels.len(),
            });
        }
        if elements.is_empty() {
            return Err(Error::Invalid {
                context: "Povm",
                message: "empty element list".into(),
            });
        }
        let mut sum: CMat = ndarray::Array2::zeros((dim, dim));
        for (x, el) in elements.iter().enumerate() {
            if el.dim() != (dim, dim) {
                return Err(Error::Dimension {
                    context: "Povm element",
                    expected: dim,
                    got: el.nrows(),
                });
            }
            let herm = hermiticity_residual(el);
            if herm > 1e-12 {
                return Err(Error::Invalid {
                    context: "Povm element",
                    message: format!("element {x} not Hermitian: residual {herm:.3e}"),
                });
            }
            let eigs = el.eigvalsh(UPLO::Upper).map_err(|e| Error::Numerical {
                context: "Povm eigenvalues",
                message: format!("{e}"),
            })?;
            let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
            if min_eig < -1e-10 {
                return Err(Error::Invalid {
                    context: "Povm element",
                    message: format!("element {x} has negative eigenvalue {min_eig:.3e}"),
                });
            }
            if operator_norm(el) > 1.0 + 1e-10 {
                return Err(Error::Invalid {
                    context: "Povm element",
                    message: format!("element {x} has operator norm above 1"),
                });
            }
            sum = sum + el;
        }
        let completeness = crate::operators::max_abs_diff(&sum, &identity(dim));
        if completeness > 1e-10 {
            return Err(Error::Invalid {
                context: "Povm",
                message: format!("elements do not sum to identity: residual {completeness:.3e}"),
            });
        }
        Ok(Self {
            dim,
            labels,
            elements,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }
}

/// Real-valued distribution over the POVM outcome labels. Values sum to 1
/// within 1e−9 but individual entries may be slightly negative when produced
/// by signed-rate generators (quasi-distributions).
#[derive(Clone, Debug, PartialEq)]
pub struct OutputDistribution {
    labels: Vec<String>,
    values: Vec<f64>,
}

impl OutputDistribution {
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(Error::Dimension {
                context: "OutputDistribution labels vs values",
                expected: values.len(),
                got: labels.len(),
            });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid {
                context: "OutputDistribution",
                message: format!("values sum to {sum}, expected 1 within 1e-9"),
            });
        }
        Ok(Self { labels, values })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True iff every value is ≥ −1e−9 (up to quadrature noise a genuine
    /// probability vector).
    pub fn is_physical(&self) -> bool {
        self.values.iter().all(|&v| v >= -1e-9)
    }
}

/// Bounded test function φ: X → [−1, 1], stored aligned with the outcome
/// order of the POVM/distribution it is applied to.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    values: Vec<f64>,
}

impl TestFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !(-1.0..=1.0).contains(v) {
                return Err(Error::Invalid {
                    context: "TestFunction",
                    message: format!("value {v} at index {i} outside [-1, 1]"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn constant_one(len: usize) -> Self {
        Self {
            values: vec![1.0; len],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Computational-basis POVM on n qubits: 2ⁿ rank-1 projectors labeled by
/// bitstrings in lexicographic order ("00", "01", "10", "11" for n = 2); the
/// leftmost character is site 1.
pub fn computational_povm(n_qubits: usize) -> Result<Povm> {
    if n_qubits < 1 || n_qubits > COMPUTATIONAL_POVM_MAX_QUBITS {
        return Err(Error::Invalid {
            context: "computational_povm",
            message: format!(
                "n_qubits = {n_qubits} outside supported range 1..={COMPUTATIONAL_POVM_MAX_QUBITS}"
            ),
        });
    }
    let d = 1 << n_qubits;
    let labels = (0..d).map(|x| format!("{x:0n_qubits$b}")).collect();
    let elements = (0..d)
        .map(|x| {
            let k = basis_state(d, x);
            outer(&k, &k)
        })
        .collect();
    Povm::new(d, labels, elements)
}

/// Block-projective POVM: one projector onto each coordinate subspace of the
/// given partition of {0..d−1}; labels "b0", "b1", … in block order.
pub fn block_povm(dim: usize, blocks: &[Vec<usize>]) -> Result<Povm> {
    let mut seen = vec![false; dim];
    for block in blocks {
        for &i in block {
            if i >= dim {
                return Err(Error::Invalid {
                    context: "block_povm",
                    message: format!("index {i} out of range for dimension {dim}"),
                });
            }
            if seen[i] {
                return Err(Error::Invalid {
                    context: "block_povm",
                    message: format!("index {i} appears in more than one block"),
                });
            }
            seen[i] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Invalid {
            context: "block_povm",
            message: format!("index {missing} is not covered by any block"),
        });
    }
    let labels = (0..blocks.len()).map(|k| format!("b{k}")).collect();
    let elements = blocks
        .iter()
        .map(|block| {
            let mut p: CMat = ndarray::Array2::zeros((dim, dim));
            for &i in block {
                p[(i, i)] = c(1.0, 0.0);
            }
            p
        })
        .collect();
    Povm::new(dim, labels, elements)
}

/// Born probabilities p_x = Re Tr(M_x ρ_t). The imaginary residue of each
/// trace must vanish to 1e−10 (it does for Hermitian inputs).
pub fn output_distribution(rho_t: &CMat, povm: &Povm) -> Result<OutputDistribution> {
    if rho_t.dim() != (povm.dim(), povm.dim()) {
        return Err(Error::Dimension {
            context: "output_distribution",
            expected: povm.dim(),
            got: rho_t.nrows(),
        });
    }
    let d = povm.dim();
    let values = povm
        .elements()
        .iter()
        .map(|m| {
            // Tr(Mρ) = Σ_ij M_ij ρ_ji without forming the product
            let mut tr = c(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    tr += m[(i, j)] * rho_t[(j, i)];
                }
            }
            assert!(
                tr.im.abs() <= 1e-10,
                "Born probability has imaginary residue {:.3e}",
                tr.im
            );
            tr.re
        })
        .collect();
    OutputDistribution::new(povm.labels().to_vec(), values)
}

/// Total-variation distance ½ Σ_x |p_x − q_x| over a shared outcome set.
pub fn tv_distance(p: &OutputDistribution, q: &OutputDistribution) -> Result<f64> {
    if p.labels() != q.labels() {
        return Err(Error::Invalid {
            context: "tv_distance",
            message: "outcome sets differ".into(),
        });
    }
    Ok(p.values()
        .iter()
        .zip(q.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0)
}

/// Expectation P[φ] = Σ_x φ(x) p(x).
pub fn expectation(p: &OutputDistribution, phi: &TestFunction) -> Result<f64> {
    if p.len() != phi.len() {
        return Err(Error::Dimension {
            context: "expectation",
            expected: p.len(),
            got: phi.len(),
        });
    }
    Ok(p.values()
        .iter()
        .zip(phi.values())
        .map(|(a, b)| a * b)
        .sum())
}

/// Observable O_φ = Σ_x φ(x) M_x; satisfies ‖O_φ‖∞ ≤ 1 and
/// Tr(O_φ ρ) = Σ_x φ(x) Tr(M_x ρ).
pub fn observable_of(phi: &TestFunction, povm: &Povm) -> Result<CMat> {
    if phi.len() != povm.len() {
        return Err(Error::Dimension {
            context: "observable_of",
            expected: povm.len(),
            got: phi.len(),
        });
    }
    let d = povm.dim();
    let mut o: CMat = ndarray::Array2::zeros((d, d));
    for (v, m) in phi.values().iter().zip(povm.elements()) {
        o = o + m.mapv(|z| z * *v);
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{
        amp_damp_chain_family, all_ones_state, EnsembleMode, Generator, JumpTerm, Propagator,
    };
    use crate::operators::{
        max_abs_diff, random_density_matrix, sigma_minus, sigma_z, trace, RandomStream,
    };
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn rng(stream: u64) -> rand_chacha::ChaCha8Rng {
        RandomStream::new(0xd157, stream).rng()
    }

    #[test]
    fn computational_povm_examples() {
        let p1 = computational_povm(1).unwrap();
        assert_eq!(p1.labels(), ["0", "1"]);
        let p0 = outer(&basis_state(2, 0), &basis_state(2, 0));
        assert_eq!(max_abs_diff(&p1.elements()[0], &p0), 0.0);

        let p2 = computational_povm(2).unwrap();
        assert_eq!(p2.labels(), ["00", "01", "10", "11"]);
        let mut sum: CMat = ndarray::Array2::zeros((4, 4));
        for el in p2.elements() {
            sum = sum + el;
        }
        assert_eq!(max_abs_diff(&sum, &identity(4)), 0.0);

        // outcome "10" projector fixes |10⟩
        let idx = p2.labels().iter().position(|l| l == "10").unwrap();
        let k10 = basis_state(4, 0b10);
        let out = p2.elements()[idx].dot(&k10);
        assert_eq!(
            out.iter().zip(k10.iter()).all(|(a, b)| a == b),
            true
        );

        assert!(computational_povm(7).is_err());
    }

    #[test]
    fn block_povm_examples() {
        let maximally_mixed = identity(4).mapv(|z| z / 4.0);
        let p = block_povm(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let dist = output_distribution(&maximally_mixed, &p).unwrap();
        assert_eq!(dist.values(), [0.5, 0.5]);
        for el in p.elements() {
            assert_abs_diff_eq!(operator_norm(el), 1.0, epsilon = 1e-12);
        }

        let single = block_povm(3, &[vec![0, 1, 2]]).unwrap();
        let mut r = rng(1);
        let rho = random_density_matrix(3, &mut r);
        let d1 = output_distribution(&rho, &single).unwrap();
        assert_abs_diff_eq!(d1.values()[0], 1.0, epsilon = 1e-12);

        let p8 = block_povm(8, &[vec![0, 1], vec![2, 3], vec![4, 5, 6, 7]]).unwrap();
        let mm8 = identity(8).mapv(|z| z / 8.0);
        let d8 = output_distribution(&mm8, &p8).unwrap();
        assert_eq!(d8.values(), [0.25, 0.25, 0.5]);
        assert_eq!(d8.labels(), ["b0", "b1", "b2"]);
    }

    #[test]
    fn block_povm_rejects_bad_partitions() {
        assert!(block_povm(4, &[vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(block_povm(4, &[vec![0, 1], vec![2]]).is_err());
        assert!(block_povm(4, &[vec![0, 1, 2, 4]]).is_err());
    }

    #[test]
    fn output_distribution_examples() {
        let n = 3;
        let povm = computational_povm(n).unwrap();
        let d_ref = output_distribution(&all_ones_state(n), &povm).unwrap();
        for (label, v) in d_ref.labels().iter().zip(d_ref.values()) {
            let expected = if label == "111" { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-14);
        }

        let mm = identity(8).mapv(|z| z / 8.0);
        let du = output_distribution(&mm, &povm).unwrap();
        for v in du.values() {
            assert_abs_diff_eq!(*v, 0.125, epsilon = 1e-14);
        }

        // single qubit after amplitude damping
        let (cr, t) = (0.9, 0.7);
        let g = Generator::new(2, None, vec![JumpTerm::new(sigma_minus(), cr)]).unwrap();
        let rho1 = all_ones_state(1);
        let out = Propagator::new(g, t).evolve(&rho1).unwrap();
        let d1 = output_distribution(&out, &computational_povm(1).unwrap()).unwrap();
        let decay = (-cr * t).exp();
        assert_abs_diff_eq!(d1.values()[0], 1.0 - decay, epsilon = 1e-10);
        assert_abs_diff_eq!(d1.values()[1], decay, epsilon = 1e-10);
        assert!(d1.is_physical());
    }

    #[test]
    fn tv_distance_examples() {
        let mk = |v: Vec<f64>| OutputDistribution::new(vec!["0".into(), "1".into()], v).unwrap();
        let p = mk(vec![0.7, 0.3]);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_distance(&mk(vec![1.0, 0.0]), &mk(vec![0.0, 1.0])).unwrap(), 1.0);

        let q = mk(vec![0.5, 0.5]);
        let tv = tv_distance(&p, &q).unwrap();
        assert_abs_diff_eq!(tv, 0.2, epsilon = 1e-15);
        // variational form: ½ max over all ±1 test functions
        let mut best = 0.0_f64;
        for pattern in 0..4u32 {
            let phi = TestFunction::new(vec![
                if pattern & 1 == 0 { 1.0 } else { -1.0 },
                if pattern & 2 == 0 { 1.0 } else { -1.0 },
            ])
            .unwrap();
            best = best.max(
                (expectation(&p, &phi).unwrap() - expectation(&q, &phi).unwrap()).abs(),
            );
        }
        assert_abs_diff_eq!(tv, best / 2.0, epsilon = 1e-15);

        let other = OutputDistribution::new(vec!["a".into(), "b".into()], vec![0.5, 0.5]).unwrap();
        assert!(tv_distance(&p, &other).is_err());
    }

    #[test]
    fn expectation_examples() {
        let p = OutputDistribution::new(vec!["0".into(), "1".into()], vec![0.75, 0.25]).unwrap();
        assert_eq!(expectation(&p, &TestFunction::constant_one(2)).unwrap(), 1.0);
        let parity = TestFunction::new(vec![1.0, -1.0]).unwrap();
        let u = OutputDistribution::new(vec!["0".into(), "1".into()], vec![0.5, 0.5]).unwrap();
        assert_eq!(expectation(&u, &parity).unwrap(), 0.0);
        assert_eq!(expectation(&p, &parity).unwrap(), 0.5);
        assert!(TestFunction::new(vec![1.2]).is_err());
    }

    #[test]
    fn observable_examples() {
        let povm = computational_povm(1).unwrap();
        let o1 = observable_of(&TestFunction::constant_one(2), &povm).unwrap();
        assert_eq!(max_abs_diff(&o1, &identity(2)), 0.0);

        let oz = observable_of(&TestFunction::new(vec![1.0, -1.0]).unwrap(), &povm).unwrap();
        assert_eq!(max_abs_diff(&oz, &sigma_z()), 0.0);

        let bp = block_povm(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let ob = observable_of(&TestFunction::new(vec![1.0, -1.0]).unwrap(), &bp).unwrap();
        let expected = &bp.elements()[0] - &bp.elements()[1];
        assert_eq!(max_abs_diff(&ob, &expected), 0.0);
        assert_abs_diff_eq!(operator_norm(&ob), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn observable_norm_and_duality() {
        let povm = computational_povm(2).unwrap();
        let mut r = rng(2);
        for _ in 0..20 {
            let phi = TestFunction::new(
                (0..4).map(|_| r.random_range(-1.0..=1.0)).collect(),
            )
            .unwrap();
            let o = observable_of(&phi, &povm).unwrap();
            assert!(operator_norm(&o) <= 1.0 + 1e-10);
            let rho = random_density_matrix(4, &mut r);
            let lhs = (0..4)
                .map(|i| (0..4).map(|j| o[(i, j)] * rho[(j, i)]).sum::<num_complex::Complex64>())
                .sum::<num_complex::Complex64>()
                .re;
            let rhs = expectation(&output_distribution(&rho, &povm).unwrap(), &phi).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn variational_inequality_and_tv_range() {
        let mut r = rng(3);
        for _ in 0..50 {
            let rho = random_density_matrix(4, &mut r);
            let sig = random_density_matrix(4, &mut r);
            let povm = computational_povm(2).unwrap();
            let p = output_distribution(&rho, &povm).unwrap();
            let q = output_distribution(&sig, &povm).unwrap();
            let tv = tv_distance(&p, &q).unwrap();
            assert!((0.0..=1.0).contains(&tv));
            let phi = TestFunction::new(
                (0..4).map(|_| r.random_range(-1.0..=1.0)).collect(),
            )
            .unwrap();
            let gap =
                (expectation(&p, &phi).unwrap() - expectation(&q, &phi).unwrap()).abs();
            assert!(gap <= 2.0 * tv + 1e-12);
        }
    }

    #[test]
    fn sq_and_tv_lipschitz_on_the_sphere() {
        // The Lipschitz constants are proven for GKSL generators; the signed-
        // rate toy respects them up to an O((tδc_g)³) non-contractivity
        // correction, so the suite runs at tδc_g small enough to keep that
        // correction below the 1e−9 slack.
        let (n, t) = (2usize, 0.8);
        let fam = amp_damp_chain_family(n, 1.0, 1e-3, EnsembleMode::Sphere).unwrap();
        let povm = computational_povm(n).unwrap();
        let rho = all_ones_state(n);
        let mut r = rng(4);
        let phi = TestFunction::new(vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let lip = t * fam.delta * fam.c_g();
        for _ in 0..25 {
            let th1 = fam.sample_theta(&mut r);
            let th2 = fam.sample_theta(&mut r);
            let dist: f64 = th1
                .iter()
                .zip(&th2)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let p1 = output_distribution(
                &Propagator::new(fam.assemble(&th1).unwrap(), t).evolve(&rho).unwrap(),
                &povm,
            )
            .unwrap();
            let p2 = output_distribution(
                &Propagator::new(fam.assemble(&th2).unwrap(), t).evolve(&rho).unwrap(),
                &povm,
            )
            .unwrap();
            let gap =
                (expectation(&p1, &phi).unwrap() - expectation(&p2, &phi).unwrap()).abs();
            assert!(gap <= lip * dist + 1e-9, "SQ gap {gap} vs {}", lip * dist);
            let tv = tv_distance(&p1, &p2).unwrap();
            assert!(
                tv <= lip / 2.0 * dist + 1e-9,
                "TV {tv} vs {}",
                lip / 2.0 * dist
            );
        }
    }

    #[test]
    fn quasi_distribution_from_signed_rates_is_flagged() {
        // strong signed-rate generator pushes a population slightly negative
        let fam = amp_damp_chain_family(1, 1.0, 3.0, EnsembleMode::Sphere).unwrap();
        let g = fam.assemble(&[-1.0]).unwrap();
        assert!(g.signed_rates());
        let out = Propagator::new(g, 1.0).evolve(&all_ones_state(1)).unwrap();
        assert!((trace(&out).re - 1.0).abs() <= 1e-10);
        let dist = output_distribution(&out, &computational_povm(1).unwrap()).unwrap();
        assert!(!dist.is_physical());
        let sum: f64 = dist.values().iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
    }
}

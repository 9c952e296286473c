//! First-order linear response of measurement statistics to generator
//! perturbations. The coefficient a_{j,x} = ∫₀ᵗ Tr[M_x e^{(t−s)L_ref} G_j
//! e^{sL_ref}(ρ_in)] ds is the Duhamel derivative of P_θ(x) along direction
//! j, so P_θ(x) ≈ Q(x) + (δ/√M)⟨θ, a⟨·,x⟩⟩. Includes the spherical
//! absolute-moment constant κ_M, the mean-TV prediction m₀, and the exact
//! factorized distribution of the amplitude-damping chain used as the
//! cross-validation oracle for the evolution code.

use ndarray::Array2;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::distributions::{OutputDistribution, Povm};
use crate::lindblad::{generator_apply, ParametrizedFamily, Propagator};
use crate::operators::CMat;
use crate::{Error, Result};

/// Gauss–Legendre rule for the Duhamel time integral.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureSpec {
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes: 16 }
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    let dp = (n as f64) * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Nodes (ascending) and weights of the n-point Gauss–Legendre rule on
/// [−1, 1], by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::Invalid {
            context: "gauss_legendre",
            message: format!("need at least 2 nodes, got {n}"),
        });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok((nodes, weights))
}

/// Response coefficients a_{j,x} for every outcome x (rows) and direction j
/// (columns). Each column sums to ~0 because generators are trace-annihilating.
#[derive(Clone, Debug)]
pub struct ResponseMatrix {
    labels: Vec<String>,
    a: Array2<f64>,
}

impl ResponseMatrix {
    pub fn new(labels: Vec<String>, a: Array2<f64>) -> Result<Self> {
        if labels.len() != a.nrows() {
            return Err(Error::Dimension {
                context: "ResponseMatrix",
                expected: labels.len(),
                got: a.nrows(),
            });
        }
        for j in 0..a.ncols() {
            let col_sum: f64 = a.column(j).sum();
            if col_sum.abs() > 1e-9 {
                return Err(Error::Numerical {
                    context: "ResponseMatrix",
                    message: format!(
                        "column {j} sums to {col_sum:.3e}; trace preservation requires ~0"
                    ),
                });
            }
        }
        Ok(Self { labels, a })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_outcomes(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.ncols()
    }

    pub fn coefficient(&self, x: usize, j: usize) -> f64 {
        self.a[(x, j)]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    /// ‖a⁽ˣ⁾‖₂ of the direction vector attached to outcome x.
    pub fn row_norm(&self, x: usize) -> f64 {
        self.a.row(x).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// (1/M) Σ_x ‖a⁽ˣ⁾‖₂ — for the amplitude-damping chain this equals
    /// γt(1 + 1/√M) in closed form.
    pub fn averaged_row_norm(&self) -> f64 {
        let m = self.m() as f64;
        (0..self.n_outcomes()).map(|x| self.row_norm(x)).sum::<f64>() / m
    }

    /// First-order prediction of the probability shift: (δ/√M)·(a θ).
    pub fn linear_shift(&self, theta: &[f64], delta: f64) -> Result<Vec<f64>> {
        if theta.len() != self.m() {
            return Err(Error::Dimension {
                context: "linear_shift",
                expected: self.m(),
                got: theta.len(),
            });
        }
        let scale = delta / (self.m() as f64).sqrt();
        Ok((0..self.n_outcomes())
            .map(|x| {
                scale
                    * self
                        .a
                        .row(x)
                        .iter()
                        .zip(theta)
                        .map(|(a, th)| a * th)
                        .sum::<f64>()
            })
            .collect())
    }
}

fn povm_is_diagonal(povm: &Povm) -> bool {
    povm.elements().iter().all(|m| {
        let d = m.nrows();
        (0..d).all(|i| (0..d).all(|k| i == k || m[(i, k)].norm() == 0.0))
    })
}

fn povm_real_traces(y: &CMat, povm: &Povm, diagonal: bool) -> Vec<f64> {
    let d = y.nrows();
    povm.elements()
        .iter()
        .map(|m| {
            let mut s = 0.0;
            if diagonal {
                for i in 0..d {
                    s += (m[(i, i)] * y[(i, i)]).re;
                }
            } else {
                for i in 0..d {
                    for k in 0..d {
                        s += (m[(i, k)] * y[(k, i)]).re;
                    }
                }
            }
            s
        })
        .collect()
}

fn reference_is_zero(fam: &ParametrizedFamily) -> bool {
    fam.l_ref.hamiltonian().is_none() && fam.l_ref.jumps().is_empty()
}

fn response_columns(
    fam: &ParametrizedFamily,
    rho_in: &CMat,
    povm: &Povm,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<Vec<Vec<f64>>> {
    let d = fam.dim();
    if rho_in.dim() != (d, d) {
        return Err(Error::Dimension {
            context: "response_matrix",
            expected: d,
            got: rho_in.nrows(),
        });
    }
    if povm.dim() != d {
        return Err(Error::Dimension {
            context: "response_matrix",
            expected: d,
            got: povm.dim(),
        });
    }
    if t < 0.0 {
        return Err(Error::Invalid {
            context: "response_matrix",
            message: format!("time must be nonnegative, got {t}"),
        });
    }
    let (nodes, weights) = gauss_legendre(quad.nodes)?;
    let trivial_ref = reference_is_zero(fam);
    let diagonal = povm_is_diagonal(povm);
    let n_out = povm.len();
    let m = fam.m();

    let mut columns = vec![vec![0.0; n_out]; m];
    for (xi, wi) in nodes.iter().zip(weights.iter()) {
        let s = 0.5 * t * (xi + 1.0);
        let rho_s = if trivial_ref {
            rho_in.clone()
        } else {
            Propagator::new(fam.l_ref.clone(), s).propagate_matrix(rho_in)?
        };
        let contributions: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|j| -> Result<Vec<f64>> {
                let perturbed = generator_apply(&fam.directions[j], &rho_s);
                let back = if trivial_ref {
                    perturbed
                } else {
                    Propagator::new(fam.l_ref.clone(), t - s).propagate_matrix(&perturbed)?
                };
                Ok(povm_real_traces(&back, povm, diagonal))
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = 0.5 * t * wi;
        for (col, contrib) in columns.iter_mut().zip(&contributions) {
            for (acc, v) in col.iter_mut().zip(contrib) {
                *acc += scale * v;
            }
        }
    }
    Ok(columns)
}

/// Single response coefficient a_{j,x}.
pub fn response_coefficient(
    fam: &ParametrizedFamily,
    j: usize,
    x: usize,
    rho_in: &CMat,
    povm: &Povm,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if j >= fam.m() {
        return Err(Error::Dimension {
            context: "response_coefficient",
            expected: fam.m(),
            got: j,
        });
    }
    if x >= povm.len() {
        return Err(Error::Dimension {
            context: "response_coefficient",
            expected: povm.len(),
            got: x,
        });
    }
    let columns = response_columns(fam, rho_in, povm, t, quad)?;
    Ok(columns[j][x])
}

/// Full response matrix over (outcome, direction), parallelized over
/// directions.
pub fn response_matrix(
    fam: &ParametrizedFamily,
    rho_in: &CMat,
    povm: &Povm,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<ResponseMatrix> {
    let columns = response_columns(fam, rho_in, povm, t, quad)?;
    let n_out = povm.len();
    let m = fam.m();
    let mut a = Array2::zeros((n_out, m));
    for (j, col) in columns.iter().enumerate() {
        for (x, v) in col.iter().enumerate() {
            a[(x, j)] = *v;
        }
    }
    ResponseMatrix::new(povm.labels().to_vec(), a)
}

fn kappa_raw(m: usize) -> f64 {
    let mf = m as f64;
    (0.5 * mf.ln() + ln_gamma(0.5 * mf)
        - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma(0.5 * (mf + 1.0)))
    .exp()
}

/// κ_M = √M·Γ(M/2)/(√π·Γ((M+1)/2)): E|⟨θ, b⟩| = (κ_M/√M)‖b‖₂ for θ uniform
/// on S^{M−1}. Evaluated via log-gamma so M ≳ 300 does not overflow;
/// decreases to √(2/π) as M → ∞.
pub fn kappa(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Invalid {
            context: "kappa",
            message: format!("defined for m ≥ 2, got {m}"),
        });
    }
    Ok(kappa_raw(m))
}

/// Mean linear-response TV prediction m₀(M) = (κ_M/2M) Σ_x ‖a⁽ˣ⁾‖₂.
pub fn m0(resp: &ResponseMatrix) -> f64 {
    // κ through the raw gamma form, valid down to m = 1 (κ₁ = 1)
    0.5 * kappa_raw(resp.m()) * resp.averaged_row_norm()
}

/// First-order mean-TV prediction for the amplitude-damping chain:
/// m(δ) = δ·(κ_M/2)·γt·(1 + 1/√M).
pub fn toy_prediction(gamma: f64, t: f64, m: usize, delta: f64) -> f64 {
    assert!(gamma > 0.0 && t > 0.0 && m >= 1, "positive inputs required");
    assert!(delta >= 0.0, "delta must be nonnegative");
    delta * 0.5 * kappa_raw(m) * gamma * t * (1.0 + 1.0 / (m as f64).sqrt())
}

/// Exact factorized output distribution of the amplitude-damping chain
/// started from |1…1⟩: P(x) = Π_j p_j(x_j) with p_j(1) = e^{−δγθ_j t/√M}.
/// Site j (leftmost = 0) maps to bit (M−1−j) of the outcome index, matching
/// the computational-basis labels. Sums to 1 exactly by telescoping; signed
/// θ with large δ may produce quasi-distributions, which is intended.
pub fn amp_damp_analytic_distribution(
    theta: &[f64],
    gamma: f64,
    t: f64,
    delta: f64,
    m: usize,
) -> Result<OutputDistribution> {
    if theta.len() != m {
        return Err(Error::Dimension {
            context: "amp_damp_analytic_distribution",
            expected: m,
            got: theta.len(),
        });
    }
    let p1: Vec<f64> = theta
        .iter()
        .map(|th| (-delta * gamma * th * t / (m as f64).sqrt()).exp())
        .collect();
    let n_out = 1usize << m;
    let mut labels = Vec::with_capacity(n_out);
    let mut values = Vec::with_capacity(n_out);
    for x in 0..n_out {
        labels.push(format!("{x:0m$b}"));
        let mut p = 1.0;
        for (j, pj) in p1.iter().enumerate() {
            let bit = (x >> (m - 1 - j)) & 1;
            p *= if bit == 1 { *pj } else { 1.0 - *pj };
        }
        values.push(p);
    }
    OutputDistribution::new(labels, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{computational_povm, output_distribution};
    use crate::lindblad::{amp_damp_chain_family, all_ones_state, Backend, EnsembleMode};
    use crate::operators::{sample_sphere, RandomStream};
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [2usize, 5, 8, 16, 32] {
            let (nodes, weights) = gauss_legendre(n).unwrap();
            assert_abs_diff_eq!(weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            // symmetry of the rule
            for i in 0..n {
                assert_abs_diff_eq!(nodes[i], -nodes[n - 1 - i], epsilon = 1e-14);
            }
            // exact for degrees ≤ 2n−1: ∫₋₁¹ x^k dx = 2/(k+1) (even k) or 0
            for k in 0..2 * n {
                let num: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| w * x.powi(k as i32))
                    .sum();
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert_abs_diff_eq!(num, exact, epsilon = 1e-12);
            }
        }
        assert!(gauss_legendre(1).is_err());
    }

    fn toy(n: usize) -> ParametrizedFamily {
        amp_damp_chain_family(n, 1.0, 0.1, EnsembleMode::Sphere).unwrap()
    }

    #[test]
    fn toy_coefficients_match_the_delta_pattern() {
        // a_{j,x} = tγ(δ_{x,x_j⁰} − δ_{x,1^N}) with x_j⁰ = all-ones with
        // site j flipped to 0
        let (gamma, t, n) = (1.0, 1.0, 2);
        let fam = toy(n);
        let povm = computational_povm(n).unwrap();
        let rho = all_ones_state(n);
        let quad = QuadratureSpec::default();
        let resp = response_matrix(&fam, &rho, &povm, t, &quad).unwrap();
        let all_ones = (1usize << n) - 1;
        for j in 0..n {
            let x_j0 = all_ones & !(1 << (n - 1 - j));
            for x in 0..(1usize << n) {
                let expected = t * gamma
                    * ((x == x_j0) as i32 as f64 - (x == all_ones) as i32 as f64);
                assert_abs_diff_eq!(resp.coefficient(x, j), expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn single_coefficient_agrees_with_direct_trace_for_trivial_reference() {
        // L_ref = 0 collapses the Duhamel integral to t·Tr[M_x G_j(ρ_in)]
        let n = 1;
        let fam = toy(n);
        let povm = computational_povm(n).unwrap();
        let rho = all_ones_state(n);
        let quad = QuadratureSpec::default();
        let t = 0.7;
        for (x, expected) in [(0usize, 0.7), (1usize, -0.7)] {
            let a = response_coefficient(&fam, 0, x, &rho, &povm, t, &quad).unwrap();
            assert_abs_diff_eq!(a, expected, epsilon = 1e-12);
            let direct = povm_real_traces(
                &generator_apply(&fam.directions[0], &rho),
                &povm,
                true,
            )[x] * t;
            assert_abs_diff_eq!(a, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn toy_row_norms_and_averaged_identity() {
        let n = 2;
        let fam = toy(n);
        let povm = computational_povm(n).unwrap();
        let resp =
            response_matrix(&fam, &all_ones_state(n), &povm, 1.0, &QuadratureSpec::default())
                .unwrap();
        // outcomes 00, 01, 10, 11 → norms 0, 1, 1, √2
        assert_abs_diff_eq!(resp.row_norm(0), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(resp.row_norm(1), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(resp.row_norm(2), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(resp.row_norm(3), 2.0_f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(
            resp.averaged_row_norm(),
            1.0 + 1.0 / 2.0_f64.sqrt(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn doubling_quadrature_nodes_is_stable() {
        let n = 2;
        let fam = toy(n);
        let povm = computational_povm(n).unwrap();
        let rho = all_ones_state(n);
        let r16 = response_matrix(&fam, &rho, &povm, 1.0, &QuadratureSpec { nodes: 16 }).unwrap();
        let r32 = response_matrix(&fam, &rho, &povm, 1.0, &QuadratureSpec { nodes: 32 }).unwrap();
        let max_diff = (r16.matrix() - r32.matrix())
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!(max_diff <= 1e-10, "doubling moved coefficients by {max_diff:.3e}");
    }

    #[test]
    fn nonzero_reference_keeps_columns_trace_free() {
        // reference = uniform damping at rate 0.3 on both sites, so the
        // integrand genuinely depends on s
        use crate::lindblad::{Generator, JumpTerm};
        use crate::operators::{embed_qubit_op, sigma_minus};
        let n = 2;
        let d = 1 << n;
        let ref_jumps: Vec<JumpTerm> = (0..n)
            .map(|site| JumpTerm::new(embed_qubit_op(&sigma_minus(), site, n), 0.3))
            .collect();
        let l_ref = Generator::new(d, None, ref_jumps).unwrap();
        let fam = ParametrizedFamily::new(
            l_ref,
            toy(n).directions.clone(),
            0.1,
            EnsembleMode::Sphere,
        )
        .unwrap();
        let povm = computational_povm(n).unwrap();
        let rho = all_ones_state(n);
        let r16 = response_matrix(&fam, &rho, &povm, 0.7, &QuadratureSpec { nodes: 16 }).unwrap();
        let r32 = response_matrix(&fam, &rho, &povm, 0.7, &QuadratureSpec { nodes: 32 }).unwrap();
        let max_diff = (r16.matrix() - r32.matrix())
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!(max_diff <= 1e-8, "analytic integrand should converge: {max_diff:.3e}");
        // construction already enforced ≤ 1e−9 column sums; confirm well below
        for j in 0..fam.m() {
            let s: f64 = r16.matrix().column(j).sum();
            assert!(s.abs() <= 1e-11);
        }
    }

    #[test]
    fn kappa_closed_forms_and_limit() {
        assert_abs_diff_eq!(
            kappa(2).unwrap(),
            2.0 * 2.0_f64.sqrt() / std::f64::consts::PI,
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(kappa(3).unwrap(), 3.0_f64.sqrt() / 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(
            kappa(4).unwrap(),
            8.0 / (3.0 * std::f64::consts::PI),
            epsilon = 1e-13
        );
        let limit = (2.0 / std::f64::consts::PI).sqrt();
        assert!((kappa(1_000_000).unwrap() - limit).abs() < 1e-3);
        let mut prev = kappa(2).unwrap();
        for m in 3..=512 {
            let k = kappa(m).unwrap();
            assert!(k < prev, "κ must decrease at m={m}");
            assert!(k > limit, "κ must stay above √(2/π) at m={m}");
            prev = k;
        }
        assert!(kappa(1).is_err());
    }

    #[test]
    fn sphere_absolute_moment_matches_kappa() {
        // E|⟨θ, b⟩| = (κ_M/√M)‖b‖₂ over the uniform sphere
        let n_samples = 100_000;
        for (mi, m) in [4usize, 16, 64].iter().enumerate() {
            let b: Vec<f64> = (0..*m).map(|i| 1.0 + i as f64 / *m as f64).collect();
            let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut rng = RandomStream::new(2024, mi as u64).rng();
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n_samples {
                let theta = sample_sphere(*m, &mut rng);
                let v: f64 = theta.iter().zip(&b).map(|(t, bb)| t * bb).sum::<f64>().abs();
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / n_samples as f64;
            let var = (sum_sq / n_samples as f64 - mean * mean).max(0.0);
            let stderr = (var / n_samples as f64).sqrt();
            let predicted = kappa(*m).unwrap() / (*m as f64).sqrt() * b_norm;
            assert!(
                (mean - predicted).abs() <= 3.0 * stderr,
                "m={m}: mean {mean:.6} vs predicted {predicted:.6} (stderr {stderr:.2e})"
            );
        }
    }

    #[test]
    fn m0_matches_the_toy_value() {
        let n = 4;
        let fam = toy(n);
        let povm = computational_povm(n).unwrap();
        let resp =
            response_matrix(&fam, &all_ones_state(n), &povm, 1.0, &QuadratureSpec { nodes: 8 })
                .unwrap();
        assert_abs_diff_eq!(m0(&resp), 2.0 / std::f64::consts::PI, epsilon = 1e-10);
        let zero = ResponseMatrix::new(
            vec!["a".into(), "b".into()],
            Array2::zeros((2, 3)),
        )
        .unwrap();
        assert_eq!(m0(&zero), 0.0);
    }

    #[test]
    fn toy_prediction_values() {
        assert_eq!(toy_prediction(1.0, 1.0, 4, 0.0), 0.0);
        assert_abs_diff_eq!(
            toy_prediction(1.0, 1.0, 4, 0.1),
            0.1 * 2.0 / std::f64::consts::PI,
            epsilon = 1e-13
        );
        let m_l = (1.0 / (2.0 * std::f64::consts::PI)).sqrt();
        assert!((toy_prediction(1.0, 1.0, 1_000_000, 1.0) - m_l).abs() < 1e-3);
    }

    #[test]
    fn analytic_distribution_closed_forms() {
        let p = amp_damp_analytic_distribution(&[1.0], 1.0, 1.0, 1.0, 1).unwrap();
        let e = (-1.0f64).exp();
        assert_abs_diff_eq!(p.values()[0], 1.0 - e, epsilon = 1e-15);
        assert_abs_diff_eq!(p.values()[1], e, epsilon = 1e-15);

        let frozen = amp_damp_analytic_distribution(&[0.3, -0.7, 0.64], 1.0, 1.0, 0.0, 3).unwrap();
        assert_eq!(frozen.values()[7], 1.0);
        assert_eq!(frozen.values().iter().sum::<f64>(), 1.0);
        assert_eq!(frozen.labels()[7], "111");
    }

    #[test]
    fn analytic_distribution_cross_checks_the_propagator() {
        let n = 4;
        let (gamma, t, delta) = (1.0, 1.0, 0.8);
        let fam = amp_damp_chain_family(n, gamma, delta, EnsembleMode::Sphere).unwrap();
        let povm = computational_povm(n).unwrap();
        let mut rng = RandomStream::new(7, 0).rng();
        let theta = sample_sphere(n, &mut rng);
        let analytic = amp_damp_analytic_distribution(&theta, gamma, t, delta, n).unwrap();
        let g = fam.assemble(&theta).unwrap();
        let rho_t = Propagator::new(g, t)
            .with_backend(Backend::Matfree)
            .evolve(&all_ones_state(n))
            .unwrap();
        let numeric = output_distribution(&rho_t, &povm).unwrap();
        let max_err = analytic
            .values()
            .iter()
            .zip(numeric.values())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(max_err <= 1e-8, "analytic vs evolve disagree by {max_err:.3e}");
    }

    #[test]
    fn first_order_remainder_is_quadratically_small() {
        // |P_θ(x) − Q(x) − (δ/√M)⟨θ, a⁽ˣ⁾⟩| ≤ (c_g² t²/2)·δ²
        let n = 2;
        let (gamma, t) = (1.0, 1.0);
        let povm = computational_povm(n).unwrap();
        let rho = all_ones_state(n);
        for delta in [0.1, 0.3] {
            let fam = amp_damp_chain_family(n, gamma, delta, EnsembleMode::Sphere).unwrap();
            let resp =
                response_matrix(&fam, &rho, &povm, t, &QuadratureSpec::default()).unwrap();
            let bound = 0.5 * fam.c_g() * fam.c_g() * t * t * delta * delta;
            let q = amp_damp_analytic_distribution(&[0.0; 2], gamma, t, delta, n).unwrap();
            let mut rng = RandomStream::new(11, 0).rng();
            for _ in 0..20 {
                let theta = sample_sphere(n, &mut rng);
                let p = amp_damp_analytic_distribution(&theta, gamma, t, delta, n).unwrap();
                let shift = resp.linear_shift(&theta, delta).unwrap();
                for x in 0..p.len() {
                    let remainder = (p.values()[x] - q.values()[x] - shift[x]).abs();
                    assert!(
                        remainder <= bound,
                        "δ={delta}, x={x}: remainder {remainder:.3e} vs bound {bound:.3e}"
                    );
                }
            }
        }
    }
}

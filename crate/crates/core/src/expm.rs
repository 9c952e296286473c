//! Matrix exponential kernels.
//!
//! Two routes, cross-validated against each other by the dynamics tests:
//! [`expm`] is Padé scaling-and-squaring on a dense matrix (used on
//! materialized superoperators), and [`taylor_action`] applies e^{tL} to a
//! single matrix through repeated generator applications without ever
//! materializing L, using power-of-two time slicing with a certified series
//! tail bound per slice.

use ndarray::Array2;
use ndarray_linalg::FactorizeInto;

use crate::operators::{identity, max_abs, CMat};
use crate::{Error, Result};

// Padé numerator coefficients b_0..b_m and the 1-norm thresholds θ_m from the
// standard double-precision scaling-and-squaring tables.
const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

/// Maximum 1-norm column sum.
pub fn one_norm(a: &CMat) -> f64 {
    let (rows, cols) = a.dim();
    let mut best = 0.0_f64;
    for j in 0..cols {
        let mut s = 0.0;
        for i in 0..rows {
            s += a[(i, j)].norm();
        }
        best = best.max(s);
    }
    best
}

fn scaled(a: &CMat, x: f64) -> CMat {
    a.mapv(|z| z * x)
}

// Evaluate the degree-m Padé approximant r_m(a) = (v − u)⁻¹(v + u) for
// m ∈ {3,5,7,9} given the even powers of a.
fn pade_low(a: &CMat, b: &[f64], powers: &[CMat]) -> Result<CMat> {
    let d = a.nrows();
    let mut u = scaled(&identity(d), b[1]);
    let mut v = scaled(&identity(d), b[0]);
    for (k, p) in powers.iter().enumerate() {
        // powers[k] = a^{2(k+1)}
        u = u + scaled(p, b[2 * k + 3]);
        v = v + scaled(p, b[2 * k + 2]);
    }
    u = a.dot(&u);
    solve_pade(&u, &v)
}

fn pade13(a: &CMat, a2: &CMat, a4: &CMat, a6: &CMat) -> Result<CMat> {
    let d = a.nrows();
    let b = &B13;
    let id = identity(d);
    let u_inner = scaled(a6, b[13]) + scaled(a4, b[11]) + scaled(a2, b[9]);
    let u = a.dot(&(a6.dot(&u_inner) + scaled(a6, b[7]) + scaled(a4, b[5]) + scaled(a2, b[3]) + scaled(&id, b[1])));
    let v_inner = scaled(a6, b[12]) + scaled(a4, b[10]) + scaled(a2, b[8]);
    let v = a6.dot(&v_inner) + scaled(a6, b[6]) + scaled(a4, b[4]) + scaled(a2, b[2]) + scaled(&id, b[0]);
    solve_pade(&u, &v)
}

// Solve (v − u) x = (v + u) column by column via one LU factorization.
fn solve_pade(u: &CMat, v: &CMat) -> Result<CMat> {
    let denom = v - u;
    let numer = v + u;
    let d = denom.nrows();
    let lu = denom.factorize_into().map_err(|e| Error::Numerical {
        context: "expm Padé solve",
        message: format!("LU factorization failed: {e}"),
    })?;
    let mut out: CMat = Array2::zeros((d, d));
    for j in 0..d {
        let col = numer.column(j).to_owned();
        let x = ndarray_linalg::Solve::solve_into(&lu, col).map_err(|e| Error::Numerical {
            context: "expm Padé solve",
            message: format!("LU solve failed on column {j}: {e}"),
        })?;
        out.column_mut(j).assign(&x);
    }
    Ok(out)
}

/// Dense matrix exponential e^a by Padé scaling-and-squaring, approximant
/// order chosen from the 1-norm of `a`.
pub fn expm(a: &CMat) -> Result<CMat> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(Error::Dimension {
            context: "expm (square matrix required)",
            expected: rows,
            got: cols,
        });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical {
            context: "expm",
            message: "input contains non-finite entries".into(),
        });
    }
    let nrm = one_norm(a);
    let a2 = a.dot(a);
    if nrm <= THETA3 {
        return pade_low(a, &B3, &[a2]);
    }
    let a4 = a2.dot(&a2);
    if nrm <= THETA5 {
        return pade_low(a, &B5, &[a2, a4]);
    }
    let a6 = a2.dot(&a4);
    if nrm <= THETA7 {
        return pade_low(a, &B7, &[a2.clone(), a4, a6]);
    }
    if nrm <= THETA9 {
        let a8 = a4.dot(&a4);
        return pade_low(a, &B9, &[a2.clone(), a4, a6, a8]);
    }
    // Scale so that ‖a/2^s‖₁ ≤ θ₁₃, exponentiate, square back up.
    let s = ((nrm / THETA13).log2().ceil()).max(0.0) as u32;
    let f = 0.5_f64.powi(s as i32);
    let sa = scaled(a, f);
    let sa2 = scaled(&a2, f * f);
    let sa4 = scaled(&a4, f * f * f * f);
    let sa6 = scaled(&a6, f.powi(6));
    let mut e = pade13(&sa, &sa2, &sa4, &sa6)?;
    for _ in 0..s {
        e = e.dot(&e);
    }
    Ok(e)
}

// Per-slice series size: keeps the truncated Taylor series short while the
// slice count stays proportional to t·‖L‖.
const SLICE_NORM: f64 = 2.0;
const MAX_TERMS: usize = 120;
const MAX_SLICES: usize = 1 << 24;

/// Apply e^{tL} to `x0` using only applications of L (closure `apply`),
/// without materializing L. `norm_bound` must upper-bound the 1→1 norm of L;
/// it controls the power-of-two time slicing. The truncated series tail per
/// slice is bounded below `tol / slices`.
pub fn taylor_action<F>(apply: F, t: f64, x0: &CMat, norm_bound: f64, tol: f64) -> Result<CMat>
where
    F: Fn(&CMat) -> CMat,
{
    assert!(t >= 0.0, "negative evolution time {t}");
    assert!(tol > 0.0, "tolerance must be positive");
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let raw_slices = (t * norm_bound / SLICE_NORM).ceil().max(1.0);
    if !(raw_slices.is_finite()) || raw_slices > MAX_SLICES as f64 {
        return Err(Error::Numerical {
            context: "taylor_action",
            message: format!(
                "time-sliced series cannot converge within the slice cap: \
                 t = {t}, generator norm bound = {norm_bound}, \
                 required slices {raw_slices:.3e} > cap {MAX_SLICES}"
            ),
        });
    }
    let slices = raw_slices as usize;
    // round up to a power of two so the slicing is scale-stable
    let slices = slices.next_power_of_two();
    let h = t / slices as f64;
    let slice_tol = tol / slices as f64;
    let theta = h * norm_bound;

    let mut y = x0.clone();
    for slice in 0..slices {
        let mut acc = y.clone();
        let mut term = y;
        let mut converged = false;
        for k in 1..=MAX_TERMS {
            term = scaled(&apply(&term), h / k as f64);
            acc = acc + &term;
            // geometric tail bound: ‖rest‖ ≤ ‖term_k‖ · ρ/(1−ρ), ρ = θ/(k+1)
            let rho = theta / (k as f64 + 1.0);
            if rho < 1.0 {
                let tail = max_abs(&term) * rho / (1.0 - rho);
                if tail <= slice_tol * max_abs(&acc).max(1.0) {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            return Err(Error::Numerical {
                context: "taylor_action",
                message: format!(
                    "Taylor series did not converge within {MAX_TERMS} terms \
                     at slice {slice}/{slices} (per-slice size {theta:.3e}, \
                     per-slice tolerance {slice_tol:.3e})"
                ),
            });
        }
        y = acc;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{
        c, dagger, max_abs_diff, random_gaussian_matrix, sigma_z, RandomStream,
    };

    #[test]
    fn expm_of_zero_is_identity() {
        let z: CMat = Array2::zeros((5, 5));
        assert!(max_abs_diff(&expm(&z).unwrap(), &identity(5)) <= 1e-15);
    }

    #[test]
    fn expm_of_diagonal_matches_scalar_exponentials() {
        // exercises every Padé order through scaling of a fixed direction
        for scale in [1e-3, 0.1, 0.5, 1.5, 3.0, 10.0, 80.0] {
            let a = sigma_z().mapv(|z| z * scale);
            let e = expm(&a).unwrap();
            let expected = ndarray::array![
                [c(scale.exp(), 0.0), c(0.0, 0.0)],
                [c(0.0, 0.0), c((-scale).exp(), 0.0)]
            ];
            let rel = max_abs_diff(&e, &expected) / scale.exp();
            assert!(rel <= 1e-13, "scale {scale}: relative error {rel}");
        }
    }

    #[test]
    fn expm_inverse_property() {
        // e^a · e^{−a} = I for random non-normal matrices
        for k in 0..10 {
            let mut rng = RandomStream::new(0xe8b, k).rng();
            let a = random_gaussian_matrix(6, 6, &mut rng);
            let e = expm(&a).unwrap();
            let einv = expm(&a.mapv(|z| -z)).unwrap();
            let err = max_abs_diff(&e.dot(&einv), &identity(6));
            assert!(err <= 1e-9, "inverse residual {err}");
        }
    }

    #[test]
    fn expm_skew_hermitian_is_unitary() {
        let mut rng = RandomStream::new(0xe8c, 0).rng();
        let g = random_gaussian_matrix(8, 8, &mut rng);
        let h = (&g + &dagger(&g)).mapv(|z| z * 0.5);
        let e = expm(&h.mapv(|z| z * c(0.0, -1.0))).unwrap();
        assert!(max_abs_diff(&dagger(&e).dot(&e), &identity(8)) <= 1e-12);
    }

    #[test]
    fn taylor_action_matches_dense_exponential() {
        for k in 0..8 {
            let mut rng = RandomStream::new(0xac7, k).rng();
            let l = random_gaussian_matrix(5, 5, &mut rng);
            let x0 = random_gaussian_matrix(5, 5, &mut rng);
            let t = 0.8;
            let dense = expm(&l.mapv(|z| z * t)).unwrap().dot(&x0);
            let action = taylor_action(
                |x| l.dot(x),
                t,
                &x0,
                crate::expm::one_norm(&l) * 1.5,
                1e-12,
            )
            .unwrap();
            let err = max_abs_diff(&dense, &action) / max_abs(&dense).max(1.0);
            assert!(err <= 1e-10, "action mismatch {err}");
        }
    }

    #[test]
    fn taylor_action_time_zero_is_identity() {
        let mut rng = RandomStream::new(0xac8, 0).rng();
        let x0 = random_gaussian_matrix(4, 4, &mut rng);
        let out = taylor_action(|x| x.clone(), 0.0, &x0, 1.0, 1e-12).unwrap();
        assert_eq!(max_abs_diff(&out, &x0), 0.0);
    }

    #[test]
    fn taylor_action_reports_hopeless_slicing() {
        let x0 = identity(2);
        let err = taylor_action(|x| x.clone(), 1e12, &x0, 1e9, 1e-10);
        assert!(matches!(err, Err(Error::Numerical { .. })));
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("slice cap"), "diagnostics missing: {msg}");
    }
}

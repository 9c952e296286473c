//! Python bindings for the headline lindlab-core entry points.
//!
//! The surface is deliberately small and pure-data (floats, lists, tuples)
//! so no numpy interop layer is needed: ensemble mean-TV estimates, the
//! closed-form response identity, the spherical moment factor, exact and
//! evolved amplitude-damping distributions, and the challenge-transform
//! utilities. Build the importable module with
//! `cargo build -p lindlab-py --release --features extension-module`;
//! `python/smoke_test.py` automates the build-copy-import loop.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use lindlab_core::distributions::{computational_povm, output_distribution};
use lindlab_core::experiments::{mean_tv_at, ExperimentSetup, ReferenceKind};
use lindlab_core::lindblad::{all_ones_state, amp_damp_chain_family, EnsembleMode, Propagator};
use lindlab_core::puf_hadamard::{project_to_simplex, wht, WhtDirection};
use lindlab_core::response::{amp_damp_analytic_distribution, response_matrix, QuadratureSpec};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn check_sites(m: usize) -> PyResult<()> {
    if m == 0 || m > 6 {
        return Err(PyValueError::new_err(format!(
            "site count must be in 1..=6 for dense simulation, got {m}"
        )));
    }
    Ok(())
}

/// Crate version of the underlying Rust library.
#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Spherical moment factor κ_M = √M·Γ(M/2)/(√π·Γ((M+1)/2)), the constant
/// in E|⟨θ, b⟩| = (κ_M/√M)·‖b‖₂ for θ uniform on the unit sphere S^{M−1}.
#[pyfunction]
fn kappa(m: usize) -> PyResult<f64> {
    lindlab_core::response::kappa(m).map_err(err)
}

/// First-order prediction of the ensemble-mean TV distance for the
/// amplitude-damping chain: m(δ) = δ·(κ_M/2)·γt·(1 + 1/√M).
#[pyfunction]
fn toy_prediction(gamma: f64, time: f64, m: usize, delta: f64) -> PyResult<f64> {
    if !(gamma > 0.0) || !(time > 0.0) || m == 0 || !(delta >= 0.0) {
        return Err(PyValueError::new_err(
            "need gamma > 0, time > 0, m >= 1, delta >= 0",
        ));
    }
    Ok(lindlab_core::response::toy_prediction(gamma, time, m, delta))
}

/// Quadrature-evaluated averaged response row norm (1/M)Σ_x‖a⁽ˣ⁾‖₂ of the
/// M-site amplitude-damping chain; equals γt(1 + 1/√M) in closed form.
#[pyfunction]
fn averaged_row_norm(m: usize, gamma: f64, time: f64) -> PyResult<f64> {
    check_sites(m)?;
    let fam = amp_damp_chain_family(m, gamma, 0.3, EnsembleMode::Sphere).map_err(err)?;
    let povm = computational_povm(m).map_err(err)?;
    let resp = response_matrix(
        &fam,
        &all_ones_state(m),
        &povm,
        time,
        &QuadratureSpec { nodes: 8 },
    )
    .map_err(err)?;
    Ok(resp.averaged_row_norm())
}

/// Exact factorized outcome distribution of the amplitude-damping chain
/// started from |1…1⟩, ordered by computational-basis index (site j is bit
/// M−1−j). Signed θ with large δ may return a quasi-distribution.
#[pyfunction]
fn amp_damp_distribution(
    theta: Vec<f64>,
    gamma: f64,
    time: f64,
    delta: f64,
) -> PyResult<Vec<f64>> {
    let m = theta.len();
    if m == 0 {
        return Err(PyValueError::new_err("theta must be non-empty"));
    }
    let d = amp_damp_analytic_distribution(&theta, gamma, time, delta, m).map_err(err)?;
    Ok(d.values().to_vec())
}

/// The same outcome distribution computed the long way: assemble the
/// generator L(θ), evolve |1…1⟩ under e^{tL}, and measure in the
/// computational basis. Agrees with `amp_damp_distribution` to ~1e−10.
#[pyfunction]
fn evolved_distribution(
    theta: Vec<f64>,
    gamma: f64,
    time: f64,
    delta: f64,
) -> PyResult<Vec<f64>> {
    let m = theta.len();
    check_sites(m)?;
    // Product mode applies raw per-direction coefficients, so feeding it
    // δθ_j/√M reproduces the sphere-convention generator for arbitrary θ
    // (the sphere family itself insists on exactly unit-norm θ).
    let fam = amp_damp_chain_family(m, gamma, 1.0, EnsembleMode::Product { halfwidth: 1.0 })
        .map_err(err)?;
    let coeffs: Vec<f64> = theta
        .iter()
        .map(|t| delta * t / (m as f64).sqrt())
        .collect();
    let g = fam.assemble(&coeffs).map_err(err)?;
    let rho_t = Propagator::new(g, time)
        .evolve(&all_ones_state(m))
        .map_err(err)?;
    let povm = computational_povm(m).map_err(err)?;
    Ok(output_distribution(&rho_t, &povm)
        .map_err(err)?
        .values()
        .to_vec())
}

/// Monte Carlo ensemble-mean TV distance between P_θ and the reference
/// dynamics for the N-site toy chain (physically projected samples).
/// Returns (mean, standard error).
#[pyfunction]
fn toy_mean_tv(
    n_qubits: usize,
    delta: f64,
    gamma: f64,
    time: f64,
    n_samples: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    check_sites(n_qubits)?;
    mean_tv_at(
        |n, d| ExperimentSetup::toy_chain(n, gamma, d, time),
        n_qubits,
        delta,
        n_samples,
        ReferenceKind::RefDynamics,
        seed,
    )
    .map_err(err)
}

/// Walsh–Hadamard transform of a length-2^L vector. `inverse=True` applies
/// the 2^{−L}-scaled inverse; the two compose to the identity.
#[pyfunction]
#[pyo3(signature = (values, inverse = false))]
fn walsh_hadamard(values: Vec<f64>, inverse: bool) -> PyResult<Vec<f64>> {
    let dir = if inverse {
        WhtDirection::Inverse
    } else {
        WhtDirection::Forward
    };
    wht(&values, dir).map_err(err)
}

/// Euclidean projection onto the probability simplex (the step that turns a
/// noisy reconstructed quasi-distribution back into a distribution).
#[pyfunction]
fn simplex_projection(values: Vec<f64>) -> Vec<f64> {
    project_to_simplex(&values)
}

#[pymodule]
fn lindlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(toy_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(averaged_row_norm, m)?)?;
    m.add_function(wrap_pyfunction!(amp_damp_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(evolved_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(toy_mean_tv, m)?)?;
    m.add_function(wrap_pyfunction!(walsh_hadamard, m)?)?;
    m.add_function(wrap_pyfunction!(simplex_projection, m)?)?;
    Ok(())
}

#!/usr/bin/env python3
"""Smoke test for the lindlab Python bindings.

Builds the extension module with cargo (cheap when already cached), copies
the cdylib next to this script as `lindlab.so`, imports it, and checks a
handful of quantitative invariants end to end:

  * kappa closed forms (kappa_2 = 2*sqrt(2)/pi, kappa_4 = 8/(3*pi))
  * analytic vs evolved amplitude-damping distributions agree to 1e-8
  * Walsh-Hadamard forward/inverse round trip
  * simplex projection returns a probability vector
  * Monte Carlo mean-TV estimate is positive, finite, and roughly linear
    in delta at small delta

Run from anywhere:  python3 python/smoke_test.py
"""

import math
import pathlib
import shutil
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]
HERE = pathlib.Path(__file__).resolve().parent


def build_and_stage_module() -> None:
    subprocess.run(
        [
            "cargo",
            "build",
            "-p",
            "lindlab-py",
            "--release",
            "--features",
            "extension-module",
        ],
        cwd=ROOT,
        check=True,
    )
    built = None
    for name in ("liblindlab.so", "liblindlab.dylib", "lindlab.dll"):
        candidate = ROOT / "target" / "release" / name
        if candidate.exists():
            built = candidate
            break
    if built is None:
        raise FileNotFoundError("cdylib not found under target/release/")
    shutil.copy2(built, HERE / "lindlab.so")


def approx(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def main() -> int:
    build_and_stage_module()
    sys.path.insert(0, str(HERE))
    import lindlab

    checks: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str) -> None:
        checks.append((name, ok, detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")

    check("version", bool(lindlab.version()), f"lindlab {lindlab.version()}")

    k2, k4 = lindlab.kappa(2), lindlab.kappa(4)
    check(
        "kappa closed forms",
        approx(k2, 2.0 * math.sqrt(2.0) / math.pi, 1e-12)
        and approx(k4, 8.0 / (3.0 * math.pi), 1e-12),
        f"kappa_2 = {k2:.12f}, kappa_4 = {k4:.12f}",
    )

    theta = [0.9, 0.3, 0.55, 0.7]
    exact = lindlab.amp_damp_distribution(theta, 1.0, 1.0, 0.8)
    evolved = lindlab.evolved_distribution(theta, 1.0, 1.0, 0.8)
    gap = max(abs(a - b) for a, b in zip(exact, evolved))
    check(
        "analytic vs evolved distribution",
        approx(sum(exact), 1.0, 1e-12) and min(exact) >= 0.0 and gap <= 1e-8,
        f"sum = {sum(exact):.12f}, max gap = {gap:.3e}",
    )

    # site 0 has p(1) = exp(-delta*gamma*t*theta_0/sqrt(M)); it occupies the
    # most significant bit, so the all-ones outcome is the last entry
    p_all_ones = math.prod(
        math.exp(-0.8 * 1.0 * 1.0 * t / math.sqrt(len(theta))) for t in theta
    )
    check(
        "factorized all-ones probability",
        approx(exact[-1], p_all_ones, 1e-12),
        f"P(1111) = {exact[-1]:.9f} vs product formula {p_all_ones:.9f}",
    )

    v = [0.3, -1.2, 4.5, 0.0, 2.2, -0.7, 1.1, 9.9]
    rt = lindlab.walsh_hadamard(lindlab.walsh_hadamard(v), inverse=True)
    wht_gap = max(abs(a - b) for a, b in zip(v, rt))
    check("walsh-hadamard round trip", wht_gap <= 1e-12, f"max gap = {wht_gap:.3e}")

    proj = lindlab.simplex_projection([0.5, -0.1, 0.8])
    check(
        "simplex projection",
        approx(sum(proj), 1.0, 1e-12) and min(proj) >= 0.0,
        f"projected = {[round(x, 6) for x in proj]}",
    )

    norm = lindlab.averaged_row_norm(4, 1.0, 1.0)
    check(
        "averaged row norm identity",
        approx(norm, 1.5, 1e-10),
        f"quadrature {norm:.12f} vs closed form 1.5",
    )

    mean_lo, se_lo = lindlab.toy_mean_tv(2, 0.10, 1.0, 1.0, 150, 11)
    mean_hi, se_hi = lindlab.toy_mean_tv(2, 0.20, 1.0, 1.0, 150, 11)
    ratio = mean_hi / mean_lo
    check(
        "mean TV scales with delta",
        0.0 < mean_lo < mean_hi < 1.0
        and se_lo < mean_lo
        and se_hi < mean_hi
        and 1.5 <= ratio <= 2.5,
        f"m(0.10) = {mean_lo:.4f}±{se_lo:.4f}, m(0.20) = {mean_hi:.4f}±{se_hi:.4f}, "
        f"ratio {ratio:.2f} (expect ~2)",
    )

    pred = lindlab.toy_prediction(1.0, 1.0, 4, 0.15)
    check("first-order prediction positive", pred > 0.0, f"m(0.15; M=4) = {pred:.4f}")

    failed = [name for name, ok, _ in checks if not ok]
    if failed:
        print(f"\nsmoke test FAILED: {', '.join(failed)}")
        return 1
    print(f"\nsmoke test passed ({len(checks)} checks)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance criteria; each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import itertools
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from lls.ingest import FrequencyTable
from lls.mixing import histogram, mixing_from_full_patterns, wasserstein1_1d
from lls.moment_matrix import build_moment_matrix, complete_matrix
from lls.patterns import Schema
from lls.simulator import (
    DiscreteMixing, ExactMoments, GeneratorConfig, UniformIntervals, random_basis, sample,
)
from lls.solver import MomentSolver, full_pattern_expectations, main_system_residuals
from lls.subspace import check_identifiability, fit_subspace, principal_angles

RESULTS = []


def report(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def restore(J, mixing, n, basis_seed, sample_seed):
    """Simulate, fit, and express every restored point in the true basis' coordinates."""
    schema = Schema.binary(J)
    truth = random_basis(schema, 2, basis_seed)
    ds, g = sample(GeneratorConfig(schema, truth, mixing, n, sample_seed))
    sub = fit_subspace(build_moment_matrix(FrequencyTable.from_dataset(ds), schema, 1), 2)
    est = mixing_from_full_patterns(full_pattern_expectations(sub, ds), n)
    coords = truth.coordinates(sub.beta(est.points))
    return coords[:, 0], est.weights, principal_angles(sub, truth).max()


def test_oracle_identity():
    t0 = time.perf_counter()
    schema = Schema.binary(5)
    basis = random_basis(schema, 2, 7)
    mixing = DiscreteMixing.from_g1([0.2, 0.7], [0.4, 0.6])
    ex = ExactMoments(basis, mixing)
    solver = MomentSolver(basis, ex)
    solved = {}
    for p in itertools.product(range(3), repeat=5):
        for up in (2, 1, 0):
            try:
                solved[p] = solver.solve(p, up_to=up).values
                break
            except (ArithmeticError, LookupError):
                continue

    def moment(p, v):
        return solved[p][v]

    worst_res = worst_exp = 0.0
    n_eq = 0
    for p, vals in solved.items():
        max_deg = max(sum(v) for v in vals) - 1
        ok_deps = True
        for j in [i for i, x in enumerate(p) if x == 0]:
            for lev in (1, 2):
                q = p[:j] + (lev,) + p[j + 1:]
                if q not in solved or max(sum(v) for v in solved[q]) < max_deg:
                    ok_deps = False
        if not ok_deps:
            continue
        for _, _, v, r in main_system_residuals(basis, ex, p, moment, min(max_deg, 2)):
            worst_res = max(worst_res, abs(r))
            n_eq += 1
        for v, x in vals.items():
            worst_exp = max(worst_exp, abs(x - ex.conditional_moment(p, v)))
    elapsed = time.perf_counter() - t0
    ok = worst_res < 1e-10 and worst_exp < 1e-10 and elapsed < 1.0 and n_eq > 0
    assert report(1, ok, f"{n_eq} equations, max residual {worst_res:.2e}, "
                         f"max moment error {worst_exp:.2e}, {elapsed:.2f}s")


def test_completion_exactness():
    t0 = time.perf_counter()
    schema = Schema.binary(10)
    ex = ExactMoments(random_basis(schema, 2, 3), DiscreteMixing.from_g1([0.2, 0.7], [0.4, 0.6]))
    M = build_moment_matrix(ex, schema, col_support=2)
    C, _ = complete_matrix(M, 2)
    err = 0.0
    for r, c in zip(*np.nonzero(~M.mask)):
        cells = [r] + [schema.cell_index(j, x) for j, x in enumerate(M.col_patterns[c]) if x]
        err = max(err, abs(C.values[r, c] - ex.weights @ np.prod(ex.betas[:, cells], axis=1)))
    C2, _ = complete_matrix(C, 2)
    idem = np.array_equal(C2.values, C.values)
    elapsed = time.perf_counter() - t0
    ok = err < 1e-8 and idem and elapsed < 1.0
    assert report(2, ok, f"{int((~M.mask).sum())} entries, max error {err:.2e}, "
                         f"idempotent={idem}, {elapsed:.2f}s")


# Calibration before the build (10 replicates per N, same seeds as below) gave
# medians 0.288 / 0.0946 / 0.0282 rad; the 0.05 rad limit at N=1e5 stands.
CALIBRATED_MEDIAN_1E5 = 0.0282


def test_subspace_consistency():
    t0 = time.perf_counter()
    schema = Schema.binary(100)
    mixing = DiscreteMixing.from_g1([0.1, 0.4])
    medians = []
    for n in (1000, 10000, 100000):
        angles = []
        for rep in range(10):
            truth = random_basis(schema, 2, 1000 + rep)
            ds, _ = sample(GeneratorConfig(schema, truth, mixing, n, 2000 + rep))
            sub = fit_subspace(build_moment_matrix(FrequencyTable.from_dataset(ds), schema, 1), 2)
            angles.append(principal_angles(sub, truth).max())
        medians.append(float(np.median(angles)))
    elapsed = time.perf_counter() - t0
    ok = medians[0] > medians[1] > medians[2] and medians[2] < 0.05 and elapsed < 300
    assert report(3, ok, "median max angle " + " > ".join(f"{m:.4f}" for m in medians)
                  + f" rad, {elapsed:.1f}s")


def test_two_point_replication():
    t0 = time.perf_counter()
    atoms = np.array([0.1, 0.4])
    g1, w, _ = restore(1000, DiscreteMixing.from_g1(atoms), 10000, 1, 101)
    near = float(w[np.min(np.abs(g1[:, None] - atoms), axis=1) <= 0.05].sum())
    h = histogram((g1, w), 0, bins=50)
    top2 = h.centers[np.argsort(-h.masses, kind="stable")[:2]]
    top_ok = bool(np.all(np.min(np.abs(top2[:, None] - atoms), axis=1) <= 0.05))
    # each atom also carries a mode: its best bin beats every bin away from both atoms
    away = np.min(np.abs(h.centers[:, None] - atoms), axis=1) > 0.05
    modes = all(h.masses[np.abs(h.centers - a) <= 0.05].max() > h.masses[away].max() for a in atoms)
    elapsed = time.perf_counter() - t0
    ok = near >= 0.70 and top_ok and modes and elapsed < 600
    assert report(4, ok, f"mass near atoms {near:.3f} (>= 0.70), top bins {np.round(top2, 3).tolist()}, "
                         f"mode at each atom={modes}, {elapsed:.1f}s")


def test_uniform_replications():
    t0 = time.perf_counter()
    cases = {}
    for name, J, mixing in [
        ("one interval J=1000", 1000, UniformIntervals([[0.2, 0.7]])),
        ("two intervals J=1000", 1000, UniformIntervals([[0.0, 0.2], [0.5, 0.8]])),
        ("one interval J=300", 300, UniformIntervals([[0.2, 0.7]])),
    ]:
        g1, w, _ = restore(J, mixing, 10000, 11, 5)
        cases[name] = wasserstein1_1d((g1, w), mixing.g1_distribution())
    elapsed = time.perf_counter() - t0
    ok = (cases["one interval J=1000"] < 0.05 and cases["two intervals J=1000"] < 0.05
          and cases["one interval J=300"] > cases["one interval J=1000"] and elapsed < 900)
    assert report(5, ok, ", ".join(f"W1[{k}]={v:.4f}" for k, v in cases.items()) + f", {elapsed:.1f}s")


ID_TABLE = [
    ((2,) * 300, 2, 150.5, True),
    ((2,) * 3, 3, 2.0, False),
    ((2,) * 3, 2, 2.0, True),
    ((2,) * 5, 3, 3.0, True),
    ((2,) * 1000, 2, 500.5, True),
    ((3, 3, 3), 3, 2.5, False),
    ((2, 3, 4), 1, 1.5, True),
    ((5, 5), 2, 1.5, False),
    ((2,) * 10, 6, 5.5, False),
    ((4,) * 6, 7, 7.5, True),
]


def test_identifiability_arithmetic():
    bad = [(lv[:3], K) for lv, K, kmax, ident in ID_TABLE
           if (check_identifiability(Schema(lv), K).K_max, check_identifiability(Schema(lv), K).identifiable)
           != (kmax, ident)]
    assert report(6, not bad, f"{len(ID_TABLE) - len(bad)}/{len(ID_TABLE)} schemas match the bound")


def test_property_suites_standalone():
    t0 = time.perf_counter()
    path = Path(__file__).with_name("test_properties.py")
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(path)],
                          capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed < 60
    assert report(7, ok, f"{tail}, {elapsed:.1f}s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))

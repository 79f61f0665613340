"""Acceptance gate: one test per release criterion, one verdict line each.

Criteria 1-3 and 11 re-run their solves from scratch (criterion 1 timed);
the rest read the margins of the canonical check-suite run shared across
the test session.  Every assertion states the released tolerance, not a
tuned one: if a solver regresses, the corresponding line here goes red.
"""

import time

import numpy as np
import pytest

from kgeolab import (
    EpsGeodesicProblem,
    PathField,
    ddc_energy_check,
    ddc_test_function,
    legendre_oracle,
    solve_eps_geodesic,
)


@pytest.fixture(scope="session")
def rows(all_results):
    return {r.name: r for r in all_results}


def test_criterion_01_eps_geodesic_newton_budget(bg, endpoint_0, endpoint_1):
    start = time.perf_counter()
    sol = solve_eps_geodesic(EpsGeodesicProblem(bg, endpoint_0, endpoint_1, 1e-2, 64))
    elapsed = time.perf_counter() - start
    assert sol.residual_sup <= 1e-10
    assert sol.newton_iters <= 25
    assert elapsed <= 60.0


def test_criterion_02_weak_geodesic_oracle_distance(bg, endpoint_0, endpoint_1):
    oracle = legendre_oracle(bg, endpoint_0, endpoint_1, 16)
    distances = []
    prev = None
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        sol = solve_eps_geodesic(
            EpsGeodesicProblem(bg, endpoint_0, endpoint_1, eps, 16), path0=prev
        )
        prev = sol.path.values
        distances.append(float(np.max(np.abs(sol.path.values - oracle.values))))
    assert all(b < a for a, b in zip(distances, distances[1:]))
    assert distances[-1] <= 5e-3


def test_criterion_03_equal_endpoints_closed_form(bg):
    zeros = np.zeros(bg.grid.n_points)
    sol = solve_eps_geodesic(EpsGeodesicProblem(bg, zeros, zeros, 1e-2, 64))
    s = sol.path.times[:, None]
    expected = 0.5 * 1e-2 * (s * s - s) * np.ones((1, bg.grid.n_points))
    assert float(np.max(np.abs(sol.path.values - expected))) <= 1e-11


def test_criterion_04_uniform_bounds_halves_rule(rows):
    row = rows["family_uniform_bounds"]
    eps = row.details["epsilons"]
    assert len(eps) == 5 and eps[0] == 0.1 and eps[-1] == 1e-3
    assert row.passed, f"margin {row.margin:.3e}"


def test_criterion_05_density_convergence_and_mass_pairing(rows):
    conv = rows["density_convergence"]
    assert conv.passed, f"margin {conv.margin:.3e}"
    assert conv.details["final_max"] <= 1e-2
    per_eps = conv.details["max_per_eps"]
    assert per_eps[-1] <= per_eps[0]
    mass = rows["mass_pairing"]
    assert mass.passed and mass.details["worst_gap"] <= 1e-10


def test_criterion_06_k_averaged_convexity(rows):
    for k in (1, 2, 4):
        row = rows[f"convexity_inequality_k[k={k}]"]
        assert row.passed, f"k={k} margin {row.margin:.3e}"
    k_margins = rows["mabuchi_convexity_and_continuity"].details["k_margins"]
    assert set(k_margins) == {"1", "2", "4"}
    assert all(m >= 0.0 for m in k_margins.values())


def test_criterion_07_mabuchi_convexity_boundary_continuity(rows):
    main = rows["mabuchi_convexity_and_continuity"]
    assert main.passed, f"margin {main.margin:.3e}"
    refine = rows["boundary_continuity_refinement"]
    assert refine.passed, f"margin {refine.margin:.3e}"
    gaps = refine.details["rows"]
    assert all(max(g["gap0"], g["gap1"]) <= 5e-3 for g in gaps)
    assert gaps[1]["n_time"] == 2 * gaps[0]["n_time"]


def test_criterion_08_almost_convexity_constant_cap(rows):
    for a in (5, 10):
        row = rows[f"mabuchi_eps_A_almost_convex[A={a}]"]
        assert row.passed, f"A={a} margin {row.margin:.3e}"
        assert row.details["epsilons"] == [1e-1, 1e-2, 1e-3]
        c_hats = row.details["c_hats"]
        assert all(c <= 100.0 for c in c_hats)
        assert all(b <= a_ + 1e-12 for a_, b in zip(c_hats, c_hats[1:]))


def test_criterion_09_entropy_semicontinuity(rows):
    for seed in range(20):
        row = rows[f"entropy_semicontinuity[seed={seed}]"]
        assert row.passed, f"seed {seed} margin {row.margin:.3e}"
    assert rows["truncated_semicontinuity_sweep"].passed
    closed = rows["delta_a_closed_form"]
    assert closed.passed and closed.details["delta_20"] < 1e-7


def test_criterion_10_curvature_identity_refinement(rows):
    row = rows["eps_curvature_identity"]
    assert row.passed, f"margin {row.margin:.3e}"
    assert all(3.0 <= r <= 5.0 for r in row.details["ratios"])
    assert row.details["margin_inequality"] >= 0.0


def test_criterion_11_ddc_energy_identity(bg, endpoint_1):
    # smooth but deliberately non-geodesic: an affine sweep plus an interior
    # bulge; n_time = 128 sits well inside the second-order regime
    n_time = 128
    s = np.linspace(0.0, 1.0, n_time + 1)[:, None]
    rows = s * endpoint_1[None, :] + np.sin(np.pi * s) ** 2 * (0.5 * endpoint_1)[None, :]
    report = ddc_energy_check(bg, PathField(bg.grid, rows), ddc_test_function(n_time))
    assert abs(report.lhs) > 1e-8
    assert report.rel_discrepancy <= 1e-3


def test_criterion_12_negative_controls_all_fire(all_results):
    controls = [r for r in all_results if r.details.get("control")]
    assert len(controls) == 12
    failing = [r.name for r in controls if not r.passed]
    assert failing == [], f"controls that did not reject their input: {failing}"

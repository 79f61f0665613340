"""Mollifier properties: mass, multipliers, monotone approximation, bands."""

import numpy as np
import pytest

from kgeolab import (
    InteriorTooThin,
    MollifierSpec,
    SpatialGrid,
    fourier_field,
    gaussian_multiplier,
    integrate,
    mollify,
    mollify_fiberwise,
    mollify_spacetime,
    neighborhood_drop_constant,
    second_derivative,
    semipositivity_constant,
)


def test_spec_validation():
    MollifierSpec(0.25)
    with pytest.raises(ValueError):
        MollifierSpec(0.3)
    with pytest.raises(ValueError):
        MollifierSpec(0.0)
    with pytest.raises(ValueError):
        MollifierSpec(0.1, "diagonal")


def test_kind_mismatch(small_grid):
    with pytest.raises(ValueError, match="fiberwise"):
        mollify_fiberwise(small_grid, np.zeros(64), MollifierSpec(0.1, "spacetime"))
    with pytest.raises(ValueError, match="spacetime"):
        mollify_spacetime(small_grid, np.zeros((9, 64)), MollifierSpec(0.1, "fiberwise"))


def test_constant_fixed_point(small_grid):
    out = mollify_fiberwise(small_grid, np.full(64, 2.0), MollifierSpec(0.1))
    assert np.max(np.abs(out - 2.0)) < 1e-12


def test_mass_preserved_per_slice(small_grid):
    rng = np.random.default_rng(0)
    path = rng.standard_normal((9, 64))
    out = mollify_fiberwise(small_grid, path, MollifierSpec(0.07))
    for row_in, row_out in zip(path, out):
        assert integrate(small_grid, row_out) == pytest.approx(
            integrate(small_grid, row_in), abs=1e-12
        )


def test_gaussian_multiplier_matches_convolution():
    """cos(2 pi x) contracts by exp(-(2 pi delta)^2 / 2) up to truncation."""
    grid = SpatialGrid(512)
    delta = 0.05
    u = np.cos(2.0 * np.pi * grid.nodes)
    out = mollify_fiberwise(grid, u, MollifierSpec(delta))
    expected = gaussian_multiplier(delta, 1) * u
    # the six sigma cutoff leaves a renormalization tail of erfc(6/sqrt(2)) ~ 2e-9
    assert np.max(np.abs(out - expected)) < 5e-9


def test_monotone_approximation(small_grid):
    u = fourier_field(small_grid, [(1, 0.3, 0.0), (3, 0.0, 0.1)])
    gaps = []
    for delta in (0.1, 0.05, 0.025, 0.0125):
        out = mollify_fiberwise(small_grid, u, MollifierSpec(delta))
        gaps.append(float(np.max(np.abs(out - u))))
    for a, b in zip(gaps, gaps[1:]):
        assert b <= a + 1e-12


def test_d2_convergence_in_lp(small_grid):
    """max over slices of the L^p gap between D2 phi_delta and D2 phi decreases."""
    s = np.linspace(0.0, 1.0, 9)[:, None]
    path = s * fourier_field(small_grid, [(1, 0.2, 0.0)])[None, :] + (1 - s) * fourier_field(
        small_grid, [(2, 0.0, 0.1)]
    )[None, :]
    d2_path = np.array([second_derivative(small_grid, row) for row in path])
    h = small_grid.spacing
    for p in (1, 2, 4):
        worst = []
        for delta in (0.1, 0.05, 0.025):
            out = mollify_fiberwise(small_grid, path, MollifierSpec(delta))
            d2_out = np.array([second_derivative(small_grid, row) for row in out])
            lp = (h * np.sum(np.abs(d2_out - d2_path) ** p, axis=1)) ** (1.0 / p)
            worst.append(float(np.max(lp)))
        assert worst[0] > worst[1] > worst[2]


def test_commutes_with_d2(small_grid):
    u = fourier_field(small_grid, [(1, 1.0, 0.0), (4, 0.2, 0.2)])
    spec = MollifierSpec(0.06)
    a = second_derivative(small_grid, mollify_fiberwise(small_grid, u, spec))
    b = mollify_fiberwise(small_grid, second_derivative(small_grid, u), spec)
    assert np.max(np.abs(a - b)) < 1e-10


# ---------------------------------------------------------------------------
# space-time smoothing


def test_spacetime_keeps_affine_rows(small_grid):
    s = np.linspace(0.0, 1.0, 17)[:, None]
    path = 2.0 * s + 1.0 + np.zeros((17, 64))
    out = mollify_spacetime(small_grid, path, MollifierSpec(0.1, "spacetime"))
    assert np.max(np.abs(out - path)) < 1e-9


def test_spacetime_band_untouched_outside(small_grid):
    rng = np.random.default_rng(1)
    path = rng.standard_normal((17, 64))
    spec = MollifierSpec(0.1, "spacetime")
    out = mollify_spacetime(small_grid, path, spec)
    margin = int(np.ceil(spec.delta * 16))
    lo, hi = margin + 1, 16 - margin - 1
    assert np.array_equal(out[:lo], path[:lo])
    assert np.array_equal(out[hi + 1 :], path[hi + 1 :])
    assert not np.array_equal(out[lo : hi + 1], path[lo : hi + 1])


def test_spacetime_kink_error_scales_with_delta(small_grid):
    s = np.linspace(0.0, 1.0, 33)
    path = np.abs(s - 0.5)[:, None] * np.ones((1, 64))
    for delta in (0.1, 0.05):
        out = mollify_spacetime(small_grid, path, MollifierSpec(delta, "spacetime"))
        assert float(np.max(np.abs(out - path))) <= delta  # Lip = 1


def test_interior_too_thin(small_grid):
    with pytest.raises(InteriorTooThin):
        mollify_spacetime(small_grid, np.zeros((5, 64)), MollifierSpec(0.2, "spacetime"))


def test_mollify_dispatch(small_grid):
    u = fourier_field(small_grid, [(1, 0.1, 0.0)])
    a = mollify(small_grid, u, MollifierSpec(0.05))
    b = mollify_fiberwise(small_grid, u, MollifierSpec(0.05))
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# measured constants


def test_semipositivity_constant_vanishes_on_admissible(small_bg):
    amp = 0.05 / (2.0 * np.pi) ** 2
    s = np.linspace(0.0, 1.0, 9)[:, None]
    path = s * amp * np.cos(2.0 * np.pi * small_bg.grid.nodes)[None, :]
    c = semipositivity_constant(small_bg, path, MollifierSpec(0.05))
    assert c == 0.0


def test_neighborhood_drop_constant_bounded(small_bg):
    amp = 0.05 / (2.0 * np.pi) ** 2
    s = np.linspace(0.0, 1.0, 9)[:, None]
    path = s * amp * np.cos(2.0 * np.pi * small_bg.grid.nodes)[None, :]
    cs = [
        neighborhood_drop_constant(small_bg, path, MollifierSpec(d)) for d in (0.1, 0.05, 0.025)
    ]
    assert all(np.isfinite(cs)) and max(cs) < 10.0

"""Space-time solver for the eps-geodesic boundary-value problem.

The unknown is a potential path Phi on the (s, x) grid with Dirichlet rows at
s = 0, 1.  The interior equation

    (w + Phi_xx) Phi_ss - Phi_xs^2 = eps w

is elliptic on the cone {w + Phi_xx > 0, Phi_ss > 0} for eps > 0, and damped
Newton with cone-preserving step halving converges from the affine guess
(1-s) phi0 + s phi1 + (eps/2)(s^2 - s), whose s-Hessian equals eps exactly
and whose slice densities are convex combinations of the endpoint densities.
All interior rows are solved jointly; the Jacobian is the nine-point
space-time stencil, factored sparse per iterate.

weak_geodesic extracts the small-eps limit by warm-started continuation.
legendre_oracle is the independent surrogate for the exact degenerate
solution: with P = x^2/2 + psi + phi the admissible cone becomes discrete
convexity of P, the degenerate flow is affine interpolation of the convex
conjugates P*, and conjugation is evaluated on three unrolled periods with a
4x dual grid through a monotone searchsorted scan.  The double conjugate
reproduces P exactly whenever every node carries density at least 1/4 (the
dual spacing h/4 then hits every subdifferential gap); the involution check
turns silent failures of that condition into NonConvexInput.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ._newton import damped_newton
from .errors import FamilyMismatch, NegativeDensity, NonConvexInput, NotASolution, SingularSystem
from .model import (
    Background,
    PathField,
    PeriodicField,
    _as_field_values,
    is_admissible,
    reduced_hessian,
)


def _values(grid, obj) -> np.ndarray:
    if isinstance(obj, PeriodicField):
        if obj.grid != grid:
            raise ValueError("field lives on a different grid")
        return obj.values
    return _as_field_values(grid, obj)


def _require_central2(bg: Background) -> None:
    if bg.scheme != "central2":
        raise ValueError("solvers require a central2 background")


@dataclass(frozen=True, eq=False)
class EpsGeodesicProblem:
    """Boundary data and grid for one eps-geodesic solve."""

    bg: Background
    endpoint_0: np.ndarray
    endpoint_1: np.ndarray
    epsilon: float
    n_time: int

    def __post_init__(self):
        e0 = _values(self.bg.grid, self.endpoint_0)
        e1 = _values(self.bg.grid, self.endpoint_1)
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.n_time < 8:
            raise ValueError(f"n_time must be >= 8, got {self.n_time}")
        for name, endpoint in (("endpoint_0", e0), ("endpoint_1", e1)):
            if not is_admissible(self.bg, endpoint):
                raise NegativeDensity(f"{name} is not admissible on this background")
        object.__setattr__(self, "endpoint_0", e0)
        object.__setattr__(self, "endpoint_1", e1)
        e0.setflags(write=False)
        e1.setflags(write=False)


@dataclass(frozen=True, eq=False)
class EpsGeodesic:
    """Solved path with its residual certificate and cone margins."""

    path: PathField
    residual_sup: float
    positivity_margin: float
    newton_iters: int
    epsilon: float


def initial_guess(problem: EpsGeodesicProblem) -> np.ndarray:
    """Affine interpolation plus the exact constant-coefficient correction."""
    s = (np.arange(problem.n_time + 1) / problem.n_time)[:, None]
    base = (1.0 - s) * problem.endpoint_0[None, :] + s * problem.endpoint_1[None, :]
    return base + 0.5 * problem.epsilon * (s * s - s)


def eval_geodesic_residual(bg: Background, path: PathField, epsilon: float) -> np.ndarray:
    """Nodewise PDE residual on interior rows, built from the reduced Hessian.

    Kept independent of the Newton assembly so the two can certify each
    other.
    """
    return reduced_hessian(bg, path).det() - epsilon * bg.w[None, :]


def solve_eps_geodesic(
    problem: EpsGeodesicProblem,
    tol: float = 1e-10,
    max_iter: int = 60,
    path0: np.ndarray | None = None,
) -> EpsGeodesic:
    """Damped Newton over all interior rows jointly."""
    bg = problem.bg
    _require_central2(bg)
    grid = bg.grid
    n = grid.n_points
    nt = problem.n_time
    n_int = nt - 1
    h = grid.spacing
    ds = 1.0 / nt
    w = bg.w
    e0, e1 = problem.endpoint_0, problem.endpoint_1
    inv_h2 = 1.0 / (h * h)
    inv_ds2 = 1.0 / (ds * ds)

    def full_path(x):
        return np.vstack([e0[None, :], x.reshape(n_int, n), e1[None, :]])

    def parts(p):
        m_xx = w[None, :] + (
            (np.roll(p, -1, axis=1) - p) - (p - np.roll(p, 1, axis=1))
        )[1:-1, :] * inv_h2
        phi_ss = ((p[2:, :] - p[1:-1, :]) - (p[1:-1, :] - p[:-2, :])) * inv_ds2
        phi_xs = (
            np.roll(p[2:, :], -1, axis=1)
            - np.roll(p[2:, :], 1, axis=1)
            - np.roll(p[:-2, :], -1, axis=1)
            + np.roll(p[:-2, :], 1, axis=1)
        ) / (4.0 * h * ds)
        return m_xx, phi_ss, phi_xs

    def residual(x):
        m_xx, phi_ss, phi_xs = parts(full_path(x))
        return (m_xx * phi_ss - phi_xs * phi_xs - problem.epsilon * w[None, :]).ravel()

    def accept(x):
        m_xx, phi_ss, _ = parts(full_path(x))
        return float(np.min(m_xx)) > 0.0 and float(np.min(phi_ss)) > 0.0

    I, J = np.indices((n_int, n))
    eq = I * n + J

    def newton_step(x, r):
        m_xx, phi_ss, phi_xs = parts(full_path(x))
        q = phi_xs / (2.0 * h * ds)
        rows, cols, vals = [], [], []

        def add(dr, dc, coef):
            tr = I + dr
            mask = (tr >= 0) & (tr < n_int)
            rows.append(eq[mask])
            cols.append(tr[mask] * n + (J[mask] + dc) % n)
            vals.append(coef[mask])

        add(0, 0, -2.0 * inv_h2 * phi_ss - 2.0 * inv_ds2 * m_xx)
        add(0, 1, inv_h2 * phi_ss)
        add(0, -1, inv_h2 * phi_ss)
        add(1, 0, inv_ds2 * m_xx)
        add(-1, 0, inv_ds2 * m_xx)
        add(1, 1, -q)
        add(1, -1, q)
        add(-1, 1, q)
        add(-1, -1, -q)
        jac = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_int * n, n_int * n),
        ).tocsc()
        try:
            return splu(jac).solve(-r)
        except RuntimeError as exc:  # pragma: no cover - needs a degenerate iterate
            raise SingularSystem(f"space-time Jacobian factorization failed: {exc}") from exc

    start = initial_guess(problem) if path0 is None else np.asarray(path0, dtype=float)
    x, rec = damped_newton(
        start[1:-1, :].ravel(), residual, newton_step, accept=accept, tol=tol, max_iter=max_iter
    )
    path = PathField(grid, full_path(x))
    cert = eval_geodesic_residual(bg, path, problem.epsilon)
    cert_sup = float(np.max(np.abs(cert)))
    assert abs(cert_sup - rec.residual_sups[-1]) <= 1e-12, (
        f"assembly and certificate residuals disagree: "
        f"{rec.residual_sups[-1]:.3e} vs {cert_sup:.3e}"
    )
    rh = reduced_hessian(bg, path)
    margin = float(min(np.min(rh.det()), np.min(rh.m_xx + rh.m_ss)))
    assert margin > 0.0, f"cone condition lost at the solution, margin {margin:.3g}"
    return EpsGeodesic(
        path=path,
        residual_sup=cert_sup,
        positivity_margin=margin,
        newton_iters=rec.iterations,
        epsilon=problem.epsilon,
    )


def weak_geodesic(
    bg: Background,
    endpoint_0,
    endpoint_1,
    eps_sequence,
    n_time: int = 64,
    record: dict | None = None,
) -> PathField:
    """Warm-started continuation to the smallest eps of the sequence.

    The returned path is the eps-geodesic at eps_sequence[-1]; the sup-norm
    Cauchy increments between consecutive solutions must decrease and are
    written to ``record`` when a dict is supplied.
    """
    eps_sequence = tuple(float(e) for e in eps_sequence)
    if len(eps_sequence) < 3:
        raise ValueError("eps_sequence needs at least 3 entries")
    if any(e <= 0.0 for e in eps_sequence) or any(
        b >= a for a, b in zip(eps_sequence, eps_sequence[1:])
    ):
        raise ValueError(f"eps_sequence must be positive and strictly decreasing: {eps_sequence}")
    prev = None
    increments = []
    residual_sups = []
    solution = None
    for eps in eps_sequence:
        problem = EpsGeodesicProblem(bg, endpoint_0, endpoint_1, eps, n_time)
        solution = solve_eps_geodesic(problem, path0=prev)
        if prev is not None:
            increments.append(float(np.max(np.abs(solution.path.values - prev))))
        prev = solution.path.values
        residual_sups.append(solution.residual_sup)
    for a, b in zip(increments, increments[1:]):
        if b > a + 1e-12:
            raise FamilyMismatch(f"continuation increments increase: {increments}")
    det = reduced_hessian(bg, solution.path).det()
    bound = eps_sequence[-1] * float(np.max(bg.w)) + 1e-10
    worst = float(np.max(np.abs(det)))
    if worst > bound:
        raise NotASolution(
            f"limit path violates the degenerate-determinant bound: {worst:.3e} > {bound:.3e}"
        )
    if record is not None:
        record["epsilons"] = list(eps_sequence)
        record["increments"] = increments
        record["residual_sups"] = residual_sups
    return solution.path


# ---------------------------------------------------------------------------
# convex-duality oracle


def _conjugate(xs: np.ndarray, fs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Discrete Legendre transform max_j (y xs[j] - fs[j]) for convex samples.

    The maximizer index is monotone in y and equals the number of chord
    slopes below y, so a searchsorted over the slope sequence evaluates the
    whole transform in sorted order.  On non-convex data the selection is
    wrong by construction; callers detect that through the involution check.
    """
    slopes = np.diff(fs) / np.diff(xs)
    idx = np.searchsorted(slopes, ys)
    return ys * xs[idx] - fs[idx]


def legendre_oracle(bg: Background, endpoint_0, endpoint_1, n_time: int) -> PathField:
    """Exact-solution surrogate: affine interpolation of convex conjugates."""
    grid = bg.grid
    endpoints = [_values(grid, endpoint_0), _values(grid, endpoint_1)]
    n = grid.n_points
    h = grid.spacing
    xs = (np.arange(3 * n) - n) * h
    ys = (np.arange(12 * n) - 4 * n) * (h / 4.0)
    x_central = grid.nodes
    quad_central = 0.5 * x_central * x_central + bg.psi
    duals = []
    for phi in endpoints:
        p = 0.5 * xs * xs + np.tile(bg.psi + phi, 3)
        pstar = _conjugate(xs, p, ys)
        back = _conjugate(ys, pstar, x_central)
        defect = float(np.max(np.abs(back - (quad_central + phi))))
        if defect > 1e-8:
            raise NonConvexInput(
                f"conjugation involution defect {defect:.3e} > 1e-08; "
                "endpoint potential is not discretely convex enough"
            )
        duals.append(pstar)
    rows = np.empty((n_time + 1, n))
    for i in range(n_time + 1):
        s = i / n_time
        pstar_s = (1.0 - s) * duals[0] + s * duals[1]
        rows[i] = _conjugate(ys, pstar_s, x_central) - quad_central
    return PathField(grid, rows)

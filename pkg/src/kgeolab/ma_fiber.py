"""Fiberwise Monge-Ampere solvers on the circle.

In one spatial dimension the fiber equation

    theta + beta + D2 phi = (1/eps) e^phi w                            (*)

is semilinear: no determinant survives the reduction, and the Newton
Jacobian D2 - (1/eps) w e^phi Id has a strictly negative zeroth-order part,
so it is invertible at every iterate and damped Newton converges globally
from the constant initial guess fixed by the mass identity

    int e^phi w dx = eps * int (theta + beta) dx.

solve_yau treats the prescribed-density problem w + D2 u = target with the
normalization int u w dx = 0 as a bordered linear system (the multiplier row
absorbs the rank defect of D2) driven through the same Newton loop, so every
solver in the package shares one code path.

solve_family assembles the two-parameter family phi_{t,eps} over the rows of
a space-time path: the path is mollified fiberwise at scale delta, each
slice density plus a semipositivity slack (zero for admissible data) becomes
the source beta = (1/eps)(m_delta + slack), and the delta -> 0 limit is
declared at the smallest delta, with the recorded Cauchy increments as
evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ._newton import damped_newton
from .errors import (
    FamilyMismatch,
    IncompatibleMass,
    NegativeDensity,
    SingularSystem,
)
from .model import (
    Background,
    PathField,
    PeriodicField,
    _as_field_values,
    fourier_field,
    metric_density,
)
from .regularize import MollifierSpec, mollify_fiberwise, semipositivity_constant


def _values(grid, obj) -> np.ndarray:
    if isinstance(obj, PeriodicField):
        if obj.grid != grid:
            raise ValueError("field lives on a different grid")
        return obj.values
    return _as_field_values(grid, obj)


def _require_central2(bg: Background) -> None:
    # Jacobians are assembled from the three-point stencil; a spectral
    # background would make residual and Jacobian inconsistent
    if bg.scheme != "central2":
        raise ValueError("solvers require a central2 background")


def _d2_matrix(grid) -> sparse.csc_matrix:
    """Sparse periodic central2 second-derivative matrix."""
    n = grid.n_points
    inv_h2 = 1.0 / (grid.spacing * grid.spacing)
    rows = np.concatenate([np.arange(n)] * 3)
    cols = np.concatenate([np.arange(n), (np.arange(n) + 1) % n, (np.arange(n) - 1) % n])
    vals = np.concatenate([np.full(n, -2.0 * inv_h2), np.full(n, inv_h2), np.full(n, inv_h2)])
    return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()


# ---------------------------------------------------------------------------
# problem and solution containers


@dataclass(frozen=True, eq=False)
class FiberProblem:
    """One fiber equation (*): background, source densities, epsilon.

    theta defaults to the curvature density -r of the background; beta is
    required to be semipositive up to round-off.
    """

    bg: Background
    beta: np.ndarray
    epsilon: float
    theta: np.ndarray | None = None

    def __post_init__(self):
        beta = _values(self.bg.grid, self.beta)
        theta = -self.bg.r if self.theta is None else _values(self.bg.grid, self.theta)
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if float(np.min(beta)) < -1e-12:
            raise NegativeDensity(
                f"beta must be semipositive up to round-off; min = {np.min(beta):.3g}"
            )
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "theta", np.array(theta, dtype=float))
        self.beta.setflags(write=False)
        self.theta.setflags(write=False)

    @property
    def source(self) -> np.ndarray:
        return self.theta + self.beta


@dataclass(frozen=True, eq=False)
class FiberSolution:
    """Solved slice: potential, residual certificate, solver effort."""

    phi: PeriodicField
    residual_sup: float
    newton_iters: int
    min_metric_eigen: float


def fiber_residual(problem: FiberProblem, phi) -> np.ndarray:
    """Nodewise residual of (*) written as D2 phi - (1/eps) w e^phi + theta + beta."""
    bg = problem.bg
    phi = np.asarray(phi, dtype=float)
    return bg.d2(phi) - (1.0 / problem.epsilon) * bg.w * np.exp(phi) + problem.source


def mass_identity_gap(problem: FiberProblem, phi) -> float:
    """int e^phi w dx - eps int (theta + beta) dx; vanishes on solutions."""
    bg = problem.bg
    return bg.integrate_mu(np.exp(np.asarray(phi, dtype=float))) - problem.epsilon * bg.integrate(
        problem.source
    )


def max_principle_gap(problem: FiberProblem, phi) -> float:
    """max phi - max over nodes of log(eps (theta+beta)/w), negative on solutions.

    The discrete argument: at a maximum node p one has D2 phi(p) <= 0, hence
    (1/eps) w e^phi <= theta + beta there, which both forces the source to be
    positive at p and bounds phi(p) by the nodewise logarithm.
    """
    phi = np.asarray(phi, dtype=float)
    src = problem.source
    pos = src > 0.0
    if not np.any(pos):
        raise ValueError("source has no positive node; the bound is void")
    bound = np.max(np.log(problem.epsilon * src[pos] / problem.bg.w[pos]))
    return float(np.max(phi) - bound)


# ---------------------------------------------------------------------------
# single-fiber solvers


def solve_yau(bg: Background, target, tol: float = 1e-11) -> FiberSolution:
    """Solve w + D2 u = target with int u w dx = 0.

    target must be a positive density of unit mass (checked to 1e-10).  The
    linear solve is bordered with the weighted-mean row; the multiplier
    column w spans the complement of range(D2), making the system square and
    nonsingular.
    """
    _require_central2(bg)
    t = _values(bg.grid, target)
    if float(np.min(t)) <= 0.0:
        raise NegativeDensity(f"target must be positive; min = {np.min(t):.3g}")
    mass = bg.integrate(t)
    if abs(mass - 1.0) > 1e-10:
        raise IncompatibleMass(f"int target dx = {mass!r}, expected 1 to 1e-10")
    n = bg.grid.n_points
    h = bg.grid.spacing
    bordered = sparse.bmat(
        [[_d2_matrix(bg.grid), bg.w[:, None]], [h * bg.w[None, :], None]], format="csc"
    )
    try:
        lu = splu(bordered)
    except RuntimeError as exc:  # pragma: no cover - requires degenerate weights
        raise SingularSystem(f"bordered system factorization failed: {exc}") from exc

    def residual(u):
        return metric_density(bg, u) - t

    def newton_step(u, r):
        rhs = np.concatenate([-r, [-h * float(np.dot(bg.w, u))]])
        return lu.solve(rhs)[:n]

    u, rec = damped_newton(np.zeros(n), residual, newton_step, tol=tol, max_iter=8)
    return FiberSolution(
        phi=PeriodicField(bg.grid, u),
        residual_sup=rec.residual_sups[-1],
        newton_iters=rec.iterations,
        min_metric_eigen=float(np.min(metric_density(bg, u))),
    )


def solve_aubin_fiber(
    problem: FiberProblem,
    phi0=None,
    tol: float = 1e-11,
    max_iter: int = 200,
) -> FiberSolution:
    """Damped Newton for (*) from the constant mass-matching initial guess."""
    bg = problem.bg
    _require_central2(bg)
    source = problem.source
    total = bg.integrate(source)
    if total <= 0.0:
        raise IncompatibleMass(
            f"int (theta + beta) dx = {total!r} <= 0; the mass identity has no solution"
        )
    if phi0 is None:
        phi0 = np.full(bg.grid.n_points, math.log(problem.epsilon * total))
    inv_eps = 1.0 / problem.epsilon
    d2 = _d2_matrix(bg.grid)

    def residual(phi):
        return bg.d2(phi) - inv_eps * bg.w * np.exp(phi) + source

    def newton_step(phi, r):
        jac = d2 - sparse.diags(inv_eps * bg.w * np.exp(phi), format="csc")
        return splu(jac.tocsc()).solve(-r)

    phi, rec = damped_newton(phi0, residual, newton_step, tol=tol, max_iter=max_iter)
    p = int(np.argmax(phi))
    if source[p] > 0.0:  # guaranteed at an exact solution; guard for round-off
        gap = phi[p] - math.log(problem.epsilon * source[p] / bg.w[p])
        assert gap <= 1e-8, f"discrete max principle violated by {gap:.3g}"
    return FiberSolution(
        phi=PeriodicField(bg.grid, phi),
        residual_sup=rec.residual_sups[-1],
        newton_iters=rec.iterations,
        min_metric_eigen=float(np.min(source + bg.d2(phi))),
    )


def stability_constant(problem: FiberProblem, etas=(1e-2, 1e-3, 1e-4)) -> list[float]:
    """Sup-norm sensitivities ||phi[beta + eta] - phi[beta]|| / eta per eta."""
    base = solve_aubin_fiber(problem)
    out = []
    for eta in etas:
        shifted = FiberProblem(
            bg=problem.bg,
            beta=problem.beta + float(eta),
            epsilon=problem.epsilon,
            theta=problem.theta,
        )
        sol = solve_aubin_fiber(shifted, phi0=base.phi.values.copy())
        out.append(float(np.max(np.abs(sol.phi.values - base.phi.values))) / float(eta))
    return out


def comparison_defect(bg: Background, u, v) -> float:
    """int_{u<v} m[v] dx - int_{u<v} m[u] dx, nonpositive on the discrete circle.

    Writing g = v - u, the quantity is the integral of D2 g over {g > 0};
    summing the stencil over each maximal run of that set telescopes to
    boundary differences with a sign, so the defect is <= 0 exactly.
    """
    u = _values(bg.grid, u)
    v = _values(bg.grid, v)
    mask = u < v
    return bg.grid.spacing * float(np.sum(bg.d2(v - u)[mask]))


# ---------------------------------------------------------------------------
# families over a path


@dataclass(eq=False)
class FiberFamily:
    """phi_{t,eps} at the smallest mollification scale, plus sweep evidence.

    solutions is epsilon-major: solutions[i][j] solves the fiber equation at
    (epsilons[i], times[j]).  cauchy_increments[i] lists the sup gaps between
    consecutive-delta solutions for epsilons[i]; lipschitz_constants[i] is
    L(eps) = max adjacent-slice slope, and equicontinuity_constant is
    max_i epsilons[i] * L(epsilons[i]).
    """

    bg: Background
    epsilons: tuple
    times: tuple
    deltas: tuple
    solutions: list
    cauchy_increments: list
    lipschitz_constants: list
    equicontinuity_constant: float
    slacks: tuple
    bound_samples: np.ndarray | None = None  # (n_eps, n_delta, 3) sweep diagnostics
    bound_report: "BoundReport | None" = field(default=None, repr=False)

    def phi_matrix(self) -> np.ndarray:
        """Array of shape (n_eps, n_times, n_points) of solved potentials."""
        return np.array([[sol.phi.values for sol in row] for row in self.solutions])


@dataclass(eq=False)
class BoundReport:
    """The three uniform bounds per epsilon and the halves comparison."""

    epsilons: tuple
    sup_phi: np.ndarray
    neg_eps_inf_phi: np.ndarray
    eps_d2_phi: np.ndarray
    maxima: tuple
    passed: bool

    def to_dict(self) -> dict:
        return {
            "epsilons": list(self.epsilons),
            "sup_phi": [float(v) for v in self.sup_phi],
            "neg_eps_inf_phi": [float(v) for v in self.neg_eps_inf_phi],
            "eps_d2_phi": [float(v) for v in self.eps_d2_phi],
            "maxima": [float(v) for v in self.maxima],
            "passed": bool(self.passed),
        }


@dataclass(eq=False)
class ConvergenceReport:
    """Weak-convergence errors |int (e^phi w - m) xi dx| over the sweep."""

    epsilons: tuple
    errors: np.ndarray  # (n_eps, n_times, n_test)
    max_per_eps: np.ndarray
    passed: bool

    def to_dict(self) -> dict:
        return {
            "epsilons": list(self.epsilons),
            "max_per_eps": [float(v) for v in self.max_per_eps],
            "final_max": float(self.max_per_eps[-1]),
            "passed": bool(self.passed),
        }


@dataclass(eq=False)
class VanishingReport:
    """sup_t ||eps phi_{t,eps}||_inf along the sweep."""

    epsilons: tuple
    sup_norms: np.ndarray
    passed: bool

    def to_dict(self) -> dict:
        return {
            "epsilons": list(self.epsilons),
            "sup_norms": [float(v) for v in self.sup_norms],
            "passed": bool(self.passed),
        }


def _check_decreasing(name: str, seq) -> None:
    arr = np.asarray(seq, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty sequence")
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} must be positive, got {list(arr)}")
    if np.any(np.diff(arr) >= 0.0):
        raise ValueError(f"{name} must be strictly decreasing, got {list(arr)}")


def solve_family(bg: Background, path: PathField, epsilons, deltas, tol: float = 1e-11) -> FiberFamily:
    """Solve the fiber equation on every path row for each (eps, delta).

    For each delta (decreasing) the path is mollified fiberwise, the slice
    densities m_delta plus the slack make beta, and every time row is solved
    with warm starts along t.  Per epsilon, the solution kept is the one at
    the smallest delta; the sup-norm Cauchy increments across consecutive
    deltas are recorded and must decrease.
    """
    _require_central2(bg)
    epsilons = tuple(float(e) for e in epsilons)
    deltas = tuple(float(d) for d in deltas)
    _check_decreasing("epsilons", epsilons)
    _check_decreasing("deltas", deltas)

    largest = MollifierSpec(deltas[0], "fiberwise")
    m_largest = metric_density(bg, mollify_fiberwise(bg.grid, path.values, largest))
    if float(np.min(m_largest)) <= 0.0:
        raise NegativeDensity(
            f"path is not slice-wise admissible after mollification at delta={deltas[0]}; "
            f"min density = {np.min(m_largest):.3g}"
        )

    # per delta: slice densities plus the (usually zero) semipositivity slack
    sources = []
    slacks = []
    for d in deltas:
        spec = MollifierSpec(d, "fiberwise")
        m_d = metric_density(bg, mollify_fiberwise(bg.grid, path.values, spec))
        slack = semipositivity_constant(bg, path.values, spec) * d
        slacks.append(slack)
        sources.append(m_d + slack)

    times = tuple(float(s) for s in path.times)
    n_rows = path.n_time + 1
    solutions = []
    increments = []
    bound_samples = np.zeros((len(epsilons), len(deltas), 3))
    warm_row0 = None
    for i, eps in enumerate(epsilons):
        prev_mat = None
        kept = None
        incs = []
        for k, d in enumerate(deltas):
            row_solutions = []
            warm = warm_row0
            for j in range(n_rows):
                beta = sources[k][j] / eps
                prob = FiberProblem(bg=bg, beta=beta, epsilon=eps)
                try:
                    sol = solve_aubin_fiber(prob, phi0=warm, tol=tol)
                except Exception as exc:
                    raise type(exc)(
                        f"fiber solve failed at (t={times[j]}, eps={eps}, delta={d}): {exc}"
                    ) from exc
                row_solutions.append(sol)
                warm = sol.phi.values.copy()
            warm_row0 = row_solutions[0].phi.values.copy()
            mat = np.array([s.phi.values for s in row_solutions])
            bound_samples[i, k, 0] = float(np.max(mat))
            bound_samples[i, k, 1] = float(-eps * np.min(mat))
            d2_rows = np.array([bg.d2(row) for row in mat])
            bound_samples[i, k, 2] = float(eps * np.max(np.abs(d2_rows)))
            if prev_mat is not None:
                incs.append(float(np.max(np.abs(mat - prev_mat))))
            prev_mat = mat
            kept = row_solutions
        for a, b in zip(incs, incs[1:]):
            if b > a + 1e-12:
                raise FamilyMismatch(
                    f"Cauchy increments increase along deltas at eps={eps}: {incs}"
                )
        solutions.append(kept)
        increments.append(incs)

    lipschitz = []
    for i, eps in enumerate(epsilons):
        mat = np.array([s.phi.values for s in solutions[i]])
        slopes = np.max(np.abs(np.diff(mat, axis=0)), axis=1) / path.ds
        lipschitz.append(float(np.max(slopes)) if slopes.size else 0.0)
    equicont = max((e * L for e, L in zip(epsilons, lipschitz)), default=0.0)

    return FiberFamily(
        bg=bg,
        epsilons=epsilons,
        times=times,
        deltas=deltas,
        solutions=solutions,
        cauchy_increments=increments,
        lipschitz_constants=lipschitz,
        equicontinuity_constant=float(equicont),
        slacks=tuple(slacks),
        bound_samples=bound_samples,
    )


def _halves_ok(values: np.ndarray) -> bool:
    split = (values.size + 1) // 2
    first, second = values[:split], values[split:]
    if second.size == 0:
        return True
    return float(np.max(second)) <= 1.5 * float(np.max(first))


def check_bounds(family: FiberFamily) -> BoundReport:
    """Three uniform bounds per epsilon; PASS by the 1.5x halves rule.

    Uniformity proxy: for each of sup phi, -eps inf phi and eps |D2 phi|,
    the maximum over the second half of the (decreasing) epsilon sweep must
    not exceed 1.5 times the maximum over the first half.
    """
    bg = family.bg
    n_eps = len(family.epsilons)
    sup_phi = np.zeros(n_eps)
    neg_inf = np.zeros(n_eps)
    eps_d2 = np.zeros(n_eps)
    for i, eps in enumerate(family.epsilons):
        mat = np.array([s.phi.values for s in family.solutions[i]])
        sup_phi[i] = float(np.max(mat))
        neg_inf[i] = float(-eps * np.min(mat))
        eps_d2[i] = float(eps * np.max(np.abs([bg.d2(row) for row in mat])))
    passed = _halves_ok(sup_phi) and _halves_ok(neg_inf) and _halves_ok(eps_d2)
    report = BoundReport(
        epsilons=family.epsilons,
        sup_phi=sup_phi,
        neg_eps_inf_phi=neg_inf,
        eps_d2_phi=eps_d2,
        maxima=(float(np.max(sup_phi)), float(np.max(neg_inf)), float(np.max(eps_d2))),
        passed=passed,
    )
    family.bound_report = report
    return report


def default_test_set(grid) -> list[np.ndarray]:
    """Low-frequency test functions {1, cos 2pi x, sin 2pi x, cos 4pi x, sin 4pi x}."""
    return [
        np.ones(grid.n_points),
        fourier_field(grid, [(1, 1.0, 0.0)]),
        fourier_field(grid, [(1, 0.0, 1.0)]),
        fourier_field(grid, [(2, 1.0, 0.0)]),
        fourier_field(grid, [(2, 0.0, 1.0)]),
    ]


def density_convergence(family: FiberFamily, path: PathField, test_set=None) -> ConvergenceReport:
    """Pairings |int (e^phi w - m[path]) xi dx| over the epsilon sweep.

    PASS iff every final-epsilon error is <= 1e-2 and the worst error over
    (t, xi) decreases from the first epsilon to the last.
    """
    bg = family.bg
    if test_set is None:
        test_set = default_test_set(bg.grid)
    test_set = [_values(bg.grid, xi) for xi in test_set]
    if not test_set:
        raise ValueError("test_set must be nonempty")
    m_rows = metric_density(bg, path.values)
    n_eps = len(family.epsilons)
    n_rows = len(family.times)
    errors = np.zeros((n_eps, n_rows, len(test_set)))
    for i in range(n_eps):
        for j in range(n_rows):
            dens = np.exp(family.solutions[i][j].phi.values) * bg.w
            gap = dens - m_rows[j]
            for k, xi in enumerate(test_set):
                errors[i, j, k] = abs(bg.integrate(gap * xi))
    max_per_eps = errors.reshape(n_eps, -1).max(axis=1)
    passed = bool(np.max(errors[-1]) <= 1e-2 and max_per_eps[-1] <= max_per_eps[0])
    return ConvergenceReport(
        epsilons=family.epsilons,
        errors=errors,
        max_per_eps=max_per_eps,
        passed=passed,
    )


def eps_phi_vanishing(family: FiberFamily) -> VanishingReport:
    """sup_t ||eps phi||_inf must decrease along the sweep and end <= first/2."""
    if len(family.epsilons) < 3:
        raise ValueError("need at least 3 epsilons to judge the trend")
    sups = np.array(
        [
            eps * max(float(np.max(np.abs(s.phi.values))) for s in row)
            for eps, row in zip(family.epsilons, family.solutions)
        ]
    )
    decreasing = all(
        b < a or (a == 0.0 and b == 0.0) for a, b in zip(sups, sups[1:])
    )
    passed = bool(decreasing and sups[-1] <= 0.5 * sups[0])
    return VanishingReport(epsilons=family.epsilons, sup_norms=sups, passed=passed)


def family_report(family: FiberFamily) -> dict:
    """JSON-ready summary {epsilons, times, bounds, residuals, ...}."""
    report = family.bound_report if family.bound_report is not None else check_bounds(family)
    residuals = [[s.residual_sup for s in row] for row in family.solutions]
    return {
        "epsilons": list(family.epsilons),
        "times": list(family.times),
        "deltas": list(family.deltas),
        "slacks": list(family.slacks),
        "bounds": report.to_dict(),
        "residuals": residuals,
        "cauchy_increments": [list(map(float, inc)) for inc in family.cauchy_increments],
        "lipschitz_constants": [float(v) for v in family.lipschitz_constants],
        "equicontinuity_constant": float(family.equicontinuity_constant),
    }

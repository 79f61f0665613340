"""Theorem-level property checks with signed margins and negative controls.

Every check condenses to a PropertyResult whose margin is the signed
distance to its acceptance threshold, so pass == (margin >= 0) always.
Thresholds are relative to a computed scale (the largest magnitude the
tested quantity reaches on the run) except for identities that must hold
at round-off, whose tolerances are absolute.

Each check is paired with a constructed failing input.  The control
helpers run the check on that input and return the result with the margin
sign flipped, so a control "passes" exactly when the underlying check
correctly rejects the broken data.  Suites bundle checks and their
controls; a suite is green only when the checks pass on real data and
fail on the controls.

The curvature identity is checked in the form

    Hess(log(w + Phi_xx))(v, v) - eps D2(e^-f) / (w + Phi_xx) = kappa (D1 a)^2

with v = (-a, 1), a = Phi_xs / (w + Phi_xx), f = log((w + Phi_xx)/w) and
kappa frozen to 1 after a one-time fit: only this form has a residual that
vanishes under grid refinement, which is what the refinement-ratio window
[3, 5] certifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import xlogy

from .errors import FamilyMismatch, NegativeDensity, NotASolution, SkippedHypothesis
from .functionals import (
    FunctionalTrace,
    TruncationSpec,
    _resolve_chi,
    ddc_energy_check,
    delta_A,
    mabuchi,
    mabuchi_eps_A,
    mabuchi_k,
    second_differences,
)
from .geodesic import (
    EpsGeodesic,
    EpsGeodesicProblem,
    solve_eps_geodesic,
    weak_geodesic,
)
from .ma_fiber import (
    FiberFamily,
    FiberSolution,
    check_bounds,
    density_convergence,
    eps_phi_vanishing,
    solve_family,
)
from .model import (
    Background,
    PathField,
    PeriodicField,
    SpatialGrid,
    fourier_field,
    make_background,
    metric_density,
    path_d1x,
    path_d2s,
    path_d2x,
    path_dxds,
    reduced_hessian,
)
from .regularize import MollifierSpec, mollify_fiberwise

# frozen after the refinement fit; see eps_curvature_identity
CURVATURE_KAPPA = 1.0
KAPPA_FIT_SET = (0.25, 0.5, 1.0, 2.0, 4.0)


# ---------------------------------------------------------------------------
# result container


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):  # before int: bool is an int subclass
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


@dataclass(frozen=True, eq=False)
class PropertyResult:
    """One verdict: margin is the signed distance to the threshold."""

    name: str
    passed: bool
    margin: float
    details: dict

    def __post_init__(self):
        if self.passed != (self.margin >= 0.0):
            raise ValueError(
                f"{self.name}: pass flag {self.passed} contradicts margin {self.margin:g}"
            )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "margin": float(self.margin),
            "details": _jsonable(self.details),
        }


def _result(name: str, margin: float, details: dict) -> PropertyResult:
    margin = float(margin)
    return PropertyResult(name=name, passed=margin >= 0.0, margin=margin, details=_jsonable(details))


def _as_control(name: str, raw: PropertyResult) -> PropertyResult:
    """Flip the verdict: a control passes exactly when the raw check fails."""
    margin = -raw.margin if raw.margin != 0.0 else -1e-300
    details = dict(raw.details)
    details.update({"control": True, "raw_margin": raw.margin, "raw_pass": raw.passed})
    return _result(name, margin, details)


def _scale(*arrays) -> float:
    worst = 0.0
    for arr in arrays:
        a = np.asarray(arr, dtype=float)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a))))
    return worst


# ---------------------------------------------------------------------------
# density sequences (weak-convergence test data for the entropy lemmas)


@dataclass(eq=False)
class DensitySequence:
    """Densities f_i >= 0 of unit mu-mass converging weakly to f_limit."""

    bg: Background
    f_limit: np.ndarray
    members: list
    bound: float

    def __post_init__(self):
        self.f_limit = np.asarray(self.f_limit, dtype=float)
        self.members = [np.asarray(m, dtype=float) for m in self.members]
        for label, f in [("f_limit", self.f_limit)] + [
            (f"member {i}", m) for i, m in enumerate(self.members)
        ]:
            low = float(np.min(f))
            if low < 0.0:
                raise NegativeDensity(f"{label} reaches {low:.3g}")
            if float(np.max(f)) > self.bound + 1e-12:
                raise ValueError(f"{label} exceeds the declared bound {self.bound:g}")
            mass = self.bg.integrate_mu(f)
            if abs(mass - 1.0) > 1e-10:
                raise ValueError(f"{label} has mu-mass {mass!r}, expected 1")


def oscillation_sequence(
    bg: Background, f_limit=None, count: int = 12, amplitude: float = 0.5
) -> DensitySequence:
    """f_i = f (1 + a sin(2 pi i x)) / Z_i: oscillations kill weak limits.

    Frequencies run 1..count and must stay below Nyquist; |a| < 1 keeps the
    members nonnegative whenever f is.
    """
    if not abs(amplitude) < 1.0:
        raise ValueError(f"|amplitude| must be < 1, got {amplitude}")
    if count < 1 or count >= bg.grid.n_points // 2:
        raise ValueError(f"count must be in [1, {bg.grid.n_points // 2 - 1}], got {count}")
    f = np.ones(bg.grid.n_points) if f_limit is None else np.asarray(f_limit, dtype=float)
    f = f / bg.integrate_mu(f)
    x = bg.grid.nodes
    members = []
    for i in range(1, count + 1):
        g = f * (1.0 + amplitude * np.sin(2.0 * np.pi * i * x))
        members.append(g / bg.integrate_mu(g))
    bound = max(float(np.max(f)), max(float(np.max(m)) for m in members))
    return DensitySequence(bg=bg, f_limit=f, members=members, bound=bound)


def random_density_sequence(
    bg: Background, seed: int, count: int = 12, amplitude: float = 0.5
) -> DensitySequence:
    """Oscillation sequence around a random smooth positive limit density."""
    rng = np.random.default_rng(seed)
    terms = [(k, rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)) for k in (1, 2, 3)]
    base = 1.0 + fourier_field(bg.grid, terms)
    return oscillation_sequence(bg, base, count=count, amplitude=amplitude)


def mollified_sequence(
    bg: Background, f_limit=None, count: int = 9, delta: float = 0.1
) -> DensitySequence:
    """Members strictly smoother than the limit: entropy drops, never rises.

    This is the canonical failing input for the semicontinuity checks; the
    gap sequence sits at a strictly negative level.
    """
    f = (
        1.0 + 0.5 * fourier_field(bg.grid, [(1, 1.0, 0.0)])
        if f_limit is None
        else np.asarray(f_limit, dtype=float)
    )
    f = f / bg.integrate_mu(f)
    smooth = mollify_fiberwise(bg.grid, f, MollifierSpec(delta, "fiberwise"))
    smooth = smooth / bg.integrate_mu(smooth)
    members = [smooth.copy() for _ in range(count)]
    bound = max(float(np.max(f)), float(np.max(smooth)))
    return DensitySequence(bg=bg, f_limit=f, members=members, bound=bound)


def density_entropy(bg: Background, f) -> float:
    """H(f) = int f log f dmu for a density f relative to mu."""
    f = np.asarray(f, dtype=float)
    return bg.integrate_mu(xlogy(f, f))


def density_truncated_entropy(bg: Background, f, spec: TruncationSpec) -> float:
    """H_A(f) = int f log max(f, e^(chi - A)) dmu; finite on zero sets."""
    f = np.asarray(f, dtype=float)
    floor = _resolve_chi(bg, spec) - spec.A
    above = np.log(f, out=np.array(floor, dtype=float), where=f > np.exp(floor))
    return bg.integrate_mu(f * np.maximum(above, floor))


def _tail_start(n: int) -> int:
    # semicontinuity is asymptotic: only the last third of the gaps counts
    return min(n - 1, (2 * n) // 3)


def entropy_semicontinuity(bg: Background, seq: DensitySequence, tol: float = 1e-6) -> PropertyResult:
    """liminf H(f_i) >= H(f): tail gaps must clear -tol."""
    base = density_entropy(bg, seq.f_limit)
    gaps = [density_entropy(bg, f) - base for f in seq.members]
    start = _tail_start(len(gaps))
    margin = min(gaps[start:]) + tol
    return _result(
        "entropy_semicontinuity",
        margin,
        {"limit_entropy": base, "gaps": gaps, "tail_start": start, "tol": tol},
    )


def truncated_semicontinuity(
    bg: Background, seq: DensitySequence, spec: TruncationSpec, tol: float = 1e-6
) -> PropertyResult:
    """Tail gaps of H_A may dip below zero by at most delta(A)."""
    slack = delta_A(bg, spec)[2]
    base = density_truncated_entropy(bg, seq.f_limit, spec)
    gaps = [density_truncated_entropy(bg, f, spec) - base for f in seq.members]
    start = _tail_start(len(gaps))
    margin = min(gaps[start:]) + slack + tol
    return _result(
        f"truncated_semicontinuity[A={spec.A:g}]",
        margin,
        {
            "A": spec.A,
            "delta_A": slack,
            "limit_entropy": base,
            "gaps": gaps,
            "tail_start": start,
            "tol": tol,
        },
    )


def truncated_semicontinuity_sweep(
    bg: Background, seq: DensitySequence, a_values=(2.0, 5.0, 10.0, 20.0), tol: float = 1e-6
) -> PropertyResult:
    """The per-A checks must pass and the slacks delta(A) must decrease in A."""
    a_values = tuple(float(a) for a in a_values)
    results = [truncated_semicontinuity(bg, seq, TruncationSpec(a), tol) for a in a_values]
    slacks = [r.details["delta_A"] for r in results]
    margin_mono = min(
        (a - b for a, b in zip(slacks, slacks[1:])), default=math.inf
    )
    margin = min([r.margin for r in results] + [margin_mono])
    return _result(
        "truncated_semicontinuity_sweep",
        margin,
        {
            "a_values": list(a_values),
            "delta_values": slacks,
            "per_a_margins": [r.margin for r in results],
        },
    )


def delta_a_closed_form(bg: Background, a_values=(2.0, 5.0, 10.0, 20.0)) -> PropertyResult:
    """With chi = 0 and unit mu-mass, delta(A) = (A + 2) e^-A to round-off."""
    worst = 0.0
    rows = []
    for a in a_values:
        c1, c2, slack = delta_A(bg, TruncationSpec(float(a)))
        closed = (float(a) + 2.0) * math.exp(-float(a))
        worst = max(worst, abs(slack - closed))
        rows.append({"A": float(a), "delta": slack, "closed_form": closed})
    tail = delta_A(bg, TruncationSpec(20.0))[2]
    margin = min(1e-12 - worst, 1e-7 - tail)
    return _result(
        "delta_a_closed_form",
        margin,
        {"rows": rows, "worst_gap": worst, "delta_20": tail},
    )


# ---------------------------------------------------------------------------
# convexity of the k-averaged potential (log-sum-exp inequality)


def _family_matrix(family: FiberFamily, k: int) -> np.ndarray:
    return np.array(
        [[sol.phi.values for sol in family.solutions[j]] for j in range(k)]
    )


def convexity_inequality_k(
    bg: Background, path: PathField, family: FiberFamily, k: int, tol: float = 1e-6
) -> PropertyResult:
    """mixedDet(Hess L - Ric, G) >= -tol for L = log of the k-fiber average.

    G is the reduced Hessian of the path (degenerate for a weak geodesic),
    Ric acts on the xx slot only.  The log-sum-exp convexity inequality
    Hess L >= sum p_j Hess phi_j is checked independently in the x and s
    directions on the same data.
    """
    if k < 1 or k > len(family.epsilons):
        raise FamilyMismatch(f"k = {k} outside the family's {len(family.epsilons)} epsilons")
    times = np.asarray(family.times, dtype=float)
    if times.shape != path.times.shape or float(np.max(np.abs(times - path.times))) > 1e-12:
        raise FamilyMismatch("family times do not match the path grid")
    grid = bg.grid
    ds = path.ds
    phis = _family_matrix(family, k)  # (k, n_rows, n)
    num = np.exp(phis)
    avg = num.mean(axis=0)
    weights = num / num.sum(axis=0)  # softmax over the k fibers
    L = np.log(avg)

    l_xx = path_d2x(grid, L, bg.scheme)
    l_ss = path_d2s(L, ds)
    l_xs = path_dxds(grid, L, ds, bg.scheme)
    rh = reduced_hessian(bg, path)
    a_xx = l_xx[1:-1] - bg.r[None, :]
    mixed = rh.mixed_det(a_xx, l_xs, l_ss)
    scale = _scale(a_xx * rh.m_ss, l_ss * rh.m_xx, 2.0 * l_xs * rh.m_xs)
    margin_main = float(np.min(mixed)) + tol * scale

    # log-sum-exp directional convexity, Hess L >= sum p_j Hess phi_j
    phi_xx = np.array([path_d2x(grid, phis[j], bg.scheme) for j in range(k)])
    phi_ss = np.array([path_d2s(phis[j], ds) for j in range(k)])
    gap_x = l_xx - np.sum(weights * phi_xx, axis=0)
    gap_s = l_ss - np.sum(weights[:, 1:-1, :] * phi_ss, axis=0)
    scale_dir = _scale(l_xx, phi_xx, l_ss, phi_ss)
    margin_dir = min(float(np.min(gap_x)), float(np.min(gap_s))) + tol * scale_dir

    margin = min(margin_main, margin_dir)
    return _result(
        f"convexity_inequality_k[k={k}]",
        margin,
        {
            "k": k,
            "epsilons": list(family.epsilons[:k]),
            "min_mixed_det": float(np.min(mixed)),
            "scale": scale,
            "margin_mixed_det": margin_main,
            "min_direction_gap": min(float(np.min(gap_x)), float(np.min(gap_s))),
            "direction_scale": scale_dir,
            "margin_direction": margin_dir,
            "tol": tol,
        },
    )


# ---------------------------------------------------------------------------
# curvature identity along an eps-geodesic


def _curvature_fields(bg: Background, eg: EpsGeodesic) -> dict:
    grid = bg.grid
    vals = eg.path.values
    ds = eg.path.ds
    rh = reduced_hessian(bg, eg.path)
    m_int = rh.m_xx
    a = rh.m_xs / m_int
    m_rows = metric_density(bg, vals)
    f_rows = np.log(m_rows / bg.w[None, :])
    g_rows = np.log(m_rows)
    expf = bg.w[None, :] / m_rows  # e^-f
    out = {"a": a, "a_x": path_d1x(grid, a, bg.scheme), "m_int": m_int}
    for tag, rows in (("f", f_rows), ("g", g_rows)):
        out[tag + "_xx"] = path_d2x(grid, rows, bg.scheme)[1:-1]
        out[tag + "_ss"] = path_d2s(rows, ds)
        out[tag + "_xs"] = path_dxds(grid, rows, ds, bg.scheme)
    out["eps_term"] = eg.epsilon * path_d2x(grid, expf, bg.scheme)[1:-1] / m_int
    return out


def _identity_residual(fields: dict, kappa: float) -> float:
    a = fields["a"]
    hess_g = fields["g_ss"] - 2.0 * a * fields["g_xs"] + a * a * fields["g_xx"]
    q = hess_g - fields["eps_term"] - kappa * fields["a_x"] ** 2
    return float(np.max(np.abs(q)))


def curvature_levels(bg: Background, eg: EpsGeodesic) -> list:
    """Re-solve the same boundary problem at quarter and half resolution.

    Grid nodes nest under halving, so endpoint restriction is exact slicing.
    """
    n = bg.grid.n_points
    nt = eg.path.n_time
    if n % 4 != 0 or nt % 4 != 0:
        raise ValueError(f"refinement study needs n_points and n_time divisible by 4, got ({n}, {nt})")
    if nt // 4 < 8:
        raise ValueError(f"n_time // 4 must be >= 8, got {nt // 4}")
    e0 = eg.path.values[0]
    e1 = eg.path.values[-1]
    levels = []
    for f in (4, 2):
        coarse_grid = SpatialGrid(n // f)
        coarse_bg = make_background(coarse_grid, psi=bg.psi[::f], scheme=bg.scheme)
        problem = EpsGeodesicProblem(coarse_bg, e0[::f], e1[::f], eg.epsilon, nt // f)
        levels.append((coarse_bg, solve_eps_geodesic(problem)))
    levels.append((bg, eg))
    return levels


def eps_curvature_identity(
    bg: Background,
    eg: EpsGeodesic,
    kappa: float = CURVATURE_KAPPA,
    levels=None,
    tol: float = 1e-6,
) -> PropertyResult:
    """Inequality margin plus refinement-ratio certificate of the identity.

    (a) (Hess f - Ric)(v, v) - eps D2(e^-f)/m >= -tol * scale nodewise; the
        continuum value is (D1 a)^2 >= 0.
    (b) the identity residual with the frozen kappa must shrink by a factor
        in [3, 5] per refinement level, i.e. at second order.
    """
    if eg.residual_sup > 1e-10:
        raise NotASolution(
            f"curvature identity needs a converged geodesic; residual {eg.residual_sup:.3e}"
        )
    if levels is None:
        levels = curvature_levels(bg, eg)

    fields = _curvature_fields(bg, eg)
    a = fields["a"]
    hess_f = fields["f_ss"] - 2.0 * a * fields["f_xs"] + a * a * (fields["f_xx"] - bg.r[None, :])
    q_ineq = hess_f - fields["eps_term"]
    scale = _scale(
        fields["f_ss"],
        2.0 * a * fields["f_xs"],
        a * a * (fields["f_xx"] - bg.r[None, :]),
        fields["eps_term"],
    )
    margin_ineq = float(np.min(q_ineq)) + tol * scale

    residuals = []
    shapes = []
    for level_bg, level_eg in levels:
        residuals.append(_identity_residual(_curvature_fields(level_bg, level_eg), kappa))
        shapes.append([level_bg.grid.n_points, level_eg.path.n_time])
    ratios = [residuals[i] / residuals[i + 1] for i in range(len(residuals) - 1)]
    margin_ratio = min(min(r - 3.0 for r in ratios), min(5.0 - r for r in ratios))

    fit = {k: _identity_residual(fields, k) for k in KAPPA_FIT_SET}
    fitted = min(fit, key=fit.get)

    margin = min(margin_ineq, margin_ratio)
    return _result(
        "eps_curvature_identity",
        margin,
        {
            "kappa": kappa,
            "fitted_kappa": fitted,
            "fit_residuals": {f"{k:g}": v for k, v in fit.items()},
            "levels": shapes,
            "identity_residuals": residuals,
            "ratios": ratios,
            "min_inequality": float(np.min(q_ineq)),
            "scale": scale,
            "margin_inequality": margin_ineq,
            "margin_ratios": margin_ratio,
            "tol": tol,
        },
    )


def eps_geodesic_residual_c(bg: Background, eg: EpsGeodesic, tol: float = 1e-9) -> PropertyResult:
    """c = Phi_ss - Phi_xs^2 / m equals eps e^-f, and RH - c e_ss is singular.

    The second part is algebraically exact for the discrete stencils, so its
    residual sits at round-off for any path; the first part certifies the
    solved equation.
    """
    rh = reduced_hessian(bg, eg.path)
    c = rh.m_ss - rh.m_xs * rh.m_xs / rh.m_xx
    target = eg.epsilon * bg.w[None, :] / rh.m_xx
    res_c = float(np.max(np.abs(c - target)))
    det_shifted = rh.m_xx * (rh.m_ss - c) - rh.m_xs * rh.m_xs
    res_det = float(np.max(np.abs(det_shifted)))
    margin = tol - max(res_c, res_det)
    return _result(
        "eps_geodesic_residual_c",
        margin,
        {"residual_c": res_c, "residual_det": res_det, "tol": tol},
    )


# ---------------------------------------------------------------------------
# Mabuchi traces: almost-convexity and boundary continuity


def trace_convexity_margin(trace: FunctionalTrace, rel_tol: float) -> tuple[float, float]:
    """min interior second difference plus rel_tol * its own scale."""
    d2 = trace.second_differences[1:-1]
    scale = _scale(d2)
    return float(np.min(d2)) + rel_tol * scale, scale


def mabuchi_eps_A_almost_convex(
    bg: Background, traces, c_a_bound: float = 100.0, tol_rel: float = 1e-8
) -> PropertyResult:
    """Minimal hat-C per epsilon with M_{eps,A} + eps hat-C t(1-t) convex.

    The discrete second difference of t(1-t) is exactly -2, so the smallest
    admissible constant is max(0, max_i(-d2_i - tol)) / (2 eps).  Every
    hat-C must stay below the cap and must not grow as eps decreases.
    """
    traces = list(traces)
    if len(traces) < 3:
        raise ValueError("need at least 3 epsilon traces")
    a_values = {t.meta.get("A") for t in traces}
    if len(a_values) != 1 or None in a_values:
        raise ValueError(f"traces must share one truncation level, got {a_values}")
    eps = [float(t.meta["epsilon"]) for t in traces]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError(f"traces must come in strictly decreasing epsilon order: {eps}")
    c_hats = []
    for t, e in zip(traces, eps):
        d2 = t.second_differences[1:-1]
        tol = tol_rel * _scale(t.values)
        c_hats.append(max(0.0, float(np.max(-d2 - tol)) / (2.0 * e)))
    margin_bound = min(c_a_bound - c for c in c_hats)
    margin_mono = min((a - b + 1e-12 for a, b in zip(c_hats, c_hats[1:])), default=math.inf)
    margin = min(margin_bound, margin_mono)
    return _result(
        f"mabuchi_eps_A_almost_convex[A={traces[0].meta['A']:g}]",
        margin,
        {
            "A": traces[0].meta["A"],
            "epsilons": eps,
            "c_hats": c_hats,
            "c_a_bound": c_a_bound,
            "margin_bound": margin_bound,
            "margin_monotone": margin_mono,
        },
    )


def _boundary_gaps(values: np.ndarray, n_time: int) -> dict:
    window = max(2, n_time // 8)
    osc0 = float(np.ptp(values[1 : 2 + window]))
    osc1 = float(np.ptp(values[-2 - window : -1]))
    return {
        "gap0": float(abs(values[1] - values[0])),
        "gap1": float(abs(values[-2] - values[-1])),
        "bound0": 3.0 * osc0 + 5e-3,
        "bound1": 3.0 * osc1 + 5e-3,
    }


def mabuchi_convexity_and_continuity(
    bg: Background, path: PathField, family: FiberFamily, k_values=(1, 2, 4)
) -> PropertyResult:
    """Convexity of M along the path, boundary continuity, and the k-ladder.

    (i)   interior second differences of M >= -1e-3 * scale;
    (ii)  |M(t_1) - M(0)| and |M(t_{n-1}) - M(1)| <= 3 * interior
          oscillation + 5e-3;
    (iii) the same bounds read as one-sided limsup/liminf inequalities at
          both ends;
    (iv)  each M_k trace is convex at 1e-6 * scale and the sup distance to
          the M trace decreases in k.
    """
    trace = mabuchi(bg, path)
    margin_convex, scale_convex = trace_convexity_margin(trace, 1e-3)
    v = trace.values
    gaps = _boundary_gaps(v, path.n_time)
    margin_boundary = min(gaps["bound0"] - gaps["gap0"], gaps["bound1"] - gaps["gap1"])
    margin_limsup = min(v[0] + gaps["bound0"] - v[1], v[-1] + gaps["bound1"] - v[-2])
    margin_liminf = min(v[1] - v[0] + gaps["bound0"], v[-2] - v[-1] + gaps["bound1"])

    ks = [k for k in k_values if 1 <= k <= len(family.epsilons)]
    if not ks:
        raise FamilyMismatch(f"no usable k in {k_values} for {len(family.epsilons)} epsilons")
    k_margins = {}
    distances = []
    for k in ks:
        trace_k = mabuchi_k(bg, path, family, k)
        k_margins[k] = trace_convexity_margin(trace_k, 1e-6)[0]
        distances.append(float(np.max(np.abs(trace_k.values - v))))
    margin_k = min(k_margins.values())
    margin_dist = min(
        (a - b + 1e-12 for a, b in zip(distances, distances[1:])), default=math.inf
    )

    margin = min(margin_convex, margin_boundary, margin_limsup, margin_liminf, margin_k, margin_dist)
    return _result(
        "mabuchi_convexity_and_continuity",
        margin,
        {
            "margin_convexity": margin_convex,
            "scale": scale_convex,
            "boundary": gaps,
            "margin_boundary": margin_boundary,
            "margin_limsup": margin_limsup,
            "margin_liminf": margin_liminf,
            "k_values": ks,
            "k_margins": {str(k): m for k, m in k_margins.items()},
            "k_distances": distances,
            "margin_k_distance": margin_dist,
            "values": v,
        },
    )


def boundary_continuity_refinement(
    bg: Background, endpoint_0, endpoint_1, eps_sequence, n_times=(32, 64)
) -> PropertyResult:
    """Boundary gaps of the M trace must stay <= 5e-3 and shrink as n_time doubles."""
    n_times = tuple(int(n) for n in n_times)
    if len(n_times) < 2 or any(b != 2 * a for a, b in zip(n_times, n_times[1:])):
        raise ValueError(f"n_times must double at each step, got {n_times}")
    rows = []
    for nt in n_times:
        path = weak_geodesic(bg, endpoint_0, endpoint_1, eps_sequence, n_time=nt)
        trace = mabuchi(bg, path)
        gaps = _boundary_gaps(trace.values, nt)
        rows.append({"n_time": nt, "gap0": gaps["gap0"], "gap1": gaps["gap1"]})
    worst = max(max(r["gap0"], r["gap1"]) for r in rows)
    margin_level = 5e-3 - worst
    margin_shrink = min(
        min(a["gap0"] - b["gap0"], a["gap1"] - b["gap1"]) + 1e-12
        for a, b in zip(rows, rows[1:])
    )
    margin = min(margin_level, margin_shrink)
    return _result(
        "boundary_continuity_refinement",
        margin,
        {"rows": rows, "margin_level": margin_level, "margin_shrink": margin_shrink},
    )


def ddc_property(bg: Background, path: PathField, test_fn, tol: float = 1e-3) -> PropertyResult:
    """Wrap the energy pairing identity as a margin against tol."""
    report = ddc_energy_check(bg, path, test_fn)
    margin = tol - report.rel_discrepancy
    return _result("ddc_energy_identity", margin, {**report.to_dict(), "tol": tol})


def ddc_test_function(n_time: int) -> np.ndarray:
    """Smooth bump vanishing at the two boundary rows on each side."""
    if n_time < 8:
        raise ValueError(f"n_time must be >= 8, got {n_time}")
    tau = np.zeros(n_time + 1)
    i = np.arange(n_time + 1)
    inner = (i >= 2) & (i <= n_time - 2)
    t = (i[inner] - 2) / (n_time - 4)
    tau[inner] = np.sin(np.pi * t) ** 2
    return tau


# ---------------------------------------------------------------------------
# maximum of subharmonic potentials


def subharmonic_test_fields(grid: SpatialGrid) -> list:
    """Fixed nonnegative test family for the distributional pairing."""
    x = grid.nodes
    cos1 = np.cos(2.0 * np.pi * x)
    sin1 = np.sin(2.0 * np.pi * x)
    cos2 = np.cos(4.0 * np.pi * x)
    return [
        np.ones(grid.n_points),
        1.0 + cos1,
        1.0 - cos1,
        1.0 + sin1,
        1.0 - sin1,
        0.5 * (1.0 + cos1) ** 2,
        1.0 + 0.5 * cos2,
    ]


def max_subharmonic_lemma(
    bg: Background, u, v, tol: float = 1e-12, tol_pair: float = 1e-10
) -> PropertyResult:
    """max(u, v) stays subharmonic relative to the background.

    Hypotheses: m[v] >= -tol everywhere and m[u] >= -tol on {u > v - 1}
    (checked; SkippedHypothesis otherwise).  Conclusion, tested against the
    fixed family of nonnegative xi:

        sum max(u, v) D2(xi) h >= -int xi w dx - tol_pair.

    Nodewise D2 max(u, v) >= min(D2 u, D2 v) wherever the larger branch is
    active, so the bound holds exactly on the discrete circle.
    """
    u = u.values if isinstance(u, PeriodicField) else np.asarray(u, dtype=float)
    v = v.values if isinstance(v, PeriodicField) else np.asarray(v, dtype=float)
    m_v = metric_density(bg, v)
    if float(np.min(m_v)) < -tol:
        raise SkippedHypothesis(
            f"v is not background-subharmonic: min m[v] = {np.min(m_v):.3g}"
        )
    mask = u > v - 1.0
    m_u = metric_density(bg, u)
    if np.any(mask) and float(np.min(m_u[mask])) < -tol:
        raise SkippedHypothesis(
            "u is not background-subharmonic on {u > v - 1}: "
            f"min m[u] there = {np.min(m_u[mask]):.3g}"
        )
    g = np.maximum(u, v)
    h = bg.grid.spacing
    pairings = []
    lower = []
    for xi in subharmonic_test_fields(bg.grid):
        pairings.append(h * float(np.sum(g * bg.d2(xi))))
        lower.append(-bg.integrate(xi * bg.w))
    margin = min(p - lo for p, lo in zip(pairings, lower)) + tol_pair
    return _result(
        "max_subharmonic_lemma",
        margin,
        {"pairings": pairings, "lower_bounds": lower, "tol_pair": tol_pair},
    )


# ---------------------------------------------------------------------------
# wrapped fiber-family theorems (margins around the ma_fiber reports)


def family_bounds_property(family: FiberFamily) -> PropertyResult:
    """Uniform-bounds halves rule as a signed margin per tracked quantity."""
    report = check_bounds(family)
    margins = []
    for arr in (report.sup_phi, report.neg_eps_inf_phi, report.eps_d2_phi):
        split = (arr.size + 1) // 2
        first, second = arr[:split], arr[split:]
        if second.size:
            margins.append(1.5 * float(np.max(first)) - float(np.max(second)))
    margin = min(margins) if margins else 0.0
    return _result("family_uniform_bounds", margin, report.to_dict())


def density_convergence_property(
    family: FiberFamily, path: PathField, test_set=None
) -> PropertyResult:
    """Weak-convergence errors: final epsilon small and no growth over the sweep."""
    report = density_convergence(family, path, test_set)
    final = float(report.max_per_eps[-1])
    first = float(report.max_per_eps[0])
    margin = min(1e-2 - final, first - final)
    return _result("density_convergence", margin, report.to_dict())


def eps_vanishing_property(family: FiberFamily) -> PropertyResult:
    """sup_t ||eps phi||_inf decreasing and at least halved over the sweep."""
    report = eps_phi_vanishing(family)
    sups = report.sup_norms
    margin_dec = min(
        (a - b if not (a == 0.0 and b == 0.0) else math.inf for a, b in zip(sups, sups[1:])),
        default=math.inf,
    )
    margin = min(margin_dec, 0.5 * float(sups[0]) - float(sups[-1]))
    return _result("eps_phi_vanishing", margin, report.to_dict())


def mass_pairing_property(
    family: FiberFamily, path: PathField, tol: float = 1e-10
) -> PropertyResult:
    """|int e^phi w dx - eps int (theta + beta) dx| <= tol at every (eps, t).

    The sources are rebuilt from the smallest mollification scale exactly as
    the family solver does, so this re-derives the identity from scratch.
    """
    bg = family.bg
    spec = MollifierSpec(family.deltas[-1], "fiberwise")
    m_d = metric_density(bg, mollify_fiberwise(bg.grid, path.values, spec))
    sources = m_d + family.slacks[-1]
    theta_mass = bg.integrate(-bg.r)
    worst = 0.0
    for i, eps in enumerate(family.epsilons):
        for j in range(len(family.times)):
            lhs = bg.integrate(np.exp(family.solutions[i][j].phi.values) * bg.w)
            rhs = eps * theta_mass + bg.integrate(sources[j])
            worst = max(worst, abs(lhs - rhs))
    margin = tol - worst
    return _result("mass_pairing", margin, {"worst_gap": worst, "tol": tol})


# ---------------------------------------------------------------------------
# measured-only reports (open problems: no pass/fail attached)


def omega_mask_report(bg: Background, eg: EpsGeodesic, spec: TruncationSpec) -> dict:
    """Size of {f >= e^(chi - A)} and the two-sided density ratio, reported raw."""
    m_rows = metric_density(bg, eg.path.values)
    f = m_rows / bg.w[None, :]
    floor = np.exp(_resolve_chi(bg, spec) - spec.A)[None, :]
    mask = f >= floor
    fractions = mask.mean(axis=1)
    mu_measures = np.array([bg.integrate_mu(row.astype(float)) for row in mask])
    return {
        "A": float(spec.A),
        "epsilon": float(eg.epsilon),
        "node_fraction_min": float(np.min(fractions)),
        "node_fraction_max": float(np.max(fractions)),
        "mu_measure_min": float(np.min(mu_measures)),
        "mu_measure_max": float(np.max(mu_measures)),
        "ratio_min": float(np.min(f)),
        "ratio_max": float(np.max(f)),
    }


def density_limit_report(family: FiberFamily, path: PathField) -> dict:
    """Strong-convergence gaps |e^phi w - m[path]| per epsilon, reported raw."""
    bg = family.bg
    m_rows = metric_density(bg, path.values)
    sup_gaps = []
    l1_gaps = []
    for i in range(len(family.epsilons)):
        worst = 0.0
        mean = 0.0
        for j in range(len(family.times)):
            gap = np.abs(np.exp(family.solutions[i][j].phi.values) * bg.w - m_rows[j])
            worst = max(worst, float(np.max(gap)))
            mean = max(mean, bg.integrate(gap))
        sup_gaps.append(worst)
        l1_gaps.append(mean)
    return {
        "epsilons": list(family.epsilons),
        "sup_gaps": sup_gaps,
        "l1_gaps": l1_gaps,
    }


# ---------------------------------------------------------------------------
# negative controls: constructed inputs every check must reject


def _tampered_family(family: FiberFamily, bump_amplitude: float = 0.5) -> FiberFamily:
    """Copy of the family with a strongly t-concave bump written into phi."""
    grid = family.bg.grid
    x = grid.nodes
    times = np.asarray(family.times, dtype=float)
    tampered = []
    for row in family.solutions:
        new_row = []
        for t, sol in zip(times, row):
            bump = bump_amplitude * math.sin(math.pi * t) * np.cos(2.0 * np.pi * x)
            new_row.append(
                FiberSolution(
                    phi=PeriodicField(grid, sol.phi.values + bump),
                    residual_sup=sol.residual_sup,
                    newton_iters=sol.newton_iters,
                    min_metric_eigen=sol.min_metric_eigen,
                )
            )
        tampered.append(new_row)
    return FiberFamily(
        bg=family.bg,
        epsilons=family.epsilons,
        times=family.times,
        deltas=family.deltas,
        solutions=tampered,
        cauchy_increments=family.cauchy_increments,
        lipschitz_constants=family.lipschitz_constants,
        equicontinuity_constant=family.equicontinuity_constant,
        slacks=family.slacks,
        bound_samples=family.bound_samples,
    )


def _scaled_family(family: FiberFamily) -> FiberFamily:
    """Copy with phi / eps^2: uniform bounds and vanishing must both fail."""
    scaled = []
    for eps, row in zip(family.epsilons, family.solutions):
        factor = 1.0 / (eps * eps)
        scaled.append(
            [
                FiberSolution(
                    phi=PeriodicField(family.bg.grid, sol.phi.values * factor),
                    residual_sup=sol.residual_sup,
                    newton_iters=sol.newton_iters,
                    min_metric_eigen=sol.min_metric_eigen,
                )
                for sol in row
            ]
        )
    return FiberFamily(
        bg=family.bg,
        epsilons=family.epsilons,
        times=family.times,
        deltas=family.deltas,
        solutions=scaled,
        cauchy_increments=family.cauchy_increments,
        lipschitz_constants=family.lipschitz_constants,
        equicontinuity_constant=family.equicontinuity_constant,
        slacks=family.slacks,
        bound_samples=family.bound_samples,
    )


def control_entropy(bg: Background) -> PropertyResult:
    seq = mollified_sequence(bg)
    return _as_control("control:entropy_semicontinuity", entropy_semicontinuity(bg, seq))


def control_truncated(bg: Background) -> PropertyResult:
    seq = mollified_sequence(bg)
    raw = truncated_semicontinuity(bg, seq, TruncationSpec(20.0))
    return _as_control("control:truncated_semicontinuity", raw)


def control_convexity_k(bg: Background, path: PathField, family: FiberFamily) -> PropertyResult:
    k = min(2, len(family.epsilons))
    raw = convexity_inequality_k(bg, path, _tampered_family(family), k)
    return _as_control("control:convexity_inequality_k", raw)


def control_curvature(bg: Background, eg: EpsGeodesic, levels=None) -> PropertyResult:
    # a wrong constant leaves a non-vanishing residual: ratios collapse to 1
    raw = eps_curvature_identity(bg, eg, kappa=4.0, levels=levels)
    return _as_control("control:eps_curvature_identity", raw)


def control_residual_c(bg: Background, eg: EpsGeodesic) -> PropertyResult:
    rng = np.random.default_rng(0)
    noisy = eg.path.values + 1e-3 * rng.standard_normal(eg.path.values.shape)
    fake = EpsGeodesic(
        path=PathField(bg.grid, noisy),
        residual_sup=eg.residual_sup,
        positivity_margin=eg.positivity_margin,
        newton_iters=eg.newton_iters,
        epsilon=eg.epsilon,
    )
    return _as_control("control:eps_geodesic_residual_c", eps_geodesic_residual_c(bg, fake))


def control_family_bounds(family: FiberFamily) -> PropertyResult:
    return _as_control("control:family_uniform_bounds", family_bounds_property(_scaled_family(family)))


def control_eps_vanishing(family: FiberFamily) -> PropertyResult:
    return _as_control("control:eps_phi_vanishing", eps_vanishing_property(_scaled_family(family)))


def control_density_convergence(family: FiberFamily, path: PathField) -> PropertyResult:
    """The sweep cannot converge to the densities of a different path."""
    grid = family.bg.grid
    shift = 0.05 / (2.0 * np.pi) ** 2 * np.cos(2.0 * np.pi * grid.nodes)
    wrong = PathField(grid, path.values + shift[None, :])
    raw = density_convergence_property(family, wrong)
    return _as_control("control:density_convergence", raw)


def control_eps_A(bg: Background) -> PropertyResult:
    times = np.linspace(0.0, 1.0, 17)
    ds = times[1] - times[0]
    traces = []
    for i, eps in enumerate((0.1, 0.05, 0.025)):
        values = (1.0 + i) * times * (1.0 - times)  # concave, worsening as eps drops
        traces.append(
            FunctionalTrace(
                times=times,
                values=values,
                second_differences=second_differences(values, ds),
                meta={"name": "mabuchi_eps_A", "epsilon": eps, "A": 5.0},
            )
        )
    raw = mabuchi_eps_A_almost_convex(bg, traces, c_a_bound=100.0)
    return _as_control("control:mabuchi_eps_A_almost_convex", raw)


def control_mabuchi_convexity(bg: Background, path: PathField, family: FiberFamily) -> PropertyResult:
    dent = 0.5 / (2.0 * np.pi) ** 2 * np.cos(2.0 * np.pi * bg.grid.nodes)
    s = path.times[:, None]
    dented = PathField(bg.grid, path.values + np.sin(np.pi * s) * dent[None, :])
    raw = mabuchi_convexity_and_continuity(bg, dented, family)
    return _as_control("control:mabuchi_convexity_and_continuity", raw)


def control_ddc(bg: Background, n_time: int = 64) -> PropertyResult:
    rng = np.random.default_rng(1)
    rough = 0.01 * rng.standard_normal((n_time + 1, bg.grid.n_points))
    raw = ddc_property(bg, PathField(bg.grid, rough), ddc_test_function(n_time))
    return _as_control("control:ddc_energy_identity", raw)


def control_subharmonic(bg: Background) -> PropertyResult:
    u = -0.2 * np.cos(2.0 * np.pi * bg.grid.nodes)  # m[u] < 0 on part of {u > v - 1}
    v = np.zeros(bg.grid.n_points)
    try:
        max_subharmonic_lemma(bg, u, v)
    except SkippedHypothesis as exc:
        return _result(
            "control:max_subharmonic_lemma",
            1.0,
            {"control": True, "skipped": str(exc)},
        )
    return _result(
        "control:max_subharmonic_lemma",
        -1.0,
        {"control": True, "skipped": None},
    )


# ---------------------------------------------------------------------------
# suite orchestration


@dataclass(eq=False)
class SuiteData:
    """Shared solved objects for the check suites, built lazily and cached.

    Defaults reproduce the canonical run: flat background, endpoints 0 and
    the admissible cosine, the standard epsilon and delta ladders.
    """

    bg: Background
    endpoint_0: np.ndarray
    endpoint_1: np.ndarray
    n_time: int = 16
    weak_epsilons: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    # half-decade ladder 1e-1 .. 1e-3: the uniform bounds need the sweep to
    # reach the saturated regime in its first half
    family_epsilons: tuple = (1e-1, 10.0**-1.5, 1e-2, 10.0**-2.5, 1e-3)
    family_deltas: tuple = (0.1, 0.05, 0.025)
    family_tol: float = 1e-12
    a_values: tuple = (2.0, 5.0, 10.0, 20.0)
    k_values: tuple = (1, 2, 4)
    seeds: tuple = tuple(range(20))
    c_a_bound: float = 100.0
    curvature_epsilon: float = 1e-2
    curvature_n_time: int = 64
    curved_psi_amplitude: float = 0.002
    eps_a_epsilons: tuple = (1e-1, 1e-2, 1e-3)
    eps_a_values: tuple = (5.0, 10.0)
    boundary_n_times: tuple = (32, 64)

    def __post_init__(self):
        self.endpoint_0 = np.asarray(self.endpoint_0, dtype=float)
        self.endpoint_1 = np.asarray(self.endpoint_1, dtype=float)

    @cached_property
    def weak_path(self) -> PathField:
        return weak_geodesic(
            self.bg, self.endpoint_0, self.endpoint_1, self.weak_epsilons, n_time=self.n_time
        )

    @cached_property
    def weak_path_fine(self) -> PathField:
        return weak_geodesic(
            self.bg,
            self.endpoint_0,
            self.endpoint_1,
            self.weak_epsilons,
            n_time=self.boundary_n_times[-1],
        )

    @cached_property
    def family(self) -> FiberFamily:
        return solve_family(
            self.bg, self.weak_path, self.family_epsilons, self.family_deltas, tol=self.family_tol
        )

    @cached_property
    def eps_geodesic(self) -> EpsGeodesic:
        problem = EpsGeodesicProblem(
            self.bg,
            self.endpoint_0,
            self.endpoint_1,
            self.curvature_epsilon,
            self.curvature_n_time,
        )
        return solve_eps_geodesic(problem)

    @cached_property
    def levels(self) -> list:
        return curvature_levels(self.bg, self.eps_geodesic)

    @cached_property
    def curved_bg(self) -> Background:
        psi = fourier_field(self.bg.grid, [(1, self.curved_psi_amplitude, 0.0)])
        return make_background(self.bg.grid, psi=psi, scheme=self.bg.scheme)

    @cached_property
    def curved_geodesics(self) -> list:
        out = []
        prev = None
        for eps in self.eps_a_epsilons:
            problem = EpsGeodesicProblem(
                self.curved_bg, self.endpoint_0, self.endpoint_1, eps, self.n_time
            )
            sol = solve_eps_geodesic(problem, path0=prev)
            out.append(sol)
            prev = sol.path.values
        return out

    def eps_a_traces(self, a_value: float) -> list:
        spec = TruncationSpec(float(a_value))
        return [mabuchi_eps_A(self.curved_bg, eg, spec) for eg in self.curved_geodesics]


def suite_entropy(data: SuiteData) -> list:
    results = []
    seq0 = None
    for seed in data.seeds:
        seq = random_density_sequence(data.bg, seed)
        if seq0 is None:
            seq0 = seq
        res = entropy_semicontinuity(data.bg, seq)
        results.append(
            _result(f"entropy_semicontinuity[seed={seed}]", res.margin, res.details)
        )
    results.append(truncated_semicontinuity_sweep(data.bg, seq0, data.a_values))
    results.append(delta_a_closed_form(data.bg, data.a_values))
    results.append(control_entropy(data.bg))
    results.append(control_truncated(data.bg))
    return results


def suite_convexity(data: SuiteData) -> list:
    results = []
    for k in data.k_values:
        if k <= len(data.family.epsilons):
            results.append(convexity_inequality_k(data.bg, data.weak_path, data.family, k))
    results.append(mabuchi_convexity_and_continuity(data.bg, data.weak_path, data.family, data.k_values))
    results.append(
        boundary_continuity_refinement(
            data.bg, data.endpoint_0, data.endpoint_1, data.weak_epsilons, data.boundary_n_times
        )
    )
    for a in data.eps_a_values:
        results.append(
            mabuchi_eps_A_almost_convex(data.curved_bg, data.eps_a_traces(a), data.c_a_bound)
        )
    results.append(
        ddc_property(
            data.bg, data.eps_geodesic.path, ddc_test_function(data.eps_geodesic.path.n_time)
        )
    )
    results.append(control_convexity_k(data.bg, data.weak_path, data.family))
    results.append(control_mabuchi_convexity(data.bg, data.weak_path, data.family))
    results.append(control_eps_A(data.bg))
    results.append(control_ddc(data.bg))
    return results


def suite_curvature(data: SuiteData) -> list:
    return [
        eps_curvature_identity(data.bg, data.eps_geodesic, levels=data.levels),
        eps_geodesic_residual_c(data.bg, data.eps_geodesic),
        control_curvature(data.bg, data.eps_geodesic, levels=data.levels),
        control_residual_c(data.bg, data.eps_geodesic),
    ]


def suite_bounds(data: SuiteData) -> list:
    u = 0.01 * np.cos(2.0 * np.pi * data.bg.grid.nodes) / (2.0 * np.pi) ** 2
    v = 0.01 * np.sin(2.0 * np.pi * data.bg.grid.nodes) / (2.0 * np.pi) ** 2 + 0.003
    return [
        family_bounds_property(data.family),
        density_convergence_property(data.family, data.weak_path),
        eps_vanishing_property(data.family),
        mass_pairing_property(data.family, data.weak_path),
        max_subharmonic_lemma(data.bg, u, v),
        control_family_bounds(data.family),
        control_eps_vanishing(data.family),
        control_density_convergence(data.family, data.weak_path),
        control_subharmonic(data.bg),
    ]


SUITES = {
    "entropy": suite_entropy,
    "convexity": suite_convexity,
    "curvature": suite_curvature,
    "bounds": suite_bounds,
}


def run_suite(data: SuiteData, suite: str = "all") -> list:
    """Run one named suite (or all of them) and return the PropertyResults."""
    if suite == "all":
        results = []
        for name in ("entropy", "convexity", "curvature", "bounds"):
            results.extend(SUITES[name](data))
        return results
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {sorted(SUITES)} or 'all'")
    return SUITES[suite](data)

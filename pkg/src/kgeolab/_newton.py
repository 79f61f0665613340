"""Shared damped Newton driver.

One loop serves every nonlinear solve in the package: full steps with
residual-decrease line search by halving, an optional acceptance predicate
that keeps iterates inside a positivity cone, and sup-norm convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, PositivityLoss


@dataclass
class NewtonRecord:
    iterations: int = 0
    residual_sups: list = field(default_factory=list)
    halvings: int = 0


def damped_newton(
    x0,
    residual,
    newton_step,
    accept=None,
    tol: float = 1e-11,
    max_iter: int = 200,
    max_halvings: int = 30,
):
    """Minimize ||residual(x)||_sup below tol by damped Newton steps.

    ``newton_step(x, r)`` must return the full Newton update (the solution of
    J(x) step = -r).  ``accept(x)`` gates trial iterates; when it rejects
    every damping level, PositivityLoss is raised.  Accepted steps must
    strictly decrease the residual sup norm, otherwise the step is halved;
    running out of halvings or iterations raises NoConvergence.
    """
    x = np.array(x0, dtype=float)
    if accept is not None and not accept(x):
        raise PositivityLoss("initial iterate violates the acceptance predicate")
    r = residual(x)
    r_sup = float(np.max(np.abs(r)))
    rec = NewtonRecord(residual_sups=[r_sup])
    while r_sup > tol:
        if rec.iterations >= max_iter:
            raise NoConvergence(
                f"residual {r_sup:.3e} > {tol:g} after {max_iter} iterations",
                residual_sup=r_sup,
                iterations=rec.iterations,
            )
        step = newton_step(x, r)
        t = 1.0
        accepted = False
        cone_ok = False
        for _ in range(max_halvings + 1):
            trial = x + t * step
            if accept is None or accept(trial):
                cone_ok = True
                trial_r = residual(trial)
                trial_sup = float(np.max(np.abs(trial_r)))
                if trial_sup < r_sup:
                    x, r, r_sup = trial, trial_r, trial_sup
                    accepted = True
                    break
            t *= 0.5
            rec.halvings += 1
        if not accepted:
            if not cone_ok:
                raise PositivityLoss(
                    f"no damping level kept the iterate admissible "
                    f"(residual {r_sup:.3e})"
                )
            raise NoConvergence(
                f"damping stalled at residual {r_sup:.3e}",
                residual_sup=r_sup,
                iterations=rec.iterations,
            )
        rec.iterations += 1
        rec.residual_sups.append(r_sup)
    return x, rec

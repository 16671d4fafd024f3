"""Deterministic flow integration in the m clock.

The noising flow obeys ``dx/dm = -(x + s(x, m))`` where s is the score of
the current marginal.  Forward integration carries data toward the
terminal Gaussian; reverse integration runs the same stepper with negated
increments.  The map is one-to-one, so a forward-then-reverse round trip
recovers the start up to discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError
from .schedule import Schedule
from .score import ScoreProvider

METHODS = ("euler", "heun")


@dataclass
class Trajectory:
    """Ordered (m, batch) knots of one integration run."""

    knots: list[tuple[float, np.ndarray]]
    direction: str  # "forward" | "reverse"

    @property
    def endpoint(self) -> np.ndarray:
        return self.knots[-1][1]

    @property
    def m_values(self) -> np.ndarray:
        return np.array([m for m, _ in self.knots])


def _checked_score(provider, X, m, step):
    s = provider.evaluate(X, m)
    if not np.all(np.isfinite(s)):
        bad = np.unique(np.argwhere(~np.isfinite(s))[:, 0])
        raise IntegrationError(
            f"non-finite score at step {step} (m={m:.6g}) for rows {bad[:8].tolist()}",
            step=step, indices=bad.tolist(),
        )
    return s


def _step(X, m, dm, provider, method, step_index):
    """One (possibly signed) integration step from clock m by dm."""
    f0 = -(X + _checked_score(provider, X, m, step_index))
    if method == "euler":
        return X + dm * f0
    x_pred = X + dm * f0
    f1 = -(x_pred + _checked_score(provider, x_pred, m + dm, step_index))
    return X + 0.5 * dm * (f0 + f1)


def forward_step(X, m, dm, provider: ScoreProvider, method: str = "euler"):
    """Advance a batch one step forward (dm > 0) from clock m."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if dm <= 0:
        raise ValueError("forward step needs dm > 0")
    if m <= 0:
        raise ValueError("forward step needs m > 0")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return _step(X, float(m), float(dm), provider, method, step_index=0)


def integrate_forward(X0, schedule: Schedule, provider: ScoreProvider,
                      method: str = "euler", record: bool = False,
                      callback=None) -> Trajectory:
    """Run the full grid from m_min up to m_max.

    With ``record`` every knot is kept (T x batch x D memory); otherwise
    only the first and last.  ``callback(k, m, X)`` fires after each step.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    grid = schedule.step_grid()
    X = np.atleast_2d(np.asarray(X0, dtype=np.float64)).copy()
    knots = [(float(grid.m[0]), X.copy())]
    for k in range(grid.num_steps):
        X = _step(X, float(grid.m[k]), float(grid.dm[k]), provider, method, k)
        if record:
            knots.append((float(grid.m[k + 1]), X.copy()))
        if callback is not None:
            callback(k, float(grid.m[k + 1]), X)
    if not record:
        knots.append((float(grid.m[-1]), X))
    return Trajectory(knots=knots, direction="forward")


def integrate_reverse(XT, schedule: Schedule, provider: ScoreProvider,
                      method: str = "euler", record: bool = False,
                      callback=None) -> Trajectory:
    """Run the grid from m_max down to m_min (same stepper, negated dm)."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    grid = schedule.step_grid()
    X = np.atleast_2d(np.asarray(XT, dtype=np.float64)).copy()
    knots = [(float(grid.m[-1]), X.copy())]
    for k in range(grid.num_steps - 1, -1, -1):
        X = _step(X, float(grid.m[k + 1]), -float(grid.dm[k]), provider, method, k)
        if record:
            knots.append((float(grid.m[k]), X.copy()))
        if callback is not None:
            callback(k, float(grid.m[k]), X)
    if not record:
        knots.append((float(grid.m[0]), X))
    return Trajectory(knots=knots, direction="reverse")

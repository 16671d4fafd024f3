"""Volume growth of a small orthonormal frame transported by the flow.

Around a target point we place N orthonormal axes scaled to a small
radius, advance frame and center together through the noising flow, and
accumulate the log of the per-axis stretch at every step.  After each
step the frame is re-orthonormalized (largest stretch first) and reset to
its original radius, so the running total is the log volume expansion
rate of the target's neighborhood — a Lyapunov-style product.  Samples
that are easy for the generative process to reproduce expand faster.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import IntegrationError
from .ode import METHODS, _step
from .schedule import Schedule
from .score import ScoreProvider

log = logging.getLogger(__name__)

THREADS_ENV = "MEMOMETER_THREADS"


@dataclass(frozen=True)
class GrowthConfig:
    """Frame-transport parameters.

    ``num_axes`` is clamped nowhere: it must not exceed the data
    dimension.  ``steps`` limits the run to the first T' grid steps
    (1 gives the cheap single-step variant); None means the full grid.
    """

    num_axes: int = 100
    sphere_radius: float = 0.05
    steps: int | None = None
    seed: int = 0
    method: str = "euler"

    def __post_init__(self):
        if self.num_axes < 1:
            raise ValueError("num_axes must be >= 1")
        if self.sphere_radius <= 0:
            raise ValueError("sphere_radius must be > 0")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")


@dataclass
class GrowthSeries:
    """Cumulative log volume growth for one target.

    ``log_l[k]`` is the total after step k+1; ``per_step`` holds the
    individual increments, so log_l is their prefix sum.
    """

    target_id: str
    log_l: np.ndarray
    per_step: np.ndarray
    gs_replacements: int = 0

    @property
    def final(self) -> float:
        return float(self.log_l[-1])

    def at_step(self, step: int) -> float:
        """Cumulative value after 1-based step number ``step``."""
        if not 1 <= step <= len(self.log_l):
            raise ValueError(f"step must be in [1, {len(self.log_l)}]")
        return float(self.log_l[step - 1])


def gram_schmidt(V, rng=None, tol: float = 1e-10):
    """Orthonormalize the rows of V in order (classical GS, twice through).

    Row k of the result spans the same leading subspace as rows 1..k of
    the input.  A row whose residual norm falls below ``tol`` times its
    input norm is numerically dependent; it is replaced with a fresh
    random direction orthogonalized against the earlier rows.  Returns
    ``(Q, replacements)``.
    """
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    n, d = V.shape
    if n > d:
        raise ValueError("cannot orthonormalize more rows than dimensions")
    Q = np.empty_like(V)
    replacements = 0
    for i in range(n):
        q = V[i].copy()
        ref = max(np.linalg.norm(q), np.finfo(np.float64).tiny)
        for _ in range(2):
            if i:
                q -= Q[:i].T @ (Q[:i] @ q)
        norm = np.linalg.norm(q)
        if norm <= tol * ref:
            if rng is None:
                rng = np.random.default_rng(0)
            replacements += 1
            while True:
                q = rng.standard_normal(d)
                for _ in range(2):
                    if i:
                        q -= Q[:i].T @ (Q[:i] @ q)
                norm = np.linalg.norm(q)
                if norm > tol * np.sqrt(d):
                    break
        Q[i] = q / norm
    return Q, replacements


def derive_seed(seed: int, target_id: str) -> int:
    """Stable per-target seed, independent of batch composition and order."""
    digest = hashlib.blake2b(
        f"{seed}:{target_id}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def volume_growth(x0, provider: ScoreProvider, schedule: Schedule,
                  cfg: GrowthConfig, target_id: str = "",
                  init_axes=None) -> GrowthSeries:
    """Transport an N-axis frame around ``x0`` and accumulate log stretches.

    Per step: advance center and frame points together through the flow,
    add ``sum_k log(after_k / before_k)`` of center-to-axis distances to
    the running total, sort axes by descending stretched distance,
    re-orthonormalize the offsets and reset them to the sphere radius.

    ``init_axes`` overrides the random initial directions (used for
    equivariance experiments); otherwise they are drawn from the config
    seed.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    dim = x0.size
    if cfg.num_axes > dim:
        raise ValueError(f"num_axes={cfg.num_axes} exceeds data dimension {dim}")
    grid = schedule.step_grid()
    steps = grid.num_steps if cfg.steps is None else cfg.steps
    if steps > grid.num_steps:
        raise ValueError(f"steps={steps} exceeds the schedule's {grid.num_steps}")
    rng = np.random.default_rng(cfg.seed)
    sigma = cfg.sphere_radius

    if init_axes is None:
        init_axes = rng.standard_normal((cfg.num_axes, dim))
    else:
        init_axes = np.asarray(init_axes, dtype=np.float64)
        if init_axes.shape != (cfg.num_axes, dim):
            raise ValueError("init_axes must be num_axes x dim")
    frame, replaced = gram_schmidt(init_axes, rng=rng)
    center = x0.copy()
    points = center + sigma * frame

    per_step = np.empty(steps)
    total = 0.0
    for k in range(steps):
        before = np.linalg.norm(points - center, axis=1)
        bundle = np.vstack([center[None, :], points])
        try:
            advanced = _step(bundle, float(grid.m[k]), float(grid.dm[k]),
                             provider, cfg.method, k)
        except IntegrationError:
            raise
        if not np.all(np.isfinite(advanced)):
            raise IntegrationError(
                f"non-finite frame position at step {k}", step=k,
                indices=np.unique(np.argwhere(~np.isfinite(advanced))[:, 0]).tolist(),
            )
        center = advanced[0]
        points = advanced[1:]
        after = np.linalg.norm(points - center, axis=1)
        increment = float(np.sum(np.log(after) - np.log(before)))
        total += increment
        per_step[k] = increment
        # largest stretch claims the leading orthogonalization slot;
        # ties resolve by axis index
        order = np.argsort(-after, kind="stable")
        frame, rep = gram_schmidt(points[order] - center, rng=rng)
        replaced += rep
        points = center + sigma * frame
    if replaced:
        log.debug("frame %s: %d degenerate axes replaced", target_id or "<anon>", replaced)
    return GrowthSeries(
        target_id=target_id,
        log_l=np.cumsum(per_step),
        per_step=per_step,
        gs_replacements=replaced,
    )


def cheap_rate(x0, provider: ScoreProvider, schedule: Schedule,
               sigma: float = 0.05, seed: int = 0, method: str = "euler") -> float:
    """Single-axis, single-step stretch rate — the cheap screening variant."""
    cfg = GrowthConfig(num_axes=1, sphere_radius=sigma, steps=1, seed=seed, method=method)
    return float(volume_growth(x0, provider, schedule, cfg).per_step[0])


class _SerializedProvider:
    """Funnels a non-concurrent provider through a lock."""

    concurrent_ok = True

    def __init__(self, inner):
        self._inner = inner
        self._lock = threading.Lock()

    def evaluate(self, points, m):
        with self._lock:
            return self._inner.evaluate(points, m)


def _worker_count() -> int:
    env = os.environ.get(THREADS_ENV, "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring malformed %s=%r", THREADS_ENV, env)
    return 1


def growth_report(ds: Dataset, provider: ScoreProvider, schedule: Schedule,
                  cfg: GrowthConfig):
    """Map volume_growth over every sample of a dataset.

    Each sample's randomness comes from ``derive_seed(cfg.seed, id)``, so
    results are independent of dataset order and batch composition.
    Per-sample failures are collected, not fatal.  Returns
    ``(series_list, failures)`` with failures as (id, message) pairs.
    """
    workers = _worker_count()
    if workers > 1 and not getattr(provider, "concurrent_ok", True):
        provider = _SerializedProvider(provider)

    def one(i):
        sample_id = ds.ids[i]
        sample_cfg = dataclasses.replace(cfg, seed=derive_seed(cfg.seed, sample_id))
        return volume_growth(ds.samples[i].astype(np.float64), provider,
                             schedule, sample_cfg, target_id=sample_id)

    results, failures = [], []
    if workers == 1:
        outcomes = []
        for i in range(ds.n):
            try:
                outcomes.append(one(i))
            except (IntegrationError, ValueError) as exc:
                outcomes.append((ds.ids[i], str(exc)))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(one, i) for i in range(ds.n)]
            outcomes = []
            for i, fut in enumerate(futures):
                try:
                    outcomes.append(fut.result())
                except (IntegrationError, ValueError) as exc:
                    outcomes.append((ds.ids[i], str(exc)))
    for item in outcomes:
        if isinstance(item, GrowthSeries):
            results.append(item)
        else:
            failures.append(item)
            log.warning("growth failed for %s: %s", item[0], item[1])
    return results, failures

"""Independent ground truth: Monte-Carlo generation frequencies, 2-D toy
dynamics with disjointness verdicts, and the single-sample closed form.

These are the brute-force counterparts the growth measurements are judged
against: if a sample's neighborhood expands faster, reverse integration
of random terminal noise should land on it more often.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import IntegrationError
from .ode import _step, integrate_forward
from .schedule import Schedule, v_of_m
from .score import ExactMixtureScore, ScoreProvider


@dataclass
class OracleReport:
    """Empirical generation frequencies from reverse-integrated noise draws."""

    frequencies: dict[str, float]
    std_errors: dict[str, float]
    num_draws: int
    unassigned: float
    roundtrip_errors: dict[str, float] = field(default_factory=dict)
    failed_draws: int = 0

    def ordered(self, ids) -> np.ndarray:
        return np.array([self.frequencies[i] for i in ids])


def mc_frequencies(ds: Dataset, provider: ScoreProvider, schedule: Schedule,
                   num_draws: int, seed: int = 0, assign: str = "nearest",
                   radius: float | None = None, method: str = "euler",
                   roundtrip: bool = True, chunk: int = 65536) -> OracleReport:
    """Reverse-integrate standard-Gaussian draws and tally where they land.

    Draws start at the schedule's terminal clock and integrate down to
    the data-side clock.  ``nearest`` assigns every endpoint to its
    closest training sample; ``radius`` only assigns within ``radius``
    and counts the rest as unassigned.  Draws whose integration produces
    non-finite values are counted as unassigned with a diagnostic tally.

    With ``roundtrip`` the endpoints are pushed forward again and
    compared against the original draws (summary relative errors).
    """
    if num_draws < 1:
        raise ValueError("num_draws must be >= 1")
    if assign not in ("nearest", "radius"):
        raise ValueError("assign must be 'nearest' or 'radius'")
    if assign == "radius" and (radius is None or radius <= 0):
        raise ValueError("radius mode needs a positive radius")
    grid = schedule.step_grid()
    rng = np.random.default_rng(seed)
    Y = ds.samples.astype(np.float64)

    counts = np.zeros(ds.n, dtype=np.int64)
    failed = 0
    out_of_radius = 0
    rt_rel = []

    for start in range(0, num_draws, chunk):
        n_block = min(chunk, num_draws - start)
        draws = rng.standard_normal((n_block, ds.dim))
        X = draws.copy()
        try:
            for k in range(grid.num_steps - 1, -1, -1):
                X = _step(X, float(grid.m[k + 1]), -float(grid.dm[k]),
                          provider, method, k)
            bad = ~np.all(np.isfinite(X), axis=1)
        except IntegrationError:
            # isolate failing rows by flagging non-finites after a raw pass
            bad = np.ones(n_block, dtype=bool)
            X = np.where(np.isfinite(X), X, np.inf)
        failed += int(bad.sum())
        good = ~bad
        if good.any():
            Xg = X[good]
            d = np.linalg.norm(Xg[:, None, :] - Y[None, :, :], axis=2)
            nearest = np.argmin(d, axis=1)
            if assign == "radius":
                within = d[np.arange(len(Xg)), nearest] <= radius
                out_of_radius += int((~within).sum())
                nearest = nearest[within]
            counts += np.bincount(nearest, minlength=ds.n)
            if roundtrip:
                Xf = X[good].copy()
                for k in range(grid.num_steps):
                    Xf = _step(Xf, float(grid.m[k]), float(grid.dm[k]),
                               provider, method, k)
                denom = np.maximum(np.linalg.norm(draws[good], axis=1), 1e-30)
                rt_rel.append(np.linalg.norm(Xf - draws[good], axis=1) / denom)

    freq = counts / num_draws
    se = np.sqrt(freq * (1.0 - freq) / num_draws)
    unassigned = (failed + out_of_radius) / num_draws
    report = OracleReport(
        frequencies=dict(zip(ds.ids, freq.tolist())),
        std_errors=dict(zip(ds.ids, se.tolist())),
        num_draws=num_draws,
        unassigned=float(unassigned),
        failed_draws=failed,
    )
    if rt_rel:
        rel = np.concatenate(rt_rel)
        report.roundtrip_errors = {
            "mean": float(rel.mean()),
            "median": float(np.median(rel)),
            "max": float(rel.max()),
        }
    return report


# ---------------------------------------------------------------------------
# 2-D toy dynamics: rings of probe points around unit-circle samples.
# ---------------------------------------------------------------------------

@dataclass
class Toy2DResult:
    samples: np.ndarray                 # (n, 2) sample locations
    ring_points: int
    knots: list[tuple[int, float, np.ndarray]]  # (step, m, (n*ring, 2) points)
    final: np.ndarray                   # (n, ring, 2) points at the last knot
    disjoint: bool
    min_hull_gap: float

    def rings_at(self, index: int) -> np.ndarray:
        step, m, pts = self.knots[index]
        return pts.reshape(len(self.samples), self.ring_points, 2)


def toy2d(num_samples: int, schedule: Schedule, ring_points: int = 64,
          sigma_ring: float = 0.05, method: str = "euler",
          record_stride: int = 50) -> Toy2DResult:
    """Transport rings around 2/3/5 unit-circle samples and check that the
    final rings occupy pairwise disjoint regions (empty hull intersections).
    """
    if num_samples not in (2, 3, 5):
        raise ValueError("num_samples must be 2, 3 or 5")
    if ring_points < 3:
        raise ValueError("ring_points must be >= 3")
    angles = 2.0 * np.pi * np.arange(num_samples) / num_samples
    samples = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # snap trig residue (sin(pi) ~ 1e-16) to zero: symmetric pairs must be
    # exactly symmetric or the stiff boundary contraction amplifies the
    # asymmetry from float residue to visible scale
    samples[np.abs(samples) < 1e-12] = 0.0
    ds = Dataset(
        samples=samples.astype(np.float32),
        ids=[f"toy{num_samples}-{i}" for i in range(num_samples)],
        value_range=(-1.5, 1.5),
        shape_meta=(2,),
    )
    provider = ExactMixtureScore(ds, schedule)

    theta = 2.0 * np.pi * np.arange(ring_points) / ring_points
    offsets = sigma_ring * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    X0 = (samples[:, None, :] + offsets[None, :, :]).reshape(-1, 2)

    grid = schedule.step_grid()
    knots: list[tuple[int, float, np.ndarray]] = [(0, float(grid.m[0]), X0.copy())]

    def keep(k, m, X):
        step = k + 1
        if step % record_stride == 0 or step == grid.num_steps:
            knots.append((step, m, X.copy()))

    traj = integrate_forward(X0, schedule, provider, method=method, callback=keep)
    final = traj.endpoint.reshape(num_samples, ring_points, 2)

    disjoint = True
    min_gap = np.inf
    for i in range(num_samples):
        for j in range(i + 1, num_samples):
            gap = _hull_separation(final[i], final[j])
            min_gap = min(min_gap, gap)
            if gap <= 0:
                disjoint = False
    return Toy2DResult(
        samples=samples, ring_points=ring_points, knots=knots,
        final=final, disjoint=disjoint, min_hull_gap=float(min_gap),
    )


def write_toy2d_csv(result: Toy2DResult, path) -> None:
    """Emit (sample_index, ring_index, step, x, y) rows for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "ring_index", "step", "x", "y"])
        n = len(result.samples)
        for step, _m, pts in result.knots:
            rings = pts.reshape(n, result.ring_points, 2)
            for si in range(n):
                for ri in range(result.ring_points):
                    writer.writerow([si, ri, step,
                                     repr(float(rings[si, ri, 0])),
                                     repr(float(rings[si, ri, 1]))])


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull vertices of 2-D points (monotone chain)."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _hull_separation(points_a: np.ndarray, points_b: np.ndarray) -> float:
    """Largest separating-axis gap between two convex hulls.

    Positive means disjoint with that clearance; <= 0 means the hulls
    touch or overlap.  Axes are the edge normals of both hulls, which is
    exhaustive for convex polygons.
    """
    ha, hb = convex_hull(points_a), convex_hull(points_b)
    best = -np.inf
    for hull in (ha, hb):
        edges = np.roll(hull, -1, axis=0) - hull
        normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
        lengths = np.linalg.norm(normals, axis=1)
        normals = normals[lengths > 0] / lengths[lengths > 0, None]
        for axis in normals:
            pa, pb = points_a @ axis, points_b @ axis
            gap = max(pb.min() - pa.max(), pa.min() - pb.max())
            best = max(best, gap)
    return float(best)


def analytic_single(y, C, m) -> np.ndarray:
    """Closed-form flow position for a one-sample mixture.

    The center travels along ``y * exp(-m)`` and any offset scales with
    the perturbation width: ``x(m) = y exp(-m) + sqrt(v(m)) * C``.
    """
    m = float(m)
    if m < 0:
        raise ValueError("m must be non-negative")
    y = np.asarray(y, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    return y * np.exp(-m) + np.sqrt(v_of_m(m)) * C


def spearman(a, b) -> float:
    """Spearman rank correlation with average ranks on ties."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if len(a) < 3:
        raise ValueError("need at least 3 observations")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ValueError("rank correlation is undefined for constant input")
    ra, rb = _average_ranks(a), _average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    return float((ra @ rb) / np.sqrt((ra @ ra) * (rb @ rb)))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    ranks[order] = np.arange(1, len(x) + 1, dtype=np.float64)
    # average ranks over tied values
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks

"""Euler-Maruyama reference simulator and analytic-vs-empirical comparison.

Trajectories are simulated in fixed blocks of ``BLOCK`` paths. Block ``b``
draws all of its normals from a Philox stream keyed by ``(seed, b)``, always
for the full block width, so the noise seen by trajectory ``i`` depends only on
``(seed, i)``. Results are therefore identical for any ``n_traj`` prefix and
any number of worker threads; blocks are concatenated in index order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import IntEnum

import numpy as np

from .correlation import ProcessSpec
from .errors import DomainError

BLOCK = 4096


class Boundary(IntEnum):
    NONE = 0
    B1 = 1  # x2 = 0
    B2 = 2  # x1 = 0


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    n_traj: int = 50_000
    horizon: float = 1.0
    seed: int = 0
    bridge_correction: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.dt < self.horizon:
            raise ValueError(f"dt={self.dt} must be smaller than horizon={self.horizon}")
        if int(self.n_traj) < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        self.n_steps  # noqa: B018 - validates horizon/dt

    @property
    def n_steps(self) -> int:
        return self.step_index(self.horizon)

    def step_index(self, t: float) -> int:
        """Step count reaching exactly time ``t``; ``t`` must be a multiple of ``dt``."""
        m = round(t / self.dt)
        if abs(m * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a multiple of dt={self.dt}")
        return int(m)


@dataclass(frozen=True)
class Diffusion:
    """Raw simulation parameters; unlike :class:`ProcessSpec`, any ``rho`` in [-1, 0] is allowed."""

    mu: tuple[float, float]
    s0: tuple[float, float]
    rho: float

    def __post_init__(self):
        mu = tuple(float(v) for v in self.mu)
        s0 = tuple(float(v) for v in self.s0)
        if len(mu) != 2 or len(s0) != 2 or not all(map(math.isfinite, mu + s0)):
            raise DomainError("mu and s0 must be finite 2-vectors")
        if not (s0[0] < 0.0 and s0[1] < 0.0):
            raise DomainError(f"s0={list(s0)} must lie strictly inside the third quadrant")
        if not (math.isfinite(self.rho) and -1.0 <= self.rho <= 0.0):
            raise DomainError(f"simulated rho must lie in [-1, 0], got {self.rho}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "rho", float(self.rho))

    @classmethod
    def of(cls, process) -> Diffusion:
        if isinstance(process, Diffusion):
            return process
        if isinstance(process, ProcessSpec):
            return cls(mu=process.mu, s0=process.s0, rho=process.rho)
        raise TypeError(f"expected ProcessSpec or Diffusion, got {type(process).__name__}")


@dataclass
class TrajectoryBatch:
    """Per-trajectory absorption records.

    ``absorption_time`` is NaN and ``boundary`` is ``Boundary.NONE`` for paths
    that survive to the horizon. ``snapshots[t]`` holds positions at time ``t``
    with NaN rows for paths already absorbed.
    """

    absorption_time: np.ndarray
    boundary: np.ndarray
    final_position: np.ndarray
    snapshots: dict[float, np.ndarray]
    config: SimConfig
    process: Diffusion

    @property
    def n_traj(self) -> int:
        return len(self.absorption_time)

    @property
    def records(self):
        for t, b, x in zip(self.absorption_time, self.boundary, self.final_position):
            yield (None if np.isnan(t) else float(t), Boundary(int(b)), (float(x[0]), float(x[1])))

    def summary(self) -> dict:
        counts = np.bincount(self.boundary, minlength=3)
        absorbed = self.absorption_time[~np.isnan(self.absorption_time)]
        return {
            "config": asdict(self.config),
            "process": asdict(self.process),
            "n_traj": self.n_traj,
            "n_survived": int(counts[Boundary.NONE]),
            "n_absorbed_b1": int(counts[Boundary.B1]),
            "n_absorbed_b2": int(counts[Boundary.B2]),
            "mean_absorption_time": float(absorbed.mean()) if absorbed.size else None,
            "snapshot_times": sorted(self.snapshots),
        }


def _run_block(block: int, n_real: int, proc: Diffusion, cfg: SimConfig, snap_steps: dict[int, float]):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(cfg.seed), block])))
    dt = cfg.dt
    sq = math.sqrt(dt)
    rho = proc.rho
    rc = math.sqrt(max(0.0, (1.0 - rho) * (1.0 + rho)))
    drift = np.array(proc.mu) * dt

    times = np.full(n_real, np.nan)
    bound = np.zeros(n_real, dtype=np.int8)
    final = np.empty((n_real, 2))
    snaps = {t: np.full((n_real, 2), np.nan) for t in snap_steps.values()}

    ids = np.arange(n_real)
    pos = np.tile(np.array(proc.s0), (n_real, 1))
    if 0 in snap_steps:
        snaps[snap_steps[0]][:] = pos
    for step in range(1, cfg.n_steps + 1):
        z = rng.standard_normal((BLOCK, 2))
        u = rng.random(BLOCK) if cfg.bridge_correction else None
        if ids.size == 0:
            break
        za = z[ids]
        new = pos + drift
        new[:, 0] += sq * za[:, 0]
        new[:, 1] += sq * (rho * za[:, 0] + rc * za[:, 1])

        hit1 = new[:, 1] >= 0.0  # crossed B1
        hit2 = new[:, 0] >= 0.0  # crossed B2
        which = np.where(hit1 & hit2, np.where(new[:, 1] > new[:, 0], Boundary.B1, Boundary.B2),
                         np.where(hit1, Boundary.B1, Boundary.B2))
        crossed = hit1 | hit2
        if u is not None:
            # Brownian-bridge probability of an unseen excursion past each axis
            with np.errstate(over="ignore"):
                p2 = np.where(crossed, 0.0, np.exp(-2.0 * pos[:, 0] * new[:, 0] / dt))
                p1 = np.where(crossed, 0.0, np.exp(-2.0 * pos[:, 1] * new[:, 1] / dt))
            bridged = u[ids] < 1.0 - (1.0 - p1) * (1.0 - p2)
            which = np.where(bridged, np.where(p1 >= p2, Boundary.B1, Boundary.B2), which)
            crossed = crossed | bridged

        if crossed.any():
            gone = ids[crossed]
            times[gone] = step * dt
            bound[gone] = which[crossed]
            final[gone] = new[crossed]
            keep = ~crossed
            ids = ids[keep]
            new = new[keep]
        pos = new
        if step in snap_steps:
            snaps[snap_steps[step]][ids] = pos
    final[ids] = pos
    return times, bound, final, snaps


def simulate(process, config: SimConfig, *, snapshots=(), workers: int = 1) -> TrajectoryBatch:
    """Simulate ``config.n_traj`` absorbed paths of ``dx = mu dt + dW_Sigma``.

    A path is absorbed at the first step ending with ``x1 >= 0`` (boundary B2)
    or ``x2 >= 0`` (boundary B1). If both coordinates cross in the same step the
    larger overshoot decides, with ties going to B2.
    """
    proc = Diffusion.of(process)
    snap_steps = {}
    for t in snapshots:
        t = float(t)
        if not 0.0 <= t <= config.horizon:
            raise ValueError(f"snapshot time {t} outside [0, horizon]")
        snap_steps[config.step_index(t)] = t

    n = int(config.n_traj)
    blocks = [(b, min(BLOCK, n - b * BLOCK)) for b in range(math.ceil(n / BLOCK))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda bn: _run_block(bn[0], bn[1], proc, config, snap_steps), blocks))
    else:
        parts = [_run_block(b, m, proc, config, snap_steps) for b, m in blocks]

    return TrajectoryBatch(
        absorption_time=np.concatenate([p[0] for p in parts]),
        boundary=np.concatenate([p[1] for p in parts]),
        final_position=np.concatenate([p[2] for p in parts]),
        snapshots={t: np.concatenate([p[3][t] for p in parts]) for t in snap_steps.values()},
        config=config,
        process=proc,
    )


def empirical_survival(batch: TrajectoryBatch, times) -> np.ndarray:
    """Fraction of paths not absorbed by each time (absorbed at exactly ``t`` counts as gone)."""
    times = np.asarray(times, dtype=float)
    if np.any(times > batch.config.horizon * (1 + 1e-12)):
        raise ValueError("survival requested beyond the simulation horizon")
    at = np.where(np.isnan(batch.absorption_time), np.inf, batch.absorption_time)
    at = np.sort(at)
    absorbed = np.searchsorted(at, times, side="right")
    return 1.0 - absorbed / batch.n_traj


@dataclass
class Histogram:
    """Probability mass per bin of surviving positions; ``outside_mass`` are survivors off-grid."""

    edges1: np.ndarray
    edges2: np.ndarray
    mass: np.ndarray
    outside_mass: float
    n_traj: int
    t: float

    @property
    def centers(self):
        c1 = 0.5 * (self.edges1[1:] + self.edges1[:-1])
        c2 = 0.5 * (self.edges2[1:] + self.edges2[:-1])
        return c1, c2

    @property
    def density(self) -> np.ndarray:
        area = np.outer(np.diff(self.edges1), np.diff(self.edges2))
        return self.mass / area

    def total(self) -> float:
        return float(self.mass.sum() + self.outside_mass)


def empirical_pdf(batch: TrajectoryBatch, t: float, edges1, edges2) -> Histogram:
    """2D histogram of survivors at snapshot time ``t``, normalised by ``n_traj``.

    Total mass (bins plus ``outside_mass``) equals the empirical survival at ``t``.
    """
    key = next((s for s in batch.snapshots if abs(s - t) <= 1e-12 * max(1.0, t)), None)
    if key is None:
        raise ValueError(f"no snapshot at t={t}; available: {sorted(batch.snapshots)}")
    pts = batch.snapshots[key]
    pts = pts[~np.isnan(pts[:, 0])]
    e1 = np.asarray(edges1, dtype=float)
    e2 = np.asarray(edges2, dtype=float)
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=[e1, e2])
    n = batch.n_traj
    return Histogram(e1, e2, counts / n, (len(pts) - counts.sum()) / n, n, key)


@dataclass
class ComparisonReport:
    analytic: np.ndarray
    empirical: np.ndarray
    standard_error: np.ndarray
    z_score: np.ndarray
    counted: np.ndarray = field(repr=False)
    n_traj: int
    bias_allowance: float
    sup_norm: float
    l1_distance: float

    def fraction_within(self, z_max: float = 3.0) -> float:
        z = self.z_score[self.counted]
        if z.size == 0:
            return 1.0
        return float(np.mean(np.abs(z) <= z_max))

    def passed(self, z_max: float = 3.0, min_fraction: float = 0.95) -> bool:
        return self.fraction_within(z_max) >= min_fraction

    def to_dict(self, z_max: float = 3.0, min_fraction: float = 0.95) -> dict:
        return {
            "n_points": int(self.analytic.size),
            "n_counted": int(self.counted.sum()),
            "n_traj": self.n_traj,
            "bias_allowance": self.bias_allowance,
            "sup_norm": self.sup_norm,
            "l1_distance": self.l1_distance,
            "z_max": z_max,
            "fraction_within": self.fraction_within(z_max),
            "passed": self.passed(z_max, min_fraction),
            "analytic": self.analytic.ravel().tolist(),
            "empirical": self.empirical.ravel().tolist(),
            "standard_error": self.standard_error.ravel().tolist(),
            "z_score": [z if math.isfinite(z) else None for z in self.z_score.ravel().tolist()],
        }


def compare(
    analytic,
    empirical,
    n_traj: int,
    *,
    bias_allowance: float = 0.0,
    min_expected: float = 0.0,
    analytic_points=None,
    empirical_points=None,
) -> ComparisonReport:
    """Binomial z-scores of empirical probabilities against analytic ones.

    The standard error at each point is ``sqrt(p (1 - p) / n_traj)`` with ``p``
    the analytic probability; differences up to ``bias_allowance`` are treated as
    zero. Points with fewer than ``min_expected`` expected counts are reported
    but not counted toward :meth:`ComparisonReport.fraction_within`.
    """
    a = np.asarray(analytic, dtype=float)
    e = np.asarray(empirical, dtype=float)
    if a.shape != e.shape:
        raise ValueError(f"grid mismatch: analytic shape {a.shape} vs empirical {e.shape}")
    if (analytic_points is None) != (empirical_points is None):
        raise ValueError("pass grid coordinates for both sides or neither")
    if analytic_points is not None:
        pa = np.asarray(analytic_points, dtype=float)
        pe = np.asarray(empirical_points, dtype=float)
        if pa.shape != pe.shape or not np.allclose(pa, pe, rtol=1e-9, atol=1e-12):
            raise ValueError("grid mismatch: analytic and empirical evaluation points differ")
    p = np.clip(a, 0.0, 1.0)
    se = np.sqrt(p * (1.0 - p) / n_traj)
    diff = e - a
    excess = np.maximum(np.abs(diff) - bias_allowance, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.sign(diff) * excess / se, np.where(excess > 0, np.sign(diff) * np.inf, 0.0))
    counted = p * n_traj >= min_expected
    return ComparisonReport(
        analytic=a,
        empirical=e,
        standard_error=se,
        z_score=z,
        counted=counted,
        n_traj=int(n_traj),
        bias_allowance=float(bias_allowance),
        sup_norm=float(np.max(np.abs(diff))) if diff.size else 0.0,
        l1_distance=float(np.sum(np.abs(diff))),
    )

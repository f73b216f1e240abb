"""Solvable correlation family and problem specification.

A two-dimensional drift-diffusion absorbed on the negative half-axes has a
finite method-of-images solution only when the noise correlation is
``rho = -cos(pi/k)`` for an integer ``k >= 2``, or ``rho = -1`` (``k`` infinite).
Everything downstream is parameterised by ``k`` rather than by ``rho``.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, UnsolvableCorrelationError

#: Symbolic ``k`` for the perfectly anti-correlated case ``rho = -1``.
INFINITY = math.inf

SOLVABLE_CONDITION = "rho = -cos(pi/k) with integer k >= 2 (or rho = -1, k = infinity)"
QUADRANT_CONDITION = "start point strictly inside the third quadrant (s0_1 < 0 and s0_2 < 0)"


def check_k(k) -> int | float:
    """Normalise ``k`` to a Python int or :data:`INFINITY`, rejecting anything else."""
    if isinstance(k, bool):
        raise TypeError("k must be an integer >= 2 or INFINITY, not bool")
    if isinstance(k, numbers.Integral):
        k = int(k)
        if k < 2:
            raise UnsolvableCorrelationError(
                f"k={k} is not admissible; need {SOLVABLE_CONDITION} "
                "(k=1 is the degenerate rho=+1 case, which is excluded)"
            )
        return k
    if isinstance(k, numbers.Real) and math.isinf(k) and k > 0:
        return INFINITY
    raise UnsolvableCorrelationError(f"k={k!r} is not admissible; need {SOLVABLE_CONDITION}")


def is_infinite(k) -> bool:
    return isinstance(k, float) and math.isinf(k)


def rho_from_k(k) -> float:
    """Correlation ``-cos(pi/k)`` of the k-th solvable member; ``-1`` for infinite k."""
    k = check_k(k)
    if is_infinite(k):
        return -1.0
    if k == 2:
        return 0.0
    return -math.cos(math.pi / k)


def nearest_solvable_k(rho: float, k_max: int) -> tuple[int, float]:
    """Closest solvable ``k <= k_max`` to ``rho`` and the signed residual ``rho - rho(k)``.

    Ties go to the smaller ``k``. Residuals within 4 ulp of ``rho`` are reported
    as exactly zero, so family members typed as decimals (``-0.5``) map back cleanly.
    """
    if not math.isfinite(rho):
        raise DomainError(f"rho must be finite, got {rho!r}")
    if rho > 0.0:
        raise UnsolvableCorrelationError(
            f"rho={rho} > 0 has no method-of-images solution for any start point; "
            f"need {SOLVABLE_CONDITION}"
        )
    if rho <= -1.0:
        raise DomainError(f"rho={rho} must lie in (-1, 0]; rho=-1 is the k=infinity case")
    k_max = int(k_max)
    if k_max < 2:
        raise DomainError(f"k_max must be >= 2, got {k_max}")
    best_k, best_res = 2, rho - rho_from_k(2)
    for k in range(3, k_max + 1):
        res = rho - rho_from_k(k)
        if abs(res) < abs(best_res):
            best_k, best_res = k, res
    if abs(best_res) <= 4 * math.ulp(rho):
        best_res = 0.0
    return best_k, best_res


def solvable_k(rho: float, *, tol: float = 1e-12, k_max: int = 100_000) -> int | float:
    """Exact inverse of :func:`rho_from_k`; raises for correlations outside the family."""
    if not math.isfinite(rho) or not -1.0 <= rho <= 1.0:
        raise DomainError(f"rho must be a finite number in [-1, 1], got {rho!r}")
    if abs(rho + 1.0) <= tol:
        return INFINITY
    if rho > tol:
        raise UnsolvableCorrelationError(
            f"rho={rho} is positive; no closed-form solution exists. Need {SOLVABLE_CONDITION}"
        )
    # rho(k) = -cos(pi/k) -> k = pi / arccos(-rho)
    k_guess = math.pi / math.acos(min(1.0, max(-1.0, -rho)))
    for k in {max(2, math.floor(k_guess)), max(2, math.ceil(k_guess))}:
        if k <= k_max and abs(rho - rho_from_k(k)) <= tol:
            return k
    raise UnsolvableCorrelationError(
        f"rho={rho} is not in the solvable family; need {SOLVABLE_CONDITION}. "
        f"Nearest member: k={round(k_guess)}, rho={rho_from_k(max(2, round(k_guess))):.12g}"
    )


@dataclass(frozen=True)
class AngleParams:
    """Whitened-space angles: ``alpha`` is half the rotation per even image step,
    ``beta`` the angular spacing between adjacent even images."""

    alpha: float
    beta: float


def angles(k) -> AngleParams:
    k = check_k(k)
    if is_infinite(k):
        return AngleParams(alpha=math.pi, beta=0.0)
    return AngleParams(alpha=(k - 1) * math.pi / k, beta=2.0 * math.pi / k)


def _as_pair(name, value) -> tuple[float, float]:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2,):
        raise DomainError(f"{name} must be a 2-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {arr.tolist()}")
    return float(arr[0]), float(arr[1])


@dataclass(frozen=True)
class ProcessSpec:
    """Drift ``mu``, start point ``s0`` and solvable index ``k``.

    Instances are validated on construction; ``sigma``, ``lam`` (the precision
    matrix) and ``angles`` are computed lazily and cached.
    """

    mu: tuple[float, float]
    s0: tuple[float, float]
    k: int | float

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_pair("mu", self.mu))
        object.__setattr__(self, "s0", _as_pair("s0", self.s0))
        object.__setattr__(self, "k", check_k(self.k))
        if not (self.s0[0] < 0.0 and self.s0[1] < 0.0):
            raise DomainError(f"s0={list(self.s0)} violates the {QUADRANT_CONDITION}")

    @classmethod
    def from_rho(cls, mu, s0, rho: float) -> ProcessSpec:
        return cls(mu=mu, s0=s0, k=solvable_k(rho))

    @property
    def rho(self) -> float:
        return rho_from_k(self.k)

    @property
    def mu_vec(self) -> np.ndarray:
        return np.array(self.mu)

    @property
    def s0_vec(self) -> np.ndarray:
        return np.array(self.s0)

    @cached_property
    def sigma(self) -> np.ndarray:
        r = self.rho
        return np.array([[1.0, r], [r, 1.0]])

    @cached_property
    def det_sigma(self) -> float:
        return 1.0 - self.rho**2

    @cached_property
    def lam(self) -> np.ndarray:
        """Inverse covariance; undefined for ``rho = -1``."""
        if is_infinite(self.k):
            raise DomainError("covariance is singular for rho=-1 (k=infinity)")
        r = self.rho
        return np.array([[1.0, -r], [-r, 1.0]]) / (1.0 - r * r)

    @cached_property
    def angles(self) -> AngleParams:
        return angles(self.k)


def validate_spec(spec: ProcessSpec) -> ProcessSpec:
    """Re-check a spec (e.g. one built with ``object.__new__``) and warm its caches."""
    checked = ProcessSpec(mu=spec.mu, s0=spec.s0, k=spec.k)
    checked.sigma, checked.angles  # noqa: B018
    if not is_infinite(checked.k):
        checked.lam  # noqa: B018
    return checked

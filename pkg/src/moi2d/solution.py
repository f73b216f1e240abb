"""Closed-form density, survival and first-passage quantities.

Each image contributes ``a_j N(x; s_j + mu t, Sigma t)``. Weights can be
astronomically large while the matching Gaussian tails are astronomically
small, so every image term is formed in log space before the signed sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bvn import log_standard_bvn_cdf, standard_bvn_cdf
from .correlation import ProcessSpec
from .errors import ConsistencyError, DomainError
from .images import ImageSet, build_image_set, verify_image_set

_TWOPI = 2.0 * math.pi

NEGATIVE_CLAMP = 1e-13
PROBABILITY_SLACK = 1e-9
# Above this weight exponent, absolute CDF error times the weight would exceed ~1e-14.
_DIRECT_EXPONENT = 4.0


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t <= 0.0):
        raise ValueError(f"time must be positive and finite, got {t.tolist()}")
    return t


class SolutionEvaluator:
    """Evaluates the image solution for one :class:`ImageSet`."""

    def __init__(self, iset: ImageSet, *, tol: float = 1e-10):
        diag = verify_image_set(iset, tol=tol)
        if not diag.ok(tol):
            raise ConsistencyError(f"image set failed verification: {diag}")
        self.iset = iset
        self.spec = iset.spec
        self.rho = iset.spec.rho
        self.lam = iset.spec.lam
        self.det_sigma = iset.spec.det_sigma
        self._sources = np.asarray(iset.sources, dtype=float)
        self._signs = iset.signs
        self._exps = np.asarray(iset.exponents, dtype=float)
        self._mu = iset.spec.mu_vec

    @classmethod
    def from_spec(cls, spec: ProcessSpec, formalism: str = "rotation") -> SolutionEvaluator:
        return cls(build_image_set(spec, formalism))

    # -- density -----------------------------------------------------------

    def _pair_terms(self, x, t: float):
        """Image sum regrouped into cancelling pairs, in log space.

        Every weighted image term factors as ``exp(c(x, t)) N(x; s_j, Sigma t)``
        with the drift factor ``c = mu^T Lam (x - s0) - mu^T Lam mu t / 2`` shared
        by all images, so huge weights never appear. Each image is then paired
        with its mirror partner across the nearer boundary. For a partner
        ``s_b = pi1 s_a`` the density ratio is ``N_b / N_a = exp(-2 s_a2 x2 / t)``
        (and ``exp(-2 s_a1 x1 / t)`` across B2), so a pair is evaluated as
        ``N_a * (-expm1(z))``. This keeps relative accuracy next to the
        boundaries, where the two members are nearly equal; the partner
        structure it relies on is checked when the evaluator is built.

        Returns ``c`` with shape ``x.shape[:-1]`` and the per-pair log magnitudes
        and signs with shape ``x.shape[:-1] + (k,)``.
        """
        x = np.asarray(x, dtype=float)
        src = self._sources
        n = len(src)
        lam = self.lam
        d = x[..., None, :] - src
        logs = -np.einsum("...ji,ik,...jk->...j", d, lam, d) / (2.0 * t) - math.log(
            _TWOPI * t * math.sqrt(self.det_sigma)
        )
        drift = lam @ self._mu
        common = (x - self.spec.s0_vec) @ drift - 0.5 * t * float(self._mu @ drift)

        # s_{j+1} = pi1 s_j for even j (partners across B1), pi2 s_j for odd j (across B2)
        across_b1 = np.abs(x[..., 1]) <= np.abs(x[..., 0])
        first = np.where(across_b1[..., None], np.arange(0, n, 2), np.arange(1, n, 2))
        axis = np.where(across_b1, 1, 0)[..., None]
        s_a = np.take_along_axis(src[first], axis[..., None], axis=-1)[..., 0]
        x_c = np.take_along_axis(x, axis, axis=-1)
        z = -2.0 * s_a * x_c / t  # log(N_b / N_a)
        with np.errstate(divide="ignore"):
            log_gap = np.where(z > 0.0, z, 0.0) + np.log(-np.expm1(-np.abs(z)))
        log_pair = np.take_along_axis(logs, first, axis=-1) + log_gap
        sign_pair = -self._signs[first] * np.sign(z)
        return common, log_pair, sign_pair

    def raw_pdf(self, x, t: float):
        """Unclamped image sum and the largest pair magnitude, both shaped like ``x[..., 0]``."""
        t = float(_check_time(t))
        common, logs, signs = self._pair_terms(x, t)
        top = np.max(logs, axis=-1)
        finite = np.isfinite(top)
        shift = np.where(finite, top, 0.0)
        total = np.sum(signs * np.exp(logs - shift[..., None]), axis=-1)
        with np.errstate(over="ignore", under="ignore"):
            scale = np.where(finite, np.exp(common + shift), 0.0)
        val = np.where(finite, total * scale, 0.0)
        return val, scale

    def pdf_flagged(self, x, t: float):
        """Density at ``x`` plus a mask of points outside the open third quadrant.

        Outside points get the raw image sum, which is what boundary-cancellation
        checks need. Inside, round-off negatives smaller than ``1e-13`` of the
        largest pair term are clamped to zero; anything larger raises.
        """
        x = np.asarray(x, dtype=float)
        val, scale = self.raw_pdf(x, t)
        outside = ~((x[..., 0] < 0.0) & (x[..., 1] < 0.0))
        neg = (~outside) & (val < 0.0)
        if np.any(neg & (val < -NEGATIVE_CLAMP * scale)):
            worst = float(np.min(np.where(neg, val / scale, 0.0)))
            raise ConsistencyError(f"negative density inside the domain (relative {worst:.3g})")
        val = np.where(neg, 0.0, val)
        if val.ndim == 0:
            return float(val), bool(outside)
        return val, outside

    def pdf(self, x, t: float):
        return self.pdf_flagged(x, t)[0]

    def free_peak(self, t: float) -> float:
        """Peak value of a single free-space image at time ``t``."""
        return 1.0 / (_TWOPI * t * math.sqrt(self.det_sigma))

    # -- probabilities -----------------------------------------------------

    def _orthant(self, c1, c2, t: float):
        """``sum_j a_j P_j(X1 <= c1, X2 <= c2)`` over broadcast corner arrays."""
        st = math.sqrt(t)
        c1, c2 = np.broadcast_arrays(np.asarray(c1, float), np.asarray(c2, float))
        total = np.zeros(c1.shape)
        means = self._sources + self._mu * t
        for j in range(len(means)):
            h = (c1 - means[j, 0]) / st
            w = (c2 - means[j, 1]) / st
            if self._exps[j] <= _DIRECT_EXPONENT:
                term = math.exp(self._exps[j]) * standard_bvn_cdf(h, w, self.rho)
            else:
                with np.errstate(under="ignore"):
                    term = np.exp(self._exps[j] + log_standard_bvn_cdf(h, w, self.rho))
            total = total + self._signs[j] * term
        return total

    def _checked_probability(self, p):
        p = np.asarray(p, dtype=float)
        lo, hi = -PROBABILITY_SLACK, 1.0 + PROBABILITY_SLACK
        if np.any((p < lo) | (p > hi)) or not np.all(np.isfinite(p)):
            raise ConsistencyError(f"probability outside [0, 1]: {p.ravel()[:5].tolist()}")
        return np.clip(p, 0.0, 1.0)

    def survival(self, t):
        """Probability that no boundary has been hit by time ``t`` (scalar or array)."""
        ts = _check_time(t)
        out = np.array([float(self._orthant(0.0, 0.0, float(ti))) for ti in ts.ravel()]).reshape(ts.shape)
        out = self._checked_probability(out)
        return float(out) if out.ndim == 0 else out

    def first_passage_cdf(self, t):
        return 1.0 - self.survival(t)

    def bin_masses(self, edges1, edges2, t: float) -> np.ndarray:
        """Exact probability of each rectangle ``[e1_i, e1_i+1] x [e2_j, e2_j+1]`` at time ``t``.

        Edges must be finite, increasing and inside the closed third quadrant.
        """
        t = float(_check_time(t))
        e1 = np.asarray(edges1, dtype=float)
        e2 = np.asarray(edges2, dtype=float)
        for e in (e1, e2):
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0) or e[-1] > 0.0:
                raise DomainError("bin edges must be increasing, finite and <= 0")
        corners = self._orthant(e1[:, None], e2[None, :], t)
        masses = corners[1:, 1:] - corners[:-1, 1:] - corners[1:, :-1] + corners[:-1, :-1]
        return np.where(np.abs(masses) < 1e-15, np.maximum(masses, 0.0), masses)

    # -- diagnostics -------------------------------------------------------

    def fpe_residual(self, x, t: float, h: float) -> float:
        """Central-difference Fokker-Planck residual ``dXi/dt + mu.grad Xi - 1/2 Sigma:Hess Xi``.

        Truncation error is O(h^2); the exact solution has zero residual.
        """
        x = np.asarray(x, dtype=float)
        if not (0.0 < h < t):
            raise ValueError(f"need 0 < h < t, got h={h}, t={t}")

        def f(dx1, dx2, dt=0.0):
            return float(self.raw_pdf(x + np.array([dx1, dx2]), t + dt)[0])

        f0 = f(0, 0)
        dt_ = (f(0, 0, h) - f(0, 0, -h)) / (2 * h)
        d1 = (f(h, 0) - f(-h, 0)) / (2 * h)
        d2 = (f(0, h) - f(0, -h)) / (2 * h)
        d11 = (f(h, 0) - 2 * f0 + f(-h, 0)) / (h * h)
        d22 = (f(0, h) - 2 * f0 + f(0, -h)) / (h * h)
        d12 = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h)
        mu = self._mu
        return dt_ + mu[0] * d1 + mu[1] * d2 - 0.5 * (d11 + 2.0 * self.rho * d12 + d22)


@dataclass(frozen=True)
class Rho1Evaluator:
    """Perfectly anti-correlated case as a 1D process between two absorbing walls.

    Positions are measured along ``(1, -1)/sqrt(2)`` from the start point, so the
    walls sit at ``-b`` (B1) and ``a`` (B2). The process has drift ``mu_line``
    and variance ``sigma2_line`` per unit time; the density is the classical
    two-wall image series, truncated once the next pair of terms is below
    ``1e-12`` of the largest retained term (at least ``min_terms`` each side).
    """

    a: float
    b: float
    mu_line: float = 0.0
    sigma2_line: float = 2.0
    min_terms: int = 5
    max_terms: int = 100_000
    rel_cutoff: float = 1e-12

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise DomainError(f"wall distances must be positive, got a={self.a}, b={self.b}")

    @classmethod
    def from_start(cls, s0, mu=(0.0, 0.0), **kwargs) -> Rho1Evaluator:
        """Build from a 2D start point and drift.

        The line picture is exact only if the drift keeps ``x1 + x2`` fixed, i.e.
        ``mu1 + mu2 = 0``; other drifts are rejected.
        """
        s1, s2 = (float(v) for v in s0)
        m1, m2 = (float(v) for v in mu)
        if not (s1 < 0.0 and s2 < 0.0):
            raise DomainError("start point must lie strictly inside the third quadrant")
        if abs(m1 + m2) > 1e-12 * max(1.0, abs(m1), abs(m2)):
            raise DomainError(
                "for rho=-1 the drift must be parallel to the line x1 + x2 = const (mu1 + mu2 = 0)"
            )
        root2 = math.sqrt(2.0)
        return cls(a=-root2 * s1, b=-root2 * s2, mu_line=(m1 - m2) / root2, **kwargs)

    def _sources(self, n: int):
        """Image sources ``x'_n, x''_n`` and, for ``n > 0``, ``x'_-n, x''_-n``."""
        span = self.a + self.b
        ks = (n,) if n == 0 else (n, -n)
        return [(2 * k * span, 1.0) for k in ks] + [((2 - 2 * k) * self.a - 2 * k * self.b, -1.0) for k in ks]

    def _series(self, term):
        """Sum ``term(source, sign)`` (array-valued) over images until converged."""
        total = None
        top = 0.0
        for n in range(self.max_terms):
            new = [sign * term(src) for src, sign in self._sources(n)]
            size = max(float(np.max(np.abs(v))) for v in new)
            top = max(top, size)
            for v in new:
                total = v if total is None else total + v
            if n >= self.min_terms and size <= self.rel_cutoff * top:
                return total
        raise ConsistencyError("image series did not converge")

    def line_pdf_flagged(self, xz, t: float):
        t = float(_check_time(t))
        xz = np.asarray(xz, dtype=float)
        s2, mu = self.sigma2_line, self.mu_line
        norm = 1.0 / math.sqrt(_TWOPI * s2 * t)

        def term(src):
            return norm * np.exp(mu * src / s2 - (xz - src - mu * t) ** 2 / (2.0 * s2 * t))

        val = self._series(term)
        outside = (xz <= -self.b) | (xz >= self.a)
        val = np.where(outside, 0.0, val)
        if val.ndim == 0:
            return float(val), bool(outside)
        return val, outside

    def line_pdf(self, xz, t: float):
        return self.line_pdf_flagged(xz, t)[0]

    def interval_mass(self, lo, hi, t: float):
        """Probability of surviving to ``t`` and lying in ``[lo, hi]`` (clipped to the walls)."""
        t = float(_check_time(t))
        lo = np.maximum(np.asarray(lo, dtype=float), -self.b)
        hi = np.minimum(np.asarray(hi, dtype=float), self.a)
        s2, mu = self.sigma2_line, self.mu_line
        sd = math.sqrt(s2 * t)

        def term(src):
            shift = src + mu * t
            return math.exp(mu * src / s2) * (standard_bvn_cdf((hi - shift) / sd, 40.0, 0.0) - standard_bvn_cdf((lo - shift) / sd, 40.0, 0.0))

        return np.where(hi > lo, self._series(term), 0.0)

    def survival(self, t: float) -> float:
        return float(self.interval_mass(-self.b, self.a, t))


def rho1_line_pdf(ev: Rho1Evaluator, xz, t: float):
    """Density along the line for the rho = -1 case; zero outside the walls."""
    return ev.line_pdf(xz, t)

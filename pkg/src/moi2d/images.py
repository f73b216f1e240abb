"""Image-source construction for the two-boundary problem.

Two equivalent constructions are provided. The *mapping* construction applies
the boundary reflection maps alternately to the start point; the *rotation*
construction writes each source in closed form through the whitening
transform, in which every pair of reflections is a rigid rotation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .correlation import ProcessSpec, angles, check_k, is_infinite, rho_from_k
from .errors import ConsistencyError, DomainError, WeightOverflowError

#: Anti-diagonal flip ``(x1, x2) -> (-x2, -x1)``.
FLIP = np.array([[0.0, -1.0], [-1.0, 0.0]])

# exp() of anything above this overflows float64
_MAX_EXPONENT = 709.0
_TINY = float(np.finfo(float).tiny)


def rotation(theta: float) -> np.ndarray:
    """Clockwise rotation by ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class ReflectionMaps:
    pi1: np.ndarray
    pi2: np.ndarray

    @property
    def generator(self) -> np.ndarray:
        """``pi2 @ pi1``: one full step of the sequential construction."""
        return self.pi2 @ self.pi1


def _maps_for_rho(rho: float) -> ReflectionMaps:
    return ReflectionMaps(
        pi1=np.array([[1.0, -2.0 * rho], [0.0, -1.0]]),
        pi2=np.array([[-1.0, 0.0], [-2.0 * rho, 1.0]]),
    )


def reflection_maps(k) -> ReflectionMaps:
    """Maps sending a source to its cancelling partner across B1 (``pi1``) and B2 (``pi2``)."""
    k = check_k(k)
    if is_infinite(k):
        raise DomainError("reflection maps for rho=-1 generate an infinite image series; use Rho1Evaluator")
    return _maps_for_rho(rho_from_k(k))


@dataclass(frozen=True)
class WhiteningMap:
    q: np.ndarray
    q_inv: np.ndarray


def whitening_matrix(k) -> WhiteningMap:
    """Symmetric ``Q`` with ``Q.T @ Q`` equal to the precision matrix.

    For ``k = 2`` (``rho = 0``) the process is already white and ``Q`` is the identity.
    """
    k = check_k(k)
    if is_infinite(k):
        raise DomainError("whitening is singular at rho=-1 (k=infinity)")
    if k == 2:
        return WhiteningMap(np.eye(2), np.eye(2))
    rho = rho_from_k(k)
    c = math.sqrt(1.0 - rho * rho)
    q = math.copysign(1.0, rho) / math.sqrt(2.0 * (1.0 - rho * rho) * (1.0 - c))
    mat = q * np.array([[rho, c - 1.0], [c - 1.0, rho]])
    return WhiteningMap(mat, np.linalg.inv(mat))


def whitened_maps(k) -> ReflectionMaps:
    """Reflection maps conjugated into whitened coordinates."""
    w = whitening_matrix(k)
    maps = reflection_maps(k)
    return ReflectionMaps(pi1=w.q @ maps.pi1 @ w.q_inv, pi2=w.q @ maps.pi2 @ w.q_inv)


def whitened_quadrant_range(k) -> tuple[float, float]:
    """Polar-angle interval covered by the whitened third quadrant."""
    alpha = math.acos(rho_from_k(k))
    return 0.75 * math.pi + alpha / 2.0, 1.75 * math.pi - alpha / 2.0


def avoidance_region(k) -> tuple[float, float]:
    """Angles an even source must avoid so that its odd successor stays out of the quadrant."""
    alpha = math.acos(rho_from_k(k))
    return -0.25 * math.pi + 1.5 * alpha, 0.75 * math.pi + alpha / 2.0


def in_angle_interval(theta, interval, *, open_interval=False) -> np.ndarray:
    lo, hi = interval
    rel = np.mod(np.asarray(theta) - lo, 2.0 * math.pi)
    width = hi - lo
    if open_interval:
        return (rel > 0.0) & (rel < width)
    return rel <= width


@dataclass(frozen=True)
class ImageSet:
    """Sources ``s^(j)``, ``j = 0..2k-1`` with signed weights ``a_j``.

    ``exponents[j]`` is ``log|a_j| = mu^T Lam (s^(j) - s^(0))``; evaluators work
    from the exponents so that large weights never have to be materialised.
    """

    spec: ProcessSpec
    sources: np.ndarray
    weights: np.ndarray
    exponents: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return self.spec.k

    @property
    def lam(self) -> np.ndarray:
        return self.spec.lam

    @property
    def signs(self) -> np.ndarray:
        return np.where(np.arange(len(self.sources)) % 2 == 0, 1.0, -1.0)

    def to_dict(self) -> dict:
        return {
            "k": self.spec.k,
            "rho": self.spec.rho,
            "s0": list(self.spec.s0),
            "mu": list(self.spec.mu),
            "sources": self.sources.tolist(),
            "weights": self.weights.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> ImageSet:
        spec = ProcessSpec(mu=data["mu"], s0=data["s0"], k=int(data["k"]))
        sources = np.asarray(data["sources"], dtype=float)
        if sources.shape != (2 * spec.k, 2):
            raise DomainError(f"expected {2 * spec.k} sources, got array of shape {sources.shape}")
        exps = _weight_exponents(sources, spec)
        weights = np.asarray(data["weights"], dtype=float)
        return cls(spec=spec, sources=sources, weights=weights, exponents=exps)

    @classmethod
    def from_json(cls, text: str) -> ImageSet:
        return cls.from_dict(json.loads(text))


def _weight_exponents(sources: np.ndarray, spec: ProcessSpec) -> np.ndarray:
    drift_dir = spec.lam @ spec.mu_vec
    return (sources - spec.s0_vec) @ drift_dir


def image_weights(sources, spec: ProcessSpec) -> np.ndarray:
    """``a_j = (-1)^j exp(mu^T Lam (s^(j) - s^(0)))``."""
    sources = np.asarray(sources, dtype=float)
    exps = _weight_exponents(sources, spec)
    bad = np.flatnonzero(exps > _MAX_EXPONENT)
    if bad.size:
        j = int(bad[0])
        raise WeightOverflowError(j, float(exps[j]))
    signs = np.where(np.arange(len(sources)) % 2 == 0, 1.0, -1.0)
    weights = signs * np.exp(exps)
    weights[0] = 1.0
    return weights


def _make_set(spec: ProcessSpec, sources: np.ndarray) -> ImageSet:
    sources[0] = spec.s0_vec
    weights = image_weights(sources, spec)
    return ImageSet(spec=spec, sources=sources, weights=weights, exponents=_weight_exponents(sources, spec))


def _check_finite_spec(spec: ProcessSpec):
    if is_infinite(spec.k):
        raise DomainError("rho=-1 has no finite image set; use Rho1Evaluator")


def generate_sources(s0, maps: ReflectionMaps, n: int) -> np.ndarray:
    """First ``n`` terms of the sequential construction, alternating pi1 and pi2."""
    out = np.empty((n, 2))
    cur = np.asarray(s0, dtype=float)
    for j in range(n):
        out[j] = cur
        cur = (maps.pi1 if j % 2 == 0 else maps.pi2) @ cur
    return out


def build_image_set_mapping(spec: ProcessSpec, *, tol: float = 1e-10) -> ImageSet:
    _check_finite_spec(spec)
    maps = reflection_maps(spec.k)
    seq = generate_sources(spec.s0_vec, maps, 2 * spec.k + 1)
    scale = max(1.0, float(np.max(np.abs(spec.s0_vec))))
    resid = float(np.max(np.abs(seq[-1] - seq[0])))
    if not resid <= tol * scale:
        raise ConsistencyError(f"image sequence failed to close after {2 * spec.k} steps (residual {resid:.3g})")
    return _make_set(spec, seq[:-1].copy())


def rotation_matrices(k) -> np.ndarray:
    """Closed-form matrices ``M_j`` with ``s^(j) = M_j s^(0)``, shape ``(2k, 2, 2)``."""
    k = check_k(k)
    if is_infinite(k):
        raise DomainError("rho=-1 has no finite image set")
    alpha = angles(k).alpha
    p = math.pi / k
    inv = 1.0 / math.sin(p)
    mats = np.empty((2 * k, 2, 2))
    for j in range(2 * k):
        ja = j * alpha
        if j % 2 == 0:
            m = [[math.sin(ja + p), math.sin(ja)], [-math.sin(ja), -math.sin(ja - p)]]
        else:
            m = [[math.sin(ja), math.sin(ja - p)], [-math.sin(ja + p), -math.sin(ja)]]
        mats[j] = inv * np.array(m)
    return mats


def build_image_set_rotation(spec: ProcessSpec) -> ImageSet:
    _check_finite_spec(spec)
    sources = rotation_matrices(spec.k) @ spec.s0_vec
    return _make_set(spec, sources)


def build_image_set(spec: ProcessSpec, formalism: str = "rotation") -> ImageSet:
    if formalism == "rotation":
        return build_image_set_rotation(spec)
    if formalism == "mapping":
        return build_image_set_mapping(spec)
    raise ValueError(f"unknown formalism {formalism!r}; expected 'mapping' or 'rotation'")


@dataclass
class ImageDiagnostics:
    closure_residual: float
    ellipse_residual: float
    quadrant_violations: list[int]
    partner_residual: float
    weight_residual: float
    missing_partners: list[tuple[int, str]]

    def ok(self, tol: float = 1e-10) -> bool:
        return (
            self.closure_residual < tol
            and self.ellipse_residual < tol
            and not self.quadrant_violations
            and not self.missing_partners
            and self.partner_residual < tol
            and self.weight_residual < tol
        )


def verify_image_set(iset: ImageSet, *, tol: float = 1e-10, quadrant_tol: float = 1e-12) -> ImageDiagnostics:
    """Geometric and cancellation checks on an image set; never raises on bad data.

    Residuals are absolute for unit-scale inputs (scaled by ``max(1, |s0|_inf)``);
    the ellipse residual is relative to ``s0^T Lam s0``.
    """
    spec = iset.spec
    maps = reflection_maps(spec.k)
    src = np.asarray(iset.sources, dtype=float)
    s0 = spec.s0_vec
    scale = max(1.0, float(np.max(np.abs(s0))))

    closed = np.linalg.matrix_power(maps.generator, spec.k) @ src[0]
    closure = float(np.max(np.abs(closed - s0))) / scale

    lam = spec.lam
    r0 = float(s0 @ lam @ s0)
    radii = np.einsum("ni,ij,nj->n", src, lam, src)
    ellipse = float(np.max(np.abs(radii - r0))) / r0

    inside = np.flatnonzero((src[:, 0] < -quadrant_tol) & (src[:, 1] < -quadrant_tol))
    violations = [int(j) for j in inside if j != 0]

    # each source needs its partner across both boundaries, with matching weight
    exps = _weight_exponents(src, spec)
    weights = np.asarray(iset.weights, dtype=float)
    worst_pos = 0.0
    worst_w = 0.0
    missing = []
    for j in range(len(src)):
        for name, m in (("B1", maps.pi1), ("B2", maps.pi2)):
            target = m @ src[j]
            dist = np.max(np.abs(src - target), axis=1) / scale
            p = int(np.argmin(dist))
            if dist[p] > tol:
                missing.append((j, name))
                continue
            worst_pos = max(worst_pos, float(dist[p]))
            if p == j:
                continue
            # a_p = -a_j exp(mu^T Lam (s_p - s_j)); compare in log space
            if min(abs(weights[p]), abs(weights[j])) < _TINY:
                continue  # underflowed (zero or subnormal) weights have lost their relative precision
            if np.sign(weights[p]) != -np.sign(weights[j]):
                worst_w = max(worst_w, math.inf)
            else:
                d = abs((exps[p] - exps[j]) - (math.log(abs(weights[p])) - math.log(abs(weights[j]))))
                worst_w = max(worst_w, d)
    return ImageDiagnostics(
        closure_residual=closure,
        ellipse_residual=ellipse,
        quadrant_violations=violations,
        partner_residual=worst_pos,
        weight_residual=worst_w,
        missing_partners=missing,
    )

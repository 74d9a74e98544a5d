"""
Noise-generating distributions.

Each spec maps the current coefficients to the variance of the Gaussian
noise appended to every covariate column. Averaged over the noise, the
augmented quadratic loss picks up ``n_e * sum_k V_k theta_k^2``, which is
the penalty returned by :func:`expected_penalty`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ValidationError

EPS_THETA = 1e-8
VAR_CAP = 1e12


def _floor(theta, eps: float) -> np.ndarray:
    return np.maximum(np.abs(np.asarray(theta, dtype=float)), eps)


def _check_groups(groups, q: int | None = None) -> tuple[tuple[int, ...], ...]:
    gs = tuple(tuple(int(i) for i in g) for g in groups)
    flat = [i for g in gs for i in g]
    if any(len(g) == 0 for g in gs):
        raise ValidationError("empty group")
    if len(flat) != len(set(flat)):
        raise ValidationError("groups overlap")
    if q is not None and sorted(flat) != list(range(q)):
        raise ValidationError(f"groups must partition 0..{q - 1}")
    return gs


@dataclass(frozen=True)
class NoiseSpec:
    """Base class. Subclasses define ``variance`` and ``penalty``."""

    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValidationError(f"lambda must be positive, got {self.lam}")

    def variance(self, theta, n_e: int, eps: float = EPS_THETA) -> np.ndarray:
        raise NotImplementedError

    def penalty(self, theta, n_e: int) -> float:
        raise NotImplementedError

    def covariance(self, theta, n_e: int, eps: float = EPS_THETA) -> np.ndarray:
        return np.diag(self.variance(theta, n_e, eps))

    def restrict(self, keep: Sequence[int]) -> "NoiseSpec":
        """Spec for the sub-vector ``theta[keep]``."""
        return self

    def scale(self, n_e: int) -> float:
        """``n_e * max V(e)`` at unit coefficients, the size used by the regularity guard."""
        return float(n_e * np.max(self.variance(np.ones(1), n_e)))


@dataclass(frozen=True)
class Bridge(NoiseSpec):
    """``V = lam |theta|^-gamma``; gamma=1 is lasso-type, gamma=0 ridge-type."""

    gamma: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not 0 <= self.gamma < 2:
            raise ValidationError(f"bridge needs 0 <= gamma < 2, got {self.gamma}")

    def variance(self, theta, n_e, eps=EPS_THETA):
        v = self.lam * _floor(theta, eps) ** (-self.gamma)
        return np.minimum(v, VAR_CAP)

    def penalty(self, theta, n_e):
        return float(self.lam * n_e * np.sum(np.abs(theta) ** (2.0 - self.gamma)))


@dataclass(frozen=True)
class ElasticNet(NoiseSpec):
    """``V = lam / |theta| + sigma2``."""

    sigma2: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if not self.sigma2 >= 0:
            raise ValidationError("elastic net needs sigma2 >= 0")

    def variance(self, theta, n_e, eps=EPS_THETA):
        return np.minimum(self.lam / _floor(theta, eps) + self.sigma2, VAR_CAP)

    def penalty(self, theta, n_e):
        theta = np.asarray(theta, dtype=float)
        return float(self.lam * n_e * np.sum(np.abs(theta)) + self.sigma2 * n_e * np.sum(theta**2))


@dataclass(frozen=True)
class AdaptiveLasso(NoiseSpec):
    """``V = lam |theta|^-1 |theta_hat|^-gamma`` with a fixed consistent estimate.

    ``consistent_estimate`` may be omitted when the engine computes it; it
    may also be a p x p matrix in graph mode (row j serves node j).
    """

    gamma: float = 1.0
    consistent_estimate: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        super().__post_init__()
        if self.gamma < 0:
            raise ValidationError("adaptive lasso needs gamma >= 0")

    def _weights(self, q: int, eps: float) -> np.ndarray:
        if self.consistent_estimate is None:
            raise ValidationError("adaptive lasso has no consistent estimate yet")
        est = np.asarray(self.consistent_estimate, dtype=float)
        if est.shape != (q,):
            raise ValidationError(f"consistent estimate has shape {est.shape}, expected ({q},)")
        return _floor(est, eps) ** (-self.gamma)

    def variance(self, theta, n_e, eps=EPS_THETA):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        v = self.lam / _floor(theta, eps) * self._weights(theta.size, eps)
        return np.minimum(v, VAR_CAP)

    def penalty(self, theta, n_e):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return float(self.lam * n_e * np.sum(np.abs(theta) * self._weights(theta.size, EPS_THETA)))

    def with_estimate(self, estimate) -> "AdaptiveLasso":
        return replace(self, consistent_estimate=np.asarray(estimate, dtype=float))

    def restrict(self, keep):
        est = self.consistent_estimate
        if est is None or np.ndim(est) != 1:
            return self
        return replace(self, consistent_estimate=np.asarray(est)[list(keep)])

    def scale(self, n_e):
        if self.consistent_estimate is None or np.ndim(self.consistent_estimate) != 1:
            return float(n_e * self.lam)
        w = _floor(self.consistent_estimate, EPS_THETA) ** (-self.gamma)
        return float(n_e * self.lam * np.max(w))


@dataclass(frozen=True)
class Scad(NoiseSpec):
    """Three-branch SCAD variance keyed on ``|theta|`` against ``lam n_e`` and ``a lam n_e``."""

    a: float = 3.7

    def __post_init__(self):
        super().__post_init__()
        if not self.a > 2:
            raise ValidationError(f"SCAD needs a > 2, got {self.a}")

    def branch(self, theta, n_e) -> np.ndarray:
        """0, 1 or 2 for the small, middle and flat regions."""
        t = np.abs(np.asarray(theta, dtype=float))
        ln = self.lam * n_e
        return np.where(t < ln, 0, np.where(t <= self.a * ln, 1, 2))

    def variance(self, theta, n_e, eps=EPS_THETA):
        t = _floor(theta, eps)
        lam, a = self.lam, self.a
        small = lam / t
        # the constant term carries 1/n_e so that n_e V theta^2 equals the SCAD penalty
        middle = (a * lam / t - lam**2 * n_e / (2 * t**2) - 1.0 / (2 * n_e)) / (a - 1)
        flat = (a + 1) * lam**2 * n_e / (2 * t**2)
        b = self.branch(t, n_e)
        v = np.where(b == 0, small, np.where(b == 1, middle, flat))
        return np.minimum(v, VAR_CAP)

    def penalty(self, theta, n_e):
        t = np.abs(np.asarray(theta, dtype=float))
        ln, a = self.lam * n_e, self.a
        b = self.branch(t, n_e)
        p = np.where(
            b == 0,
            ln * t,
            np.where(b == 1, (2 * a * ln * t - ln**2 - t**2) / (2 * (a - 1)), (a + 1) * ln**2 / 2),
        )
        return float(np.sum(p))

    def scale(self, n_e):
        return float(n_e * self.lam)


@dataclass(frozen=True)
class GroupLasso(NoiseSpec):
    """``V = lam * s_l / ||theta_l||`` for every member of group ``l``.

    ``s_l = sqrt(p_l)`` when ``size_factor`` is true (the default), else 1.
    """

    groups: tuple = ()
    size_factor: bool = True

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "groups", _check_groups(self.groups))

    def _group_of(self, q: int) -> list[tuple[int, ...]]:
        _check_groups(self.groups, q)
        return list(self.groups)

    def variance(self, theta, n_e, eps=EPS_THETA):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        v = np.empty(theta.size)
        for g in self._group_of(theta.size):
            idx = list(g)
            norm = max(float(np.linalg.norm(theta[idx])), eps)
            s = np.sqrt(len(idx)) if self.size_factor else 1.0
            v[idx] = self.lam * s / norm
        return np.minimum(v, VAR_CAP)

    def penalty(self, theta, n_e):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        total = 0.0
        for g in self._group_of(theta.size):
            s = np.sqrt(len(g)) if self.size_factor else 1.0
            total += s * float(np.linalg.norm(theta[list(g)]))
        return self.lam * n_e * total

    def restrict(self, keep):
        pos = {int(k): i for i, k in enumerate(keep)}
        gs = [tuple(pos[i] for i in g if i in pos) for g in self.groups]
        return replace(self, groups=tuple(g for g in gs if g))

    def scale(self, n_e):
        s = np.sqrt(max(len(g) for g in self.groups)) if self.size_factor else 1.0
        return float(n_e * self.lam * s)


def fused_transform(q: int) -> np.ndarray:
    """``T`` with ones on the diagonal and -1 just below it, wrapping the last column to row 0."""
    T = np.eye(q)
    for s in range(q):
        T[(s + 1) % q, s] -= 1.0
    return T


@dataclass(frozen=True)
class FusedRidge(NoiseSpec):
    """Within each group the noise is ``N(0, lam T T')``; penalty sums cyclic squared differences."""

    groups: tuple = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "groups", _check_groups(self.groups))

    def covariance(self, theta, n_e, eps=EPS_THETA):
        q = np.atleast_1d(theta).size
        _check_groups(self.groups, q)
        C = np.zeros((q, q))
        for g in self.groups:
            T = fused_transform(len(g))
            C[np.ix_(g, g)] = self.lam * T @ T.T
        return C

    def variance(self, theta, n_e, eps=EPS_THETA):
        return np.diag(self.covariance(theta, n_e, eps)).copy()

    def penalty(self, theta, n_e):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return float(n_e * theta @ self.covariance(theta, n_e) @ theta)

    def restrict(self, keep):
        pos = {int(k): i for i, k in enumerate(keep)}
        gs = [tuple(pos[i] for i in g if i in pos) for g in self.groups]
        return replace(self, groups=tuple(g for g in gs if g))

    def scale(self, n_e):
        return float(2.0 * n_e * self.lam)


def noise_variance(spec: NoiseSpec, theta, n_e: int, eps: float = EPS_THETA) -> np.ndarray:
    """Per-coefficient noise variances at ``theta`` (``|theta|`` floored at ``eps``)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(theta)):
        raise ValidationError("theta must be finite")
    return spec.variance(theta, n_e, eps)


def sample_noise(spec: NoiseSpec, theta, n_e: int, rng: np.random.Generator, eps: float = EPS_THETA) -> np.ndarray:
    """Draw an ``n_e x q`` block of independent noise rows."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    q = theta.size
    if isinstance(spec, FusedRidge):
        _check_groups(spec.groups, q)
        z = rng.standard_normal((n_e, q))
        e = np.zeros((n_e, q))
        for g in spec.groups:
            idx = list(g)
            e[:, idx] = np.sqrt(spec.lam) * z[:, idx] @ fused_transform(len(g)).T
        return e
    sd = np.sqrt(noise_variance(spec, theta, n_e, eps))
    return rng.standard_normal((n_e, q)) * sd


def expected_penalty(spec: NoiseSpec, theta, n_e: int) -> float:
    """Closed-form expectation of ``sum_i (e_i' theta)^2`` over the noise."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(theta)):
        raise ValidationError("theta must be finite")
    return spec.penalty(theta, n_e)


_SPEC_TYPES = {
    "bridge": Bridge,
    "lasso": Bridge,
    "ridge": Bridge,
    "elasticnet": ElasticNet,
    "adaptivelasso": AdaptiveLasso,
    "scad": Scad,
    "grouplasso": GroupLasso,
    "fusedridge": FusedRidge,
}


def parse_noise(obj) -> NoiseSpec:
    """Build a spec from a dict (config file) or a string such as ``bridge:lambda=0.01,gamma=1``.

    Groups in strings use ``groups=0-1-2|3-4``.
    """
    if isinstance(obj, NoiseSpec):
        return obj
    if isinstance(obj, str):
        text = obj.strip()
        if text.startswith("{"):
            return parse_noise(json.loads(text))
        name, _, rest = text.partition(":")
        d: dict = {"type": name}
        for item in filter(None, rest.split(",")):
            key, _, val = item.partition("=")
            d[key.strip()] = val.strip()
        obj = d
    d = {str(k).lower().replace("_", "").replace("-", ""): v for k, v in dict(obj).items()}
    kind = str(d.pop("type", d.pop("kind", "bridge"))).lower().replace("_", "").replace("-", "")
    if kind not in _SPEC_TYPES:
        raise ValidationError(f"unknown noise type {kind!r}")
    cls = _SPEC_TYPES[kind]
    lam = d.pop("lambda", d.pop("lam", None))
    if lam is None:
        raise ValidationError("noise spec needs lambda")
    kw: dict = {"lam": float(lam)}
    if kind == "lasso":
        kw["gamma"] = 1.0
    elif kind == "ridge":
        kw["gamma"] = 0.0
    if "gamma" in d:
        kw["gamma"] = float(d.pop("gamma"))
    if "sigma2" in d:
        kw["sigma2"] = float(d.pop("sigma2"))
    if "a" in d:
        kw["a"] = float(d.pop("a"))
    if "sizefactor" in d:
        v = d.pop("sizefactor")
        kw["size_factor"] = v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes")
    if "groups" in d:
        g = d.pop("groups")
        if isinstance(g, str):
            g = [[int(i) for i in part.split("-")] for part in g.split("|")]
        kw["groups"] = g
    if "consistentestimate" in d:
        kw["consistent_estimate"] = np.asarray(d.pop("consistentestimate"), dtype=float)
    if d:
        raise ValidationError(f"unused noise parameters {sorted(d)}")
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {kind}: {exc}") from None


def with_lambda(spec: NoiseSpec, lam: float) -> NoiseSpec:
    return replace(spec, lam=float(lam))

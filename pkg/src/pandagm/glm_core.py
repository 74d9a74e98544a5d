"""
Exponential-family regression on noise-augmented designs.

The augmented design stacks an observed block (n rows) on top of a noise
block (n_e rows). The response of the noise rows is a single constant.
Least squares is solved through the normal equations; the other families
are fitted by damped Fisher scoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit, gammaln

from .errors import FitDivergenceError, NumericalRankError, ValidationError

_KINDS = ("gaussian", "bernoulli", "poisson", "exponential", "negbinomial")
_ETA_CLIP = 30.0


@dataclass(frozen=True)
class NodeFamily:
    """Distribution family of a node (or of a GLM response).

    Links: identity for Gaussian, logit for Bernoulli, log for Poisson,
    Exponential and NegBinomial. ``r`` is the fixed NB failure count.
    """

    kind: str
    r: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown family {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "negbinomial":
            if self.r is None or int(self.r) != self.r or self.r < 1:
                raise ValidationError("NegBinomial requires an integer r >= 1")
        elif self.r is not None:
            raise ValidationError(f"family {self.kind!r} takes no r parameter")

    # constructors -----------------------------------------------------
    @classmethod
    def gaussian(cls) -> "NodeFamily":
        return cls("gaussian")

    @classmethod
    def bernoulli(cls) -> "NodeFamily":
        return cls("bernoulli")

    @classmethod
    def poisson(cls) -> "NodeFamily":
        return cls("poisson")

    @classmethod
    def exponential(cls) -> "NodeFamily":
        return cls("exponential")

    @classmethod
    def negbinomial(cls, r: int) -> "NodeFamily":
        return cls("negbinomial", int(r))

    @classmethod
    def parse(cls, text: str) -> "NodeFamily":
        """Parse ``gaussian``, ``poisson``, ``negbinomial:5`` and short aliases."""
        aliases = {"normal": "gaussian", "binary": "bernoulli", "logistic": "bernoulli",
                   "exp": "exponential", "nb": "negbinomial"}
        name, _, arg = text.strip().lower().partition(":")
        name = aliases.get(name, name)
        if name == "negbinomial":
            if not arg:
                raise ValidationError("negbinomial needs a failure count, e.g. negbinomial:5")
            return cls.negbinomial(int(arg))
        return cls(name)

    def __str__(self) -> str:
        return f"negbinomial:{self.r}" if self.kind == "negbinomial" else self.kind

    @property
    def is_gaussian(self) -> bool:
        return self.kind == "gaussian"

    # moments -----------------------------------------------------------
    def mean(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == "gaussian":
            return eta
        if self.kind == "bernoulli":
            return expit(eta)
        return np.exp(np.clip(eta, -_ETA_CLIP, _ETA_CLIP))

    def weight(self, eta):
        """Expected information per observation, d^2/deta^2 of the NLL at y = mean."""
        eta = np.asarray(eta, dtype=float)
        if self.kind == "gaussian" or self.kind == "exponential":
            return np.ones_like(eta)
        mu = self.mean(eta)
        if self.kind == "bernoulli":
            return mu * (1.0 - mu)
        if self.kind == "poisson":
            return mu
        return self.r * mu / (self.r + mu)

    def observed_weight(self, y, eta):
        """Second derivative of the per-observation NLL in eta."""
        eta = np.asarray(eta, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "exponential":
            return y * np.exp(-np.clip(eta, -_ETA_CLIP, _ETA_CLIP))
        if self.kind == "negbinomial":
            mu = self.mean(eta)
            return (self.r + y) * self.r * mu / (self.r + mu) ** 2
        return self.weight(eta)

    def score_eta(self, y, eta):
        """Minus the first derivative of the per-observation NLL in eta."""
        eta = np.asarray(eta, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "gaussian":
            return y - eta
        if self.kind == "exponential":
            return y * np.exp(-np.clip(eta, -_ETA_CLIP, _ETA_CLIP)) - 1.0
        mu = self.mean(eta)
        if self.kind == "negbinomial":
            return self.r * (y - mu) / (self.r + mu)
        return y - mu

    def nll_terms(self, y, eta):
        """Per-observation negative log-likelihood."""
        eta = np.asarray(eta, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "gaussian":
            return 0.5 * (y - eta) ** 2 + 0.5 * np.log(2.0 * np.pi)
        if self.kind == "bernoulli":
            return np.logaddexp(0.0, eta) - y * eta
        if self.kind == "poisson":
            return np.exp(eta) - y * eta + gammaln(y + 1.0)
        if self.kind == "exponential":
            # mean exp(eta): density exp(-eta) * exp(-y exp(-eta))
            return eta + y * np.exp(-eta)
        r = float(self.r)
        const = gammaln(y + r) - gammaln(y + 1.0) - gammaln(r) + r * np.log(r)
        return -(const + y * eta - (r + y) * np.logaddexp(np.log(r), eta))

    def validate(self, y) -> None:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValidationError(f"{self} response contains non-finite values")
        if self.kind == "bernoulli":
            bad = ~np.isin(y, (0.0, 1.0))
            what = "values in {0, 1}"
        elif self.kind in ("poisson", "negbinomial"):
            bad = (y < 0) | (y != np.round(y))
            what = "non-negative integers"
        elif self.kind == "exponential":
            bad = y < 0
            what = "non-negative values"
        else:
            return
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"{self} response needs {what}; row {i} has {y[i]!r}")


@dataclass
class AugmentedDesign:
    """Observed rows stacked over noise rows, with a constant noise response.

    Parameters
    ----------
    observed_block : (n, q) array
    noise_block : (n_e, q) array
    observed_response : (n,) array
    augmented_value : float
        Response of every noise row (0 for a centered Gaussian outcome,
        the outcome's sample mean otherwise).
    """

    observed_block: np.ndarray
    noise_block: np.ndarray
    observed_response: np.ndarray
    augmented_value: float = 0.0

    def __post_init__(self):
        self.observed_block = np.atleast_2d(np.asarray(self.observed_block, dtype=float))
        q = self.observed_block.shape[1]
        nb = np.asarray(self.noise_block, dtype=float)
        self.noise_block = nb.reshape(0, q) if nb.size == 0 else np.atleast_2d(nb)
        self.observed_response = np.asarray(self.observed_response, dtype=float).ravel()
        n = self.observed_block.shape[0]
        if self.noise_block.shape[1] != q:
            raise ValidationError("observed and noise blocks need the same column count")
        if self.observed_response.shape[0] != n:
            raise ValidationError("response length does not match observed rows")
        if n + self.noise_block.shape[0] <= q:
            raise ValidationError(f"need n + n_e > q, got {n} + {self.noise_block.shape[0]} <= {q}")

    @property
    def n(self) -> int:
        return self.observed_block.shape[0]

    @property
    def n_e(self) -> int:
        return self.noise_block.shape[0]

    @property
    def q(self) -> int:
        return self.observed_block.shape[1]

    @property
    def response(self) -> np.ndarray:
        aug = np.full(self.n_e, float(self.augmented_value))
        return np.concatenate([self.observed_response, aug])

    def stacked(self) -> np.ndarray:
        return np.vstack([self.observed_block, self.noise_block])


def _solve_normal(A: np.ndarray, b: np.ndarray, stacked, y) -> np.ndarray:
    """Cholesky solve of ``A theta = b``; pivoted QR on the stacked system if that fails.

    ``stacked`` and ``y`` are callables so the stacked system is only built
    on the fallback path.
    """
    try:
        c = scipy.linalg.cho_factor(A, lower=False, check_finite=False)
        return scipy.linalg.cho_solve(c, b, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        pass
    sol, _, rank, _ = scipy.linalg.lstsq(stacked(), y(), lapack_driver="gelsy")
    if rank < A.shape[0]:
        raise NumericalRankError(f"normal equations have rank {rank} < {A.shape[0]}")
    return sol


def fit_ols(design: AugmentedDesign) -> np.ndarray:
    """Least squares on the stacked design.

    Solves ``(x'x + e'e) theta = x'y + e'1 c`` where ``c`` is the constant
    noise response.
    """
    x, e = design.observed_block, design.noise_block
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(e))):
        raise ValidationError("design contains non-finite entries")
    A = x.T @ x + e.T @ e
    b = x.T @ design.observed_response
    if design.augmented_value != 0.0 and design.n_e:
        b = b + design.augmented_value * e.sum(axis=0)
    return _solve_normal(A, b, design.stacked, lambda: design.response)


def neg_log_likelihood(family: NodeFamily, X, y, theta) -> float:
    """Negative log-likelihood ``-sum h(y) + y eta - B(eta)`` with ``eta = X theta``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    eta = X @ np.asarray(theta, dtype=float)
    return float(np.sum(family.nll_terms(y, eta)))


def fit_glm(
    family: NodeFamily,
    design: AugmentedDesign,
    theta0=None,
    max_iter: int = 100,
    tol: float = 1e-8,
    max_halvings: int = 20,
) -> np.ndarray:
    """Maximum likelihood on the augmented design by damped Fisher scoring.

    The step is halved (at most ``max_halvings`` times) whenever the
    augmented likelihood gets worse. Convergence is declared when the
    score, relative to ``1 + |X'y|``, drops below ``tol`` in sup norm.

    ``theta0`` is used only when its loss beats the zero vector.

    Raises
    ------
    ValidationError
        Observed responses invalid for the family.
    FitDivergenceError
        No convergence within ``max_iter`` iterations.
    """
    if family.is_gaussian:
        return fit_ols(design)
    family.validate(design.observed_response)
    X = design.stacked()
    y = design.response
    q = design.q
    scale = 1.0 + np.max(np.abs(X.T @ y)) if X.size else 1.0
    theta = np.zeros(q)
    eta = X @ theta
    loss = float(np.sum(family.nll_terms(y, eta)))
    if theta0 is not None:
        # a warm start can be far worse than the origin once the noise block changes
        t0 = np.array(theta0, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            l0 = float(np.sum(family.nll_terms(y, X @ t0)))
        if np.isfinite(l0) and l0 < loss:
            theta, eta, loss = t0, X @ t0, l0
    for _ in range(max_iter):
        g = X.T @ family.score_eta(y, eta)
        if np.max(np.abs(g)) / scale < tol:
            return theta
        w = family.weight(eta)
        info = (X * w[:, None]).T @ X
        sw = np.sqrt(w)
        step = _solve_normal(
            info, g, lambda: X * sw[:, None], lambda: family.score_eta(y, eta) / np.maximum(sw, 1e-300)
        )
        s = 1.0
        for _ in range(max_halvings + 1):
            cand = theta + s * step
            eta_c = X @ cand
            loss_c = float(np.sum(family.nll_terms(y, eta_c)))
            if np.isfinite(loss_c) and loss_c <= loss + 1e-12 * abs(loss):
                break
            s *= 0.5
        else:
            # no descent possible at machine precision; accept as optimum
            if np.max(np.abs(g)) / scale < 1e-6:
                return theta
            raise FitDivergenceError(f"{family} IRLS line search failed", theta=theta)
        theta, eta, loss = cand, eta_c, loss_c
    g = X.T @ family.score_eta(y, eta)
    if np.max(np.abs(g)) / scale < tol:
        return theta
    raise FitDivergenceError(f"{family} IRLS did not converge in {max_iter} iterations", theta=theta)

"""
Asymptotic inference for PANDA-regularized GLM coefficients.

The augmented information ``M`` (observed information plus the noise
block) and the observed information ``I_x`` give the per-iteration
sandwich ``M^-1 I_x M^-1``. Banked snapshots add the between-iteration
variance, inflated by ``1 + 1/r`` for the finite number of snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .engine import GlmFit
from .errors import ValidationError
from .glm_core import NodeFamily
from .ngd import NoiseSpec


@dataclass
class InferenceReport:
    theta_bar: np.ndarray
    sigma_bar: np.ndarray
    lambda_between: np.ndarray
    total: np.ndarray
    intervals: np.ndarray
    level: float
    df_nu: float | None = None
    zeroed: np.ndarray | None = None
    names: list | None = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.total), 0.0, None))

    def rows(self) -> list[dict]:
        names = self.names or [f"b{k}" for k in range(len(self.theta_bar))]
        zeroed = self.zeroed if self.zeroed is not None else np.zeros(len(self.theta_bar), bool)
        return [
            {"coefficient": nm, "estimate": float(t), "se": float(s), "lower": float(lo), "upper": float(hi),
             "zeroed": bool(z)}
            for nm, t, s, (lo, hi), z in zip(names, self.theta_bar, self.se, self.intervals, zeroed)
        ]


def _with_intercept(X, intercept: bool) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.column_stack([np.ones(X.shape[0]), X]) if intercept else X


def fisher_augmented(family: NodeFamily, X, spec: NoiseSpec | None, theta, n_e: int, *,
                     intercept: bool = False, noise=None, y=None, aug_value: float | None = None,
                     observed: bool = False) -> np.ndarray:
    """Information of the augmented likelihood at ``theta``.

    Expected form: ``X'W X + n_e w(theta_0) blockdiag(1, Cov(e))`` where
    ``w`` is the family information weight and the leading 1 belongs to
    the intercept (present only when ``intercept``).

    With ``noise`` (an ``n_e x q`` realized block) the noise rows enter
    through their own weights instead. With ``observed=True`` the weights
    are second derivatives of the NLL at the responses ``y`` and
    ``aug_value``, which makes the result the exact Hessian of the
    augmented negative log-likelihood.
    """
    theta = np.asarray(theta, dtype=float)
    Xd = _with_intercept(X, intercept)
    if Xd.shape[1] != theta.size:
        raise ValidationError("theta length does not match the design")
    eta = Xd @ theta
    if observed:
        if y is None:
            raise ValidationError("observed information needs y")
        w = family.observed_weight(y, eta)
    else:
        w = family.weight(eta)
    info = (Xd * w[:, None]).T @ Xd
    theta0 = theta[0] if intercept else 0.0
    slopes = theta[1:] if intercept else theta
    if noise is not None:
        N = _with_intercept(noise, intercept)
        eta_n = N @ theta
        if observed:
            c = aug_value if aug_value is not None else 0.0
            wn = family.observed_weight(np.full(len(eta_n), c), eta_n)
        else:
            wn = family.weight(eta_n)
        return info + (N * wn[:, None]).T @ N
    if spec is None or n_e == 0:
        return info
    q = slopes.size
    C = np.zeros((theta.size, theta.size))
    sl = slice(1, None) if intercept else slice(None)
    C[sl, sl] = spec.covariance(slopes, n_e) if q else np.zeros((0, 0))
    if intercept:
        C[0, 0] = 1.0
    return info + n_e * float(family.weight(np.array(theta0))) * C


def sandwich_covariance(family: NodeFamily, X, spec: NoiseSpec, theta, n_e: int, *,
                        intercept: bool = False, sigma2: float = 1.0) -> np.ndarray:
    """``M^-1 I_x M^-1`` at ``theta``, times ``sigma2`` (Gaussian dispersion)."""
    M = fisher_augmented(family, X, spec, theta, n_e, intercept=intercept)
    Ix = fisher_augmented(family, X, None, theta, 0, intercept=intercept)
    try:
        Minv = np.linalg.inv(M)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("augmented information is singular") from None
    S = sigma2 * Minv @ Ix @ Minv
    return (S + S.T) / 2


def linear_sigma2(X, y, theta, M) -> tuple[float, float]:
    """``(SSE / (n - nu), nu)`` with ``nu = trace(X M^-1 X')``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    nu = float(np.trace(X @ np.linalg.solve(M, X.T)))
    if n <= nu:
        raise ValidationError(f"n = {n} does not exceed nu = {nu:.4g}")
    r = y - X @ np.asarray(theta, dtype=float)
    return float(r @ r / (n - nu)), nu


def confidence_intervals(snapshots, covariances, level: float = 0.95) -> InferenceReport:
    """Combine banked snapshots and their sandwich covariances.

    ``total = mean(Sigma_t) + (1 + 1/r) * Cov(snapshots)`` and the interval
    is ``theta_bar +- z * sqrt(diag(total))``. The sandwich is built from
    unscaled information, so it is already on the scale of the estimate.
    """
    S = np.asarray(snapshots, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    r = S.shape[0]
    if r < 2:
        raise ValidationError("need at least two snapshots for the between-iteration variance")
    if not 0 < level < 1:
        raise ValidationError("level must be in (0, 1)")
    C = np.asarray(covariances, dtype=float).reshape(r, S.shape[1], S.shape[1])
    theta_bar = S.mean(axis=0)
    sigma_bar = C.mean(axis=0)
    lam = np.atleast_2d(np.cov(S, rowvar=False, ddof=1))
    total = sigma_bar + (1.0 + 1.0 / r) * lam
    z = norm.ppf((1 + level) / 2)
    half = z * np.sqrt(np.clip(np.diag(total), 0.0, None))
    iv = np.column_stack([theta_bar - half, theta_bar + half])
    return InferenceReport(theta_bar, sigma_bar, lam, total, iv, level)


def infer_glm(fit: GlmFit, level: float = 0.95, names=None) -> InferenceReport:
    """Intervals for every coefficient of a :func:`run_panda_glm` fit."""
    pb = fit.problem
    covs, nus = [], []
    for th in fit.snapshots:
        if fit.family.is_gaussian:
            M = fisher_augmented(fit.family, fit.X, fit.spec, th, fit.n_e)
            s2, nu = linear_sigma2(fit.X, pb.y, th, M)
            nus.append(nu)
            covs.append(sandwich_covariance(fit.family, fit.X, fit.spec, th, fit.n_e, sigma2=s2))
        else:
            covs.append(sandwich_covariance(fit.family, fit.X, fit.spec, th, fit.n_e, intercept=fit.intercept))
    rep = confidence_intervals(fit.snapshots, covs, level)
    rep.df_nu = float(np.mean(nus)) if nus else None
    rep.zeroed = fit.zeroed.copy()
    if names is None:
        q = fit.X.shape[1]
        names = (["intercept"] if fit.intercept else []) + [f"x{k + 1}" for k in range(q)]
    rep.names = list(names)
    return rep

"""
Gaussian-graph PANDA estimators beyond neighborhood selection.

* :func:`run_panda_cd` sequential regressions of the LDL factorization,
  which gives a symmetric positive definite precision by construction.
* :func:`run_panda_scio` columnwise inverse operator solved in closed form.
* :func:`run_panda_space` regressions parameterized by partial correlations.
* :func:`run_panda_gridge` graphical ridge with noise drawn from ``N(0, lam Omega)``.

All expect standardized Gaussian data.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .engine import (
    FitTrace,
    NodeProblem,
    PandaConfig,
    _rng,
    check_convergence,
    hard_threshold,
    moving_average,
    symmetrize,
)
from .errors import NumericalRankError, ValidationError
from .glm_core import NodeFamily
from .ngd import NoiseSpec

RIDGE_SHIFT = 0.1


@dataclass
class LdlEstimate:
    """``omega = L' D^-1 L`` in the caller's node order.

    ``L`` and ``D`` are in the fitting order ``order``; ``L`` is unit
    lower triangular with ``-theta_jk`` below the diagonal.
    """

    L: np.ndarray
    D: np.ndarray
    omega: np.ndarray
    order: np.ndarray
    adjacency: np.ndarray
    trace: FitTrace

    @property
    def converged(self) -> bool:
        return self.trace.converged


@dataclass
class SpaceEstimate:
    rho: np.ndarray
    omega_diag: np.ndarray
    adjacency: np.ndarray
    trace: FitTrace

    @property
    def converged(self) -> bool:
        return self.trace.converged


@dataclass
class PrecisionEstimate:
    omega: np.ndarray
    adjacency: np.ndarray
    trace: FitTrace

    @property
    def converged(self) -> bool:
        return self.trace.converged


def _check_data(data, cfg: PandaConfig) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValidationError("need an (n, p) matrix with p >= 2")
    if not np.all(np.isfinite(x)):
        raise ValidationError("data contains non-finite values")
    if cfg.convergence.kind == "ztest":
        raise ValidationError("the z-test is available for neighborhood selection and GLMs only")
    return x - x.mean(axis=0)


def _iterate(state, step: Callable, loss: Callable, cfg: PandaConfig):
    """Iterate ``state = step(t, state)`` until convergence or ``T``, then bank ``r`` more states."""
    trace = FitTrace()
    loss_hist: deque = deque(maxlen=cfg.m)
    banked = []
    t, bank_left = 0, None
    while True:
        t += 1
        state = step(t, state)
        loss_hist.append(loss(state))
        trace.loss.append(float(np.mean(loss_hist)))
        if cfg.keep_history:
            trace.thetas.append(np.copy(state))
        if bank_left is None:
            decided = False
            if t >= cfg.min_iter:
                decided, _ = check_convergence(trace, cfg.convergence, 0)
            trace.z_stat.append(None)
            trace.decisions.append(decided)
            if decided or t >= cfg.T:
                if decided:
                    trace.converged_at = t
                trace.banked_from = t + 1
                bank_left = cfg.r
            continue
        trace.z_stat.append(None)
        trace.decisions.append(trace.converged)
        banked.append(np.copy(state))
        bank_left -= 1
        if bank_left == 0:
            return state, np.array(banked), trace


def _ridge_precision(x) -> np.ndarray:
    n, p = x.shape
    return np.linalg.inv(x.T @ x / n + RIDGE_SHIFT * np.eye(p))


# ---------------------------------------------------------------------------
# Cholesky / LDL


def run_panda_cd(data, spec: NoiseSpec, cfg: PandaConfig | None = None, order: Sequence[int] | None = None) -> LdlEstimate:
    """PANDA on the sequential regressions of the LDL factorization.

    Node ``order[j]`` is regressed on ``order[:j]`` with the same ``n_e``
    and noise spec for every ``j``. Each outer iteration makes ``cfg.K``
    noise draws per regression, updating the moving average after each.
    Surviving coefficients take their banked mean; ``D`` averages the
    banked ``SSE / (n - nu)``.
    """
    cfg = cfg or PandaConfig()
    x = _check_data(data, cfg)
    n, p = x.shape
    perm = np.arange(p) if order is None else np.asarray(order, dtype=int)
    if sorted(perm.tolist()) != list(range(p)):
        raise ValidationError("order must be a permutation of the columns")
    xo = x[:, perm]
    n_e = cfg.graph_n_e(p)
    gauss = NodeFamily.gaussian()
    probs = [None] + [NodeProblem(gauss, xo[:, :j], xo[:, j], spec.restrict(range(j)), n_e, cfg.eps_theta)
                      for j in range(1, p)]
    init_rng = _rng(cfg.seed, 0, 0, 10**6) if cfg.init == "random" else None
    hist = [None] + [deque([pb.start(init_rng)], maxlen=cfg.m) for pb in probs[1:]]
    noises = [None] * p

    def to_matrix(coefs) -> np.ndarray:
        B = np.zeros((p, p))
        for j in range(1, p):
            B[j, :j] = coefs[j - 1]
        return B

    def step(t, B):
        coefs = []
        for j in range(1, p):
            pb = probs[j]
            for k in range(cfg.K):
                noise = pb.noise(moving_average(hist[j], cfg.m), _rng(cfg.seed, 0, t, j, k))
                hist[j].append(pb.fit(noise))
                noises[j] = noise
            coefs.append(moving_average(hist[j], cfg.m))
        return to_matrix(coefs)

    def loss(B):
        return float(sum(probs[j].loss(B[j, :j]) for j in range(1, p)))

    sig_bank = []

    def step_banking(t, B):
        B = step(t, B)
        s = np.empty(p)
        s[0] = xo[:, 0] @ xo[:, 0] / (n - 1)
        for j in range(1, p):
            nu = probs[j].dof(noises[j])
            if n - nu <= 0:
                raise ValidationError(f"node {perm[j]}: degrees of freedom {nu:.3g} leave no residual df")
            s[j] = probs[j].loss(B[j, :j]) / (n - nu)
        sig_bank.append(s)
        return B

    B0 = to_matrix([h[-1] for h in hist[1:]])
    _, banked, trace = _iterate(B0, step_banking, loss, cfg)
    tri = np.tril(np.ones((p, p), dtype=bool), -1)
    zeroed, values = hard_threshold(banked, cfg.tau0, value="mean")
    theta = np.where(tri & ~zeroed, values, 0.0)
    L = np.eye(p) - theta
    D = np.mean(sig_bank[-cfg.r:], axis=0)
    om = L.T @ (L / D[:, None])
    om = (om + om.T) / 2
    inv = np.argsort(perm)
    omega = om[np.ix_(inv, inv)]
    adj = np.abs(omega) > 0
    np.fill_diagonal(adj, False)
    return LdlEstimate(L, D, omega, perm, adj, trace)


# ---------------------------------------------------------------------------
# SCIO


def scio_solve(x, noise, j: int) -> tuple[np.ndarray, float]:
    """Column ``j`` of the inverse of the augmented covariance.

    ``Sigma~ = x'x / n + 2 e'e / n_e``, the covariance of the stacked rows
    ``sqrt((n + n_e) / n) x`` and ``sqrt(2 (n + n_e) / n_e) e``. Returns
    the solution and the sup-norm residual of ``Sigma~ theta = 1_j``.
    """
    n = x.shape[0]
    n_e = noise.shape[0]
    S = x.T @ x / n + (2.0 / n_e) * noise.T @ noise if n_e else x.T @ x / n
    rhs = np.zeros(S.shape[0])
    rhs[j] = 1.0
    try:
        c = scipy.linalg.cho_factor(S, check_finite=False)
    except np.linalg.LinAlgError:
        raise NumericalRankError("augmented covariance is singular") from None
    theta = scipy.linalg.cho_solve(c, rhs, check_finite=False)
    return theta, float(np.max(np.abs(S @ theta - rhs)))


def scio_loss(S, theta, j: int) -> float:
    return float(0.5 * theta @ S @ theta - theta[j])


def _floor_signed(v, tau1: float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    small = (np.abs(v) < tau1) & (v != 0)
    return np.where(small, np.sign(v) * tau1, v)


def run_panda_scio(data, spec: NoiseSpec, cfg: PandaConfig | None = None) -> PrecisionEstimate:
    """PANDA for the columnwise inverse operator.

    Column ``j`` of the precision minimizes ``theta' S theta / 2 - theta_j``;
    noise on every coordinate except ``j`` adds the penalty of ``spec``
    with ``n_e`` cancelled by the stacking scale. Small current estimates
    are pushed out to ``+-tau1`` before they set the noise variance.
    """
    cfg = cfg or PandaConfig()
    x = _check_data(data, cfg)
    n, p = x.shape
    n_e = cfg.graph_n_e(p)
    S = x.T @ x / n
    hist = deque([_ridge_precision(x)], maxlen=cfg.m)
    trace_res: list = []

    def step(t, om):
        cur = _floor_signed(om, cfg.tau1)
        new = np.zeros((p, p))
        worst = 0.0
        for j in range(p):
            others = [k for k in range(p) if k != j]
            e = np.zeros((n_e, p))
            sd = np.sqrt(spec.restrict(others).variance(cur[others, j], n_e, cfg.eps_theta))
            e[:, others] = _rng(cfg.seed, 0, t, j).standard_normal((n_e, p - 1)) * sd
            new[:, j], res = scio_solve(x, e, j)
            worst = max(worst, res)
        trace_res.append(worst)
        hist.append(new)
        return moving_average(hist, cfg.m)

    def loss(om):
        return sum(scio_loss(S, om[:, j], j) for j in range(p))

    _, banked, trace = _iterate(hist[-1], step, loss, cfg)
    trace.solve_residual = trace_res
    # the banked column j holds theta_j; transpose so row j is the node-j direction
    zeroed, values = hard_threshold(np.transpose(banked, (0, 2, 1)), cfg.tau0, value="mean")
    np.fill_diagonal(zeroed, False)
    adj, off = symmetrize(values, zeroed, cfg.symmetrize)
    omega = off + np.diag(np.diag(values))
    return PrecisionEstimate(omega, adj, trace)


# ---------------------------------------------------------------------------
# SPACE


def rho_from_precision(omega) -> np.ndarray:
    d = np.sqrt(np.diag(omega))
    rho = -omega / np.outer(d, d)
    np.fill_diagonal(rho, 1.0)
    return rho


def run_panda_space(data, spec: NoiseSpec, cfg: PandaConfig | None = None) -> SpaceEstimate:
    """PANDA in the partial-correlation parameterization.

    Regression ``j`` has slopes ``beta_jk = rho_jk sqrt(w_kk / w_jj)`` with
    ``w`` the precision diagonal. Noise on covariate ``k`` has variance
    ``V(rho_jk) w_jj / w_kk``, which turns the slope penalty into the ``spec``
    penalty on ``rho``. After all regressions the diagonal is refreshed from
    the residual variances, and ``rho_jk = beta_jk sqrt(w_jj / w_kk)`` is
    averaged over the two directions and clamped to ``[-1, 1]``.
    """
    cfg = cfg or PandaConfig()
    x = _check_data(data, cfg)
    n, p = x.shape
    n_e = cfg.graph_n_e(p)
    gauss = NodeFamily.gaussian()
    om0 = _ridge_precision(x)
    rho_hist = deque([rho_from_precision(om0)], maxlen=cfg.m)
    w = [np.diag(om0).copy()]
    probs = [NodeProblem(gauss, x[:, [k for k in range(p) if k != j]], x[:, j], spec, n_e, cfg.eps_theta)
             for j in range(p)]

    def step(t, rho):
        wd = w[0]
        B = np.zeros((p, p))
        sse = np.empty(p)
        for j in range(p):
            others = [k for k in range(p) if k != j]
            v = spec.restrict(others).variance(rho[j, others], n_e, cfg.eps_theta) * wd[j] / wd[others]
            e = _rng(cfg.seed, 0, t, j).standard_normal((n_e, p - 1)) * np.sqrt(v)
            b = probs[j].fit(e)
            B[j, others] = b
            sse[j] = probs[j].loss(b)
        wd = n / np.maximum(sse, 1e-300)
        w[0] = wd
        raw = B * np.sqrt(wd[:, None] / wd[None, :])
        raw = np.clip((raw + raw.T) / 2, -1.0, 1.0)
        np.fill_diagonal(raw, 1.0)
        rho_hist.append(raw)
        return moving_average(rho_hist, cfg.m)

    def loss(rho):
        tot = 0.0
        for j in range(p):
            others = [k for k in range(p) if k != j]
            tot += probs[j].loss(rho[j, others] * np.sqrt(w[0][others] / w[0][j]))
        return tot

    _, banked, trace = _iterate(rho_hist[-1], step, loss, cfg)
    zeroed, values = hard_threshold(banked, cfg.tau0, value="mean")
    np.fill_diagonal(zeroed, False)
    rho = np.where(zeroed, 0.0, np.clip(values, -1.0, 1.0))
    rho = (rho + rho.T) / 2
    np.fill_diagonal(rho, 1.0)
    adj = rho != 0
    np.fill_diagonal(adj, False)
    return SpaceEstimate(rho, w[0].copy(), adj, trace)


# ---------------------------------------------------------------------------
# graphical ridge


def sample_gridge_noise(omega, lam: float, n_e: int, rng: np.random.Generator) -> np.ndarray:
    """``n_e`` rows from ``N(0, lam * omega)``."""
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    p = omega.shape[0]
    if lam == 0 or n_e == 0:
        return np.zeros((n_e, p))
    try:
        U = scipy.linalg.cholesky(omega, lower=False)
    except np.linalg.LinAlgError:
        raise NumericalRankError("current precision is not positive definite") from None
    return np.sqrt(lam) * rng.standard_normal((n_e, p)) @ U


def gaussian_nll(S, omega) -> float:
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return float("inf")
    return float(np.sum(S * omega) - logdet)


def run_panda_gridge(data, lam: float, cfg: PandaConfig | None = None) -> PrecisionEstimate:
    """Graphical ridge by PANDA.

    Each iteration inverts ``x'x / n + e'e / n_e`` with ``e`` drawn from
    ``N(0, lam * Omega)`` at the current moving average. The estimate is
    the mean of the ``r`` banked precisions; it is dense.
    """
    cfg = cfg or PandaConfig()
    x = _check_data(data, cfg)
    n, p = x.shape
    n_e = cfg.graph_n_e(p)
    if lam == 0:
        n_e = 0
    elif n + n_e <= p:
        raise ValidationError("need n + n_e > p")
    S = x.T @ x / n
    hist = deque([_ridge_precision(x)], maxlen=cfg.m)

    def step(t, om):
        e = sample_gridge_noise(om, lam, n_e, _rng(cfg.seed, 0, t, 0))
        C = S + (e.T @ e / n_e if n_e else 0.0)
        try:
            c = scipy.linalg.cho_factor(C, check_finite=False)
        except np.linalg.LinAlgError:
            raise NumericalRankError("augmented sample covariance is singular") from None
        new = scipy.linalg.cho_solve(c, np.eye(p), check_finite=False)
        hist.append((new + new.T) / 2)
        return moving_average(hist, cfg.m)

    _, banked, trace = _iterate(hist[-1], step, lambda om: gaussian_nll(S, om), cfg)
    omega = banked.mean(axis=0)
    omega = (omega + omega.T) / 2
    adj = np.abs(omega) > 0
    np.fill_diagonal(adj, False)
    return PrecisionEstimate(omega, adj, trace)

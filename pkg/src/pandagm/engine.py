"""
PANDA iteration loop for neighborhood selection and single-GLM fits.

Every node regression is refitted each iteration on its observed rows
stacked over fresh noise rows whose variance is set by the noise spec at
the node's moving-average estimate. After convergence the loop runs ``r``
more iterations; those banked snapshots drive thresholding and inference.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.stats import norm

from .errors import FitDivergenceError, PandaRegularityWarning, ValidationError
from .glm_core import AugmentedDesign, NodeFamily, fit_glm, fit_ols
from .ngd import AdaptiveLasso, NoiseSpec, sample_noise

RIDGE_START = 0.1


@dataclass(frozen=True)
class Convergence:
    """Convergence criterion.

    kind : ``"none"`` (run all T iterations), ``"rel"`` or ``"ztest"``.
    """

    kind: str = "rel"
    tol: float = 1e-2
    alpha: float = 0.05

    def __post_init__(self):
        aliases = {"relative": "rel", "relative-change": "rel", "z": "ztest", "z-test": "ztest",
                   "off": "none", "trace": "none"}
        object.__setattr__(self, "kind", aliases.get(self.kind, self.kind))
        if self.kind not in ("none", "rel", "ztest"):
            raise ValidationError(f"unknown convergence criterion {self.kind!r}")
        if not self.tol > 0 or not 0 < self.alpha < 1:
            raise ValidationError("convergence needs tol > 0 and 0 < alpha < 1")


@dataclass
class PandaConfig:
    """Algorithmic settings shared by all PANDA estimators.

    ``n_e=None`` picks a mode-dependent default: 2000 (at least p + 1) for
    graphs, ``max(ceil(n/10), q - n + 1)`` for single GLMs.
    """

    T: int = 100
    n_e: int | None = None
    m: int = 1
    tau0: float = 1e-6
    r: int = 100
    seed: int = 0
    convergence: Convergence = field(default_factory=Convergence)
    symmetrize: str = "intersection"
    min_iter: int = 2
    init: str = "ridge"
    n_starts: int = 1
    K: int = 5
    tau1: float = 1e-6
    eps_theta: float = 1e-8
    keep_history: bool = False

    def __post_init__(self):
        if isinstance(self.convergence, str):
            self.convergence = Convergence(self.convergence)
        elif isinstance(self.convergence, dict):
            self.convergence = Convergence(**self.convergence)
        if self.symmetrize == "min-magnitude":
            self.symmetrize = "union"
        if self.symmetrize not in ("intersection", "union"):
            raise ValidationError(f"unknown symmetrization rule {self.symmetrize!r}")
        if not (self.T >= self.m >= 1):
            raise ValidationError(f"need T >= m >= 1, got T={self.T}, m={self.m}")
        if self.r < 1 or not self.tau0 > 0 or self.K < 1 or self.n_starts < 1:
            raise ValidationError("need r >= 1, tau0 > 0, K >= 1, n_starts >= 1")
        if self.n_e is not None and self.n_e < 0:
            raise ValidationError("n_e must be non-negative")
        if self.init not in ("ridge", "random"):
            raise ValidationError("init must be 'ridge' or 'random'")

    def graph_n_e(self, p: int) -> int:
        return self.n_e if self.n_e is not None else max(2000, p + 1)

    def glm_n_e(self, n: int, q: int) -> int:
        return self.n_e if self.n_e is not None else max(int(np.ceil(n / 10)), q - n + 1)


@dataclass
class FitTrace:
    """Per-iteration record of a PANDA run."""

    loss: list = field(default_factory=list)
    aug_loss: list = field(default_factory=list)
    c1: list = field(default_factory=list)
    z_stat: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    solve_residual: list = field(default_factory=list)
    converged_at: int | None = None
    banked_from: int | None = None
    start: int = 0

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    def __len__(self) -> int:
        return len(self.loss)

    def records(self) -> list[dict]:
        out = []
        for i, loss in enumerate(self.loss):
            rec = {"iter": i + 1, "loss": float(loss)}
            if self.z_stat and self.z_stat[i] is not None:
                rec["z_stat"] = float(self.z_stat[i])
            rec["converged"] = bool(self.decisions[i])
            out.append(rec)
        return out


@dataclass
class Dataset:
    """Numeric data matrix with a family per column."""

    values: np.ndarray
    families: tuple
    names: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValidationError("data must be a 2-D matrix")
        fams = self.families
        if isinstance(fams, (NodeFamily, str)):
            fams = [fams] * self.values.shape[1]
        fams = tuple(NodeFamily.parse(f) if isinstance(f, str) else f for f in fams)
        if len(fams) != self.values.shape[1]:
            raise ValidationError(f"{len(fams)} families for {self.values.shape[1]} columns")
        self.families = fams
        if self.names is None:
            self.names = [f"X{j + 1}" for j in range(self.values.shape[1])]

    @property
    def all_gaussian(self) -> bool:
        return all(f.is_gaussian for f in self.families)


@dataclass
class GraphEstimate:
    """Result of a graph fit.

    theta : symmetric thresholded coefficients (row j regresses node j)
    theta_directed : final moving-average coefficients before symmetrizing
    adjacency : symmetric boolean, false diagonal
    precision : symmetric precision estimate for all-Gaussian graphs
    """

    theta: np.ndarray
    adjacency: np.ndarray
    precision: np.ndarray | None
    sigma2: np.ndarray
    trace: FitTrace
    theta_directed: np.ndarray | None = None
    zeroed: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.trace.converged

    def edges(self) -> list[tuple[int, int, float]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(a), int(b), float(self.theta[a, b])) for a, b in zip(i, j)]


# ---------------------------------------------------------------------------
# small operations


def moving_average(history: Sequence, m: int) -> np.ndarray:
    """Mean of the last ``min(m, len(history))`` entries."""
    if len(history) == 0:
        raise ValidationError("empty history")
    if m < 1:
        raise ValidationError("window must be >= 1")
    tail = list(history)[-m:]
    return np.mean(np.asarray(tail, dtype=float), axis=0)


def hard_threshold(banked, tau0: float, value: str = "last") -> tuple[np.ndarray, np.ndarray]:
    """Zero every entry whose banked sequence straddles zero within ``tau0``.

    An entry is zeroed when ``max * min < 0`` and ``|max * min| < tau0``
    over the banked axis (axis 0). Returns ``(zeroed, values)`` where values
    are the final snapshot (``value="last"``) or the banked mean.
    """
    b = np.asarray(banked, dtype=float)
    if b.ndim == 0 or b.shape[0] < 1:
        raise ValidationError("need at least one banked snapshot")
    prod = b.max(axis=0) * b.min(axis=0)
    zeroed = (prod < 0) & (np.abs(prod) < tau0)
    vals = b[-1] if value == "last" else b.mean(axis=0)
    return zeroed, np.where(zeroed, 0.0, vals)


def _min_magnitude(a, b):
    return np.where(np.abs(a) <= np.abs(b), a, b)


def symmetrize(values, zeroed, rule: str = "intersection") -> tuple[np.ndarray, np.ndarray]:
    """Combine the two regression directions of every node pair.

    intersection: no edge only when both directions are zeroed.
    union: no edge when either direction is zeroed.
    A retained edge takes the smaller-magnitude of its non-zeroed members.
    """
    v = np.asarray(values, dtype=float)
    z = np.asarray(zeroed, dtype=bool)
    vt, zt = v.T, z.T
    if rule == "min-magnitude":
        rule = "union"
    if rule == "intersection":
        adj = ~(z & zt)
    elif rule == "union":
        adj = ~(z | zt)
    else:
        raise ValidationError(f"unknown symmetrization rule {rule!r}")
    both = ~z & ~zt
    val = np.where(both, _min_magnitude(v, vt), np.where(~z, v, vt))
    np.fill_diagonal(adj, False)
    sym = np.where(adj, val, 0.0)
    return adj, sym


# ---------------------------------------------------------------------------
# convergence


def kappa(family: NodeFamily, theta0: float = 0.0) -> float:
    """Graph-type constant of the z-test.

    8 for Gaussian nodes (the loss is the raw SSE); otherwise
    ``2 * w(theta0)^2`` with ``w`` the family information weight.
    """
    if family.is_gaussian:
        return 8.0
    return float(2.0 * family.weight(np.array(theta0)) ** 2)


def c1_constant(thetas, covariances, kappas, n_e: int) -> float:
    """``(n_e / 2) * sqrt(sum_j kappa_j (theta_j' C_j theta_j)^2)``.

    With bridge noise ``theta' C theta = lam ||v||^2`` for
    ``v = theta |theta|^(-gamma/2)``, which is the familiar form.
    """
    tot = 0.0
    for th, C, k in zip(thetas, covariances, kappas):
        th = np.asarray(th, dtype=float)
        C = np.asarray(C, dtype=float)
        s2 = float(th @ C @ th) if C.ndim == 2 else float(np.sum(C * th**2))
        tot += k * s2**2
    return 0.5 * n_e * np.sqrt(tot)


def ztest_statistic(d: float, c1_prev: float, c1_curr: float, n_e: int) -> float:
    """``z = d / sqrt((C1_prev^2 + C1_curr^2) / n_e)``; NaN when both constants vanish."""
    den = np.sqrt((c1_prev**2 + c1_curr**2) / n_e)
    if den == 0:
        return float("nan")
    return float(d / den)


def check_convergence(trace: FitTrace, criterion: Convergence, n_e: int) -> tuple[bool, float | None]:
    """Decision for the latest iteration in ``trace``.

    Returns ``(converged, z)``; ``z`` is ``None`` unless the z-test ran.
    A z-test with vanishing C1 falls back to relative change.
    """
    if criterion.kind == "none" or len(trace.loss) < 2:
        return False, None
    if criterion.kind == "ztest":
        d = trace.aug_loss[-1] - trace.aug_loss[-2]
        z = ztest_statistic(d, trace.c1[-2], trace.c1[-1], n_e)
        if np.isfinite(z):
            return bool(abs(z) <= norm.ppf(1 - criterion.alpha / 2)), z
    prev, cur = trace.loss[-2], trace.loss[-1]
    if prev == cur:
        return True, None
    return bool(abs(cur - prev) / abs(prev) < criterion.tol), None


# ---------------------------------------------------------------------------
# one regression


class NodeProblem:
    """A single regression: response ``y`` on centered covariates ``X``.

    Gaussian responses are centered and fitted without intercept with the
    noise response 0. Other families get an intercept (a column of ones in
    both blocks) and the noise response ``mean(y)``.
    """

    def __init__(self, family: NodeFamily, X, y, spec: NoiseSpec, n_e: int, eps: float = 1e-8):
        self.family = family
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.n, self.q = X.shape
        self.spec = spec
        self.n_e = int(n_e)
        self.eps = eps
        self.intercept = not family.is_gaussian
        if self.intercept:
            family.validate(y)
            self.y = y
            self.aug_value = float(y.mean())
            self.Xd = np.column_stack([np.ones(self.n), X])
        else:
            self.y = y - y.mean()
            self.aug_value = 0.0
            self.Xd = X
            self.xtx = X.T @ X
            self.xty = X.T @ self.y
        if self.n + self.n_e <= self.Xd.shape[1]:
            raise ValidationError(f"need n + n_e > q, got {self.n} + {self.n_e} <= {self.Xd.shape[1]}")

    @property
    def dim(self) -> int:
        return self.Xd.shape[1]

    def slopes(self, coef) -> np.ndarray:
        return np.asarray(coef)[1:] if self.intercept else np.asarray(coef)

    def intercept_of(self, coef) -> float:
        return float(coef[0]) if self.intercept else 0.0

    def noise(self, coef, rng) -> np.ndarray:
        return sample_noise(self.spec, self.slopes(coef), self.n_e, rng, self.eps)

    def design(self, noise) -> AugmentedDesign:
        if self.intercept:
            noise = np.column_stack([np.ones(noise.shape[0]), noise])
        return AugmentedDesign(self.Xd, noise, self.y, self.aug_value)

    def fit(self, noise, start=None) -> np.ndarray:
        if not self.intercept:
            A = self.xtx + noise.T @ noise
            try:
                c = scipy.linalg.cho_factor(A, check_finite=False)
                return scipy.linalg.cho_solve(c, self.xty, check_finite=False)
            except np.linalg.LinAlgError:
                return fit_ols(self.design(noise))
        return fit_glm(self.family, self.design(noise), theta0=start)

    def start(self, rng=None) -> np.ndarray:
        """Ridge-type start from a deterministic block ``sqrt(0.1) I`` (random start if ``rng``)."""
        if rng is not None:
            coef = rng.normal(scale=0.1, size=self.dim)
            if self.intercept:
                coef[0] = self._null_intercept()
            return coef
        block = np.sqrt(RIDGE_START) * np.eye(self.q)
        return self.fit(block, None if not self.intercept else self._null_start())

    def _null_intercept(self) -> float:
        mu = max(self.aug_value, 1e-3)
        if self.family.kind == "bernoulli":
            mu = min(mu, 1 - 1e-3)
            return float(np.log(mu / (1 - mu)))
        return float(np.log(mu))

    def _null_start(self) -> np.ndarray:
        s = np.zeros(self.dim)
        s[0] = self._null_intercept()
        return s

    def loss(self, coef) -> float:
        """Loss on the observed rows: SSE for Gaussian, NLL otherwise."""
        eta = self.Xd @ coef
        if not self.intercept:
            r = self.y - eta
            return float(r @ r)
        return float(np.sum(self.family.nll_terms(self.y, eta)))

    def noise_loss(self, coef, noise) -> float:
        """Loss contributed by the noise rows."""
        eta = noise @ self.slopes(coef) + self.intercept_of(coef)
        if not self.intercept:
            return float(eta @ eta)
        return float(np.sum(self.family.nll_terms(np.full(noise.shape[0], self.aug_value), eta)))

    def kappa(self, coef) -> float:
        return kappa(self.family, self.intercept_of(coef))

    def noise_cov(self, coef) -> np.ndarray:
        return self.spec.covariance(self.slopes(coef), self.n_e, self.eps)

    def dof(self, noise) -> float:
        """``trace(x (x~'x~)^-1 x')`` with the realized noise block."""
        Xt = np.vstack([self.Xd, noise if not self.intercept else np.column_stack([np.ones(len(noise)), noise])])
        G = Xt.T @ Xt
        return float(np.trace(self.Xd @ np.linalg.solve(G, self.Xd.T)))


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *[int(s) for s in stream]])


def consistent_estimate(problem: NodeProblem) -> np.ndarray:
    """Unpenalized fit when n > q, else the ridge-type start (slopes only)."""
    if problem.n > problem.dim:
        coef = problem.fit(np.zeros((0, problem.q)), None if not problem.intercept else problem._null_start())
    else:
        coef = problem.start()
    return problem.slopes(coef)


def _prepare_spec(spec: NoiseSpec, j: int | None, keep: Sequence[int], problem_args) -> NoiseSpec:
    s = spec
    if isinstance(s, AdaptiveLasso) and s.consistent_estimate is not None and np.ndim(s.consistent_estimate) == 2:
        s = s.with_estimate(np.asarray(s.consistent_estimate)[j, list(keep)])
    else:
        s = s.restrict(keep)
    if isinstance(s, AdaptiveLasso) and s.consistent_estimate is None:
        family, X, y, n_e, eps = problem_args
        probe = NodeProblem(family, X, y, s.with_estimate(np.ones(X.shape[1])), n_e, eps)
        s = s.with_estimate(consistent_estimate(probe))
    return s


# ---------------------------------------------------------------------------
# generic loop


@dataclass
class _LoopResult:
    trace: FitTrace
    banked_ma: list
    banked_raw: list
    last_noise: list
    final_ma: list


def _panda_loop(problems: list[NodeProblem], cfg: PandaConfig, n_e: int, start: int) -> _LoopResult:
    """Run the PANDA iterations for a set of independent regressions."""
    init_rng = _rng(cfg.seed, start, 0, 10**6) if (cfg.init == "random" or start > 0) else None
    ma = []
    for j, pb in enumerate(problems):
        try:
            ma.append(pb.start(init_rng))
        except FitDivergenceError as exc:
            raise FitDivergenceError(f"node {j}: {exc}", theta=exc.theta, node=j) from None
    hist = [deque([c], maxlen=cfg.m) for c in ma]
    raw = [c.copy() for c in ma]
    trace = FitTrace(start=start)
    loss_hist: deque = deque(maxlen=cfg.m)
    banked_ma: list = []
    banked_raw: list = []
    last_noise: list = [None] * len(problems)
    t, bank_left = 0, None
    need_aug = cfg.convergence.kind == "ztest"

    while True:
        t += 1
        total, aug, c1_parts = 0.0, 0.0, ([], [], [])
        for j, pb in enumerate(problems):
            noise = pb.noise(ma[j], _rng(cfg.seed, start, t, j))
            try:
                coef = pb.fit(noise, raw[j])
            except FitDivergenceError as exc:
                raise FitDivergenceError(f"node {j}, iteration {t}: {exc}", theta=exc.theta, node=j) from None
            raw[j] = coef
            hist[j].append(coef)
            ma[j] = moving_average(hist[j], cfg.m)
            total += pb.loss(ma[j])
            last_noise[j] = noise
            if need_aug:
                aug += pb.loss(ma[j]) + pb.noise_loss(ma[j], noise)
                c1_parts[0].append(pb.slopes(ma[j]))
                c1_parts[1].append(pb.noise_cov(ma[j]))
                c1_parts[2].append(pb.kappa(ma[j]))
        loss_hist.append(total)
        trace.loss.append(float(np.mean(loss_hist)))
        if cfg.keep_history:
            trace.thetas.append([c.copy() for c in ma])
        if need_aug:
            trace.aug_loss.append(aug)
            trace.c1.append(c1_constant(*c1_parts, n_e))

        if bank_left is None:
            decided, z = (False, None)
            if t >= cfg.min_iter:
                decided, z = check_convergence(trace, cfg.convergence, n_e)
            trace.z_stat.append(z)
            trace.decisions.append(decided)
            if decided or t >= cfg.T:
                if decided:
                    trace.converged_at = t
                trace.banked_from = t + 1
                bank_left = cfg.r
            continue
        trace.z_stat.append(None)
        trace.decisions.append(trace.converged)
        banked_ma.append([c.copy() for c in ma])
        banked_raw.append([c.copy() for c in raw])
        bank_left -= 1
        if bank_left == 0:
            break
    return _LoopResult(trace, banked_ma, banked_raw, last_noise, [c.copy() for c in ma])


def _best_start(run, cfg: PandaConfig):
    best = None
    for s in range(cfg.n_starts):
        res = run(s)
        if best is None or res.trace.loss[-1] < best.trace.loss[-1]:
            best = res
    return best


# ---------------------------------------------------------------------------
# neighborhood selection


def _as_dataset(data, families) -> Dataset:
    if isinstance(data, Dataset):
        return data
    if families is None:
        families = NodeFamily.gaussian()
    return Dataset(np.asarray(data, dtype=float), families)


def standardize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - x.mean(axis=0)) / sd


def _ns_problems(ds: Dataset, spec: NoiseSpec, n_e: int, eps: float) -> list[NodeProblem]:
    x = ds.values
    n, p = x.shape
    xc = x - x.mean(axis=0)
    probs = []
    for j in range(p):
        others = [k for k in range(p) if k != j]
        fam = ds.families[j]
        args = (fam, xc[:, others], x[:, j], n_e, eps)
        probs.append(NodeProblem(fam, xc[:, others], x[:, j], _prepare_spec(spec, j, others, args), n_e, eps))
    return probs


def _to_matrix(vectors: list, problems: list[NodeProblem], p: int) -> np.ndarray:
    M = np.zeros((p, p))
    for j, (v, pb) in enumerate(zip(vectors, problems)):
        others = [k for k in range(p) if k != j]
        M[j, others] = pb.slopes(v)
    return M


def run_panda_ns(data, families=None, spec: NoiseSpec | None = None, cfg: PandaConfig | None = None) -> GraphEstimate:
    """PANDA neighborhood selection.

    Parameters
    ----------
    data : Dataset or (n, p) array
        All-Gaussian data should be standardized by the caller.
    families : NodeFamily, str or sequence, optional
        Per-node families when ``data`` is an array (default Gaussian).
    spec : NoiseSpec
    cfg : PandaConfig

    Returns
    -------
    GraphEstimate
        Check ``.converged``; a run that hit ``T`` is still returned.
    """
    if spec is None:
        raise ValidationError("a noise spec is required")
    cfg = cfg or PandaConfig()
    ds = _as_dataset(data, families)
    x = ds.values
    n, p = x.shape
    if p < 2:
        raise ValidationError("need at least two nodes")
    if not np.all(np.isfinite(x)):
        raise ValidationError("data contains non-finite values")
    n_e = cfg.graph_n_e(p)
    problems = _ns_problems(ds, spec, n_e, cfg.eps_theta)

    res = _best_start(lambda s: _panda_loop(problems, cfg, n_e, s), cfg)
    banked = np.array([_to_matrix(b, problems, p) for b in res.banked_ma])
    zeroed, values = hard_threshold(banked, cfg.tau0)
    np.fill_diagonal(zeroed, True)
    adj, theta = symmetrize(values, zeroed, cfg.symmetrize)
    directed = _to_matrix(res.final_ma, problems, p)

    sigma2 = np.full(p, np.nan)
    for j, pb in enumerate(problems):
        if pb.family.is_gaussian:
            nu = pb.dof(res.last_noise[j])
            if n - nu <= 0:
                raise ValidationError(f"node {j}: degrees of freedom {nu:.3g} leave no residual df")
            sigma2[j] = pb.loss(res.final_ma[j]) / (n - nu)

    precision = None
    if ds.all_gaussian:
        w = 1.0 / sigma2
        om = -theta * w[:, None]  # om[j, k] = -theta_jk * omega_jj, the entry (k, j)
        om = om.T
        om = _min_magnitude(om, om.T)
        np.fill_diagonal(om, w)
        precision = om
    return GraphEstimate(theta, adj, precision, sigma2, res.trace, directed, zeroed)


# ---------------------------------------------------------------------------
# single GLM


@dataclass
class GlmFit:
    """PANDA fit of one regression with everything inference needs."""

    family: NodeFamily
    spec: NoiseSpec
    X: np.ndarray
    y: np.ndarray
    n_e: int
    intercept: bool
    snapshots: np.ndarray
    ma_snapshots: np.ndarray
    zeroed: np.ndarray
    theta: np.ndarray
    trace: FitTrace
    problem: NodeProblem = field(repr=False)

    @property
    def converged(self) -> bool:
        return self.trace.converged


def run_panda_glm(X, y, family: NodeFamily | str = "gaussian", spec: NoiseSpec | None = None,
                  cfg: PandaConfig | None = None) -> GlmFit:
    """PANDA for a single regression of ``y`` on ``X`` (columns centered internally).

    Gaussian outcomes are centered and fitted without intercept; other
    families carry an unpenalized intercept as coefficient 0.
    Warns with :class:`PandaRegularityWarning` when ``n_e * V(e)`` at unit
    coefficients reaches ``sqrt(n)``.
    """
    if spec is None:
        raise ValidationError("a noise spec is required")
    cfg = cfg or PandaConfig()
    family = NodeFamily.parse(family) if isinstance(family, str) else family
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, q = X.shape
    if y.shape[0] != n:
        raise ValidationError("X and y have different row counts")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite values in X or y")
    n_e = cfg.glm_n_e(n, q)
    xc = X - X.mean(axis=0)
    args = (family, xc, y, n_e, cfg.eps_theta)
    s = _prepare_spec(spec, None, list(range(q)), args)
    pb = NodeProblem(family, xc, y, s, n_e, cfg.eps_theta)
    if s.scale(n_e) >= np.sqrt(n):
        warnings.warn(
            f"n_e * V(e) = {s.scale(n_e):.3g} is not small against sqrt(n) = {np.sqrt(n):.3g}; "
            "intervals may under-cover",
            PandaRegularityWarning,
            stacklevel=2,
        )
    res = _best_start(lambda st: _panda_loop([pb], cfg, n_e, st), cfg)
    snaps = np.array([b[0] for b in res.banked_raw])
    ma = np.array([b[0] for b in res.banked_ma])
    zeroed, values = hard_threshold(ma, cfg.tau0)
    if pb.intercept:
        zeroed[0] = False
    return GlmFit(family, s, xc, y, n_e, pb.intercept, snaps, ma, zeroed, values, res.trace, pb)

"""
Synthetic graphs, samplers and evaluation helpers for the benchmarks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np
import scipy.linalg

from .engine import PandaConfig, run_panda_glm
from .errors import FitDivergenceError, ValidationError
from .glm_core import NodeFamily
from .ngd import NoiseSpec


@dataclass(frozen=True)
class AdjacencySpec:
    """Graph design.

    kind : ``"scalefree"`` (param = attachment count), ``"lattice"``
        (param = bandwidth) or ``"hub"`` (param = number of hubs).
    target_edges : optional; random edges are deleted down to this count.
    """

    kind: str
    p: int
    param: int = 1
    seed: int = 0
    target_edges: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.lower().replace("-", "").replace("_", ""))
        if self.kind not in ("scalefree", "lattice", "hub"):
            raise ValidationError(f"unknown graph kind {self.kind!r}")
        if self.p < 2 or self.param < 1:
            raise ValidationError("need p >= 2 and a positive graph parameter")
        if self.kind == "scalefree" and self.param >= self.p:
            raise ValidationError("attachment count must be below p")
        if self.kind == "hub" and self.param > self.p // 2:
            raise ValidationError("too many hubs for p")


def edge_count(A) -> int:
    return int(np.triu(np.asarray(A, dtype=bool), 1).sum())


def gen_adjacency(spec: AdjacencySpec) -> np.ndarray:
    """Symmetric boolean adjacency with a false diagonal."""
    p = spec.p
    A = np.zeros((p, p), dtype=bool)
    if spec.kind == "scalefree":
        g = nx.barabasi_albert_graph(p, spec.param, seed=spec.seed)
        for i, j in g.edges():
            A[i, j] = A[j, i] = True
    elif spec.kind == "lattice":
        idx = np.arange(p)
        A = (np.abs(idx[:, None] - idx[None, :]) <= spec.param) & (idx[:, None] != idx[None, :])
    else:
        blocks = np.array_split(np.arange(p), spec.param)
        for b in blocks:
            A[b[0], b[1:]] = True
            A[b[1:], b[0]] = True
    if spec.target_edges is not None:
        have = edge_count(A)
        if spec.target_edges > have:
            raise ValidationError(f"design has {have} edges, cannot reach {spec.target_edges}")
        rng = np.random.default_rng([spec.seed, 1])
        i, j = np.nonzero(np.triu(A, 1))
        drop = rng.choice(len(i), size=have - spec.target_edges, replace=False)
        A[i[drop], j[drop]] = False
        A[j[drop], i[drop]] = False
    return A


def gen_precision(A, diag_dominance: float = 0.2, weight: float = 0.4, seed: int = 0) -> np.ndarray:
    """Precision matrix with ``+-weight`` on the edges of ``A``.

    The diagonal is the absolute off-diagonal row sum times
    ``1 + diag_dominance`` (1 for isolated nodes), so the matrix is
    strictly diagonally dominant and hence positive definite.
    """
    A = np.asarray(A, dtype=bool)
    if A.shape[0] != A.shape[1] or not np.array_equal(A, A.T):
        raise ValidationError("adjacency must be square and symmetric")
    if diag_dominance <= 0:
        raise ValidationError("diag_dominance must be positive")
    p = A.shape[0]
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(p, p))
    W = np.triu(np.where(A, weight * signs, 0.0), 1)
    W = W + W.T
    rows = np.abs(W).sum(axis=1)
    d = np.where(rows > 0, rows * (1.0 + diag_dominance), 1.0)
    return W + np.diag(d)


def sample_ggm(omega, n: int, seed: int = 0) -> np.ndarray:
    """``n`` draws from ``N(0, omega^-1)``."""
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    try:
        U = scipy.linalg.cholesky(omega, lower=False)
    except np.linalg.LinAlgError:
        raise ValidationError("precision matrix is not positive definite") from None
    z = np.random.default_rng(seed).standard_normal((n, omega.shape[0]))
    # omega = U'U, so x = U^-1 z has covariance omega^-1
    return scipy.linalg.solve_triangular(U, z.T, lower=False).T


def sample_gibbs(families, theta, n: int, burnin: int = 1000, thin: int = 10, seed: int = 0,
                 intercepts=None, chains: int | None = None) -> np.ndarray:
    """Systematic-scan Gibbs sampler from node conditionals.

    ``theta`` holds the symmetric interactions (diagonal ignored). Runs
    ``chains`` parallel chains (default ``min(n, 100)``), discards
    ``burnin`` scans and keeps every ``thin``-th scan until ``n`` rows.
    Gaussian nodes have unit conditional variance.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    if not np.allclose(theta, theta.T):
        raise ValidationError("interaction matrix must be symmetric")
    fams = [NodeFamily.parse(f) if isinstance(f, str) else f for f in
            ([families] * p if isinstance(families, (str, NodeFamily)) else families)]
    if len(fams) != p:
        raise ValidationError("one family per node required")
    b0 = np.zeros(p) if intercepts is None else np.asarray(intercepts, dtype=float)
    off = theta - np.diag(np.diag(theta))
    for j, f in enumerate(fams):
        if f.kind not in ("gaussian", "bernoulli", "poisson"):
            raise ValidationError(f"no Gibbs conditional for {f}")
        if f.kind == "poisson" and np.any(off[j][[k for k in range(p) if fams[k].kind == "poisson"]] > 0):
            raise ValidationError("Poisson interactions must be non-positive")
    rng = np.random.default_rng(seed)
    c = min(n, 100) if chains is None else int(chains)
    per_chain = -(-n // c)
    x = np.zeros((c, p))
    for j, f in enumerate(fams):
        if f.kind == "poisson":
            x[:, j] = rng.poisson(np.exp(b0[j]), c)
        elif f.kind == "bernoulli":
            x[:, j] = rng.random(c) < 0.5
    out = []

    def scan():
        for j, f in enumerate(fams):
            eta = b0[j] + x @ off[j]
            if f.kind == "bernoulli":
                x[:, j] = rng.random(c) < 1.0 / (1.0 + np.exp(-eta))
            elif f.kind == "poisson":
                x[:, j] = rng.poisson(np.exp(np.minimum(eta, 30.0)))
            else:
                x[:, j] = eta + rng.standard_normal(c)

    for _ in range(burnin):
        scan()
    for _ in range(per_chain):
        for _ in range(thin):
            scan()
        out.append(x.copy())
    return np.concatenate(out, axis=0)[:n]


@dataclass
class RocResult:
    grid: np.ndarray
    points: np.ndarray
    auc: float


def _adjacency_of(fit) -> np.ndarray:
    return np.asarray(getattr(fit, "adjacency", fit), dtype=bool)


def edge_rates(fit, truth) -> tuple[float, float]:
    """(FPR, TPR) over the strict upper triangle."""
    est = np.triu(_adjacency_of(fit), 1)
    tru = np.triu(np.asarray(truth, dtype=bool), 1)
    iu = np.triu_indices(tru.shape[0], 1)
    est, tru = est[iu], tru[iu]
    if tru.sum() == 0:
        raise ValidationError("truth has no edges, TPR undefined")
    neg = (~tru).sum()
    fpr = float((est & ~tru).sum() / neg) if neg else 0.0
    return fpr, float((est & tru).sum() / tru.sum())


def roc_curve(fits: Sequence, truth, grid=None) -> RocResult:
    """ROC points of a set of fits (one per lambda) and trapezoid AUC.

    The endpoints (0, 0) and (1, 1) are added before integrating.
    """
    if len(fits) < 2:
        raise ValidationError("need fits for at least two lambda values")
    pts = np.array([edge_rates(f, truth) for f in fits])
    grid = np.arange(len(fits), dtype=float) if grid is None else np.asarray(grid, dtype=float)
    return RocResult(grid, pts, auc_from_points(pts))


def auc_from_points(points) -> float:
    pts = np.vstack([[0.0, 0.0], np.asarray(points, dtype=float), [1.0, 1.0]])
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    return float(np.trapezoid(pts[:, 1], pts[:, 0]))


def jaccard(a, b) -> float:
    """Jaccard overlap of two edge sets (1 when both are empty)."""
    ea = np.triu(_adjacency_of(a), 1)
    eb = np.triu(_adjacency_of(b), 1)
    union = (ea | eb).sum()
    return 1.0 if union == 0 else float((ea & eb).sum() / union)


# ---------------------------------------------------------------------------
# coverage experiment


@dataclass
class GlmScenario:
    """Regression design for the coverage study.

    covariates : ``("normal", mean, sd)`` or ``("uniform", low, high)``
    """

    family: NodeFamily
    n: int
    beta: np.ndarray
    covariates: tuple = ("normal", 0.0, 1.0)
    intercept: float = 0.0
    noise_sd: float = 1.0

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        q = len(self.beta)
        law, a, b = self.covariates
        if law == "normal":
            X = rng.normal(a, b, size=(self.n, q))
        elif law == "uniform":
            X = rng.uniform(a, b, size=(self.n, q))
        else:
            raise ValidationError(f"unknown covariate law {law!r}")
        eta = self.intercept + X @ self.beta
        f = self.family
        if f.kind == "gaussian":
            y = eta + self.noise_sd * rng.standard_normal(self.n)
        elif f.kind == "poisson":
            y = rng.poisson(np.exp(eta)).astype(float)
        elif f.kind == "bernoulli":
            y = (rng.random(self.n) < 1 / (1 + np.exp(-eta))).astype(float)
        elif f.kind == "exponential":
            y = rng.exponential(np.exp(eta))
        else:
            mu = np.exp(eta)
            y = rng.negative_binomial(f.r, f.r / (f.r + mu)).astype(float)
        return X, y


def spread_beta(q: int = 30, n_zero: int = 9, low: float = 0.5, high: float = 1.0, seed: int = 0) -> np.ndarray:
    """Coefficients with ``n_zero`` trailing zeros and the rest evenly spread in ``[low, high]``."""
    b = np.zeros(q)
    b[: q - n_zero] = np.linspace(low, high, q - n_zero)
    return b


@dataclass
class CoverageResult:
    beta: np.ndarray
    coverage: np.ndarray
    width: np.ndarray
    replicates: int
    failures: list = field(default_factory=list)

    def summary(self, zero: bool = True) -> tuple[float, float, float]:
        """(min CP, max CP, mean width) over the zero (or nonzero) coefficients."""
        mask = self.beta == 0 if zero else self.beta != 0
        return float(self.coverage[mask].min()), float(self.coverage[mask].max()), float(self.width[mask].mean())


def coverage_experiment(gen: GlmScenario, replicates: int, level: float, cfg: PandaConfig,
                        spec: NoiseSpec, seed: int = 0) -> CoverageResult:
    """Coverage and mean width of PANDA intervals across simulated replicates.

    Failed fits are skipped and reported as ``(replicate, message)``.
    """
    from .inference import infer_glm

    q = len(gen.beta)
    hits = np.zeros(q)
    widths = np.zeros(q)
    ok = 0
    failures = []
    for rep in range(replicates):
        rng = np.random.default_rng([seed, rep])
        X, y = gen.draw(rng)
        c = PandaConfig(**{**cfg.__dict__, "seed": seed * 100003 + rep})
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = run_panda_glm(X, y, gen.family, spec, c)
            rep_ = infer_glm(fit, level)
        except (FitDivergenceError, np.linalg.LinAlgError, ValidationError) as exc:
            failures.append((rep, str(exc)))
            continue
        lo, hi = rep_.intervals[:, 0], rep_.intervals[:, 1]
        sl = slice(1, None) if fit.intercept else slice(None)
        hits += (lo[sl] <= gen.beta) & (gen.beta <= hi[sl])
        widths += hi[sl] - lo[sl]
        ok += 1
    if ok == 0:
        raise FitDivergenceError("every replicate failed")
    return CoverageResult(np.asarray(gen.beta), hits / ok, widths / ok, ok, failures)

"""
Command-line front end.

Subcommands: ``fit-graph``, ``fit-glm``, ``infer``, ``simulate``,
``roc-bench`` and ``coverage-bench``. Settings come from an optional JSON
config (``--config``); any flag given on the command line overrides it.

Exit status: 0 success, 2 a fit stopped at ``T`` without converging
(artifacts are still written), 1 invalid input or a failed fit.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import Convergence, Dataset, FitTrace, PandaConfig, run_panda_glm, run_panda_ns
from .errors import FitDivergenceError, NumericalRankError, ValidationError
from .ggm_variants import run_panda_cd, run_panda_gridge, run_panda_scio, run_panda_space
from .glm_core import NodeFamily
from .inference import InferenceReport, infer_glm
from .ngd import NoiseSpec, parse_noise, with_lambda
from .simgen import (AdjacencySpec, GlmScenario, coverage_experiment, edge_count, gen_adjacency, gen_precision,
                     spread_beta, roc_curve, sample_ggm, sample_gibbs)

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
METHODS = ("ns", "cd", "scio", "space", "gridge")


def fmt(v) -> str:
    """17 significant digits, enough to round-trip a double."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# ingestion


def _is_number(text: str) -> bool:
    try:
        return math.isfinite(float(text))
    except ValueError:
        return False


def ingest_csv(path, schema: dict | str | None = None, standardize: bool = True) -> Dataset:
    """Read a CSV with a header into a :class:`Dataset`.

    ``schema`` maps column names to a family string or ``"categorical"``
    (a single string applies to every column; default Gaussian). A
    categorical column with ``k`` levels becomes ``k - 1`` Bernoulli
    indicators against its first level in sorted order. Gaussian columns
    are standardized when ``standardize``.

    Errors name the 1-based data row and the column.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if len(set(header)) != len(header):
        raise ValidationError(f"{path}: duplicate column names")
    if not body:
        raise ValidationError(f"{path}: no data rows")
    for i, r in enumerate(body, start=1):
        if len(r) != len(header):
            raise ValidationError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
    if isinstance(schema, str) or schema is None:
        schema = {h: schema or "gaussian" for h in header}
    unknown = set(schema) - set(header)
    if unknown:
        raise ValidationError(f"{path}: schema names unknown columns {sorted(unknown)}")

    cols, fams, names = [], [], []
    for c, name in enumerate(header):
        kind = str(schema.get(name, "gaussian"))
        cells = [r[c].strip() for r in body]
        for i, v in enumerate(cells, start=1):
            if v == "" or v.upper() in ("NA", "NAN"):
                raise ValidationError(f"{path}: missing value at row {i}, column {name!r}")
        if kind.lower() == "categorical":
            levels = sorted(set(cells))
            if len(levels) < 2:
                raise ValidationError(f"{path}: categorical column {name!r} has a single level")
            for lev in levels[1:]:
                cols.append(np.array([v == lev for v in cells], dtype=float))
                fams.append(NodeFamily.bernoulli())
                names.append(f"{name}={lev}")
            continue
        fam = NodeFamily.parse(kind)
        for i, v in enumerate(cells, start=1):
            if not _is_number(v):
                raise ValidationError(f"{path}: non-numeric value {v!r} at row {i}, column {name!r}")
        col = np.array([float(v) for v in cells])
        for i, v in enumerate(col, start=1):
            try:
                fam.validate(np.array([v]))
            except ValidationError as exc:
                raise ValidationError(f"{path}: row {i}, column {name!r}: {exc}") from None
        if fam.is_gaussian and standardize:
            sd = col.std()
            col = (col - col.mean()) / (sd if sd > 0 else 1.0)
        cols.append(col)
        fams.append(fam)
        names.append(name)
    return Dataset(np.column_stack(cols), tuple(fams), names)


# ---------------------------------------------------------------------------
# writers and readers


def write_matrix(path, M, names=None) -> None:
    M = np.asarray(M)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names if names is not None else [f"X{j + 1}" for j in range(M.shape[1])])
        for row in M:
            w.writerow([fmt(v) for v in row])


def read_matrix(path) -> tuple[np.ndarray, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r] for r in rows[1:]]), rows[0]


def write_edges(path, edges, names) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["node_i", "node_j", "weight"])
        for i, j, v in edges:
            w.writerow([names[i], names[j], fmt(v)])


def read_edges(path) -> list[tuple[str, str, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    return [(a, b, float(v)) for a, b, v in rows[1:]]


def write_trace(path, trace: FitTrace) -> None:
    with open(path, "w") as fh:
        for rec in trace.records():
            fh.write(json.dumps(rec) + "\n")


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_table(path, header, rows, footer: dict | None = None) -> None:
    """Tab-separated table; ``footer`` entries become ``# key<TAB>value`` lines."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
        for k, v in (footer or {}).items():
            fh.write(f"# {k}\t{v if isinstance(v, str) else fmt(v)}\n")


def read_table(path) -> tuple[list, list, dict]:
    """Inverse of :func:`write_table`: ``(header, rows, footer)`` with numeric cells as floats."""
    header, rows, footer = None, [], {}
    with open(path, newline="") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                k, _, v = line[2:].partition("\t")
                footer[k] = float(v) if _is_number(v) else v
            elif header is None:
                header = line.split("\t")
            elif line:
                rows.append([float(c) if _is_number(c) else c for c in line.split("\t")])
    return header, rows, footer


def write_inference(path, report: InferenceReport) -> None:
    rows = [[r["coefficient"], r["estimate"], r["se"], r["lower"], r["upper"], r["zeroed"]] for r in report.rows()]
    write_table(path, ["coefficient", "estimate", "se", "lower", "upper", "zeroed"], rows,
                {"level": report.level, **({"df_nu": report.df_nu} if report.df_nu is not None else {})})


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    output: str = "."
    method: str = "ns"
    noise: NoiseSpec | None = None
    lambda_grid: list = field(default_factory=list)
    families: dict | str | None = None
    response: str | None = None
    family: str = "gaussian"
    truth: str | None = None
    level: float = 0.95
    panda: PandaConfig = field(default_factory=PandaConfig)
    graph: dict = field(default_factory=dict)
    n: int = 100
    scenario: dict = field(default_factory=dict)
    replicates: int = 200

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.input is not None and not Path(self.input).exists():
            raise ValidationError(f"{self.input}: no such file")
        if self.truth is not None and not Path(self.truth).exists():
            raise ValidationError(f"{self.truth}: no such file")


_PANDA_KEYS = {"T", "n_e", "m", "tau0", "r", "seed", "symmetrize", "min_iter", "init", "n_starts", "K", "tau1"}


def _parse_grid(v) -> list:
    if v is None:
        return []
    if isinstance(v, str):
        return [float(s) for s in v.replace(";", ",").split(",") if s.strip()]
    return [float(s) for s in v]


def _parse_families(v):
    if v is None or isinstance(v, dict):
        return v
    v = str(v)
    if "=" not in v:
        return v
    out = {}
    for item in v.split(","):
        k, _, f = item.partition("=")
        out[k.strip()] = f.strip()
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge the JSON config named by ``--config`` with explicit flags."""
    raw: dict = {}
    if args.config:
        p = Path(args.config)
        if not p.exists():
            raise ValidationError(f"{p}: no such file")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{p}: invalid JSON ({exc})") from None
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "func")}
    raw.update(flags)
    raw["command"] = args.command

    panda = dict(raw.pop("panda", {}))
    for k in list(raw):
        if k in _PANDA_KEYS:
            panda[k] = raw.pop(k)
    if "max_iter" in raw:
        panda["T"] = raw.pop("max_iter")
    conv = raw.pop("convergence", panda.pop("convergence", None))
    alpha = raw.pop("alpha", None)
    tol = raw.pop("tol", None)
    if conv is not None or alpha is not None or tol is not None:
        c = conv if isinstance(conv, dict) else {"kind": conv or "rel"}
        if alpha is not None:
            c["alpha"] = float(alpha)
        if tol is not None:
            c["tol"] = float(tol)
        panda["convergence"] = Convergence(**c)
    try:
        cfg = PandaConfig(**panda)
    except TypeError as exc:
        raise ValidationError(f"bad PANDA settings: {exc}") from None
    noise = parse_noise(raw.pop("noise")) if raw.get("noise") is not None else None
    known = set(RunConfig.__dataclass_fields__) - {"panda", "noise"}
    extra = set(raw) - known - {"command"}
    if extra:
        raise ValidationError(f"unknown configuration keys {sorted(extra)}")
    raw["lambda_grid"] = _parse_grid(raw.get("lambda_grid"))
    raw["families"] = _parse_families(raw.get("families"))
    return RunConfig(panda=cfg, noise=noise, **raw)


# ---------------------------------------------------------------------------
# commands


def _need(rc: RunConfig, *names):
    for nm in names:
        if getattr(rc, nm) in (None, [], ""):
            raise ValidationError(f"{rc.command} needs --{nm.replace('_', '-')}")


def _fit_graph(ds: Dataset, rc: RunConfig, spec: NoiseSpec):
    if rc.method != "ns" and not ds.all_gaussian:
        raise ValidationError(f"method {rc.method!r} needs all-Gaussian nodes")
    x = ds.values
    if rc.method == "ns":
        return run_panda_ns(ds, spec=spec, cfg=rc.panda)
    if rc.method == "cd":
        return run_panda_cd(x, spec, rc.panda)
    if rc.method == "scio":
        return run_panda_scio(x, spec, rc.panda)
    if rc.method == "space":
        return run_panda_space(x, spec, rc.panda)
    return run_panda_gridge(x, spec.lam, rc.panda)


def _converged(trace: FitTrace, cfg: PandaConfig) -> bool:
    return trace.converged or cfg.convergence.kind == "none"


def cmd_fit_graph(rc: RunConfig) -> int:
    _need(rc, "input", "noise")
    ds = ingest_csv(rc.input, rc.families)
    est = _fit_graph(ds, rc, rc.noise)
    out = Path(rc.output)
    out.mkdir(parents=True, exist_ok=True)
    A = est.adjacency
    if hasattr(est, "theta"):
        W = est.theta
    elif hasattr(est, "rho"):
        W = est.rho
    else:
        W = est.omega
    i, j = np.nonzero(np.triu(A, 1))
    write_edges(out / "edges.tsv", [(a, b, W[a, b]) for a, b in zip(i, j)], ds.names)
    write_matrix(out / "adjacency.csv", A.astype(int), ds.names)
    write_matrix(out / "theta.csv", W, ds.names)
    omega = getattr(est, "precision", None) if hasattr(est, "precision") else getattr(est, "omega", None)
    if omega is not None:
        write_matrix(out / "precision.csv", omega, ds.names)
    write_trace(out / "trace.jsonl", est.trace)
    ok = _converged(est.trace, rc.panda)
    (out / "summary.json").write_text(json.dumps(
        {"method": rc.method, "converged": ok, "iterations": len(est.trace), "edges": edge_count(A)}, indent=2))
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def _glm_data(rc: RunConfig):
    _need(rc, "input", "noise", "response")
    schema = rc.families if isinstance(rc.families, dict) else {}
    schema = {**schema, rc.response: rc.family}
    ds = ingest_csv(rc.input, schema, standardize=False)
    if rc.response not in ds.names:
        raise ValidationError(f"response column {rc.response!r} not found")
    k = ds.names.index(rc.response)
    X = np.delete(ds.values, k, axis=1)
    names = [nm for nm in ds.names if nm != rc.response]
    return X, ds.values[:, k], names


def _fit_glm(rc: RunConfig):
    X, y, names = _glm_data(rc)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = run_panda_glm(X, y, NodeFamily.parse(rc.family), rc.noise, rc.panda)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return fit, names


def cmd_fit_glm(rc: RunConfig) -> int:
    fit, names = _fit_glm(rc)
    out = Path(rc.output)
    out.mkdir(parents=True, exist_ok=True)
    labels = (["intercept"] if fit.intercept else []) + names
    write_table(out / "coefficients.tsv", ["coefficient", "estimate", "zeroed"],
                [[nm, v, z] for nm, v, z in zip(labels, fit.theta, fit.zeroed)])
    write_trace(out / "trace.jsonl", fit.trace)
    return EXIT_OK if _converged(fit.trace, rc.panda) else EXIT_NOT_CONVERGED


def cmd_infer(rc: RunConfig) -> int:
    fit, names = _fit_glm(rc)
    rep = infer_glm(fit, rc.level, (["intercept"] if fit.intercept else []) + names)
    out = Path(rc.output)
    out.mkdir(parents=True, exist_ok=True)
    write_inference(out / "inference.tsv", rep)
    write_trace(out / "trace.jsonl", fit.trace)
    return EXIT_OK if _converged(fit.trace, rc.panda) else EXIT_NOT_CONVERGED


def cmd_simulate(rc: RunConfig) -> int:
    g = dict(rc.graph)
    if "p" not in g:
        raise ValidationError("simulate needs graph.p (or --p)")
    seed = rc.panda.seed
    A = gen_adjacency(AdjacencySpec(g.get("kind", "scalefree"), int(g["p"]), int(g.get("param", 1)), seed,
                                    g.get("target_edges")))
    fam = NodeFamily.parse(rc.family)
    if fam.is_gaussian:
        theta = gen_precision(A, g.get("diag_dominance", 0.2), g.get("weight", 0.4), seed)
        x = sample_ggm(theta, rc.n, seed)
    else:
        w = float(g.get("weight", 0.3))
        signs = np.random.default_rng([seed, 2]).choice([-1.0, 1.0], size=A.shape)
        signs = np.triu(signs, 1)
        signs = signs + signs.T
        if fam.kind == "poisson":
            signs = -np.abs(signs)
        theta = np.where(A, w * signs, 0.0)
        x = sample_gibbs(fam.kind, theta, rc.n, seed=seed)
    out = Path(rc.output)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"X{j + 1}" for j in range(A.shape[0])]
    write_matrix(out / "data.csv", x, names)
    write_matrix(out / "truth.csv", A.astype(int), names)
    write_matrix(out / ("precision.csv" if fam.is_gaussian else "interactions.csv"), theta, names)
    return EXIT_OK


def cmd_roc_bench(rc: RunConfig) -> int:
    _need(rc, "input", "noise", "truth", "lambda_grid")
    ds = ingest_csv(rc.input, rc.families)
    truth, _ = read_matrix(rc.truth)
    if truth.shape != (ds.values.shape[1],) * 2:
        raise ValidationError("truth matrix does not match the data columns")
    fits, flags = [], []
    for lam in rc.lambda_grid:
        est = _fit_graph(ds, rc, with_lambda(rc.noise, lam))
        fits.append(est)
        flags.append(_converged(est.trace, rc.panda))
    roc = roc_curve(fits, truth != 0, rc.lambda_grid)
    out = Path(rc.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = [[lam, f, t, ok] for lam, (f, t), ok in zip(rc.lambda_grid, roc.points, flags)]
    write_table(out / "roc.tsv", ["lambda", "fpr", "tpr", "converged"], rows, {"auc": roc.auc})
    return EXIT_OK if all(flags) else EXIT_NOT_CONVERGED


def _scenario(sc: dict, n_default: int) -> GlmScenario:
    fam = NodeFamily.parse(sc.get("family", "gaussian"))
    b = sc.get("beta")
    if b is None:
        beta = spread_beta(int(sc.get("q", 30)), int(sc.get("n_zero", 9)), sc.get("low", 0.5), sc.get("high", 1.0))
    else:
        beta = np.asarray(b, dtype=float)
    cov = tuple(sc.get("covariates", ("normal", 0.0, 1.0)))
    return GlmScenario(fam, int(sc.get("n", n_default)), beta, cov, float(sc.get("intercept", 0.0)),
                       float(sc.get("noise_sd", 1.0)))


def cmd_coverage_bench(rc: RunConfig) -> int:
    _need(rc, "noise")
    gen = _scenario({"family": rc.family, **rc.scenario}, rc.n)
    res = coverage_experiment(gen, rc.replicates, rc.level, rc.panda, rc.noise, rc.panda.seed)
    out = Path(rc.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = [[f"x{k + 1}", b, c, w] for k, (b, c, w) in enumerate(zip(res.beta, res.coverage, res.width))]
    foot = {"replicates": res.replicates, "failures": len(res.failures)}
    if np.any(res.beta == 0):
        lo, hi, wd = res.summary(True)
        foot.update({"zero_cp_min": lo, "zero_cp_max": hi, "zero_width": wd})
    if np.any(res.beta != 0):
        lo, hi, wd = res.summary(False)
        foot.update({"nonzero_cp_min": lo, "nonzero_cp_max": hi, "nonzero_width": wd})
    write_table(out / "coverage.tsv", ["coefficient", "beta", "coverage", "width"], rows, foot)
    return EXIT_OK


COMMANDS = {
    "fit-graph": cmd_fit_graph,
    "fit-glm": cmd_fit_glm,
    "infer": cmd_infer,
    "simulate": cmd_simulate,
    "roc-bench": cmd_roc_bench,
    "coverage-bench": cmd_coverage_bench,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--config", help="JSON file with the run configuration")
    a("--input", help="CSV data file with a header row")
    a("--output", help="output directory")
    a("--method", choices=METHODS)
    a("--noise", help="noise spec, e.g. bridge:lambda=0.01,gamma=1 or a JSON object")
    a("--lambda-grid", dest="lambda_grid", help="comma-separated lambda values")
    a("--families", help="one family for all columns or name=family pairs")
    a("--response", help="response column for GLM commands")
    a("--family", help="response family for GLM commands")
    a("--truth", help="true adjacency CSV for roc-bench")
    a("--level", type=float, help="confidence level")
    a("--seed", type=int)
    a("--n-e", dest="n_e", type=int)
    a("--m", type=int)
    a("--tau0", type=float)
    a("--r", type=int)
    a("--max-iter", dest="max_iter", type=int)
    a("--convergence", choices=("rel", "ztest", "none"))
    a("--alpha", type=float)
    a("--symmetrize", choices=("intersection", "union"))
    a("--replicates", type=int)
    a("--n", type=int, help="sample size for simulate")

    parser = argparse.ArgumentParser(prog="pandagm", description="PANDA noise augmentation for graphs and GLMs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "simulate":
            sp.add_argument("--graph", help="kind:param, e.g. scalefree:2 or lattice:1")
            sp.add_argument("--p", type=int, help="number of nodes")
    return parser


def _graph_flags(args) -> None:
    g = {}
    if getattr(args, "graph", None):
        kind, _, param = args.graph.partition(":")
        g["kind"] = kind
        if param:
            g["param"] = int(param)
    if getattr(args, "p", None) is not None:
        g["p"] = args.p
    for k in ("graph", "p"):
        if hasattr(args, k):
            delattr(args, k)
    if g:
        args.graph = g


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _graph_flags(args)
        if getattr(args, "graph", None) is not None and args.config:
            cfg_graph = json.loads(Path(args.config).read_text()).get("graph", {}) if Path(args.config).exists() else {}
            args.graph = {**cfg_graph, **args.graph}
        rc = build_config(args)
        return COMMANDS[rc.command](rc)
    except (ValidationError, FitDivergenceError, NumericalRankError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

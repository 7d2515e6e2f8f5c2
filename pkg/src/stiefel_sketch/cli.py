"""Command-line experiments: single runs, preconditioner sweeps, Hessian
diagnostics and synthetic data generation.

Exit codes: 0 converged (or task finished), 2 invalid configuration or
input, 3 iteration cap reached, 4 line-search failure, 5 numerical failure
(singular preconditioner, indefinite Gram matrix).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .cca import CcaProblem, canonical_svd, cca_preconditioners, cca_sketch_size, exact_cca, kappa_star_cca
from .data import feature_split, ingest_csv, ingest_libsvm, synthesize_cca, synthesize_fda, write_libsvm
from .diagnostics import closed_form_cca_spectrum, closed_form_fda_spectrum, materialize_hessian, pencil_condition, suboptimality
from .errors import (
    ConfigError,
    DefinitenessError,
    GeometryError,
    ParseError,
    SingularPreconditionerError,
    StiefelSketchError,
)
from .fda import FdaProblem, canonicalize_fda, fda_pencil, fda_preconditioner, fda_sketch_size, kappa_star_fda, pencil_eigs
from .optim import STATUS_CONVERGED, STATUS_LINESEARCH, STATUS_MAX_ITERS, SolverOptions, solve
from .cca import canonicalize_cca

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MAX_ITERS = 3
EXIT_LINESEARCH = 4
EXIT_NUMERIC = 5

SCHEMA_VERSION = 1
MILESTONES = (1e-2, 1e-4, 1e-6, 1e-8)
PRECOND_CHOICES = ("none", "exact", "sketch", "dominant")
_PRECOND_KIND = {"none": "identity", "exact": "exact", "sketch": "count_sketch", "dominant": "dominant_subspace"}

_RUN_SCHEMA = {
    "type": "object",
    "required": ["setting", "seed", "status", "iterations", "matvecs", "final_cost", "final_grad_norm"],
    "properties": {
        "setting": {"type": "string"},
        "seed": {"type": "integer"},
        "status": {"enum": [STATUS_CONVERGED, STATUS_MAX_ITERS, STATUS_LINESEARCH]},
        "iterations": {"type": "integer", "minimum": 0},
        "matvecs": {"type": "integer", "minimum": 0},
        "final_cost": {"type": "number"},
        "final_grad_norm": {"type": "number", "minimum": 0},
        "values": {"type": "array", "items": {"type": "number"}},
        "trace_file": {"type": "string"},
        "suboptimality": {"type": ["number", "null"]},
        "milestones": {"type": "object"},
    },
}

#: JSON schema of ``summary.json``.
SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "task", "config", "exit_code"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "package_version": {"type": "string"},
        "task": {"enum": ["cca", "fda", "sweep", "diag", "synth"]},
        "problem": {"enum": ["cca", "fda"]},
        "config": {"type": "object"},
        "exit_code": {"type": "integer"},
        "dims": {"type": "object"},
        "reference": {"type": ["object", "null"]},
        "runs": {"type": "array", "items": _RUN_SCHEMA},
        "settings": {"type": "array", "items": {"type": "object"}},
        "diagnostics": {"type": "object"},
        "files": {"type": "array", "items": {"type": "string"}},
    },
}


@dataclass
class ExperimentConfig:
    task: str
    problem: str = "cca"
    data: Optional[str] = None
    data2: Optional[str] = None
    split: str = "halves"
    synth: Optional[str] = None
    p: int = 3
    mu: Optional[list] = None
    lam: float = 0.0
    lam2: Optional[float] = None
    precond: str = "sketch"
    sketch_size: Optional[int] = None
    sketch_sizes: Optional[list] = None
    delta: float = 0.1
    k: Optional[int] = None
    solver: str = "cg"
    grad_tol: float = 1e-6
    max_iters: int = 1000
    seed: int = 0
    seeds: Optional[list] = None
    out: str = "out"
    deterministic: bool = False
    center: bool = False
    warm_start: bool = True
    oracle: bool = True
    threads: Optional[int] = None

    def validate(self):
        if self.task not in ("cca", "fda", "sweep", "diag", "synth"):
            raise ConfigError("task", f"unknown task {self.task!r}")
        if self.problem not in ("cca", "fda"):
            raise ConfigError("problem", "must be cca or fda")
        if self.task in ("cca", "fda"):
            self.problem = self.task
        if self.task != "synth" and self.data is None and self.synth is None:
            raise ConfigError("data", "give --data or --synth")
        if self.data is not None and self.synth is not None:
            raise ConfigError("data", "--data and --synth are mutually exclusive")
        if self.task == "synth" and self.synth is None:
            raise ConfigError("synth", "the synth task needs --synth")
        if self.problem == "fda" and self.data2 is not None:
            raise ConfigError("data2", "FDA takes a single labeled dataset")
        if self.p < 1:
            raise ConfigError("p", "must be at least 1")
        if self.mu is not None and len(self.mu) != self.p:
            raise ConfigError("mu", f"expected {self.p} weights, got {len(self.mu)}")
        if self.lam < 0 or (self.lam2 is not None and self.lam2 < 0):
            raise ConfigError("lambda", "must be nonnegative")
        if self.precond not in PRECOND_CHOICES:
            raise ConfigError("precond", f"must be one of {PRECOND_CHOICES}")
        if self.precond == "dominant" and self.k is None:
            raise ConfigError("k", "the dominant preconditioner needs --k")
        if self.k is not None and self.k < 1:
            raise ConfigError("k", "must be at least 1")
        if self.sketch_size is not None and self.sketch_size < 1:
            raise ConfigError("sketch_size", "must be positive")
        if self.sketch_sizes is not None and any(s < 1 for s in self.sketch_sizes):
            raise ConfigError("sketch_sizes", "must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta", "must lie in (0, 1)")
        if self.solver not in ("cg", "tr"):
            raise ConfigError("solver", "must be cg or tr")
        if self.grad_tol <= 0:
            raise ConfigError("grad_tol", "must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters", "must be at least 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads", "must be at least 1")
        return self

    @property
    def seed_list(self):
        return list(self.seeds) if self.seeds else [self.seed]

    def weights(self):
        if self.mu is not None:
            return list(self.mu)
        if self.p == 3:
            return [3.0, 2.75, 2.0]
        return None

    def options(self):
        return SolverOptions(grad_tol=self.grad_tol, max_iters=self.max_iters, deterministic=self.deterministic)

    def to_dict(self):
        return asdict(self)


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser():
    ap = argparse.ArgumentParser(
        prog="stiefel-sketch",
        description="Sketch-preconditioned Riemannian CCA and FDA.",
    )
    ap.add_argument("--task", required=True, choices=["cca", "fda", "sweep", "diag", "synth"])
    ap.add_argument("--problem", choices=["cca", "fda"], default="cca", help="problem type for sweep/diag/synth")
    ap.add_argument("--data", help="LIBSVM or CSV file (first view for CCA, labeled data for FDA)")
    ap.add_argument("--data2", help="second CCA view; otherwise --data is split by columns")
    ap.add_argument("--split", default="halves", help="'halves' or 'i,j,../k,l,..' (0-based columns)")
    ap.add_argument(
        "--synth",
        help="synthetic data parameters, e.g. 'n=5000,dx=40,dy=30,sigmas=0.9/0.7/0.5/0.3,cond=30,seed=0' "
        "(CCA) or 'n=5000,d=30,classes=3,sep=3,cond=1,seed=0' (FDA)",
    )
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--mu", type=_floats, help="comma-separated weights (default 3,2.75,2 when p=3)")
    ap.add_argument("--lambda", dest="lam", type=float, default=0.0)
    ap.add_argument("--lambda2", dest="lam2", type=float, help="second-view regularizer (CCA); defaults to --lambda")
    ap.add_argument("--precond", choices=PRECOND_CHOICES, default="sketch")
    ap.add_argument("--sketch-size", type=int, help="sketch rows; default from the effective dimension")
    ap.add_argument("--sketch-sizes", type=_ints, help="sweep: comma-separated sketch sizes")
    ap.add_argument("--delta", type=float, default=0.1, help="failure probability for the default sketch size")
    ap.add_argument("--k", type=int, help="rank for the dominant-subspace preconditioner")
    ap.add_argument("--solver", choices=["cg", "tr"], default="cg")
    ap.add_argument("--grad-tol", type=float, default=1e-6)
    ap.add_argument("--max-iters", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--seeds", type=_ints, help="comma-separated seeds (overrides --seed)")
    ap.add_argument("--out", default="out")
    ap.add_argument("--deterministic", action="store_true", help="zero wall times so outputs are byte-reproducible")
    ap.add_argument("--center", action="store_true", help="subtract column means from the CCA views")
    ap.add_argument("--no-warm-start", dest="warm_start", action="store_false")
    ap.add_argument("--no-oracle", dest="oracle", action="store_false", help="skip the dense reference solve")
    ap.add_argument("--threads", type=int, help="sweep parallelism (default STIEFEL_SKETCH_THREADS or 1)")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def config_from_args(ns):
    d = vars(ns).copy()
    return ExperimentConfig(**d).validate()


# data loading -------------------------------------------------------------


def _parse_synth(text):
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, sep, val = part.partition("=")
        if not sep:
            raise ConfigError("synth", f"expected key=value, got {part!r}")
        out[key.strip()] = val.strip()
    return out


def _synth_data(cfg):
    kv = _parse_synth(cfg.synth)
    try:
        if cfg.problem == "cca":
            allowed = {"n", "dx", "dy", "sigmas", "noise", "cond", "seed"}
            bad = set(kv) - allowed
            if bad:
                raise ConfigError("synth", f"unknown keys {sorted(bad)}")
            sig = [float(s) for s in kv.get("sigmas", "0.9/0.7/0.5/0.3").split("/")]
            X, Y = synthesize_cca(
                int(kv.get("n", 5000)),
                int(kv.get("dx", 40)),
                int(kv.get("dy", 30)),
                sig,
                float(kv.get("noise", 0.0)),
                int(kv.get("seed", 0)),
                float(kv.get("cond", 1.0)),
            )
            return X, Y
        allowed = {"n", "d", "classes", "sep", "cond", "seed"}
        bad = set(kv) - allowed
        if bad:
            raise ConfigError("synth", f"unknown keys {sorted(bad)}")
        return synthesize_fda(
            int(kv.get("n", 5000)),
            int(kv.get("d", 30)),
            int(kv.get("classes", 3)),
            float(kv.get("sep", 3.0)),
            int(kv.get("seed", 0)),
            float(kv.get("cond", 1.0)),
        )
    except ValueError as exc:
        if isinstance(exc, StiefelSketchError):
            raise
        raise ConfigError("synth", str(exc)) from None


def _read(path, need_labels):
    if not Path(path).is_file():
        raise ConfigError("data", f"no such file: {path}")
    if path.endswith(".csv"):
        if need_labels:
            A = ingest_csv(path)
            if A.shape[1] < 2:
                raise ConfigError("data", "labeled CSV needs the label in the last column")
            return A[:, :-1], A[:, -1]
        return ingest_csv(path), None
    return ingest_libsvm(path)


def _split_rule(text):
    if text in ("halves", "left_right_halves"):
        return "left_right_halves"
    try:
        left, right = text.split("/")
        return _ints(left), _ints(right)
    except ValueError:
        raise ConfigError("split", f"expected 'halves' or 'i,j/k,l', got {text!r}") from None


def load_problem(cfg):
    """Build the CCA or FDA problem described by ``cfg``."""
    if cfg.problem == "cca":
        if cfg.synth is not None:
            X, Y = _synth_data(cfg)
        else:
            X, _ = _read(cfg.data, False)
            if cfg.data2 is not None:
                Y, _ = _read(cfg.data2, False)
            else:
                X, Y = feature_split(X, _split_rule(cfg.split))
        if cfg.center:
            X = X - X.mean(axis=0)
            Y = Y - Y.mean(axis=0)
        lam2 = cfg.lam if cfg.lam2 is None else cfg.lam2
        if cfg.p > min(X.shape[1], Y.shape[1]):
            raise ConfigError("p", f"p={cfg.p} exceeds min(dx, dy)={min(X.shape[1], Y.shape[1])}")
        return CcaProblem(X, Y, cfg.lam, lam2, cfg.p, cfg.weights())
    if cfg.synth is not None:
        X, labels = _synth_data(cfg)
    else:
        X, labels = _read(cfg.data, True)
    return FdaProblem(X, labels, cfg.lam, cfg.p, cfg.weights())


# reference values ---------------------------------------------------------


def reference_solution(prob):
    """Dense oracle: optimal values and the reference ``sum_i mu_i value_i``."""
    if isinstance(prob, CcaProblem):
        _, _, sigma, _, _ = canonical_svd(prob.X, prob.Y, prob.lambda_x, prob.lambda_y)
        vals = sigma[: prob.p]
        kind = "correlations"
    else:
        SB, Sw = fda_pencil(prob.X, prob.factors.labels, prob.lam)
        rho, _ = pencil_eigs(SB, Sw)
        vals = np.maximum(rho[: prob.p], 0.0)
        sigma = rho
        kind = "rhos"
    ref = float(np.sum(prob.mu * vals))
    if isinstance(prob, FdaProblem):
        ref *= 0.5
    return {"kind": kind, "values": [float(v) for v in vals], "all_values": [float(v) for v in sigma], "objective": ref}


# runs ---------------------------------------------------------------------


@dataclass
class Setting:
    precond: str
    s: Optional[int] = None
    k: Optional[int] = None

    @property
    def name(self):
        if self.precond == "sketch":
            return f"sketch_s{self.s}"
        if self.precond == "dominant":
            return f"dominant_k{self.k}"
        return self.precond


def _preconditioners(prob, setting, seed):
    kind = _PRECOND_KIND[setting.precond]
    if isinstance(prob, CcaProblem):
        (Mx, My), sk = cca_preconditioners(prob, kind, setting.s, seed, setting.k)
        return (Mx, My), sk
    M, sk = fda_preconditioner(prob, kind, setting.s, seed, setting.k)
    return (M,), sk


def _warm_start(prob, G, sketched):
    if isinstance(prob, CcaProblem):
        SX, SY = sketched
        ws = exact_cca(SX, SY, prob.lambda_x, prob.lambda_y, prob.p)
        return G.b_orthonormalize(np.vstack([ws.U, ws.V]))
    Yh = prob.factors.Yhat
    _, V = pencil_eigs(Yh.T @ Yh, sketched.T @ sketched + prob.lam * np.eye(prob.d))
    return G.b_orthonormalize(V[:, : prob.p])


def run_one(prob, setting, seed, cfg, reference=None):
    """One solver run; returns ``(row, trace)``. ``prob`` must not be shared across threads."""
    Ms, sketched = _preconditioners(prob, setting, seed)
    G = prob.geometry(*Ms)
    if cfg.warm_start and sketched is not None:
        x0 = _warm_start(prob, G, sketched)
    else:
        x0 = G.random_point(seed)
    x, trace = solve(prob.as_problem(G), x0, cfg.solver, cfg.options())
    if isinstance(prob, CcaProblem):
        _, _, values = canonicalize_cca(prob, *prob.split(x))
    else:
        _, values = canonicalize_fda(prob, x)
    trace.metadata.update({"setting": setting.name, "seed": int(seed)})
    row = {
        "setting": setting.name,
        "seed": int(seed),
        "status": trace.status,
        "iterations": int(trace.n_iters),
        "matvecs": int(trace.matvecs[-1]),
        "final_cost": float(trace.costs[-1]),
        "final_grad_norm": float(trace.grad_norms[-1]),
        "values": [float(v) for v in values],
        "suboptimality": None,
        "milestones": {},
    }
    if reference is not None and reference["objective"] > 0:
        sub = suboptimality(trace, reference["objective"])
        row["suboptimality"] = float(sub[-1])
        for m in MILESTONES:
            hit = np.flatnonzero(sub <= m)
            row["milestones"][f"{m:g}"] = int(trace.iters[hit[0]]) if hit.size else None
    return row, trace


def _exit_for(rows):
    statuses = {r["status"] for r in rows}
    if STATUS_LINESEARCH in statuses:
        return EXIT_LINESEARCH
    if STATUS_MAX_ITERS in statuses:
        return EXIT_MAX_ITERS
    return EXIT_OK


def _dims(prob):
    if isinstance(prob, CcaProblem):
        return {"n": prob.n, "dx": prob.dx, "dy": prob.dy, "p": prob.p}
    return {"n": prob.n, "d": prob.d, "p": prob.p, "classes": prob.factors.n_classes}


def _default_sketch_size(prob, cfg):
    if cfg.sketch_size is not None:
        return cfg.sketch_size
    if isinstance(prob, CcaProblem):
        return cca_sketch_size(prob, cfg.delta)
    return fda_sketch_size(prob, cfg.delta)


def _write_trace(path, trace, cfg):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        trace.to_csv(fh, zero_time=cfg.deterministic)


def _thread_cap(cfg):
    if cfg.threads is not None:
        return cfg.threads
    try:
        return max(1, int(os.environ.get("STIEFEL_SKETCH_THREADS", "1")))
    except ValueError:
        return 1


def task_solve(cfg, prob, out):
    setting = Setting(cfg.precond, _default_sketch_size(prob, cfg) if cfg.precond == "sketch" else None, cfg.k)
    reference = reference_solution(prob) if cfg.oracle else None
    rows, files = [], []
    for seed in cfg.seed_list:
        row, trace = run_one(prob.fresh(), setting, seed, cfg, reference)
        name = f"trace_{setting.name}_seed{seed}.csv"
        _write_trace(out / name, trace, cfg)
        row["trace_file"] = name
        rows.append(row)
        files.append(name)
    return {"dims": _dims(prob), "reference": reference, "runs": rows, "files": files}, _exit_for(rows)


def task_sweep(cfg, prob, out):
    d = max(prob.dx, prob.dy) if isinstance(prob, CcaProblem) else prob.d
    sizes = cfg.sketch_sizes or [d, 2 * d, 5 * d, 10 * d]
    settings = [Setting("none"), Setting("exact")] + [Setting("sketch", s) for s in sizes]
    if cfg.k is not None:
        settings.append(Setting("dominant", k=cfg.k))
    reference = reference_solution(prob) if cfg.oracle else None
    jobs = [(st, seed) for st in settings for seed in cfg.seed_list]
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)

    def work(job):
        st, seed = job
        row, trace = run_one(prob.fresh(), st, seed, cfg, reference)
        name = f"traces/trace_{st.name}_seed{seed}.csv"
        _write_trace(out / name, trace, cfg)
        row["trace_file"] = name
        return row

    with ThreadPoolExecutor(max_workers=_thread_cap(cfg)) as ex:
        rows = list(ex.map(work, jobs))

    cols = ["setting", "seed", "status", "iterations", "matvecs", "final_grad_norm", "suboptimality"]
    cols += [f"iters_to_{m:g}" for m in MILESTONES]
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            ms = [r["milestones"].get(f"{m:g}") for m in MILESTONES]
            w.writerow(
                [r["setting"], r["seed"], r["status"], r["iterations"], r["matvecs"], repr(r["final_grad_norm"]),
                 "" if r["suboptimality"] is None else repr(r["suboptimality"])]
                + ["" if v is None else v for v in ms]
            )
    summary_rows = []
    for st in settings:
        its = [r["iterations"] for r in rows if r["setting"] == st.name]
        mvs = [r["matvecs"] for r in rows if r["setting"] == st.name]
        summary_rows.append(
            {"setting": st.name, "median_iterations": float(np.median(its)), "median_matvecs": float(np.median(mvs))}
        )
    files = ["sweep.csv"] + [r["trace_file"] for r in rows]
    return {"dims": _dims(prob), "reference": reference, "runs": rows, "settings": summary_rows, "files": files}, EXIT_OK


def task_diag(cfg, prob, out):
    """Hessian spectrum at the dense optimum under the chosen metric, against the closed forms."""
    setting = Setting(cfg.precond, _default_sketch_size(prob, cfg) if cfg.precond == "sketch" else None, cfg.k)
    Ms, _ = _preconditioners(prob, setting, cfg.seed)
    G = prob.geometry(*Ms)
    if isinstance(prob, CcaProblem):
        Wx, Ut, sigma, Vs, Wy = canonical_svd(prob.X, prob.Y, prob.lambda_x, prob.lambda_y)
        Z = np.vstack([Wx @ Ut[:, : prob.p], Wy @ Vs[:, : prob.p]])
        rep = materialize_hessian(prob.as_problem(G), Z)
        diag = {"hessian": rep.to_dict()}
        if prob.p < sigma.size and np.all(np.diff(sigma[: prob.p + 1]) < 0):
            diag["kappa_star"] = kappa_star_cca(sigma[: prob.p + 1], prob.mu)
        if prob.dx >= prob.dy:
            beta = np.concatenate([sigma, np.zeros(prob.dy - sigma.size)])
            diag["closed_form"] = [float(v) for v in closed_form_cca_spectrum(beta, prob.mu, (prob.dx, prob.dy, prob.p))]
        diag["pencil_kappa"] = [pencil_condition(prob.Sxx, Ms[0])[1], pencil_condition(prob.Syy, Ms[1])[1]]
    else:
        SB, Sw = fda_pencil(prob.X, prob.factors.labels, prob.lam)
        rho, V = pencil_eigs(SB, Sw)
        rep = materialize_hessian(prob.as_problem(G), V[:, : prob.p])
        diag = {"hessian": rep.to_dict()}
        if prob.p < rho.size and np.all(np.diff(rho[: prob.p + 1]) < 0):
            diag["kappa_star"] = kappa_star_fda(np.maximum(rho[: prob.p + 1], 0), max(min(rho[-1], rho[prob.p]), 0), prob.mu)
        diag["closed_form"] = [float(v) for v in closed_form_fda_spectrum(rho, prob.mu, prob.p)]
        diag["pencil_kappa"] = [pencil_condition(prob.Sw, Ms[0])[1]]
    diag["setting"] = setting.name
    return {"dims": _dims(prob), "diagnostics": diag}, EXIT_OK


def task_synth(cfg, out):
    if cfg.problem == "cca":
        X, Y = _synth_data(cfg)
        files = ["view1.csv", "view2.csv"]
        for name, A in zip(files, (X, Y)):
            np.savetxt(out / name, A, delimiter=",", fmt="%.17g")
        return {"dims": {"n": X.shape[0], "dx": X.shape[1], "dy": Y.shape[1]}, "files": files}, EXIT_OK
    X, labels = _synth_data(cfg)
    write_libsvm(out / "data.svm", X, labels)
    return {"dims": {"n": X.shape[0], "d": X.shape[1]}, "files": ["data.svm"]}, EXIT_OK


def run_experiment(cfg):
    """Execute ``cfg``; writes artifacts under ``cfg.out`` and returns the exit code."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.task == "synth":
        body, code = task_synth(cfg, out)
    else:
        prob = load_problem(cfg)
        if cfg.task in ("cca", "fda"):
            body, code = task_solve(cfg, prob, out)
        elif cfg.task == "sweep":
            body, code = task_sweep(cfg, prob, out)
        else:
            body, code = task_diag(cfg, prob, out)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "task": cfg.task,
        "problem": cfg.problem,
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
        "exit_code": code,
    }
    summary.update(body)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return code


def main(argv=None):
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return run_experiment(cfg)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SingularPreconditionerError, DefinitenessError, GeometryError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (StiefelSketchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

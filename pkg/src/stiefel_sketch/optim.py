"""Riemannian conjugate gradient and trust-region solvers.

Both solvers work with any geometry exposing ``inner``, ``norm``,
``project``, ``retract``, ``transport``, ``egrad2rgrad`` and
``ehess2rhess``, i.e. :class:`~stiefel_sketch.geometry.GenStiefelGeometry`
and :class:`~stiefel_sketch.geometry.ProductGeometry`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, LineSearchError
from .linops import ProductCounter

TRACE_HEADER = ("iter", "cost", "grad_norm", "matvecs", "time_s")

STATUS_CONVERGED = "gradient_converged"
STATUS_MAX_ITERS = "max_iters"
STATUS_LINESEARCH = "linesearch_failure"


@dataclass
class SolverOptions:
    grad_tol: float = 1e-6
    max_iters: int = 1000
    max_linesearch_steps: int = 25
    cg_beta_rule: str = "polak_ribiere_plus"
    cg_initial_step: str = "bb"
    tr_initial_radius: Optional[float] = None
    tr_max_radius: Optional[float] = None
    armijo_c: float = 1e-4
    armijo_contraction: float = 0.5
    armijo_roundoff: float = 8.0
    tcg_kappa: float = 0.1
    tcg_theta: float = 1.0
    tr_rho_accept: float = 0.1
    reorth_every: int = 100
    deterministic: bool = False

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise DimensionError("grad_tol must be positive")
        if self.max_iters < 1 or self.max_linesearch_steps < 1:
            raise DimensionError("iteration caps must be at least 1")
        if self.cg_initial_step not in ("bb", "adaptive", "interp"):
            raise DimensionError(f"unknown initial step rule {self.cg_initial_step!r}")
        if self.cg_beta_rule != "polak_ribiere_plus":
            raise DimensionError(f"unsupported beta rule {self.cg_beta_rule!r}")
        if not 0 < self.armijo_c < 1 or not 0 < self.armijo_contraction < 1:
            raise DimensionError("Armijo constants must lie in (0, 1)")


@dataclass
class Problem:
    """A cost on a manifold with its Euclidean derivatives.

    ``egrad(X)`` is the gradient of a smooth extension of ``cost`` and
    ``ehess(X, xi)`` its Hessian applied to ``xi``.
    """

    geometry: object
    cost: Callable
    egrad: Callable
    ehess: Optional[Callable] = None
    counter: ProductCounter = field(default_factory=ProductCounter)

    def rgrad(self, X):
        return self.geometry.egrad2rgrad(X, self.egrad(X))

    def rhess(self, X, xi, egrad=None, rgrad=None):
        if self.ehess is None:
            raise DimensionError("problem has no Hessian")
        if egrad is None:
            egrad = self.egrad(X)
        return self.geometry.ehess2rhess(X, egrad, self.ehess(X, xi), xi, rgrad)


@dataclass
class ConvergenceTrace:
    iters: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    matvecs: list = field(default_factory=list)
    times: list = field(default_factory=list)
    status: str = ""
    metadata: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def record(self, it, cost, grad_norm, matvecs, t):
        if self.iters and it <= self.iters[-1]:
            raise ValueError("trace indices must increase")
        self.iters.append(int(it))
        self.costs.append(float(cost))
        self.grad_norms.append(float(grad_norm))
        self.matvecs.append(int(matvecs))
        self.times.append(float(t))

    @property
    def n_iters(self):
        return self.iters[-1] if self.iters else 0

    @property
    def converged(self):
        return self.status == STATUS_CONVERGED

    def rows(self, zero_time=False):
        for row in zip(self.iters, self.costs, self.grad_norms, self.matvecs, self.times):
            it, c, g, m, t = row
            yield it, c, g, m, 0.0 if zero_time else t

    def to_csv(self, fh=None, zero_time=False):
        """Write ``iter,cost,grad_norm,matvecs,time_s`` rows; returns the text if ``fh`` is None."""
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for it, c, g, m, t in self.rows(zero_time):
            w.writerow([it, repr(c), repr(g), m, repr(t)])
        if fh is None:
            return buf.getvalue()

    def to_dict(self, zero_time=False):
        return {
            "status": self.status,
            "metadata": self.metadata,
            "iter": list(self.iters),
            "cost": list(self.costs),
            "grad_norm": list(self.grad_norms),
            "matvecs": list(self.matvecs),
            "time_s": [0.0] * len(self.times) if zero_time else list(self.times),
        }

    def to_json(self, zero_time=False):
        return json.dumps(self.to_dict(zero_time), sort_keys=True)

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {rows[0]}")
        tr = cls()
        for r in rows[1:]:
            tr.record(int(r[0]), float(r[1]), float(r[2]), int(r[3]), float(r[4]))
        return tr


class _Clock:
    def __init__(self, deterministic):
        self.deterministic = deterministic
        self.t0 = time.perf_counter()

    def __call__(self):
        return 0.0 if self.deterministic else time.perf_counter() - self.t0


def armijo_linesearch(problem, x, direction, initial_step, fx=None, df0=None, options=None):
    """Backtracking search along ``retract(x, alpha * direction)``.

    Returns the largest ``alpha = initial_step * contraction**k`` with
    ``f(R(x, alpha d)) <= f(x) + c * alpha * <grad, d>``, up to a slack of a
    few ulps of ``|f(x)|``.

    Returns
    -------
    alpha : float
    x_new : ndarray
    f_new : float
    evals : int
        Number of cost evaluations.

    Raises
    ------
    ValueError
        ``direction`` is not a descent direction.
    LineSearchError
        No acceptable step within ``max_linesearch_steps`` trials.
    """
    opts = options or SolverOptions()
    G = problem.geometry
    if fx is None:
        fx = problem.cost(x)
    if df0 is None:
        df0 = G.inner(x, problem.rgrad(x), direction)
    if not df0 < 0:
        raise ValueError(f"not a descent direction (slope {df0:.3e})")
    alpha = float(initial_step)
    if not alpha > 0 or not math.isfinite(alpha):
        raise ValueError(f"initial step must be positive, got {initial_step}")
    # Decreases below the resolution of the cost cannot be verified.
    slack = opts.armijo_roundoff * np.finfo(float).eps * abs(fx)
    for k in range(1, opts.max_linesearch_steps + 1):
        x_new = G.retract(x, alpha * direction)
        f_new = problem.cost(x_new)
        if f_new <= fx + opts.armijo_c * alpha * df0 + slack:
            return alpha, x_new, f_new, k
        alpha *= opts.armijo_contraction
    raise LineSearchError(f"no sufficient decrease after {opts.max_linesearch_steps} steps")


def _initial_step(rule, G, x, desc, gnorm, df0, fx, hist):
    """First trial step for the line search along ``desc``."""
    dnorm = G.norm(x, desc)
    if hist is None:
        return 1.0 / dnorm
    if rule == "bb":
        s, y = hist["step"], hist["grad_new"] - hist["grad_t"]
        sy = G.inner(x, s, y)
        if sy > 0:
            return G.inner(x, s, s) / sy * gnorm / dnorm
        return 2.0 * hist["step_norm"] / dnorm
    if rule == "interp":
        return max(2.0 * (fx - hist["f_prev"]) / df0, 1e-300)
    # "adaptive": reuse the previous step length, doubled after an immediate acceptance
    return (2.0 if hist["first_try"] else 1.0) * hist["step_norm"] / dnorm


def riemannian_cg(problem, x0, options=None):
    """Riemannian conjugate gradient with Polak-Ribiere+ and Armijo steps.

    Returns
    -------
    x : ndarray
        Final (or best, on line-search failure) iterate.
    trace : ConvergenceTrace
    """
    opts = options or SolverOptions()
    G = problem.geometry
    counter = problem.counter
    clock = _Clock(opts.deterministic)
    trace = ConvergenceTrace(metadata={"solver": "cg", "beta_rule": opts.cg_beta_rule})

    x = np.array(x0, dtype=np.float64)
    fx = problem.cost(x)
    grad = problem.rgrad(x)
    gnorm = G.norm(x, grad)
    trace.record(0, fx, gnorm, counter.count, clock())

    desc = -grad
    hist = None
    status = STATUS_MAX_ITERS
    it = 0
    while True:
        if gnorm <= opts.grad_tol:
            status = STATUS_CONVERGED
            break
        if it >= opts.max_iters:
            break

        df0 = G.inner(x, grad, desc)
        if df0 >= 0:
            desc = -grad
            df0 = -gnorm**2

        alpha0 = _initial_step(opts.cg_initial_step, G, x, desc, gnorm, df0, fx, hist)
        try:
            alpha, x_new, f_new, evals = armijo_linesearch(problem, x, desc, alpha0, fx, df0, opts)
        except LineSearchError:
            if np.allclose(desc, -grad):
                status = STATUS_LINESEARCH
                break
            desc = -grad
            df0 = -gnorm**2
            try:
                alpha, x_new, f_new, evals = armijo_linesearch(
                    problem, x, desc, 1.0 / gnorm, fx, df0, opts
                )
            except LineSearchError:
                status = STATUS_LINESEARCH
                break

        it += 1
        if opts.reorth_every and it % opts.reorth_every == 0:
            x_new = G.b_orthonormalize(x_new)
            f_new = problem.cost(x_new)
        grad_new = problem.rgrad(x_new)
        gnorm_new = G.norm(x_new, grad_new)

        grad_t = G.transport(x, alpha * desc, grad, X_new=x_new)
        desc_t = G.transport(x, alpha * desc, desc, X_new=x_new)
        beta = max(0.0, G.inner(x_new, grad_new, grad_new - grad_t) / gnorm**2)
        desc = -grad_new + beta * desc_t

        hist = {
            "step": alpha * desc_t,
            "grad_t": grad_t,
            "grad_new": grad_new,
            "step_norm": alpha * G.norm(x, desc),
            "first_try": evals == 1,
            "f_prev": fx,
        }
        x, fx, grad, gnorm = x_new, f_new, grad_new, gnorm_new
        trace.record(it, fx, gnorm, counter.count, clock())

    trace.status = status
    return x, trace


def _tcg(problem, x, grad, egrad, delta, opts, max_inner):
    """Steihaug-Toint truncated CG for the trust-region model.

    Returns the step, its Hessian image and a stop-reason string.
    """
    G = problem.geometry
    inner = lambda a, b: G.inner(x, a, b)  # noqa: E731
    hess = lambda v: problem.rhess(x, v, egrad=egrad, rgrad=grad)  # noqa: E731

    eta = G.zero_vector(x)
    Heta = G.zero_vector(x)
    r = grad.copy()
    r_r = inner(r, r)
    norm_r0 = math.sqrt(r_r)
    e_Pe = 0.0
    e_Pd = 0.0
    d_Pd = r_r
    mdelta = -r
    model = 0.0
    stop = "max_inner"
    for j in range(max_inner):
        Hd = hess(mdelta)
        d_Hd = inner(mdelta, Hd)
        alpha = r_r / d_Hd if d_Hd != 0 else math.inf
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha**2 * d_Pd
        if d_Hd <= 0 or e_Pe_new >= delta**2:
            tau = (-e_Pd + math.sqrt(max(e_Pd**2 + d_Pd * (delta**2 - e_Pe), 0.0))) / d_Pd
            eta = eta + tau * mdelta
            Heta = Heta + tau * Hd
            stop = "negative_curvature" if d_Hd <= 0 else "exceeded_radius"
            break
        e_Pe = e_Pe_new
        eta_new = eta + alpha * mdelta
        Heta_new = Heta + alpha * Hd
        model_new = inner(eta_new, grad) + 0.5 * inner(eta_new, Heta_new)
        if model_new >= model:
            stop = "model_increased"
            break
        eta, Heta, model = eta_new, Heta_new, model_new
        r = G.project(x, r + alpha * Hd)
        r_r_old = r_r
        r_r = inner(r, r)
        norm_r = math.sqrt(r_r)
        if norm_r <= norm_r0 * min(norm_r0**opts.tcg_theta, opts.tcg_kappa):
            stop = "target_residual"
            break
        beta = r_r / r_r_old
        mdelta = -r + beta * mdelta
        e_Pd = beta * (e_Pd + alpha * d_Pd)
        d_Pd = r_r + beta**2 * d_Pd
    return eta, Heta, stop


def _cauchy_point(problem, x, grad, gnorm, egrad, delta):
    G = problem.geometry
    Hg = problem.rhess(x, grad, egrad=egrad, rgrad=grad)
    gHg = G.inner(x, grad, Hg)
    tau = 1.0 if gHg <= 0 else min(gnorm**3 / (delta * gHg), 1.0)
    c = -tau * delta / gnorm
    return c * grad, c * Hg


def riemannian_trust_region(problem, x0, options=None):
    """Riemannian trust-region method with a truncated-CG inner solver.

    The trace ``extras`` hold, per outer iteration, the model decrease of the
    step taken and the Cauchy-point decrease, plus whether it was accepted.
    """
    opts = options or SolverOptions()
    G = problem.geometry
    counter = problem.counter
    clock = _Clock(opts.deterministic)
    trace = ConvergenceTrace(metadata={"solver": "tr"})
    trace.extras = {"model_decrease": [], "cauchy_decrease": [], "accepted": [], "tcg_stop": []}

    delta_bar = opts.tr_max_radius or math.sqrt(G.dim) * math.sqrt(G.p)
    delta = opts.tr_initial_radius or delta_bar / 8.0
    max_inner = G.dim

    x = np.array(x0, dtype=np.float64)
    fx = problem.cost(x)
    egrad = problem.egrad(x)
    grad = G.egrad2rgrad(x, egrad)
    gnorm = G.norm(x, grad)
    trace.record(0, fx, gnorm, counter.count, clock())

    status = STATUS_MAX_ITERS
    it = 0
    while True:
        if gnorm <= opts.grad_tol:
            status = STATUS_CONVERGED
            break
        if it >= opts.max_iters:
            break

        eta, Heta, stop = _tcg(problem, x, grad, egrad, delta, opts, max_inner)
        model_dec = -(G.inner(x, grad, eta) + 0.5 * G.inner(x, eta, Heta))
        eta_c, Heta_c = _cauchy_point(problem, x, grad, gnorm, egrad, delta)
        cauchy_dec = -(G.inner(x, grad, eta_c) + 0.5 * G.inner(x, eta_c, Heta_c))
        if not (math.isfinite(model_dec) and model_dec > 0):
            eta, Heta, model_dec, stop = eta_c, Heta_c, cauchy_dec, "cauchy_fallback"

        x_prop = G.retract(x, eta)
        f_prop = problem.cost(x_prop)
        # Regularized ratio guards against round-off near convergence.
        reg = max(1.0, abs(fx)) * np.finfo(float).eps * 1e3
        rho = (fx - f_prop + reg) / (model_dec + reg)

        eta_norm = G.norm(x, eta)
        if rho < 0.25 or not math.isfinite(rho):
            delta *= 0.25
        elif rho > 0.75 and eta_norm >= 0.99 * delta:
            delta = min(2.0 * delta, delta_bar)

        accepted = rho > opts.tr_rho_accept and f_prop <= fx
        it += 1
        if accepted:
            x, fx = x_prop, f_prop
            if opts.reorth_every and it % opts.reorth_every == 0:
                x = G.b_orthonormalize(x)
                fx = problem.cost(x)
            egrad = problem.egrad(x)
            grad = G.egrad2rgrad(x, egrad)
            gnorm = G.norm(x, grad)
        trace.extras["model_decrease"].append(model_dec)
        trace.extras["cauchy_decrease"].append(cauchy_dec)
        trace.extras["accepted"].append(bool(accepted))
        trace.extras["tcg_stop"].append(stop)
        trace.record(it, fx, gnorm, counter.count, clock())
        if delta < 1e-14 * delta_bar:
            status = STATUS_LINESEARCH
            break

    trace.status = status
    return x, trace


def solve(problem, x0, solver="cg", options=None):
    if solver == "cg":
        return riemannian_cg(problem, x0, options)
    if solver == "tr":
        return riemannian_trust_region(problem, x0, options)
    raise DimensionError(f"unknown solver {solver!r}")


def options_dict(opts):
    return asdict(opts)

"""The stochastic primal-dual iteration loop with serial block sampling.

Per iteration: the controller sets (tau, sigma) from the previous iteration's
residual feedback, the primal prox steps against the extrapolated dual image
z = A* ybar, one dual block i is sampled with probability p_i and prox-updated,
and the extrapolation ybar_i = y_i + (1/p_i) * (y_i_new - y_i_old) feeds the
next primal step.

z is maintained incrementally: the running sum w_agg = sum_j A_j* y_j absorbs
one block adjoint per iteration and z = w_agg + (1/p_i) A_i*(y_new - y_old);
a full recomputation every epoch audits and refreshes the aggregate.  The
residuals v (primal subgradient length) and the cosine w reuse that same
adjoint increment, so they cost nothing extra; the dual residual d needs one
more block forward and is optionally row-subsampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import (ControlSchedule, Feedback, StepSizeState, initial_steps,
                      make_controller, validate_init)
from .linop import LinearMap
from .problem import SaddleProblem, bp_warm_start, full_norm, objective
from .validation import check_positive, check_positive_int, check_probs, check_vector

__all__ = [
    "IterationTrace",
    "RunResult",
    "DivergenceError",
    "ConsistencyError",
    "sample_index",
    "compute_vd",
    "compute_d_subsampled",
    "compute_w",
    "run",
    "ASPDHG",
]

# Relative drift allowed between the maintained aggregate z and its from-
# scratch recomputation at epoch boundaries.
_AGGREGATE_TOL = 1e-8

# Below this norm the cosine w is undefined; the neutral value 0 keeps the
# angle rule in its no-change branch.
_W_NORM_FLOOR = 1e-14


class DivergenceError(RuntimeError):
    """Raised when an iterate stops being finite; carries the partial trace."""

    def __init__(self, message: str, trace: "IterationTrace", k: int):
        super().__init__(message)
        self.trace = trace
        self.k = k


class ConsistencyError(RuntimeError):
    """Raised when the maintained dual aggregate drifts from recomputation."""


@dataclass
class IterationTrace:
    """Per-iteration history of one solver run.

    ``objective`` is NaN except on the last iteration of each epoch;
    ``d`` and ``w`` are NaN on iterations where they were not computed.
    """

    k: np.ndarray
    epoch: np.ndarray
    i: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray
    ratio: np.ndarray
    v: np.ndarray
    d: np.ndarray
    w: np.ndarray
    dx_norm: np.ndarray
    objective: np.ndarray
    n_blocks: int = 1

    def __len__(self):
        return len(self.k)

    @property
    def epoch_objectives(self) -> np.ndarray:
        """Objective values recorded at epoch ends, in epoch order."""
        return self.objective[~np.isnan(self.objective)]


class _TraceBuilder:
    _FIELDS = ("k", "epoch", "i", "tau", "sigma", "ratio", "v", "d", "w",
               "dx_norm", "objective")

    def __init__(self, n_blocks: int):
        self.n_blocks = n_blocks
        self.rows: dict[str, list] = {name: [] for name in self._FIELDS}

    def append(self, **values):
        for name in self._FIELDS:
            self.rows[name].append(values[name])

    def finalize(self) -> IterationTrace:
        ints = {"k", "epoch", "i"}
        arrays = {
            name: np.asarray(col, dtype=int if name in ints else float)
            for name, col in self.rows.items()
        }
        return IterationTrace(n_blocks=self.n_blocks, **arrays)


@dataclass
class RunResult:
    """Final iterates plus the full trace of a run."""

    x: np.ndarray
    y: list[np.ndarray]
    trace: IterationTrace
    state: StepSizeState


def sample_index(rng: np.random.Generator, probs, cum=None) -> int:
    """Draw a block index by inverse CDF over the stated order."""
    if cum is None:
        cum = np.cumsum(check_probs(probs))
    i = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(i, len(cum) - 1)


def compute_vd(x_old, x_new, y_old, y_new, tau: float, sigma: float,
               op: LinearMap, p: float):
    """Primal and dual residual lengths for the sampled block.

    v = || (x_old - x_new)/tau - (1/p) A*(y_old - y_new) ||_1 and
    d = (1/p) || (y_old - y_new)/sigma - A (x_old - x_new) ||_1.
    """
    check_positive("tau", tau)
    check_positive("sigma", sigma)
    check_positive("p", p)
    dxp = check_vector("x_old", x_old) - check_vector("x_new", x_new)
    dyp = check_vector("y_old", y_old) - check_vector("y_new", y_new)
    v = float(np.abs(dxp / tau - op.adjoint(dyp) / p).sum())
    d = float(np.abs(dyp / sigma - op.apply(dxp)).sum()) / p
    return v, d


def compute_d_subsampled(x_old, x_new, y_old, y_new, sigma: float, op: LinearMap,
                         p: float, rho: float, rng) -> float:
    """Row-subsampled estimate of the dual residual d.

    Each row enters the mask independently with probability 1/rho and the
    masked l1 norm is scaled back by rho, so the estimate is unbiased.  An
    empty mask draw returns 0 (documented degenerate outcome).  ``rng`` is a
    Generator or an integer mask seed.
    """
    check_positive("sigma", sigma)
    check_positive("p", p)
    if rho < 1.0:
        raise ValueError(f"rho must be >= 1, got {rho!r}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    dyp = check_vector("y_old", y_old) - check_vector("y_new", y_new)
    mask = rng.random(op.range_dim) < 1.0 / rho
    rows = np.nonzero(mask)[0]
    if rows.size == 0:
        return 0.0
    dxp = check_vector("x_old", x_old) - check_vector("x_new", x_new)
    resid = dyp[rows] / sigma - op.apply_rows(dxp, rows)
    return rho * float(np.abs(resid).sum()) / p


def compute_w(x_old, x_new, y_old, y_new, tau: float, op: LinearMap,
              p: float) -> float:
    """Cosine between the primal update direction and its subgradient
    estimate q = (x_old - x_new)/tau - (1/p) A*(y_old - y_new); returns 0
    when either vector is numerically zero."""
    check_positive("tau", tau)
    check_positive("p", p)
    dxp = check_vector("x_old", x_old) - check_vector("x_new", x_new)
    dyp = check_vector("y_old", y_old) - check_vector("y_new", y_new)
    q = dxp / tau - op.adjoint(dyp) / p
    return _cosine(dxp, q)


def _cosine(dxp: np.ndarray, q: np.ndarray) -> float:
    n1 = float(np.linalg.norm(dxp))
    n2 = float(np.linalg.norm(q))
    if n1 < _W_NORM_FLOOR or n2 < _W_NORM_FLOOR:
        return 0.0
    return float(np.clip(float(dxp @ q) / (n1 * n2), -1.0, 1.0))


def run(problem: SaddleProblem, controller, n_epochs: int, seed: int = 0,
        warm_start=None, rho: float | None = None) -> RunResult:
    """Execute n_epochs * n_blocks iterations of the sampled primal-dual loop.

    Parameters
    ----------
    problem : SaddleProblem
    controller : FixedController, RuleAController or RuleBController
        Carries tau0/sigma0 and the update policy; validated against the
        problem before any iteration.
    n_epochs : int
        One epoch is n_blocks iterations, so work is comparable across batch
        counts.
    seed : int
        Seeds block sampling and subsample masks (independent streams).
    warm_start : array or None
        Initial primal iterate (dual blocks always start at zero).
    rho : float or None
        Row-subsampling factor for the dual residual d (None = exact d).
        Only consulted when the controller needs d.

    Raises
    ------
    ValueError
        If the controller's initial steps violate the feasibility condition.
    DivergenceError
        If an iterate stops being finite.
    """
    n_epochs = check_positive_int("n_epochs", n_epochs)
    probs = problem.probs
    ops = problem.ops
    proxes = [blk.conj_prox for blk in problem.dual_blocks]
    n_b = problem.n_blocks

    state = controller.init_state()
    report = validate_init(state.tau, state.sigma, problem.block_norms, probs,
                           controller.beta)
    if not report.ok:
        raise ValueError(str(report))
    norms = np.asarray(problem.block_norms, dtype=float)
    ceilings = np.full(n_b, np.inf)
    live = norms > 0
    ceilings[live] = probs[live] / norms[live] ** 2
    cap = controller.beta * float(ceilings.min())
    state = StepSizeState(tau=state.tau, sigma=state.sigma, alpha=state.alpha,
                          max_product=cap)

    sample_ss, mask_ss = np.random.SeedSequence(seed).spawn(2)
    rng_sample = np.random.default_rng(sample_ss)
    rng_mask = np.random.default_rng(mask_ss)
    cum = np.cumsum(probs)

    if warm_start is None:
        x = np.zeros(problem.primal_dim)
    else:
        x = check_vector("warm_start", warm_start, problem.primal_dim).copy()
    y = [np.zeros(op.range_dim) for op in ops]
    w_agg = np.zeros(problem.primal_dim)  # sum_j A_j* y_j, maintained
    z = w_agg.copy()                      # A* ybar fed to the primal step
    fb = Feedback()
    trace = _TraceBuilder(n_b)
    subsample = rho is not None and controller.needs_d
    if subsample and rho < 1.0:
        raise ValueError(f"rho must be >= 1, got {rho!r}")

    for k in range(n_epochs * n_b):
        state = controller.step(state, fb)
        tau, sigma = state.tau, state.sigma

        x_new = problem.primal_prox.prox(x - tau * z, tau)
        dxp = x - x_new
        dx_norm = float(np.linalg.norm(dxp))

        i = sample_index(rng_sample, probs, cum)
        p_i = probs[i]
        ax = ops[i].apply(x_new)
        y_new = proxes[i].prox(y[i] + sigma * ax, sigma)
        delta = y_new - y[i]
        a_delta = ops[i].adjoint(delta)

        # Residual feedback for the next controller update; v and the cosine
        # reuse a_delta, d pays one extra (possibly subsampled) block forward.
        q = dxp / tau + a_delta / p_i
        v = float(np.abs(q).sum())
        w = _cosine(dxp, q)
        if controller.needs_d:
            if subsample:
                d = compute_d_subsampled(x, x_new, y[i], y_new, sigma, ops[i],
                                         p_i, rho, rng_mask)
            else:
                d = float(np.abs(-delta / sigma - ops[i].apply(dxp)).sum()) / p_i
        else:
            d = float("nan")
        fb = Feedback(v=v, d=0.0 if np.isnan(d) else d, w=w)

        w_agg += a_delta
        z = w_agg + (1.0 / p_i) * a_delta
        y[i] = y_new
        x = x_new

        epoch = k // n_b
        end_of_epoch = (k + 1) % n_b == 0
        obj = float("nan")
        if end_of_epoch:
            obj = objective(problem, x)
        trace.append(k=k, epoch=epoch, i=i, tau=tau, sigma=sigma,
                     ratio=tau / sigma, v=v, d=d, w=w, dx_norm=dx_norm,
                     objective=obj)

        if not (np.isfinite(dx_norm) and np.isfinite(v)) or (end_of_epoch and
                                                             not np.isfinite(obj)):
            raise DivergenceError(
                f"non-finite iterate at iteration {k} "
                f"(dx_norm={dx_norm!r}, v={v!r})", trace.finalize(), k)

        if end_of_epoch:
            w_exact = np.zeros(problem.primal_dim)
            for op_j, y_j in zip(ops, y):
                w_exact += op_j.adjoint(y_j)
            denom = max(float(np.linalg.norm(w_exact)), 1e-300)
            drift = float(np.linalg.norm(w_agg - w_exact)) / denom
            if drift > _AGGREGATE_TOL:
                raise ConsistencyError(
                    f"dual aggregate drifted by {drift:.3e} relative at "
                    f"iteration {k}")
            w_agg = w_exact
            z = w_agg + (1.0 / p_i) * a_delta

    return RunResult(x=x, y=y, trace=trace.finalize(), state=state)


_PARAM_NAMES = ("rule", "ratio0", "epochs", "beta", "mode", "alpha0", "eta",
                "delta", "c", "s", "s_scale", "rho", "eps0", "eps_eta", "seed",
                "warm_start", "tau0", "sigma0")


class ASPDHG:
    """Stochastic primal-dual solver with optional adaptive step-size control.

    Estimator-style interface: hyperparameters in the constructor,
    :meth:`fit` consumes a :class:`SaddleProblem` and exposes the result as
    fitted attributes (``x_``, ``trace_``, ...).  ``get_params`` /
    ``set_params`` follow the sklearn protocol.

    Parameters
    ----------
    rule : {"fixed", "a", "b"}
        Step-size policy: constant, residual balancing, or angle control.
    ratio0 : float
        Requested initial ratio tau0/sigma0; initial steps are derived from
        it at the feasibility boundary (ignored when tau0/sigma0 are given).
    epochs : int
        Budget in epochs (n_blocks iterations each).
    beta : float
        Feasibility cap in (0, 1).
    mode : {"paper", "strict"}
        "strict" clamps update factors by the summable schedule
        eps_k = eps0 * eps_eta^k.
    alpha0, eta : float or None
        Adaptivity level and its decay; None picks the rule's default
        (0.5/0.995 for rule "a", 1.0/0.99 for rule "b").
    delta : float
        Dead-band width of rule "a" (> 1).
    c : float
        Upper cosine threshold of rule "b".
    s : float or None
        Residual scale for rule "a"; None estimates s_scale * ||A|| of the
        stacked operator.
    s_scale : float
        Multiplier on the estimated scale.
    rho : float or None
        Row-subsampling factor for the dual residual (rule "a" only; None
        computes d exactly).
    eps0, eps_eta : float
        Strict-mode schedule parameters.
    seed : int
        Sampling seed.
    warm_start : bool
        Start from the rescaled backprojection of the data instead of zero.
    tau0, sigma0 : float or None
        Explicit initial steps overriding the ratio0 derivation.
    """

    def __init__(self, rule: str = "a", ratio0: float = 1e-5, epochs: int = 10,
                 beta: float = 0.999, mode: str = "paper",
                 alpha0: float | None = None, eta: float | None = None,
                 delta: float = 1.5, c: float = 0.999, s: float | None = None,
                 s_scale: float = 1.0, rho: float | None = 10.0,
                 eps0: float = 0.5, eps_eta: float = 0.995, seed: int = 0,
                 warm_start: bool = False, tau0: float | None = None,
                 sigma0: float | None = None):
        self.rule = rule
        self.ratio0 = ratio0
        self.epochs = epochs
        self.beta = beta
        self.mode = mode
        self.alpha0 = alpha0
        self.eta = eta
        self.delta = delta
        self.c = c
        self.s = s
        self.s_scale = s_scale
        self.rho = rho
        self.eps0 = eps0
        self.eps_eta = eps_eta
        self.seed = seed
        self.warm_start = warm_start
        self.tau0 = tau0
        self.sigma0 = sigma0

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    def set_params(self, **params) -> "ASPDHG":
        for name, value in params.items():
            if name not in _PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r} for ASPDHG")
            setattr(self, name, value)
        return self

    def _check_params(self):
        if self.rule not in ("fixed", "a", "b"):
            raise ValueError(f"rule must be one of fixed, a, b; got {self.rule!r}")
        if self.mode not in ("paper", "strict"):
            raise ValueError(f"mode must be paper or strict; got {self.mode!r}")
        check_positive("ratio0", self.ratio0)
        check_positive_int("epochs", self.epochs)
        if self.rho is not None and self.rho < 1.0:
            raise ValueError(f"rho must be >= 1, got {self.rho!r}")

    def build_controller(self, problem: SaddleProblem):
        """Resolve defaults against a problem and construct the controller."""
        self._check_params()
        if self.tau0 is not None and self.sigma0 is not None:
            tau0, sigma0 = float(self.tau0), float(self.sigma0)
        else:
            tau0, sigma0 = initial_steps(self.ratio0, problem.block_norms,
                                         problem.probs, self.beta)
        schedule = None
        if self.mode == "strict":
            schedule = ControlSchedule(mode="strict", eta=self.eps_eta,
                                       eps0=self.eps0)
        s = self.s
        if self.rule == "a" and s is None:
            s = self.s_scale * full_norm(problem)
        return make_controller(self.rule, tau0, sigma0, s=s, alpha0=self.alpha0,
                               eta=self.eta, delta=self.delta, c=self.c,
                               beta=self.beta, schedule=schedule)

    def fit(self, problem: SaddleProblem) -> "ASPDHG":
        """Solve the problem; exposes x_, y_, trace_, state_, n_iter_."""
        controller = self.build_controller(problem)
        x0 = bp_warm_start(problem) if self.warm_start else None
        result = run(problem, controller, self.epochs, seed=self.seed,
                     warm_start=x0, rho=self.rho)
        self.x_ = result.x
        self.y_ = result.y
        self.trace_ = result.trace
        self.state_ = result.state
        self.n_iter_ = len(result.trace)
        return self

"""Diagnostics: the step-size metric block, a self-contained symmetric
eigensolver, a deterministic reference solve, and trace summaries."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .problem import SaddleProblem, full_norm, full_operator, objective
from .validation import check_positive, check_positive_int

__all__ = [
    "MetricBlock",
    "metric_min_eig",
    "jacobi_eigvals",
    "reference_solution",
    "relative_suboptimality",
    "ratio_stabilization",
    "summarize_run",
]

# assemble() is dense and the eigensolver is O(n^3) per sweep; this is a
# diagnostic for small blocks, not a production eigensolver.
_MAX_METRIC_DIM = 200


@dataclass(frozen=True)
class MetricBlock:
    """The symmetric block [[a I, P^T], [P, b I]] tested for positive
    semidefiniteness in the step-size feasibility argument.

    For a sampled block with steps (tau, sigma) and probability p the
    relevant instance is a = 1/tau, b = p/sigma, P = -A_i (dense), which is
    PSD exactly when tau * sigma * ||A_i||^2 / p <= 1.
    """

    a: float
    b: float
    p_mat: np.ndarray

    def __post_init__(self):
        check_positive("a", self.a)
        check_positive("b", self.b)
        mat = np.atleast_2d(np.asarray(self.p_mat, dtype=float))
        object.__setattr__(self, "p_mat", mat)
        m, n = mat.shape
        if m + n > _MAX_METRIC_DIM:
            raise ValueError(
                f"metric block dimension {m + n} exceeds {_MAX_METRIC_DIM}")

    def assemble(self) -> np.ndarray:
        m, n = self.p_mat.shape
        out = np.zeros((n + m, n + m))
        out[:n, :n] = self.a * np.eye(n)
        out[n:, n:] = self.b * np.eye(m)
        out[n:, :n] = self.p_mat
        out[:n, n:] = self.p_mat.T
        return out


def jacobi_eigvals(mat, tol: float = 1e-12, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below tol times the
    matrix norm.  Returns the eigenvalues sorted ascending.
    """
    a = np.array(mat, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    if n == 1:
        return a[0, :1].copy()
    a = 0.5 * (a + a.T)
    scale = max(float(np.linalg.norm(a)), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(2.0) * float(np.linalg.norm(np.tril(a, -1)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def metric_min_eig(block) -> float:
    """Smallest eigenvalue of a MetricBlock (or raw symmetric matrix)."""
    mat = block.assemble() if isinstance(block, MetricBlock) else block
    return float(jacobi_eigvals(mat)[0])


def reference_solution(problem: SaddleProblem, iters: int = 50000,
                       ratio: float = 1e-5):
    """High-accuracy objective floor by a long deterministic full-batch run.

    Runs the non-sampled primal-dual iteration on the stacked operator with
    tau * sigma * ||A||^2 = 0.95 and returns ``(x, f_best)`` where f_best is
    the smallest objective value seen (including the starting point).  One
    forward application per iteration is reused for both the dual update and
    the objective.
    """
    iters = check_positive_int("iters", iters)
    check_positive("ratio", ratio)
    stack = full_operator(problem)
    norm = full_norm(problem)
    if norm <= 0:
        raise ValueError("problem operator is zero; nothing to solve")
    tau = math.sqrt(0.95 * ratio) / norm
    sigma = tau / ratio

    proxes = [blk.conj_prox for blk in problem.dual_blocks]
    offsets = stack.offsets
    x = np.zeros(problem.primal_dim)
    y = np.zeros(stack.range_dim)
    ybar = y.copy()
    f_best = objective(problem, x)

    for _ in range(iters):
        x = problem.primal_prox.prox(x - tau * stack.adjoint(ybar), tau)
        ax = stack.apply(x)
        f_val = problem.primal_prox.value(x)
        y_new = np.empty_like(y)
        for j, prox in enumerate(proxes):
            lo, hi = offsets[j], offsets[j + 1]
            y_new[lo:hi] = prox.prox(y[lo:hi] + sigma * ax[lo:hi], sigma)
            f_val += prox.primal_value(ax[lo:hi])
        ybar = 2.0 * y_new - y
        y = y_new
        if f_val < f_best:
            f_best = f_val
    return x, f_best


def relative_suboptimality(values, f_star: float) -> np.ndarray:
    """(F - F*) / max(|F*|, 1e-12), elementwise; accepts a trace or array.

    Traces contribute their per-epoch objective record.
    """
    if hasattr(values, "epoch_objectives"):
        values = values.epoch_objectives
    values = np.asarray(values, dtype=float)
    return (values - f_star) / max(abs(f_star), 1e-12)


def ratio_stabilization(trace, window: int) -> float:
    """Largest |log10| step-ratio jump over the last ``window`` transitions.

    Zero means the ratio no longer moved in that window.
    """
    window = check_positive_int("window", window)
    ratios = trace.ratio if hasattr(trace, "ratio") else np.asarray(trace, float)
    tail = ratios[-(window + 1):]
    if len(tail) < 2:
        return 0.0
    return float(np.abs(np.diff(np.log10(tail))).max())


def summarize_run(trace, f_star: float | None = None,
                  threshold: float = 1e-2) -> dict:
    """Scalar summary of a run for reports: final objective/ratio, ratio
    stabilization over the last epoch, and (given a reference value) the
    final relative suboptimality plus the first epoch reaching ``threshold``
    (-1 if never)."""
    objs = trace.epoch_objectives
    out = {
        "epochs": int(len(objs)),
        "final_objective": float(objs[-1]) if len(objs) else float("nan"),
        "final_ratio": float(trace.ratio[-1]) if len(trace) else float("nan"),
        "stabilization": ratio_stabilization(trace, max(trace.n_blocks, 1)),
    }
    if f_star is not None:
        sub = relative_suboptimality(objs, f_star)
        out["final_suboptimality"] = float(sub[-1]) if len(sub) else float("nan")
        hits = np.nonzero(sub <= threshold)[0]
        out["epochs_to_threshold"] = int(hits[0]) + 1 if hits.size else -1
    return out

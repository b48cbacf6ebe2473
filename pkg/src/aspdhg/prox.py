"""Closed-form proximal operators for the functions used by the solvers.

Every operator evaluates prox of t*f for any t > 0.  Conjugate proxes are
closed-form as well and are cross-validated in the tests through the Moreau
identity y = prox_{t f}(y) + t * prox_{f*/t}(y/t) rather than trusted from
derivation alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import check_positive, check_vector

__all__ = [
    "prox_l1",
    "prox_sq_l2",
    "prox_conj_sq_l2",
    "prox_conj_l1",
    "prox_primal",
    "ProxFn",
]


def prox_l1(y, t: float, lam: float) -> np.ndarray:
    """Soft-threshold: prox of t*lam*||.||_1, threshold t*lam per component."""
    y = check_vector("y", y)
    thr = check_positive("t", t) * check_positive("lam", lam)
    return np.sign(y) * np.maximum(np.abs(y) - thr, 0.0)


def prox_sq_l2(y, t: float, b) -> np.ndarray:
    """Prox of t * (1/2)||z - b||^2: the convex combination (y + t*b)/(1 + t)."""
    y = check_vector("y", y)
    t = check_positive("t", t)
    b = check_vector("b", b, y.shape[0])
    return (y + t * b) / (1.0 + t)


def prox_conj_sq_l2(y, sigma: float, b) -> np.ndarray:
    """Prox of sigma * f* for f(z) = (1/2)||z - b||^2: (y - sigma*b)/(1 + sigma)."""
    y = check_vector("y", y)
    sigma = check_positive("sigma", sigma)
    b = check_vector("b", b, y.shape[0])
    return (y - sigma * b) / (1.0 + sigma)


def prox_conj_l1(y, sigma: float, lam: float) -> np.ndarray:
    """Prox of sigma * f* for f(z) = lam*||z||_1: projection onto the
    l-infinity ball of radius lam (independent of sigma)."""
    y = check_vector("y", y)
    check_positive("sigma", sigma)
    lam = check_positive("lam", lam)
    return np.clip(y, -lam, lam)


def prox_primal(y, t: float, kind: str) -> np.ndarray:
    """Prox of the primal penalty g: identity for g = 0, componentwise
    max(y, 0) for the nonnegativity indicator."""
    y = check_vector("y", y)
    check_positive("t", t)
    if kind == "zero":
        return y.copy()
    if kind == "nonneg_indicator":
        return np.maximum(y, 0.0)
    raise ValueError(f"unknown primal kind {kind!r}")


_KINDS = (
    "zero",
    "nonneg_indicator",
    "l1_scaled",
    "sq_l2_datafit",
    "conj_sq_l2_datafit",
    "linf_ball_proj",
)


@dataclass
class ProxFn:
    """One of the supported functions, bundled with its prox and values.

    Parameters
    ----------
    kind : str
        One of: zero, nonneg_indicator, l1_scaled, sq_l2_datafit,
        conj_sq_l2_datafit, linf_ball_proj.
    lam : float, optional
        Scale for the l1 kinds.
    b : ndarray, optional
        Data vector for the squared-l2 kinds.
    """

    kind: str
    lam: float | None = None
    b: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown prox kind {self.kind!r}")
        if self.kind in ("l1_scaled", "linf_ball_proj"):
            self.lam = check_positive("lam", self.lam)
        if self.kind in ("sq_l2_datafit", "conj_sq_l2_datafit"):
            self.b = check_vector("b", self.b)

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def nonneg(cls):
        return cls("nonneg_indicator")

    @classmethod
    def l1(cls, lam):
        return cls("l1_scaled", lam=lam)

    @classmethod
    def sq_l2_datafit(cls, b):
        return cls("sq_l2_datafit", b=b)

    @classmethod
    def conj_sq_l2_datafit(cls, b):
        return cls("conj_sq_l2_datafit", b=b)

    @classmethod
    def linf_ball(cls, lam):
        return cls("linf_ball_proj", lam=lam)

    # -- evaluation --------------------------------------------------------
    def prox(self, y, t: float) -> np.ndarray:
        """prox of t * (this function) at y."""
        if self.kind == "zero" or self.kind == "nonneg_indicator":
            return prox_primal(y, t, self.kind)
        if self.kind == "l1_scaled":
            return prox_l1(y, t, self.lam)
        if self.kind == "sq_l2_datafit":
            return prox_sq_l2(y, t, self.b)
        if self.kind == "conj_sq_l2_datafit":
            return prox_conj_sq_l2(y, t, self.b)
        return prox_conj_l1(y, t, self.lam)

    def value(self, z) -> float:
        """Function value f(z) for the non-conjugate kinds."""
        z = check_vector("z", z)
        if self.kind == "zero":
            return 0.0
        if self.kind == "nonneg_indicator":
            return 0.0 if float(z.min(initial=0.0)) >= -1e-12 else float("inf")
        if self.kind == "l1_scaled":
            return self.lam * float(np.abs(z).sum())
        if self.kind == "sq_l2_datafit":
            return 0.5 * float(np.sum((z - self.b) ** 2))
        raise ValueError(f"value() undefined for conjugate kind {self.kind!r}")

    def primal_value(self, z) -> float:
        """For a conjugate kind, the value of the *primal* function f at z.

        conj_sq_l2_datafit -> (1/2)||z - b||^2; linf_ball_proj -> lam*||z||_1.
        Used to sum objectives over dual blocks that store conjugate proxes.
        """
        z = check_vector("z", z)
        if self.kind == "conj_sq_l2_datafit":
            return 0.5 * float(np.sum((z - self.b) ** 2))
        if self.kind == "linf_ball_proj":
            return self.lam * float(np.abs(z).sum())
        raise ValueError(f"primal_value() undefined for kind {self.kind!r}")

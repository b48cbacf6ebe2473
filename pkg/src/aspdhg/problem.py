"""Assembly of saddle-point instances: phantoms, sinograms, minibatch blocks.

The benchmark objective is (1/2)||R x - b||^2 + lam*||D x||_1 + g(x) with the
data term split row-interleaved into minibatch dual blocks and the gradient
term handled as one extra dual block (its prox has no closed form on the
primal side).  Sampling probabilities are uniform over all blocks by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .linop import (LinearMap, MatrixMap, StackedMap, estimate_norm, grad_2d,
                    partition_interleaved)
from .prox import ProxFn
from .tomo import ProjectorMap, toy_projector
from .validation import check_positive, check_positive_int, check_probs, check_vector

__all__ = [
    "NoiseSpec",
    "Phantom",
    "DualBlock",
    "SaddleProblem",
    "NORM_SAFETY",
    "DATA_SCALE",
    "phantom_disks",
    "add_noise",
    "objective",
    "full_operator",
    "full_norm",
    "bp_warm_start",
    "build_tv_ct",
    "PRESETS",
    "preset_geometry",
]

# Spectral-norm estimates are inflated by this factor before they enter any
# step-size bound, so a slight power-iteration undershoot cannot break the
# feasibility condition.
NORM_SAFETY = 1.001

# Unit scale of the forward model.  Operator rows and measurements are
# expressed in acquisition units rather than pixel-chord units: every block
# and the sinogram carry this factor.  Desk-scale geometry would otherwise
# shrink operator and data magnitudes by orders of magnitude relative to
# clinical-size problems and drag the useful tau/sigma ratios up with them;
# in these units the well-performing ratio decades stay where practitioners
# expect them, around 1e-5 to 1e-7.
DATA_SCALE = 100.0


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement-noise model: kind in {none, gaussian, scaled_poisson}.

    ``param`` is the relative standard deviation for gaussian noise and the
    dose (mean count at the brightest ray) for scaled_poisson.
    """

    kind: str = "none"
    param: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "scaled_poisson"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "scaled_poisson":
            check_positive("dose", self.param)


@dataclass
class Phantom:
    """A square test image with pixel values in [0, 1], stored row-major."""

    side: int
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = check_vector("pixels", self.pixels, self.side * self.side)
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("phantom pixel values must lie in [0, 1]")

    def image(self) -> np.ndarray:
        return self.pixels.reshape(self.side, self.side)


@dataclass
class DualBlock:
    """One dual block: operator, conjugate prox, sampling probability, data."""

    op: LinearMap
    conj_prox: ProxFn
    prob: float
    data: np.ndarray | None = field(default=None, repr=False)


@dataclass
class SaddleProblem:
    """Block-separable saddle-point instance.

    ``block_norms`` are operator-norm estimates (already safety-inflated when
    built by :func:`build_tv_ct`) used by step-size validation.
    """

    primal_dim: int
    dual_blocks: list[DualBlock]
    primal_prox: ProxFn
    block_norms: list[float]

    def __post_init__(self):
        self.primal_dim = check_positive_int("primal_dim", self.primal_dim)
        if len(self.block_norms) != len(self.dual_blocks):
            raise ValueError("need one norm estimate per dual block")
        for blk in self.dual_blocks:
            if blk.op.domain_dim != self.primal_dim:
                raise ValueError("every block operator must act on the primal space")
        check_probs([blk.prob for blk in self.dual_blocks])

    @property
    def n_blocks(self) -> int:
        return len(self.dual_blocks)

    @property
    def probs(self) -> np.ndarray:
        return np.array([blk.prob for blk in self.dual_blocks])

    @property
    def ops(self) -> list[LinearMap]:
        return [blk.op for blk in self.dual_blocks]


# Disk layout of the phantom, in units of the side length:
# (center_col, center_row, radius, value), painted in order.
_DISKS = (
    (0.50, 0.50, 0.42, 0.8),
    (0.30, 0.38, 0.10, 0.4),
    (0.50, 0.50, 0.10, 1.0),
)


def phantom_disks(side: int) -> Phantom:
    """Deterministic disk phantom: background 0, a large disk of value 0.8
    holding two inner disks of values 0.4 and 1.0 (the 1.0 disk is centered,
    so the center pixel reads 1.0).  A pixel takes the value of the last disk
    containing its center; values are clipped to [0, 1]."""
    side = check_positive_int("side", side)
    if side < 8:
        raise ValueError("side must be at least 8")
    centers = (np.arange(side) + 0.5) / side  # pixel centers in side units
    cc, rr = np.meshgrid(centers, centers)
    img = np.zeros((side, side))
    for cx, cy, rad, val in _DISKS:
        inside = (cc - cx) ** 2 + (rr - cy) ** 2 <= rad**2
        img[inside] = val
    return Phantom(side=side, pixels=np.clip(img, 0.0, 1.0).ravel())


def add_noise(sino, spec: NoiseSpec) -> np.ndarray:
    """Apply the configured noise model to a sinogram, deterministically in
    ``spec.seed``."""
    sino = check_vector("sino", sino)
    if spec.kind == "none":
        return sino.copy()
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "gaussian":
        sigma = spec.param * float(np.mean(np.abs(sino)))
        return sino + rng.normal(0.0, sigma, size=sino.shape)
    # scaled_poisson: counts at dose*sino/max(sino), rescaled back
    if sino.size and float(sino.min()) < 0.0:
        raise ValueError("scaled_poisson noise requires a nonnegative sinogram")
    peak = float(sino.max()) if sino.size else 0.0
    if peak == 0.0:
        return np.zeros_like(sino)
    counts = rng.poisson(spec.param * sino / peak)
    return counts * (peak / spec.param)


def objective(problem: SaddleProblem, x) -> float:
    """Full objective: sum over data blocks of (1/2)||A_i x - b_i||^2, plus
    the l1 terms of any gradient blocks, plus g(x)."""
    x = check_vector("x", x, problem.primal_dim)
    val = problem.primal_prox.value(x)
    for blk in problem.dual_blocks:
        val += blk.conj_prox.primal_value(blk.op.apply(x))
    return val


def full_operator(problem: SaddleProblem) -> StackedMap:
    """All block operators stacked vertically (the monolithic forward map)."""
    return StackedMap(problem.ops)


def full_norm(problem: SaddleProblem, tol: float = 1e-6, max_iters: int = 1000,
              seed: int = 0) -> float:
    """Spectral-norm estimate of the stacked forward map (not inflated)."""
    return estimate_norm(full_operator(problem), tol=tol, max_iters=max_iters, seed=seed)


def bp_warm_start(problem: SaddleProblem) -> np.ndarray:
    """Unfiltered backprojection of the data blocks, rescaled into [0, 1]."""
    x0 = np.zeros(problem.primal_dim)
    for blk in problem.dual_blocks:
        if blk.data is not None:
            x0 += blk.op.adjoint(blk.data)
    peak = float(x0.max())
    if peak > 0.0:
        x0 = np.clip(x0 / peak, 0.0, 1.0)
    return x0


def build_tv_ct(image_side: int = 64, n_angles: int = 60, n_detectors: int = 95,
                lam: float | None = None, n_batches: int = 5,
                noise: NoiseSpec | None = None, seed: int = 0, tv: bool = True,
                primal: str = "zero",
                angle_range: tuple[float, float] = (0.0, math.pi),
                probs=None):
    """Build the tomography benchmark instance.

    Parameters
    ----------
    image_side, n_angles, n_detectors : int
        Projector geometry.
    lam : float or None
        Gradient-term weight; None resolves to 0.1 * max|R^T b|.
    n_batches : int
        Number of interleaved data minibatches.
    noise : NoiseSpec or None
        Measurement noise; ``seed`` below overrides the spec's seed so the
        problem seed alone determines the data.
    seed : int
        Seed for the noise draw.
    tv : bool
        Append the gradient dual block (disable for pure least-squares tests).
    primal : str
        "zero" or "nonneg_indicator" for g.
    angle_range : (float, float)
        Angular span in radians.
    probs : array or None
        Sampling probabilities per block (default uniform).

    Returns
    -------
    (SaddleProblem, Phantom, ndarray)
        The problem, the ground-truth phantom, and the noisy sinogram b.
    """
    n_batches = check_positive_int("n_batches", n_batches)
    proj = toy_projector(image_side, n_angles, n_detectors, angle_range)
    # Re-express the projector in acquisition units (see DATA_SCALE).
    proj = ProjectorMap(proj.mat * DATA_SCALE, proj.grid, proj.angles, proj.offsets)
    truth = phantom_disks(image_side)
    sino = proj.apply(truth.pixels)
    spec = replace(noise, seed=seed) if noise is not None else NoiseSpec()
    b = add_noise(sino, spec)

    part = partition_interleaved(proj, b, n_batches)
    blocks = [
        DualBlock(op=op, conj_prox=ProxFn.conj_sq_l2_datafit(data), prob=0.0, data=data)
        for op, data in zip(part.blocks, part.data_blocks)
    ]
    if tv:
        if lam is None:
            scale = float(np.abs(proj.adjoint(b)).max())
            lam = max(0.1 * scale, 1e-12)
        else:
            lam = check_positive("lam", lam)
        # The gradient block lives in the same units as the data blocks so
        # that one scalar step pair treats all blocks uniformly.
        grad_op = MatrixMap(grad_2d(image_side).mat * DATA_SCALE)
        blocks.append(DualBlock(op=grad_op, conj_prox=ProxFn.linf_ball(lam),
                                prob=0.0, data=None))

    n_total = len(blocks)
    if probs is None:
        probs = np.full(n_total, 1.0 / n_total)
    probs = check_probs(probs)
    if len(probs) != n_total:
        raise ValueError(f"need {n_total} probabilities, got {len(probs)}")
    for blk, p in zip(blocks, probs):
        blk.prob = float(p)

    norms = [NORM_SAFETY * estimate_norm(blk.op) for blk in blocks]
    prob = SaddleProblem(
        primal_dim=image_side * image_side,
        dual_blocks=blocks,
        primal_prox=ProxFn.nonneg() if primal == "nonneg_indicator" else ProxFn.zero(),
        block_norms=norms,
    )
    return prob, truth, b


# Desk-scale experiment presets: geometry plus noise model.
PRESETS = {
    "sparse_view": dict(image_side=64, n_angles=20, n_detectors=95,
                        angle_deg=180.0, noise_kind="none", noise_param=0.0),
    "low_dose": dict(image_side=64, n_angles=60, n_detectors=95,
                     angle_deg=180.0, noise_kind="scaled_poisson", noise_param=50.0),
    "limited_angle": dict(image_side=64, n_angles=50, n_detectors=95,
                          angle_deg=150.0, noise_kind="none", noise_param=0.0),
}


def preset_geometry(name: str) -> dict:
    """Geometry/noise keyword set for a named preset."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return dict(PRESETS[name])

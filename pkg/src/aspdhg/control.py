"""Step-size state, feasibility validation, and the step-size controllers.

Three controllers drive the solver: fixed steps, the residual-balancing rule
(comparing primal and dual subgradient lengths v and s*d with dead band
delta), and the angle rule (comparing the cosine w between the primal update
direction and its subgradient estimate against thresholds 0 and c).  Both
adaptive rules move tau and sigma by inverse multiplicative factors, so the
product tau*sigma — and with it the feasibility bound
tau*sigma*||A_i||^2/p_i <= beta — is preserved.

The state anchors that product: after every update sigma is derived as
product/tau, so the invariant cannot drift over long runs.

Two operating modes: "paper" applies the update factors exactly as the rules
state them; "strict" additionally clamps each factor gamma so that
min(gamma, 1/gamma) >= 1 - eps_k with the deterministic summable schedule
eps_k = eps0 * eta^k, which makes every run a quasi-increasing sequence by
construction (auditable via :func:`audit_quasi_increase`).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .validation import check_in_open_unit, check_positive, check_probs, check_vector

__all__ = [
    "StepSizeState",
    "ControlSchedule",
    "FeasibilityReport",
    "validate_init",
    "initial_steps",
    "gamma_clamp",
    "rule_a_step",
    "rule_b_step",
    "audit_quasi_increase",
    "paper_mode_control",
    "adaptivity_budget",
    "Feedback",
    "FixedController",
    "RuleAController",
    "RuleBController",
    "make_controller",
]

# Safety margin used when deriving initial steps: keeps the feasibility
# product strictly below beta so float rounding can never cross it.
_INIT_MARGIN = 1e-9

# Relative slack (a few ulps) for the quasi-increase audit: a clamped update
# can sit exactly on the (1 - eps_k) boundary in exact arithmetic, and the
# stored floats round either way.
_AUDIT_SLACK = 4e-16


@dataclass(frozen=True)
class StepSizeState:
    """Current step sizes and adaptivity level.

    ``product`` anchors tau*sigma (fixed at construction); ``max_product`` is
    an optional hard cap used by the strict-mode safety net.  ``k`` counts
    controller updates, ``change_count`` counts actual step changes.
    """

    tau: float
    sigma: float
    alpha: float
    k: int = 0
    change_count: int = 0
    product: float = None  # type: ignore[assignment]
    max_product: float | None = None

    def __post_init__(self):
        check_positive("tau", self.tau)
        check_positive("sigma", self.sigma)
        if self.product is None:
            object.__setattr__(self, "product", self.tau * self.sigma)

    @property
    def ratio(self) -> float:
        return self.tau / self.sigma


@dataclass(frozen=True)
class ControlSchedule:
    """Deterministic control sequence for step-size changes.

    mode "strict": per-iteration cap eps_k = eps0 * eta^k (summable, sum
    eps0/(1-eta)); mode "paper": no cap is applied — the schedule then only
    carries the parameters used for auditing.
    """

    mode: str = "strict"
    eta: float = 0.995
    eps0: float = 0.5

    def __post_init__(self):
        if self.mode not in ("paper", "strict"):
            raise ValueError(f"unknown control mode {self.mode!r}")
        check_in_open_unit("eta", self.eta)
        check_in_open_unit("eps0", self.eps0)

    def eps(self, k: int) -> float:
        return self.eps0 * self.eta**k


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of validating tau0/sigma0 against the feasibility condition."""

    ok: bool
    beta: float
    worst_block: int
    worst_product: float
    max_sigma0: float

    def __str__(self):
        if self.ok:
            return (f"feasible: max_i tau*sigma*||A_i||^2/p_i = "
                    f"{self.worst_product!r} <= beta = {self.beta!r}")
        return (f"infeasible: block {self.worst_block} gives "
                f"tau*sigma*||A_i||^2/p_i = {self.worst_product!r} > beta = "
                f"{self.beta!r}; for this tau the largest feasible sigma0 is "
                f"{self.max_sigma0!r}")


def validate_init(tau0: float, sigma0: float, block_norms, probs,
                  beta: float) -> FeasibilityReport:
    """Check tau0*sigma0*||A_i||^2/p_i <= beta for every block.

    Violations are reported, never silently clamped: the report names the
    worst block and the largest sigma0 feasible for the given tau0.
    """
    tau0 = check_positive("tau0", tau0)
    sigma0 = check_positive("sigma0", sigma0)
    beta = check_in_open_unit("beta", beta)
    norms = check_vector("block_norms", block_norms)
    probs = check_probs(probs)
    if len(norms) != len(probs):
        raise ValueError("block_norms and probs must have equal length")
    products = tau0 * sigma0 * norms**2 / probs
    worst = int(np.argmax(products))
    with np.errstate(divide="ignore"):
        caps = np.where(norms > 0.0, beta * probs / (tau0 * norms**2), np.inf)
    return FeasibilityReport(
        ok=bool(products[worst] <= beta),
        beta=beta,
        worst_block=worst,
        worst_product=float(products[worst]),
        max_sigma0=float(caps.min()),
    )


def initial_steps(ratio: float, block_norms, probs, beta: float = 0.999):
    """Derive (tau0, sigma0) with tau0/sigma0 = ratio sitting just inside the
    feasibility boundary: tau0 = sqrt(beta' * ratio * min_i p_i/||A_i||^2)
    with beta' = beta*(1 - 1e-9), sigma0 = tau0/ratio."""
    ratio = check_positive("ratio", ratio)
    beta = check_in_open_unit("beta", beta)
    norms = check_vector("block_norms", block_norms)
    probs = check_probs(probs)
    if np.any(norms <= 0.0):
        raise ValueError("initial_steps needs strictly positive block norms")
    m = float((probs / norms**2).min())
    tau0 = float(np.sqrt(beta * (1.0 - _INIT_MARGIN) * ratio * m))
    return tau0, tau0 / ratio


def gamma_clamp(gamma: float, eps_k: float) -> float:
    """Clamp a balancing factor into [1 - eps_k, 1/(1 - eps_k)]."""
    gamma = check_positive("gamma", gamma)
    if not 0.0 <= eps_k < 1.0:
        raise ValueError(f"eps_k must lie in [0, 1), got {eps_k!r}")
    lo = 1.0 - eps_k
    return min(max(gamma, lo), 1.0 / lo)


def _apply_gamma(state: StepSizeState, gamma: float, eta: float,
                 schedule: ControlSchedule | None) -> StepSizeState:
    # gamma multiplies sigma and divides tau (the balancing convention).
    if schedule is not None and schedule.mode == "strict":
        gamma = gamma_clamp(gamma, schedule.eps(state.k))
    tau = state.tau / gamma
    sigma = state.product / tau
    if state.max_product is not None and tau * sigma > state.max_product:
        sigma = state.max_product / tau  # safety net; anchored product keeps it idle
    return replace(state, tau=tau, sigma=sigma, alpha=state.alpha * eta,
                   k=state.k + 1, change_count=state.change_count + 1)


def _unchanged(state: StepSizeState) -> StepSizeState:
    return replace(state, k=state.k + 1)


def rule_a_step(state: StepSizeState, v: float, d: float, s: float, delta: float,
                eta: float, schedule: ControlSchedule | None = None) -> StepSizeState:
    """Residual-balancing update.

    If v > s*d*delta the primal residual dominates: tau grows by 1/(1-alpha)
    and sigma shrinks by (1-alpha).  If v < s*d/delta the reverse.  Inside the
    dead band the state is unchanged.  alpha decays by eta on every change.
    """
    if v < 0.0 or d < 0.0:
        raise ValueError("residuals v and d must be nonnegative")
    check_positive("s", s)
    if delta <= 1.0:
        raise ValueError(f"delta must exceed 1, got {delta!r}")
    check_in_open_unit("eta", eta)
    if v > s * d * delta:
        return _apply_gamma(state, 1.0 - state.alpha, eta, schedule)
    if v < s * d / delta:
        return _apply_gamma(state, 1.0 / (1.0 - state.alpha), eta, schedule)
    return _unchanged(state)


def rule_b_step(state: StepSizeState, w: float, c: float, eta: float,
                schedule: ControlSchedule | None = None) -> StepSizeState:
    """Angle update.

    A negative cosine w means the primal step overshoots: tau shrinks by
    1/(1+alpha) and sigma grows by (1+alpha).  A cosine at least c means the
    step is too timid: the reverse.  Otherwise unchanged.  alpha decays by
    eta on every change.
    """
    check_in_open_unit("c", c)
    check_in_open_unit("eta", eta)
    if w < 0.0:
        return _apply_gamma(state, 1.0 + state.alpha, eta, schedule)
    if w >= c:
        return _apply_gamma(state, 1.0 / (1.0 + state.alpha), eta, schedule)
    return _unchanged(state)


def audit_quasi_increase(u, control):
    """Verify u[k+1] >= (1 - eta_k) * u[k] for all k.

    Parameters
    ----------
    u : array-like
        Positive sequence (a tau or sigma trace).
    control : ControlSchedule or array-like
        A strict-mode schedule (eta_k = eps0*eta^k) or explicit per-step
        control values of length len(u) - 1 (see :func:`paper_mode_control`).

    Returns
    -------
    int or None
        None on pass, else the first violating index k.  Allows a few ulps of
        relative slack for updates sitting exactly on the bound.
    """
    u = check_vector("u", u)
    if u.size == 0:
        raise ValueError("audit needs a nonempty trace")
    if isinstance(control, ControlSchedule):
        if control.mode != "strict":
            raise ValueError("paper-mode audits need explicit control values; "
                             "build them with paper_mode_control")
        etas = control.eps0 * control.eta ** np.arange(u.size - 1)
    else:
        etas = check_vector("control", control, u.size - 1)
    bound = (1.0 - etas) * u[:-1] * (1.0 - _AUDIT_SLACK)
    bad = np.nonzero(u[1:] < bound)[0]
    return int(bad[0]) if bad.size else None


def paper_mode_control(tau_trace, alpha0: float, eta: float) -> np.ndarray:
    """Control values alpha0 * eta^(changes before k) reconstructed from a tau
    trace, for auditing paper-mode runs (the available change amplitude at
    each step bounds how fast tau or sigma can shrink)."""
    tau = check_vector("tau_trace", tau_trace)
    check_positive("alpha0", alpha0)  # the angle rule starts at alpha0 = 1
    check_in_open_unit("eta", eta)
    changed = tau[1:] != tau[:-1]
    changes_before = np.concatenate([[0], np.cumsum(changed)[:-1]])
    return alpha0 * eta**changes_before


def adaptivity_budget(alpha0: float, eta: float) -> float:
    """Upper bound on the total absolute log drift of tau over any paper-mode
    run: 2 * (-log(1 - alpha0)) / (1 - eta)."""
    check_in_open_unit("alpha0", alpha0)
    check_in_open_unit("eta", eta)
    return 2.0 * (-np.log1p(-alpha0)) / (1.0 - eta)


@dataclass(frozen=True)
class Feedback:
    """Residual feedback carried from one iteration into the next controller
    update; the initial feedback is all zeros (no change on the first step)."""

    v: float = 0.0
    d: float = 0.0
    w: float = 0.0


class FixedController:
    """Constant step sizes."""

    needs_d = False

    def __init__(self, tau0: float, sigma0: float, beta: float = 0.999):
        self.tau0 = check_positive("tau0", tau0)
        self.sigma0 = check_positive("sigma0", sigma0)
        self.beta = check_in_open_unit("beta", beta)

    def init_state(self) -> StepSizeState:
        return StepSizeState(tau=self.tau0, sigma=self.sigma0, alpha=0.0)

    def step(self, state: StepSizeState, fb: Feedback) -> StepSizeState:
        return _unchanged(state)


class RuleAController:
    """Residual-balancing controller (needs the dual residual d)."""

    needs_d = True

    def __init__(self, tau0: float, sigma0: float, s: float, alpha0: float = 0.5,
                 eta: float = 0.995, delta: float = 1.5, beta: float = 0.999,
                 schedule: ControlSchedule | None = None):
        self.tau0 = check_positive("tau0", tau0)
        self.sigma0 = check_positive("sigma0", sigma0)
        self.s = check_positive("s", s)
        self.alpha0 = check_in_open_unit("alpha0", alpha0)
        self.eta = check_in_open_unit("eta", eta)
        if delta <= 1.0:
            raise ValueError(f"delta must exceed 1, got {delta!r}")
        self.delta = float(delta)
        self.beta = check_in_open_unit("beta", beta)
        self.schedule = schedule

    def init_state(self) -> StepSizeState:
        return StepSizeState(tau=self.tau0, sigma=self.sigma0, alpha=self.alpha0)

    def step(self, state: StepSizeState, fb: Feedback) -> StepSizeState:
        return rule_a_step(state, fb.v, fb.d, self.s, self.delta, self.eta,
                           self.schedule)


class RuleBController:
    """Angle controller (uses the cosine w; alpha starts at 1)."""

    needs_d = False

    def __init__(self, tau0: float, sigma0: float, alpha0: float = 1.0,
                 eta: float = 0.99, c: float = 0.999, beta: float = 0.999,
                 schedule: ControlSchedule | None = None):
        self.tau0 = check_positive("tau0", tau0)
        self.sigma0 = check_positive("sigma0", sigma0)
        self.alpha0 = check_positive("alpha0", alpha0)
        self.eta = check_in_open_unit("eta", eta)
        self.c = check_in_open_unit("c", c)
        self.beta = check_in_open_unit("beta", beta)
        self.schedule = schedule

    def init_state(self) -> StepSizeState:
        return StepSizeState(tau=self.tau0, sigma=self.sigma0, alpha=self.alpha0)

    def step(self, state: StepSizeState, fb: Feedback) -> StepSizeState:
        return rule_b_step(state, fb.w, self.c, self.eta, self.schedule)


def make_controller(rule: str, tau0: float, sigma0: float, *, s: float | None = None,
                    alpha0: float | None = None, eta: float | None = None,
                    delta: float = 1.5, c: float = 0.999, beta: float = 0.999,
                    schedule: ControlSchedule | None = None):
    """Construct a controller by rule name, filling rule-specific defaults
    (alpha0 = 0.5 and eta = 0.995 for the residual rule; alpha0 = 1 and
    eta = 0.99 for the angle rule)."""
    if rule == "fixed":
        return FixedController(tau0, sigma0, beta=beta)
    if rule == "a":
        if s is None:
            raise ValueError("the residual rule needs the scale s")
        return RuleAController(tau0, sigma0, s,
                               alpha0=0.5 if alpha0 is None else alpha0,
                               eta=0.995 if eta is None else eta,
                               delta=delta, beta=beta, schedule=schedule)
    if rule == "b":
        return RuleBController(tau0, sigma0,
                               alpha0=1.0 if alpha0 is None else alpha0,
                               eta=0.99 if eta is None else eta,
                               c=c, beta=beta, schedule=schedule)
    raise ValueError(f"unknown rule {rule!r}; choose from fixed, a, b")

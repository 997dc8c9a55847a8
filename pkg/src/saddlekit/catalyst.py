"""Catalyst acceleration and the prox-friendly three-loop saddle pipeline built on it."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .am_solver import SolveReport, ram_minimize
from .oracle_core import BudgetExceeded, CallLedger, ContractError, SolverFailure
from .saddle_framework import SaddleProblem, SaddleSolution, max_smoothness
from .variance_reduction import saga_sp_run

log = logging.getLogger(__name__)


class Criterion(str, enum.Enum):
    ABSOLUTE = "absolute"
    RELATIVE = "relative"
    BUDGET = "budget"


@dataclass
class CatalystConfig:
    """Smoothing ``H``, strong convexity ``mu`` and the stage stopping rule.

    ``rho`` is derived (0.9 sqrt(q)) and not a tuning knob. ``T`` is the
    inner iteration budget of the fixed-budget rule. ``sigma_per_stage``
    overrides the even split of the failure probability when given.
    """

    H: float
    mu: float
    criterion: Criterion = Criterion.ABSOLUTE
    T: int | None = None
    sigma_per_stage: float | None = None
    rho: float = field(init=False)

    def __post_init__(self):
        if self.H <= 0 or self.mu <= 0:
            raise ContractError("Catalyst needs H > 0 and mu > 0")
        self.criterion = Criterion(self.criterion)
        if self.criterion is Criterion.BUDGET and (self.T is None or self.T < 1):
            raise ContractError("the fixed-budget rule needs a positive T")
        self.rho = 0.9 * math.sqrt(self.q)

    @property
    def q(self) -> float:
        return self.mu / (self.mu + self.H)

    @property
    def alpha0(self) -> float:
        return math.sqrt(self.q)

    @property
    def delta(self) -> float:
        """Relative accuracy sqrt(q) / (2 - sqrt(q))."""
        s = math.sqrt(self.q)
        return s / (2.0 - s)


def alpha_next(alpha_prev: float, q: float) -> float:
    """Root in (0, 1) of ``a^2 = (1 - a) alpha_prev^2 + q a``."""
    b = alpha_prev**2 - q
    return 0.5 * (-b + math.sqrt(b * b + 4.0 * alpha_prev**2))


def extrapolation(alpha_prev: float, alpha: float) -> float:
    return alpha_prev * (1.0 - alpha_prev) / (alpha_prev**2 + alpha)


@dataclass
class StageSchedule:
    eps_k: np.ndarray
    delta_k: np.ndarray
    sigma_k: np.ndarray
    alpha_k: np.ndarray
    beta_k: np.ndarray

    @property
    def n_stages(self) -> int:
        return len(self.sigma_k)


def stage_count(config: CatalystConfig, gap0: float, eps: float) -> int:
    """Stages that certify ``F(x_N) - F* <= eps`` from an initial gap ``gap0``.

    Absolute: smallest N with ``C (1 - rho)^(N+1) gap0 <= eps``, C = 8 / (sqrt(q) - rho)^2.
    Relative: ``ceil(2/sqrt(q) ln(2 gap0 / eps))``. The fixed-budget rule
    borrows the absolute count.
    """
    if gap0 <= 0 or eps <= 0:
        raise ContractError("need gap0 > 0 and eps > 0")
    sq = math.sqrt(config.q)
    if config.criterion is Criterion.RELATIVE:
        return max(1, math.ceil(2.0 / sq * math.log(max(2.0 * gap0 / eps, 1.0))))
    C = 8.0 / (sq - config.rho) ** 2
    ratio = C * gap0 / eps
    if ratio <= 1:
        return 1
    return max(1, math.ceil(math.log(ratio) / -math.log1p(-config.rho) - 1.0))


def plan_schedule(config: CatalystConfig, gap0: float, eps: float, sigma: float) -> StageSchedule:
    """Per-stage accuracies, probabilities and extrapolation coefficients."""
    if not 0 <= sigma < 1:
        raise ContractError("sigma must lie in [0, 1)")
    N = stage_count(config, gap0, eps)
    k = np.arange(N)
    eps_k = (2.0 / 9.0) * gap0 * (1.0 - config.rho) ** k
    delta_k = np.full(N, config.delta)
    s = -math.expm1(math.log1p(-sigma) / N)
    if config.sigma_per_stage is not None:
        if config.sigma_per_stage > s * (1 + 1e-12):
            raise ContractError(f"sigma_per_stage={config.sigma_per_stage} breaks the budget (max {s:.3e})")
        s = config.sigma_per_stage
    sigma_k = np.full(N, s)
    assert np.prod(1.0 - sigma_k) >= (1.0 - sigma) * (1 - 1e-12)
    alphas = [config.alpha0]
    for _ in range(N):
        alphas.append(alpha_next(alphas[-1], config.q))
    alphas = np.array(alphas)
    betas = np.array([extrapolation(alphas[i], alphas[i + 1]) for i in range(N)])
    return StageSchedule(eps_k, delta_k, sigma_k, alphas, betas)


@dataclass
class StageTarget:
    """What the inner method must deliver for one Catalyst stage."""

    criterion: Criterion
    eps: float | None = None
    delta: float | None = None
    sigma: float = 0.0
    T: int | None = None
    stage: int = 0


def markov_boost(expected_gap_solver: Callable, eps: float, sigma: float) -> Callable:
    """Turn ``E[residual] <= target`` into ``P{residual >= eps} <= sigma``.

    The returned handle calls ``expected_gap_solver(eps * sigma, *args, **kwargs)``.
    """
    if eps <= 0 or not 0 < sigma <= 1:
        raise ContractError("need eps > 0 and sigma in (0, 1]")
    target = eps * sigma

    def boosted(*args, **kwargs):
        return expected_gap_solver(target, *args, **kwargs)

    boosted.target = target
    return boosted


def catalyst_run(F, inner, config: CatalystConfig, x0, gap0_upper, eps, sigma=0.0, seed=0,
                 retries=3, objective=None, f_star=None, callback=None,
                 ledger: CallLedger | None = None) -> SolveReport:
    """Catalyst on ``min phi + psi`` with F = (phi, psi).

    ``inner(F, x_md, H, target, x_warm, seed) -> x`` approximately minimizes
    ``phi + psi + H/2 |x - x_md|^2`` to the :class:`StageTarget`. A stage whose
    inner solve raises :class:`SolverFailure` or :class:`BudgetExceeded` is
    retried with a fresh seed up to ``retries`` times.
    """
    sched = plan_schedule(config, gap0_upper, eps, sigma)
    x = x_prev = np.array(x0, dtype=float)
    x_md = x.copy()
    trace = []
    for k in range(sched.n_stages):
        target = StageTarget(config.criterion, float(sched.eps_k[k]), float(sched.delta_k[k]),
                             float(sched.sigma_k[k]), config.T, k)
        for attempt in range(retries + 1):
            try:
                x_new = np.asarray(inner(F, x_md, config.H, target, x, seed + 7919 * k + 104729 * attempt))
                break
            except (SolverFailure, BudgetExceeded) as err:
                log.debug("stage %d attempt %d failed: %s", k, attempt, err)
        else:
            raise BudgetExceeded(f"Catalyst stage {k} failed {retries + 1} times", best=x)
        x_prev, x = x, x_new
        x_md = x + sched.beta_k[k] * (x - x_prev)
        val = objective(x) if objective is not None else float("nan")
        row = (k + 1, val - f_star if f_star is not None else val, float(np.linalg.norm(x - x_prev)))
        trace.append(row)
        if callback is not None:
            callback(k + 1, x)
    gap = trace[-1][1] if f_star is not None else None
    return SolveReport(x, gap, sched.n_stages, ledger, trace,
                       {"schedule": sched, "q": config.q, "rho": config.rho})


def ram_stage_solver(F, x_md, H, target: StageTarget, x_warm, seed=0):
    """Default inner method: restarted AM on the smooth stage objective.

    F = (phi, psi) are value/gradient oracles with ``spec.L`` and ``spec.mu``.
    Absolute and relative targets are certified through ``|grad|^2 / (2 (mu + H))``.
    """
    phi, psi = F
    mu = phi.spec.mu + psi.spec.mu + H
    L = phi.spec.L + psi.spec.L + H

    def grad(z):
        return phi.grad(z) + psi.grad(z) + H * (z - x_md), 0.0

    def prox(g, z, H_am):
        return z - g / H_am, 0.0, 0.0

    if target.criterion is Criterion.BUDGET:
        try:
            z, *_ = ram_minimize(grad, prox, 2 * L, mu, x_warm, lambda *a: False, target.T)
        except BudgetExceeded as err:
            return err.best
        return z

    def stop(z, g, err):
        res = float(g @ g) / (2.0 * mu)
        if target.criterion is Criterion.ABSOLUTE:
            return res <= target.eps
        d = z - x_md
        return res <= 0.5 * H * target.delta * float(d @ d)

    z, *_ = ram_minimize(grad, prox, 2 * L, mu, x_warm, stop, 10**7)
    return z


# ---------------------------------------------------------------------------
# prox-friendly pipeline: Catalyst in x, Catalyst in y, SAGA


def pipeline_H(L_G: float, mu: float, m_G: int) -> float:
    """Smoothing parameter max{mu, L_G / sqrt(m_G)}."""
    return max(mu, L_G / math.sqrt(m_G))


def for_loop_1(eps, sigma, mu_x, mu_y, L_G, M_h_gap):
    """Accuracies for (x^, y^) that make the pair an (eps, sigma) saddle solution."""
    eps_y = min(mu_y * eps / 8, _quartic(eps, mu_y, 72, M_h_gap),
                eps * mu_y / (24 * max_smoothness(L_G, mu_x)))
    eps_x = min(eps_y * mu_x * mu_y / (4 * L_G**2), eps / 3)
    return {"eps_x": eps_x, "eps_y": eps_y, "sigma_x": sigma / 2, "sigma_y": sigma / 2}


def for_loop_2(eps_x_out, sigma_x_out, eps_y_out, sigma_y_out, mu_x, mu_y, L_G, M_f_gap, M_h_gap):
    """Accuracies for the y-problem and the x best response that meet the outer targets.

    For the regularized stage problem pass ``mu_x + H1`` as mu_x.
    """
    eps_x = min(mu_x * eps_x_out / 8, _quartic(eps_x_out, mu_x, 32, M_f_gap),
                eps_x_out * mu_x / (16 * max_smoothness(L_G, mu_y)))
    eps_y = min(mu_y * eps_y_out / 2, eps_x * mu_x * mu_y / (4 * L_G**2),
                _quartic(eps_y_out, mu_y, 8, M_h_gap), eps_y_out * mu_y / (2 * L_G))
    return {"eps_x": eps_x, "eps_y": eps_y, "sigma_x": sigma_x_out / 2,
            "sigma_y": min(sigma_x_out / 2, sigma_y_out)}


def for_loop_3(eps_x, sigma_x, eps_y, sigma_y, mu_x, L_G, M_f_gap):
    """Saddle accuracy whose solutions answer both one-sided problems of the level above."""
    eps = min(eps_y, eps_x * mu_x / 2, eps_x * mu_x / (2 * L_G), _quartic(eps_x, mu_x, 8, M_f_gap))
    return {"eps": eps, "sigma": min(sigma_x, sigma_y)}


def _quartic(e, mu, c, M_gap):
    return e**4 * mu / (c * M_gap**2) if M_gap > 0 else math.inf


def sampled_local_sup(fun, center, radius, samples=256, seed=0) -> float:
    """Sampled ``sup{fun(z) : |z - center| <= radius} - fun(center)`` (a lower estimate of the true sup)."""
    rng = np.random.default_rng(seed)
    c = np.asarray(center, dtype=float)
    f0 = fun(c)
    best = 0.0
    for _ in range(samples):
        u = rng.standard_normal(c.size)
        u *= radius * rng.random() ** (1.0 / c.size) / np.linalg.norm(u)
        best = max(best, fun(c + u) - f0)
    # boundary points along +-gradient-free axes catch the sup of convex functions
    for i in range(c.size):
        for s in (-1.0, 1.0):
            e = np.zeros(c.size)
            e[i] = s * radius
            best = max(best, fun(c + e) - f0)
    return float(best)


class _RegularizedSaddle:
    """``f + H1/2 |x - x_c|^2 + G - h - H2/2 |y - y_c|^2`` on top of a problem, sharing its ledger."""

    def __init__(self, base: SaddleProblem, H1, x_c, H2, y_c):
        self.base = base
        self.H1, self.x_c, self.H2, self.y_c = H1, x_c, H2, y_c
        self.mu_x = base.mu_x + H1
        self.mu_y = base.mu_y + H2

    def __getattr__(self, name):
        return getattr(self.base, name)

    def pf(self, v, lam):
        s = 1.0 + lam * self.H1
        return self.base.pf((v + lam * self.H1 * self.x_c) / s, lam / s)

    def ph(self, v, lam):
        s = 1.0 + lam * self.H2
        return self.base.ph((v + lam * self.H2 * self.y_c) / s, lam / s)


def prox_pipeline_solve(problem: SaddleProblem, eps, sigma=0.0, H1=None, H2=None, x0=None, y0=None,
                        seed=0, M_f=None, M_h=None, safety=4.0, check_every=None,
                        callback=None) -> SaddleSolution:
    """Saddle point of ``f + G - h`` with prox-friendly f, h and ``G = (1/m_G) sum G_i``.

    Loop 1 runs Catalyst in x with smoothing H1, loop 2 runs Catalyst in y
    with H2 on each x-stage, and loop 3 solves each doubly regularized
    saddle problem with SAGA. Every level stops on a deterministic distance
    certificate, so the returned pair is certified with probability one;
    sampling only affects the cost. ``M_f``/``M_h`` override the local-sup
    gaps used to report the accuracy schedules of the three loops.
    ``callback(stage, x, y, dist_x, dist_y)`` sees every Loop-1 stage.
    """
    p = problem
    if p.prox_f is None or p.prox_h is None:
        raise ContractError("the pipeline needs the prox of f and of h")
    if eps <= 0 or not 0 <= sigma < 1:
        raise ContractError("need eps > 0 and sigma in [0, 1)")
    sq = math.sqrt(p.m_G)
    for name, mu in (("mu_x", p.mu_x), ("mu_y", p.mu_y)):
        if mu * sq > p.L_G * (1 + 1e-12):
            raise ContractError(f"need {name} * sqrt(m_G) <= L_G ({mu * sq:.4g} > {p.L_G:.4g})")
    H1 = pipeline_H(p.L_G, p.mu_x, p.m_G) if H1 is None else float(H1)
    H2 = pipeline_H(p.L_G, p.mu_y, p.m_G) if H2 is None else float(H2)
    if H1 <= 0 or H2 <= 0:
        raise ContractError("H1 and H2 must be positive")
    mx, my, LG = p.mu_x, p.mu_y, p.L_G
    start = p.ledger.snapshot()

    # distance targets: Psi-gap <= L_Psi/2 d_x^2, dual gap <= L_Phi/2 d_y^2
    L_Psi = p.L_f + max_smoothness(LG, my)
    L_Phi = p.L_h + max_smoothness(LG, mx)
    d_x = math.sqrt(eps / L_Psi)
    d_y = math.sqrt(eps / L_Phi)
    k_y = LG / my * H1 / mx  # |y*(p) - y*| per unit of (|x - x_md| + r) in loop 1
    floor_x = min(d_x / (2 * (1 + H1 / mx)), d_y / (4 * k_y))
    floor_y = d_y / 2
    # relative stage accuracy sqrt(H delta / L_S) in distance form
    c1 = math.sqrt(H1 * CatalystConfig(H1, mx).delta / (L_Psi + H1))
    L_S2 = p.L_h + max_smoothness(LG, mx + H1) + H2
    c2 = math.sqrt(H2 * CatalystConfig(H2, my).delta / L_S2)
    a2 = LG / (mx + H1) * H2 / my  # |x3* - x1*| per unit of (|y - y_md| + r)
    floor3 = min(floor_x / (2 * (1 + a2)), floor_y / (2 * (1 + H2 / my)))
    q1, q2 = mx / (mx + H1), my / (my + H2)
    cap1 = math.ceil(safety * 2 / math.sqrt(q1) * 40) + 10
    cap2 = math.ceil(safety * 2 / math.sqrt(q2) * 40) + 10
    check = check_every or 2 * p.m_G

    state = {"x": np.zeros(p.dx) if x0 is None else np.array(x0, dtype=float),
             "y": np.zeros(p.dy) if y0 is None else np.array(y0, dtype=float),
             "seed": int(seed), "saga_iters": 0, "saga_runs": 0, "stages2": 0}

    def loop3(x_md, y_md):
        sub = _RegularizedSaddle(p, H1, x_md, H2, y_md)
        out = {}

        def certify(st, bound):
            thr = max(c2 * float(np.linalg.norm(st.z[1] - y_md)), floor3)
            out["r"] = bound
            return bound <= thr

        from .variance_reduction import saga_eta
        eta = saga_eta(p.m_G, LG, min(sub.mu_x, sub.mu_y))
        budget = math.ceil(safety * 4 / eta * math.log(1e32)) + check
        state["seed"] += 1
        st = saga_sp_run(sub, budget, state["seed"], state["x"], state["y"], check_every=check,
                         certify=certify)
        state["saga_iters"] += st.it
        state["saga_runs"] += 1
        if not st.history:
            raise BudgetExceeded(f"SAGA did not certify within {budget} iterations", best=st.z)
        x, y = st.z
        state["x"], state["y"] = x, y
        return x, y, out["r"]

    def loop2(x_md1, stop2):
        cfg = CatalystConfig(H2, my)
        alpha = cfg.alpha0
        y = y_prev = state["y"]
        y_md = y.copy()
        for _ in range(cap2):
            x, y, r = loop3(x_md1, y_md)
            state["stages2"] += 1
            s = float(np.linalg.norm(y - y_md)) + r
            E = r + H2 / my * s
            X = r + a2 * s
            if stop2(x, y, X, E):
                return x, y, X, E
            a_new = alpha_next(alpha, cfg.q)
            y_md = y + extrapolation(alpha, a_new) * (y - y_prev)
            alpha, y_prev = a_new, y
        raise BudgetExceeded(f"loop 2 exceeded {cap2} Catalyst stages", best=(x, y))

    cfg1 = CatalystConfig(H1, mx)
    alpha = cfg1.alpha0
    x = x_prev = state["x"]
    x_md = x.copy()
    stages1 = 0
    for _ in range(cap1):
        def stop2(xc, yc, X, E, x_md=x_md):
            step = float(np.linalg.norm(xc - x_md))
            return X <= max(c1 * step, floor_x) and E <= max(k_y * c1 * step, floor_y)

        x, y, X, E = loop2(x_md, stop2)
        stages1 += 1
        s = float(np.linalg.norm(x - x_md)) + X
        D = X + H1 / mx * s
        Y = E + k_y * s
        log.debug("loop1 stage %d: D=%.3e (target %.3e) Y=%.3e (target %.3e)", stages1, D, d_x, Y, d_y)
        if callback is not None:
            callback(stages1, x, y, D, Y)
        if D <= d_x and Y <= d_y:
            break
        a_new = alpha_next(alpha, cfg1.q)
        x_md = x + extrapolation(alpha, a_new) * (x - x_prev)
        alpha, x_prev = a_new, x
    else:
        raise BudgetExceeded(f"loop 1 exceeded {cap1} Catalyst stages", best=(x, y))

    certified = 0.5 * L_Psi * D**2 + 0.5 * L_Phi * Y**2
    f_val = p.f_value or (lambda v: 0.0)
    h_val = p.h_value or (lambda v: 0.0)
    M_f_gap = sampled_local_sup(f_val, x, eps, seed=seed) if M_f is None else M_f
    M_h_gap = sampled_local_sup(h_val, y, eps, seed=seed + 1) if M_h is None else M_h
    sched1 = for_loop_1(eps, sigma, mx, my, LG, M_h_gap)
    sched2 = for_loop_2(sched1["eps_x"], sched1["sigma_x"], sched1["eps_y"], sched1["sigma_y"],
                        mx + H1, my, LG, M_f_gap, M_h_gap)
    sched3 = for_loop_3(sched2["eps_x"], sched2["sigma_x"], sched2["eps_y"], sched2["sigma_y"],
                        mx + H1, LG, M_f_gap)
    extras = {"calls": p.ledger.diff(start), "H1": H1, "H2": H2, "stages1": stages1,
              "stages2": state["stages2"], "saga_runs": state["saga_runs"],
              "saga_iterations": state["saga_iters"], "dist_x": D, "dist_y": Y,
              "lemma_schedule": {"loop1": sched1, "loop2": sched2, "loop3": sched3,
                                 "M_f_gap": M_f_gap, "M_h_gap": M_h_gap}}
    return SaddleSolution(x, y, certified, 0.0, p.ledger, extras)

"""Accelerated meta-algorithm with inexact oracles, its restarted form and the tolerance planner."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .oracle_core import (BudgetExceeded, CallLedger, ContractError, CountedOracle,
                          OracleSpec, nesterov_minimize)

log = logging.getLogger("saddlekit.am")

FLOOR_CONSTANT = 864.0**2


@dataclass
class AMState:
    A: float
    x: np.ndarray
    x_t: np.ndarray
    x_md: np.ndarray
    k: int = 0


@dataclass
class AMConfig:
    H: float
    max_iter: int
    subproblem_tol: float = 0.0
    subproblem_conf: float = 0.0
    delta1: float = 0.0
    delta2: float = 0.0
    sigma0: float = 0.0
    L_phi: float | None = None


@dataclass
class ToleranceBudget:
    eps: float
    sigma: float
    delta1: float
    delta2: float
    sigma0: float
    eps_f_tilde: float
    sigma_tilde: float
    K_restarts: int
    N_inner: int
    branches: dict = field(default_factory=dict)


@dataclass
class SolveReport:
    x_best: np.ndarray
    value_gap: float | None
    iterations: int
    ledger: CallLedger | None
    trace: list
    extras: dict = field(default_factory=dict)


def am_coefficient(A: float, H: float) -> float:
    """a_{k+1} from 2 H a^2 = A_k + a, i.e. a^2/(A_k + a) = 1/(2H)."""
    return (1.0 + math.sqrt(1.0 + 8.0 * H * A)) / (4.0 * H)


def coefficient_sequence(H: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """(a_1..a_n, A_1..A_n) of the accelerated scheme."""
    a = np.empty(n)
    A = np.empty(n)
    acc = 0.0
    for k in range(n):
        a[k] = am_coefficient(acc, H)
        acc += a[k]
        A[k] = acc
    return a, A


def am_rate_bound(H: float, R: float, k) -> np.ndarray:
    return 4.0 * H * R**2 / np.asarray(k, dtype=float) ** 2


def inexact_floor(A_hist, delta1: float, delta2: float) -> np.ndarray:
    """Error-floor terms of the inexact rate for k = 1..len(A_hist).

    2 (sum_{i<=k} A_i) delta2 / A_k + delta1 + (sum_{i<k} A_i) delta1 / A_k
    """
    A = np.asarray(A_hist, dtype=float)
    upto = np.cumsum(A)
    before = upto - A
    return 2.0 * upto * delta2 / A + delta1 + before * delta1 / A


def _L_of(oracle, fallback=0.0):
    spec = getattr(oracle, "spec", None)
    return spec.L if isinstance(spec, OracleSpec) else fallback


def am_run(phi, psi, prox_solver, config: AMConfig, x0, objective=None, f_star=None,
           callback: Callable | None = None, ledger: CallLedger | None = None) -> SolveReport:
    """Run ``config.max_iter`` steps of the accelerated meta-algorithm.

    phi, psi: callables ``x -> (value, grad)``; phi is the linearized part.
    prox_solver(g_md, x_md, H) -> approximate minimizer of
        <g_md, z - x_md> + psi(z) + H/2 |z - x_md|^2.
    callback(k, state, grad_t) may return True to stop after step k.
    The trace holds (k, objective(x_t) or nan, |grad at x_t|).
    """
    H = float(config.H)
    L_phi = config.L_phi if config.L_phi is not None else _L_of(phi)
    if H <= 0 or H < 2.0 * L_phi * (1 - 1e-12):
        raise ContractError(f"H={H} must be at least 2 L_phi = {2 * L_phi}")
    x = np.array(x0, dtype=float)
    st = AMState(0.0, x.copy(), x.copy(), x.copy())
    A_hist, trace = [], []
    for k in range(1, config.max_iter + 1):
        a = am_coefficient(st.A, H)
        A_next = st.A + a
        st.x_md = (st.A / A_next) * st.x_t + (a / A_next) * st.x
        _, g_md = phi(st.x_md)
        st.x_t = np.asarray(prox_solver(g_md, st.x_md, H), dtype=float)
        _, gp = phi(st.x_t)
        _, gs = psi(st.x_t)
        grad = gp + gs
        st.x = st.x - a * grad
        st.A = A_next
        st.k = k
        A_hist.append(A_next)
        val = objective(st.x_t) if objective is not None else np.nan
        trace.append((k, val, float(np.linalg.norm(grad))))
        if callback is not None and callback(k, st, grad):
            break
    gap = None
    if objective is not None and f_star is not None:
        gap = objective(st.x_t) - f_star
    return SolveReport(st.x_t, gap, st.k, ledger, trace,
                       {"A": np.array(A_hist), "state": st})


def am_prox_subproblem(phi_grad_at_md, psi, H, x_md, tol, conf=0.0, inner=None, z0=None):
    """Approximately minimize ``<g, z - x_md> + psi(z) + H/2 |z - x_md|^2``.

    The residual of the returned point is at most ``tol`` (certified by
    ``|grad model|^2 / (2 (mu_psi + H))``). Deterministic inner solvers
    certify with probability one, so ``conf`` is only passed through to
    stochastic ``inner`` handles.

    inner(model_grad, z0, L, mu, tol_grad) -> z overrides the default
    accelerated gradient loop.
    """
    g = np.asarray(phi_grad_at_md, dtype=float)
    x_md = np.asarray(x_md, dtype=float)
    if H <= 0:
        raise ContractError("H must be positive")
    if math.isinf(tol):
        return x_md.copy()
    spec = psi.spec if isinstance(getattr(psi, "spec", None), OracleSpec) else OracleSpec()
    if spec.L == 0.0:
        # psi is affine: the model is an isotropic quadratic
        _, gpsi = psi(x_md)
        return x_md - (g + gpsi) / H
    L, mu = spec.L + H, spec.mu + H

    def model_grad(z):
        return g + psi(z)[1] + H * (z - x_md)

    tol_grad = math.sqrt(2.0 * mu * tol)
    start = x_md if z0 is None else np.asarray(z0, dtype=float)
    if inner is not None:
        return inner(model_grad, start, L, mu, tol_grad)
    z, _, _ = nesterov_minimize(model_grad, start, L, mu, tol_grad)
    return z


def make_prox_solver(psi, tol, inner=None):
    """Prox handle for :func:`am_run` that solves each subproblem to objective residual ``tol``."""
    def solve(g_md, x_md, H):
        return am_prox_subproblem(g_md, psi, H, x_md, tol, inner=inner)
    return solve


def restart_length(H: float, mu: float) -> int:
    """Steps per restart stage, max{ceil(sqrt(128 H / mu)), 1}."""
    return max(math.ceil(math.sqrt(128.0 * H / mu)), 1)


def restart_count(mu: float, R0: float, eps: float) -> int:
    """Stages needed, ceil(2 log2(mu R0^2 / (4 eps))), never negative."""
    ratio = mu * R0**2 / (4.0 * eps)
    return max(0, math.ceil(2.0 * math.log2(ratio))) if ratio > 1 else 0


def restart_step_bound(H: float, mu: float, R0: float, eps: float) -> float:
    """Total AM steps allowed: (16 sqrt(2) sqrt(H/mu) + 2) log2(mu R0^2 / eps)."""
    return (16.0 * math.sqrt(2.0) * math.sqrt(H / mu) + 2.0) * math.log2(mu * R0**2 / eps)


def restarted_am(phi, psi, F_spec: OracleSpec, prox_solver, eps, sigma, x0, R0=None, H=None,
                 certify: Callable | None = None, safety: float = 2.0,
                 callback: Callable | None = None, ledger: CallLedger | None = None,
                 L_phi: float | None = None) -> SolveReport:
    """Restarted accelerated meta-algorithm for a mu-strongly convex ``phi + psi``.

    Runs ``restart_count`` stages of ``restart_length`` AM steps, each stage
    started from the previous output. With ``certify(x, grad) -> bound`` the
    run stops as soon as the bound on ``F(x) - F*`` drops to ``eps``; if the
    theoretical stage count passes without certification the run continues
    for up to ``safety`` times as many stages and then raises
    :class:`BudgetExceeded`.

    ``sigma`` is the failure probability the caller budgets for stochastic
    subproblem solvers; deterministic runs ignore it.
    """
    mu = F_spec.mu
    if mu <= 0:
        raise ContractError("restarted_am needs a strongly convex objective (mu > 0)")
    x0 = np.array(x0, dtype=float)
    if R0 is None:
        R0 = float(np.linalg.norm(x0)) + 1.0
        log.warning("R0 not given; using |x0| + 1 = %.3g", R0)
    L_phi = L_phi if L_phi is not None else _L_of(phi)
    if H is None:
        H = 2.0 * L_phi
        if H <= 0:
            raise ContractError("H must be given when phi has no curvature")
    N = restart_length(H, mu)
    K = restart_count(mu, R0, eps)
    max_stages = K if certify is None else max(1, math.ceil(safety * max(K, 1)))
    cfg = AMConfig(H=H, max_iter=N, L_phi=L_phi)

    z = x0
    stages = [z.copy()]
    trace = []
    steps = 0
    done = {"flag": False, "bound": math.inf}

    def stage_callback(k, st, grad):
        stop = False
        if callback is not None:
            stop = bool(callback(steps + k, st, grad))
        if certify is not None:
            done["bound"] = certify(st.x_t, grad)
            if done["bound"] <= eps:
                done["flag"] = True
                stop = True
        return stop

    for stage in range(max_stages):
        rep = am_run(phi, psi, prox_solver, cfg, z, callback=stage_callback, ledger=ledger)
        steps += rep.iterations
        trace.extend((steps - rep.iterations + k, v, r) for k, v, r in rep.trace)
        z = rep.x_best
        stages.append(z.copy())
        if done["flag"]:
            break
    else:
        if certify is not None and not done["flag"]:
            raise BudgetExceeded(
                f"restarted AM used {max_stages} stages without certifying eps={eps:.3e} "
                f"(last bound {done['bound']:.3e})", best=z)
    return SolveReport(z, None, steps, ledger, trace,
                       {"stages": stages, "N": N, "K": K, "H": H, "certified": done["bound"]})


def plan_tolerances(eps, sigma, L_phi, L_psi, mu, H, R0) -> ToleranceBudget:
    """Oracle slack and subproblem accuracy that keep restarted AM within eps with prob. 1 - sigma."""
    if min(eps, mu, H, R0) <= 0 or L_phi < 0 or L_psi < 0:
        raise ContractError("constants must be positive")
    if not 0 <= sigma <= 1:
        raise ContractError("sigma must be a probability")
    if eps >= mu * R0**2:
        raise ContractError(f"eps={eps} >= mu R0^2 = {mu * R0**2}: nothing to plan")
    L = L_phi + L_psi
    c = FLOOR_CONSTANT
    branches = {
        "phi": eps * mu / (c * L_phi) if L_phi > 0 else math.inf,
        "psi": eps * mu / (c * L_psi) if L_psi > 0 else math.inf,
        "curvature": eps * mu**2 / (c * (L + H) ** 2),
        "radius": eps**1.5 / (5.0 * math.sqrt(8.0 * H * R0**2)),
    }
    delta = min(branches.values())
    stages_total = (16.0 * math.sqrt(2.0) * math.sqrt(H / mu) + 2.0) * math.log2(mu * R0**2 / eps)
    sig = sigma / (2.0 * stages_total)
    return ToleranceBudget(
        eps=eps, sigma=sigma, delta1=delta, delta2=delta, sigma0=sig,
        eps_f_tilde=branches["curvature"], sigma_tilde=sig,
        K_restarts=max(1, restart_count(mu, R0, eps)), N_inner=restart_length(H, mu),
        branches=branches,
    )


def ram_minimize(phi_grad, prox, H, mu, z0, stop, max_steps):
    """Lean restarted AM on gradient handles, used by the nested solvers.

    phi_grad(z) -> (grad, err) or None when phi vanishes.
    prox(g_md, z_md, H) -> (z_t, grad_psi(z_t), err); the prox solver
    reports the psi-gradient at its answer so the AM step costs nothing extra.
    stop(z_t, grad, err) -> bool is checked after every step.
    Restarts every ``restart_length(H, mu)`` steps from the last ``z_t``.
    Returns ``(z_t, grad, err, steps)``.
    """
    N = restart_length(H, mu)
    z = np.array(z0, dtype=float)
    steps = 0
    zero = 0.0
    while True:
        A = 0.0
        x = z
        xt = z
        for _ in range(N):
            a = am_coefficient(A, H)
            A1 = A + a
            xmd = (A / A1) * xt + (a / A1) * x
            if phi_grad is None:
                gmd, e_md = zero, 0.0
            else:
                gmd, e_md = phi_grad(xmd)
            xt, gpsi, e_psi = prox(gmd, xmd, H)
            if phi_grad is None:
                grad, err = gpsi, e_psi
            else:
                gphi, e_phi = phi_grad(xt)
                grad, err = gphi + gpsi, e_phi + e_psi
            steps += 1
            if stop(xt, grad, err):
                return xt, grad, err, steps
            if steps >= max_steps:
                raise BudgetExceeded(
                    f"restarted AM hit its budget of {max_steps} steps "
                    f"(|grad| = {np.linalg.norm(grad):.3e})", best=xt)
            x = x - a * grad
            A = A1
        z = xt

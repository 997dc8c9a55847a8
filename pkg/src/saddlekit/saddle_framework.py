"""Three nested restarted-AM loops for strongly-convex-strongly-concave saddle problems.

The problem is ``min_x max_y f(x) + G(x, y) - h(y)``, solved in the form
``min_y h(y) + max_x {-G(x, y) - f(x)}``:

* Loop 1 runs restarted AM in y with a zero linear part; every prox step is a
  saddle problem with an extra ``H1/2 |y - y_md|^2`` term.
* Loop 2 swaps min and max in that step and minimizes ``f + g`` over x, where
  ``g(x) = max_y {G(x, y) - h(y) - H1/2 |y - y_md|^2}`` is evaluated by an
  inner sliding solve.
* Loop 3 solves Loop 2's prox steps by restarted AM on the remaining smooth
  term with a closed-form quadratic prox.

Every level stops on a gradient-norm certificate. Subproblem tolerances track
the level's current certificate (see ``FrameworkPlan.theta``) instead of the
far smaller worst-case constants, and inner solves are warm-started.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .am_solver import ram_minimize, restart_length
from .oracle_core import (BudgetExceeded, CallLedger, ContractError, CountedOracle,
                          OracleClass, OracleSpec)


# ---------------------------------------------------------------------------
# problem container


@dataclass
class SaddleProblem:
    """``f(x) + (1/m_G) sum G_i(x, y) - (1/m_h) sum h_i(y)`` with counted oracles.

    Gradient callables are raw (uncounted); the ``d*`` methods count calls.
    A full gradient of an m-term sum counts m component calls.
    """

    dx: int
    dy: int
    f_grad: Callable
    h_grad_i: Callable
    G_grad_x_i: Callable
    G_grad_y_i: Callable
    L_f: float
    mu_x: float
    mu_y: float
    L_h_i: np.ndarray
    L_G_i: np.ndarray
    h_grad: Callable | None = None
    G_grad_x: Callable | None = None
    G_grad_y: Callable | None = None
    f_value: Callable | None = None
    h_value: Callable | None = None
    G_value: Callable | None = None
    prox_f: Callable | None = None
    prox_h: Callable | None = None
    tau_f: int = 1
    tau_h: int = 1
    tau_G: int = 1
    ledger: CallLedger = field(default_factory=CallLedger)

    def __post_init__(self):
        self.L_h_i = np.atleast_1d(np.asarray(self.L_h_i, dtype=float))
        self.L_G_i = np.atleast_1d(np.asarray(self.L_G_i, dtype=float))
        if self.mu_x <= 0 or self.mu_y <= 0:
            raise ContractError("mu_x and mu_y must be positive")
        if self.L_f < self.mu_x * (1 - 1e-9) or self.L_h < self.mu_y * (1 - 1e-9):
            raise ContractError("each smoothness constant must be at least its strong convexity")
        if self.L_G <= 0:
            raise ContractError("L_G must be positive")

    @property
    def L_h(self) -> float:
        return float(self.L_h_i.mean())

    @property
    def L_G(self) -> float:
        return float(self.L_G_i.mean())

    @property
    def m_h(self) -> int:
        return self.L_h_i.size

    @property
    def m_G(self) -> int:
        return self.L_G_i.size

    def constants(self) -> dict:
        return {"L_f": self.L_f, "L_h": self.L_h, "L_G": self.L_G, "mu_x": self.mu_x,
                "mu_y": self.mu_y, "m_h": self.m_h, "m_G": self.m_G,
                "tau_f": self.tau_f, "tau_h": self.tau_h, "tau_G": self.tau_G}

    # counted oracles -----------------------------------------------------
    def df(self, x):
        self.ledger.add(OracleClass.GRAD_F, self.tau_f)
        return self.f_grad(x)

    def dh_i(self, i, y):
        self.ledger.add(OracleClass.GRAD_H, self.tau_h)
        return self.h_grad_i(i, y)

    def dh(self, y):
        self.ledger.add(OracleClass.GRAD_H, self.tau_h * self.m_h)
        if self.h_grad is not None:
            return self.h_grad(y)
        return np.mean([self.h_grad_i(i, y) for i in range(self.m_h)], axis=0)

    def dxG_i(self, i, x, y):
        self.ledger.add(OracleClass.GRAD_XG, self.tau_G)
        return self.G_grad_x_i(i, x, y)

    def dyG_i(self, i, x, y):
        self.ledger.add(OracleClass.GRAD_YG, self.tau_G)
        return self.G_grad_y_i(i, x, y)

    def dxG(self, x, y):
        self.ledger.add(OracleClass.GRAD_XG, self.tau_G * self.m_G)
        if self.G_grad_x is not None:
            return self.G_grad_x(x, y)
        return np.mean([self.G_grad_x_i(i, x, y) for i in range(self.m_G)], axis=0)

    def dyG(self, x, y):
        self.ledger.add(OracleClass.GRAD_YG, self.tau_G * self.m_G)
        if self.G_grad_y is not None:
            return self.G_grad_y(x, y)
        return np.mean([self.G_grad_y_i(i, x, y) for i in range(self.m_G)], axis=0)

    def pf(self, v, lam):
        if self.prox_f is None:
            raise ContractError("no prox of f supplied")
        self.ledger.add(OracleClass.PROX_F)
        return self.prox_f(v, lam)

    def ph(self, v, lam):
        if self.prox_h is None:
            raise ContractError("no prox of h supplied")
        self.ledger.add(OracleClass.PROX_H)
        return self.prox_h(v, lam)

    def objective(self, x, y):
        if None in (self.f_value, self.G_value, self.h_value):
            raise ContractError("objective values not supplied")
        return self.f_value(x) + self.G_value(x, y) - self.h_value(y)


# ---------------------------------------------------------------------------
# plans


class Order(str, enum.Enum):
    STANDARD = "Standard"
    INVERSE = "Inverse"


class SlidingH(str, enum.Enum):
    HGEG = "HgeG"
    HLEG = "HleG"
    PROXH = "ProxH"
    FINITE_SUM = "FiniteSumH"


class SlidingF(str, enum.Enum):
    FGEG = "FgeG"
    FLEG = "FleG"


THETA = 1.0 / 64


@dataclass
class FrameworkPlan:
    H1: float
    H2: float
    H3: float
    order: Order
    sliding_h: SlidingH
    sliding_f: SlidingF
    budget: dict = field(default_factory=dict)
    theta: float = THETA
    safety: float = 2.0


def max_smoothness(L_G: float, mu: float) -> float:
    """Smoothness of ``x -> max_y {G(x, y) - w(y)}`` for a mu-strongly convex w."""
    return L_G + 2.0 * L_G**2 / mu


def loop1_smoothness(L_h: float, L_G: float, mu_x: float) -> float:
    """Smoothness of the Loop-1 objective ``h(y) + max_x {-G(x, y) - f(x)}``, doubled in the max part."""
    return L_h + 2.0 * L_G + 4.0 * L_G**2 / mu_x


def framework_constants(L_G, L_f, mu_y, order=Order.STANDARD):
    """(H1, H2, H3) for the requested loop order."""
    H1 = 2.0 * L_G
    H_g = 2.0 * max_smoothness(L_G, mu_y + H1)
    if Order(order) is Order.STANDARD:
        return H1, H_g, 2.0 * L_f
    return H1, 2.0 * L_f, H_g


def _below(a, b, rtol=1e-9):
    """a < b beyond rounding."""
    return a < b * (1 - rtol)


def check_sliding_h(problem: SaddleProblem, variant: SlidingH, H: float) -> None:
    variant = SlidingH(variant)
    L_h, L_G = problem.L_h, problem.L_G
    if variant is SlidingH.HGEG and _below(L_h, L_G):
        raise ContractError(f"HgeG needs L_h >= L_G (got {L_h} < {L_G})")
    if variant is SlidingH.HLEG and _below(L_G, L_h):
        raise ContractError(f"HleG needs L_h <= L_G (got {L_h} > {L_G})")
    if variant is SlidingH.PROXH and problem.prox_h is None:
        raise ContractError("ProxH needs a prox of h")
    if variant is SlidingH.FINITE_SUM:
        if problem.m_h < 2:
            raise ContractError("FiniteSumH needs m_h >= 2")
        if problem.m_h * (H + 2 * L_G + problem.mu_y) > L_h:
            raise ContractError(
                f"FiniteSumH needs m_h (H + 2 L_G + mu_y) <= L_h "
                f"({problem.m_h * (H + 2 * L_G + problem.mu_y):.3g} > {L_h:.3g})")


def check_sliding_f(problem: SaddleProblem, variant: SlidingF) -> None:
    variant = SlidingF(variant)
    if variant is SlidingF.FGEG and _below(problem.L_f, problem.L_G):
        raise ContractError(f"FgeG needs L_f >= L_G (got {problem.L_f} < {problem.L_G})")
    if variant is SlidingF.FLEG and _below(problem.L_G, problem.L_f):
        raise ContractError(f"FleG needs L_f <= L_G (got {problem.L_f} > {problem.L_G})")


def plan_framework(problem: SaddleProblem, order=None, sliding_h=None, sliding_f=None,
                   theta: float = THETA, safety: float = 2.0) -> FrameworkPlan:
    """Pick loop order and sliding variants (auto when None) and the H constants."""
    L_f, L_G, L_h = problem.L_f, problem.L_G, problem.L_h
    order = Order(order) if order is not None else (Order.STANDARD if L_f >= L_G else Order.INVERSE)
    if sliding_h is None:
        if problem.prox_h is not None:
            sliding_h = SlidingH.PROXH
        else:
            sliding_h = SlidingH.HGEG if L_h >= L_G else SlidingH.HLEG
    if sliding_f is None:
        sliding_f = SlidingF.FGEG if L_f >= L_G else SlidingF.FLEG
    H1, H2, H3 = framework_constants(L_G, L_f, problem.mu_y, order)
    check_sliding_h(problem, sliding_h, H1)
    check_sliding_f(problem, sliding_f)
    if not 0 < theta < 1 or safety < 1:
        raise ContractError("theta must lie in (0, 1) and safety must be at least 1")
    return FrameworkPlan(H1, H2, H3, order, SlidingH(sliding_h), SlidingF(sliding_f),
                         theta=theta, safety=safety)


@dataclass
class SaddleSolution:
    x_hat: np.ndarray
    y_hat: np.ndarray
    eps_certified: float
    sigma_certified: float
    ledger: CallLedger
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# accuracy bookkeeping


def loop2_accuracy(eps2_prime, sigma2_prime, H1, mu_y, L_G, L_h, mu_x):
    """(eps2, sigma2, delta_bar) for the swapped Loop-2 problem.

    An eps2-solution x^ of the swapped minimization plus a y^ solving the
    inner maximization to delta_bar/2 gives an eps2_prime-solution of the
    Loop-1 prox step.
    """
    r = ((H1 + mu_y) / (4.0 * L_G)) ** 2
    L_sum = L_h + H1 + L_G + 2.0 * L_G**2 / mu_x
    eps2 = r * mu_x / L_sum * eps2_prime
    delta_bar = (H1 + mu_y) / (4.0 * mu_x * r) * eps2
    lhs = 2.0 * L_sum / (H1 + mu_y) * delta_bar + 8.0 * (L_G / (H1 + mu_y)) ** 2 * L_sum / mu_x * eps2
    assert lhs <= eps2_prime * (1 + 1e-12), "Loop-2 accuracy chain violated"
    return eps2, sigma2_prime / 2.0, delta_bar


def pair_gap_bound(problem: SaddleProblem, eps_x, eps_y) -> float:
    """Bound on the x-side duality gap of (x^, y^) given their accuracies."""
    L_G, mu_x, mu_y = problem.L_G, problem.mu_x, problem.mu_y
    L_psi = problem.L_f + max_smoothness(L_G, mu_y)
    return 2.0 * L_psi * (eps_x / mu_x + (L_G / mu_x) ** 2 * 4.0 * eps_y / mu_y)


def split_accuracy(problem: SaddleProblem, eps):
    """(eps_y, eps_x) such that eps_y + pair_gap_bound(eps_x, eps_y) <= eps."""
    L_G, mu_x, mu_y = problem.L_G, problem.mu_x, problem.mu_y
    L_psi = problem.L_f + max_smoothness(L_G, mu_y)
    eps_x = eps * mu_x / (4.0 * L_psi)
    eps_y = 0.5 * eps / (1.0 + 8.0 * L_psi * (L_G / mu_x) ** 2 / mu_y)
    assert eps_y + pair_gap_bound(problem, eps_x, eps_y) <= eps * (1 + 1e-12)
    return eps_y, eps_x


def _step_cap(H, mu, safety, ratio=1e16):
    """Hard cap on AM steps: the restart bound for a gradient ratio of ``sqrt(ratio)``."""
    return int(safety * (16.0 * math.sqrt(2.0) * math.sqrt(H / mu) + 2.0) * math.log2(ratio)) \
        + restart_length(H, mu)


def _step_budget(H, mu, L, s0, tol, safety):
    """Restart bound for driving the gradient norm from s0 to tol (R0 = s0/mu, eps = tol^2/2L)."""
    ratio = max(2.0 * L * s0**2 / (mu * tol**2), 2.0)
    return _step_cap(H, mu, safety, ratio)


def _sub_ratio(theta, mu, mu_model, H):
    """Subproblem gradient target as a fraction of the outer gradient norm.

    Objective residual theta * cert * mu^2 / (mu + H)^2 with cert = s^2 / (2 mu),
    expressed through the model's strong convexity mu_model.
    """
    return math.sqrt(theta * mu * mu_model) / (mu + H)


# ---------------------------------------------------------------------------
# closed-form quadratic prox


def quadratic_prox(linear, weights, centers):
    """argmin_u <linear, u> + sum_i w_i/2 |u - c_i|^2."""
    W = float(sum(weights))
    if W <= 0:
        raise ContractError("quadratic weights must sum to a positive number")
    acc = -np.asarray(linear, dtype=float)
    for w, c in zip(weights, centers):
        acc = acc + w * np.asarray(c, dtype=float)
    return acc / W


def loop3_quadratic_prox(grad_g, grad_f_or_model, H2, H3, x_md, x_l_md):
    """Exact minimizer of the innermost model

    <grad_g + grad_f, u> + H2/2 |u - x_md|^2 + H3/2 |u - x_l_md|^2.
    """
    if H2 + H3 <= 0:
        raise ContractError("H2 + H3 must be positive")
    return quadratic_prox(np.asarray(grad_g) + np.asarray(grad_f_or_model), (H2, H3), (x_md, x_l_md))


# ---------------------------------------------------------------------------
# two-level sliding minimization


def two_level_minimize(P, Q, *, H, H_in, mu, mu_Q, L, z0, grad_tol, kappa=0.0, center=None,
                       theta=THETA, safety=2.0, stats=None):
    """Minimize ``S(z) = P(z) + Q(z) + kappa/2 |z - center|^2`` to ``|grad S| <= grad_tol``.

    The outer restarted AM linearizes P (needs H >= 2 L_P); each of its prox
    steps is solved by an inner restarted AM that linearizes Q (H_in >= 2 L_Q)
    and handles the remaining quadratic in closed form.

    P(z, tol), Q(z, tol) -> (grad, err) with err <= tol an a-posteriori bound
    on the gradient error. ``mu`` is the strong convexity of S, ``mu_Q`` that
    of Q, ``L`` the smoothness of S.

    Returns ``(z, grad_S(z), err)`` with ``|grad| + err <= grad_tol``.
    """
    z0 = np.asarray(z0, dtype=float)
    c = z0 if center is None else np.asarray(center, dtype=float)
    mu_model = mu_Q + kappa + H
    r_sub = _sub_ratio(theta, mu, mu_model, H)
    st = {"s": math.inf, "u": z0}
    if stats is None:
        stats = {}
    stats.setdefault("outer", 0)
    stats.setdefault("inner", 0)

    gP, eP = P(z0, grad_tol * r_sub)
    gQ, eQ = Q(z0, grad_tol * r_sub)
    g0 = gP + gQ + kappa * (z0 - c)
    s0 = float(np.linalg.norm(g0)) + eP + eQ
    if s0 <= grad_tol:
        return z0, g0, eP + eQ
    st["s"] = s0

    def scale():
        return max(st["s"], grad_tol)

    def P_tol(z):
        return P(z, scale() * r_sub)

    def prox(g_md, z_md, H_out):
        target = scale() * r_sub
        q_tol = target * 0.25
        lin_c = g_md

        def inner_prox(gQ_md, u_md, Hi):
            u = quadratic_prox(lin_c + gQ_md, (kappa, H_out, Hi), (c, z_md, u_md))
            return u, lin_c + kappa * (u - c) + H_out * (u - z_md), 0.0

        def Q_grad(u):
            return Q(u, q_tol)

        last = {}

        def inner_stop(u, grad, err):
            last["gQ"] = grad - (lin_c + kappa * (u - c) + H_out * (u - z_md))
            last["err"] = err
            return float(np.linalg.norm(grad)) + err <= target

        cap = _step_cap(H_in, mu_model, safety)
        u, _, _, n = ram_minimize(Q_grad, inner_prox, H_in, mu_model, z_md, inner_stop, cap)
        stats["inner"] += n
        # psi(z) = Q(z) + kappa/2 |z - c|^2 at the inner answer
        return u, last["gQ"] + kappa * (u - c), last["err"]

    def outer_stop(z, grad, err):
        stats["outer"] += 1
        st["s"] = float(np.linalg.norm(grad)) + err
        return st["s"] <= grad_tol

    budget = _step_budget(H, mu, L, s0, grad_tol, safety)
    z, grad, err, _ = ram_minimize(P_tol, prox, H, mu, z0, outer_stop, budget)
    return z, grad, err


def _prox_h_minimize(problem, x, kappa, center, y0, grad_tol, safety, theta, stats):
    """Minimize ``-G(x, y) + h(y) + kappa/2 |y - center|^2`` linearizing G and using prox_h."""
    H_o = 2.0 * problem.L_G
    mu = problem.mu_y + kappa
    L = problem.L_h + problem.L_G + kappa

    def phi(y):
        return -problem.dyG(x, y), 0.0

    def prox(g_md, y_md, H):
        # argmin <g, u> + h(u) + kappa/2 |u - center|^2 + H/2 |u - y_md|^2
        W = kappa + H
        v = (kappa * center + H * y_md - g_md) / W
        u = problem.ph(v, 1.0 / W)
        grad_h = W * (v - u)
        return u, grad_h + kappa * (u - center), 0.0

    cap = _step_cap(H_o, mu, safety)

    def stop(y, grad, err):
        stats["outer"] = stats.get("outer", 0) + 1
        return float(np.linalg.norm(grad)) <= grad_tol

    y, grad, err, _ = ram_minimize(phi, prox, H_o, mu, y0, stop, cap)
    return y, grad, err


# ---------------------------------------------------------------------------
# sliding oracles


class InnerMaximizer:
    """Warm-started solver for ``y~(x) = argmax_y {G(x, y) - h(y) - kappa/2 |y - center|^2}``."""

    def __init__(self, problem: SaddleProblem, variant: SlidingH, kappa: float, center,
                 theta=THETA, safety=2.0, y0=None, seed=0):
        self.p = problem
        self.variant = SlidingH(variant)
        check_sliding_h(problem, self.variant, kappa)
        self.kappa = float(kappa)
        self.center = np.asarray(center, dtype=float)
        self.mu = problem.mu_y + self.kappa
        self.theta, self.safety = theta, safety
        self.y = self.center.copy() if y0 is None else np.asarray(y0, dtype=float)
        self.stats = {"outer": 0, "inner": 0, "solves": 0}
        self.seed = seed

    def solve(self, x, grad_tol):
        """Return y with ``|grad_y S(y)| <= grad_tol`` (S the negated inner objective)."""
        p, k, c = self.p, self.kappa, self.center
        self.stats["solves"] += 1
        if self.variant is SlidingH.PROXH:
            y, _, _ = _prox_h_minimize(p, x, k, c, self.y, grad_tol, self.safety, self.theta,
                                       self.stats)
        elif self.variant is SlidingH.FINITE_SUM:
            from .variance_reduction import finite_sum_max_solve
            self.seed += 1
            y = finite_sum_max_solve(p, x, k, c, self.y, grad_tol, self.seed, self.safety)
        else:
            def negG(y, tol):
                return -p.dyG(x, y), 0.0

            def hgrad(y, tol):
                return p.dh(y), 0.0

            L = p.L_h + p.L_G + k
            if self.variant is SlidingH.HGEG:
                P, Q, H, H_in, mu_Q = negG, hgrad, 2 * p.L_G, 2 * p.L_h, p.mu_y
            else:
                P, Q, H, H_in, mu_Q = hgrad, negG, 2 * p.L_h, 2 * p.L_G, 0.0
            y, _, _ = two_level_minimize(P, Q, H=H, H_in=H_in, mu=self.mu, mu_Q=mu_Q, L=L,
                                         z0=self.y, grad_tol=grad_tol, kappa=k, center=c,
                                         theta=self.theta, safety=self.safety, stats=self.stats)
        self.y = y
        return y

    def grad_x(self, x, tol):
        """Gradient of ``g(x) = max_y {...}`` with error at most ``tol``."""
        p = self.p
        tau = tol * self.mu / p.L_G
        y = self.solve(x, tau)
        return p.dxG(x, y), tol


class InnerMinimizer:
    """Warm-started solver for ``x~(y) = argmin_x {f(x) + G(x, y)}``."""

    def __init__(self, problem: SaddleProblem, variant: SlidingF, theta=THETA, safety=2.0, x0=None):
        self.p = problem
        self.variant = SlidingF(variant)
        check_sliding_f(problem, self.variant)
        self.theta, self.safety = theta, safety
        self.x = np.zeros(problem.dx) if x0 is None else np.asarray(x0, dtype=float)
        self.stats = {"outer": 0, "inner": 0, "solves": 0}

    def solve(self, y, grad_tol):
        p = self.p
        self.stats["solves"] += 1

        def G(x, tol):
            return p.dxG(x, y), 0.0

        def F(x, tol):
            return p.df(x), 0.0

        if self.variant is SlidingF.FGEG:
            P, Q, H, H_in, mu_Q = G, F, 2 * p.L_G, 2 * p.L_f, p.mu_x
        else:
            P, Q, H, H_in, mu_Q = F, G, 2 * p.L_f, 2 * p.L_G, 0.0
        x, _, _ = two_level_minimize(P, Q, H=H, H_in=H_in, mu=p.mu_x, mu_Q=mu_Q, L=p.L_f + p.L_G,
                                     z0=self.x, grad_tol=grad_tol, theta=self.theta,
                                     safety=self.safety, stats=self.stats)
        self.x = x
        return x

    def grad_r(self, y, tol):
        """Gradient of ``r(y) = max_x {-G(x, y) - f(x)}`` with error at most ``tol``."""
        p = self.p
        x = self.solve(y, tol * p.mu_x / p.L_G)
        return -p.dyG(x, y), tol


def sliding_max_oracle(problem: SaddleProblem, H, y0, delta, sigma=0.0, variant=None) -> CountedOracle:
    """Inexact oracle for ``g(x) = max_y {G(x, y) - h(y) - H/2 |y - y0|^2}``.

    Each evaluation solves the inner problem to objective residual delta/2 by
    the chosen sliding construction and returns ``(value, grad_x G(x, y~))``.
    The spec is ``(0, delta, sigma, 2 L_g, 0)`` with
    ``L_g = L_G + 2 L_G^2 / (mu_y + H)``.
    """
    if H < 0 or delta <= 0:
        raise ContractError("need H >= 0 and delta > 0")
    if variant is None:
        variant = (SlidingH.PROXH if problem.prox_h is not None
                   else SlidingH.HGEG if problem.L_h >= problem.L_G else SlidingH.HLEG)
    solver = InnerMaximizer(problem, variant, H, y0)
    mu = problem.mu_y + H
    L_g = max_smoothness(problem.L_G, mu)
    grad_tol = math.sqrt(mu * delta)
    y0 = np.asarray(y0, dtype=float)

    def ev(x):
        y = solver.solve(x, grad_tol)
        val = np.nan
        if problem.G_value is not None and problem.h_value is not None:
            val = problem.G_value(x, y) - problem.h_value(y) - 0.5 * H * float((y - y0) @ (y - y0))
        return val, problem.dxG(x, y)

    oracle = CountedOracle(ev, OracleSpec.scalar(delta, 2.0 * L_g, 0.0, sigma), problem.dx)
    oracle.L_smooth = L_g
    oracle.solver = solver
    return oracle


# ---------------------------------------------------------------------------
# the three loops


@dataclass
class _Context:
    problem: SaddleProblem
    plan: FrameworkPlan
    x_solver: InnerMinimizer
    x_warm: np.ndarray
    y_warm: np.ndarray | None = None
    stats: dict = field(default_factory=lambda: {"loop1": 0, "loop2": 0, "loop2_calls": 0})
    callback: Callable | None = None


def loop2_swap_and_solve(problem: SaddleProblem, y_md, plan: FrameworkPlan, budget: dict,
                         ctx: _Context | None = None):
    """Solve the Loop-1 prox step at ``y_md`` through the swapped x-problem.

    ``budget['eps']`` is the objective accuracy required of the returned y
    for ``h(y) + H1/2 |y - y_md|^2 + max_x {-G(x, y) - f(x)}``.
    Returns ``(x_hat, y_hat)``.
    """
    p = problem
    y_md = np.asarray(y_md, dtype=float)
    if ctx is None:
        ctx = _Context(p, plan, InnerMinimizer(p, plan.sliding_f, plan.theta, plan.safety),
                       np.zeros(p.dx))
    H1 = plan.H1
    eps2, _, delta_bar = loop2_accuracy(budget["eps"], budget.get("sigma", 0.0), H1, p.mu_y,
                                        p.L_G, p.L_h, p.mu_x)
    ymax = InnerMaximizer(p, plan.sliding_h, H1, y_md, plan.theta, plan.safety,
                          y0=ctx.y_warm if ctx.y_warm is not None else y_md)
    L_g = max_smoothness(p.L_G, p.mu_y + H1)

    def g_grad(x, tol):
        return ymax.grad_x(x, tol)

    def f_grad(x, tol):
        return p.df(x), 0.0

    grad_tol = math.sqrt(2.0 * p.mu_x * eps2)
    L = p.L_f + L_g
    if plan.order is Order.STANDARD:
        P, Q, mu_Q = g_grad, f_grad, p.mu_x
    else:
        P, Q, mu_Q = f_grad, g_grad, 0.0
    stats = {}
    x_hat, _, _ = two_level_minimize(P, Q, H=plan.H2, H_in=plan.H3, mu=p.mu_x, mu_Q=mu_Q, L=L,
                                     z0=ctx.x_warm, grad_tol=grad_tol, theta=plan.theta,
                                     safety=plan.safety, stats=stats)
    # recover y^ at objective residual delta_bar / 2
    y_hat = ymax.solve(x_hat, math.sqrt((p.mu_y + H1) * delta_bar))
    ctx.x_warm = x_hat
    ctx.y_warm = y_hat
    ctx.stats["loop2"] += stats.get("outer", 0)
    ctx.stats["loop2_calls"] += 1
    return x_hat, y_hat


def loop1_outer(problem: SaddleProblem, plan: FrameworkPlan, budget: dict, ctx: _Context | None = None):
    """Restarted AM in y on ``h(y) + max_x {-G(x, y) - f(x)}`` with a zero linear part.

    ``budget['grad_tol']`` is the certified gradient-norm target and
    ``budget['y0']`` the start. Returns the certified y-iterate.
    """
    p = problem
    if ctx is None:
        ctx = _Context(p, plan, InnerMinimizer(p, plan.sliding_f, plan.theta, plan.safety),
                       np.zeros(p.dx))
    y0 = np.asarray(budget.get("y0", np.zeros(p.dy)), dtype=float)
    tol = float(budget["grad_tol"])
    H1, mu = plan.H1, p.mu_y
    L = loop1_smoothness(p.L_h, p.L_G, p.mu_x)
    r_sub = _sub_ratio(plan.theta, mu, mu + H1, H1)

    def psi_grad(y, err_tol):
        gr, e = ctx.x_solver.grad_r(y, err_tol)
        return p.dh(y) + gr, e

    g0, e0 = psi_grad(y0, tol * r_sub)
    s0 = float(np.linalg.norm(g0)) + e0
    st = {"s": s0}
    if s0 <= tol:
        return y0

    def prox(_g_md, y_md, H):
        s = max(st["s"], tol)
        # objective residual of the prox step, theta * (s^2 / 2 mu) * mu^2 / (mu + H)^2
        eps_sub = plan.theta * s**2 * mu / (2.0 * (mu + H1) ** 2)
        _, y_t = loop2_swap_and_solve(p, y_md, plan, {"eps": eps_sub}, ctx)
        g, e = psi_grad(y_t, s * r_sub)
        return y_t, g, e

    def stop(y, grad, err):
        ctx.stats["loop1"] += 1
        st["s"] = float(np.linalg.norm(grad)) + err
        if ctx.callback is not None:
            ctx.callback(ctx.stats["loop1"], ctx.x_warm, y, st["s"])
        return st["s"] <= tol

    steps = _step_budget(H1, mu, L, s0, tol, plan.safety)
    y, _, _, _ = ram_minimize(None, prox, H1, mu, y0, stop, steps)
    return y


def recover_pair(y_hat, problem: SaddleProblem, eps_x, sigma_x=0.0, plan: FrameworkPlan | None = None,
                 x0=None, solver: InnerMinimizer | None = None):
    """x^ solving ``max_x {-G(x, y^) - f(x)}`` to objective accuracy eps_x."""
    if eps_x <= 0:
        raise ContractError("eps_x must be positive")
    if solver is None:
        variant = plan.sliding_f if plan is not None else (
            SlidingF.FGEG if problem.L_f >= problem.L_G else SlidingF.FLEG)
        solver = InnerMinimizer(problem, variant, x0=x0)
    elif x0 is not None:
        solver.x = np.asarray(x0, dtype=float)
    return solver.solve(np.asarray(y_hat, dtype=float), math.sqrt(2.0 * problem.mu_x * eps_x))


def solve_saddle(problem: SaddleProblem, eps: float, sigma: float = 0.0, plan=None,
                 x0=None, y0=None, callback=None) -> SaddleSolution:
    """Certified eps-solution (x^, y^) of ``min_x max_y f + G - h``.

    ``plan`` is a :class:`FrameworkPlan`, ``None``/``"auto"`` for the
    automatic choice, or a dict of keyword overrides for :func:`plan_framework`.
    ``callback(step, x, y, residual)`` sees every outer step.
    The duality gap of the answer is at most ``eps``; all solvers here are
    deterministic, so the certificate holds with probability one.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    if not 0 <= sigma <= 1:
        raise ContractError("sigma must be a probability")
    if plan is None or plan == "auto":
        plan = plan_framework(problem)
    elif isinstance(plan, dict):
        plan = plan_framework(problem, **plan)
    p = problem
    eps_y, eps_x = split_accuracy(p, eps)
    plan.budget.update({"eps_y": eps_y, "eps_x": eps_x, "grad_tol_y": math.sqrt(2 * p.mu_y * eps_y)})
    x_start = np.zeros(p.dx) if x0 is None else np.asarray(x0, dtype=float)
    ctx = _Context(p, plan, InnerMinimizer(p, plan.sliding_f, plan.theta, plan.safety, x0=x_start),
                   x_start.copy(), callback=callback)
    y_start = np.zeros(p.dy) if y0 is None else np.asarray(y0, dtype=float)
    before = p.ledger.snapshot()
    y_hat = loop1_outer(p, plan, {"grad_tol": plan.budget["grad_tol_y"], "y0": y_start}, ctx)
    x_hat = recover_pair(y_hat, p, eps_x, plan=plan, solver=ctx.x_solver)
    extras = dict(ctx.stats)
    extras["calls"] = p.ledger.diff(before)
    extras["plan"] = plan
    return SaddleSolution(x_hat, y_hat, eps, 0.0, p.ledger, extras)

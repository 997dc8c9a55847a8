"""Variance-reduced inner solvers: loopless SVRG for composite finite sums and SAGA for saddle points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .oracle_core import BudgetExceeded, ContractError

_CHUNK = 4096


@dataclass
class FiniteSumProblem:
    """``F(x) = (1/n) sum_i phi_i(x) + psi(x)`` with mu-strongly convex phi.

    grad_i(i, x) returns the gradient of phi_i; ``count(k)`` (optional) is
    called with the number of component gradients spent.
    psi is given by ``psi_prox(v, step) = argmin step*psi(z) + |z - v|^2/2``
    (identity when None) and optionally ``psi_grad`` (needed for certificates).
    """

    grad_i: Callable
    L_i: np.ndarray
    mu: float
    dim: int
    psi_prox: Callable | None = None
    psi_grad: Callable | None = None
    L_psi: float = 0.0
    L: float | None = None
    count: Callable | None = None

    def __post_init__(self):
        self.L_i = np.atleast_1d(np.asarray(self.L_i, dtype=float))
        if self.mu <= 0:
            raise ContractError("the finite sum must be strongly convex (mu > 0)")
        if np.any(self.L_i <= 0):
            raise ContractError("component smoothness constants must be positive")
        if self.L is None:
            self.L = self.L_bar
        if self.L > self.L_bar * (1 + 1e-12) or self.mu > self.L * (1 + 1e-12):
            raise ContractError("need mu <= L <= mean(L_i)")

    @property
    def n(self) -> int:
        return self.L_i.size

    @property
    def L_bar(self) -> float:
        return float(self.L_i.mean())

    def _grad(self, i, x):
        if self.count is not None:
            self.count(1)
        return self.grad_i(i, x)

    def full_grad_table(self, x):
        if self.count is not None:
            self.count(self.n)
        return np.array([self.grad_i(i, x) for i in range(self.n)])

    def prox(self, v, step):
        return v if self.psi_prox is None else self.psi_prox(v, step)

    def composite_grad(self, phi_grad, x):
        return phi_grad if self.psi_grad is None else phi_grad + self.psi_grad(x)


def lsvrg_budget(problem: FiniteSumProblem, eps, sigma, R0, safety=2.0) -> int:
    """Iterations that drive E|x - x*|^2 below 2 eps sigma / L_F.

    3 (sqrt(n) + sqrt(2 D_L Lbar / mu))^2 ln(Phi0 / eps') with D_L = 4 - 3 mu / Lbar
    dominates max{6 Lbar/mu, 2n}, the inverse contraction of loopless SVRG
    with step 1/(6 Lbar) and snapshot probability 1/n; Phi0 = R0^2 (1 + n/9)
    bounds its Lyapunov function at the start.
    """
    if not 0 < sigma <= 1 or eps <= 0:
        raise ContractError("need eps > 0 and sigma in (0, 1]")
    n, Lb, mu = problem.n, problem.L_bar, problem.mu
    D_L = 4.0 - 3.0 * mu / Lb
    L_F = problem.L + problem.L_psi
    eps_p = 2.0 * eps * sigma / L_F
    phi0 = R0**2 * (1.0 + n / 9.0)
    rate = 3.0 * (math.sqrt(n) + math.sqrt(2.0 * D_L * Lb / mu)) ** 2
    return max(1, math.ceil(safety * rate * max(math.log(phi0 / eps_p), 1.0)))


def lsvrg_solve(problem: FiniteSumProblem, eps, sigma, seed, x0=None, safety=2.0, R0=None,
                grad_tol=None, info: dict | None = None):
    """Loopless SVRG with importance sampling ``pi_i ~ L_i``.

    Returns x with ``P{F(x) - F* >= eps} <= sigma`` after the budget of
    :func:`lsvrg_budget`. With ``grad_tol`` the run instead stops at the first
    snapshot whose full composite gradient has norm <= grad_tol and raises
    :class:`BudgetExceeded` if the budget ends first.
    Each stochastic step costs one component gradient; each snapshot costs n.
    """
    p = problem
    n = p.n
    rng = np.random.default_rng(seed)
    x = np.zeros(p.dim) if x0 is None else np.array(x0, dtype=float)
    table = p.full_grad_table(x)
    full = table.mean(axis=0)
    if R0 is None:
        R0 = float(np.linalg.norm(p.composite_grad(full, x))) / p.mu
    budget = lsvrg_budget(p, eps, sigma, max(R0, 1e-300), safety)
    pi = p.L_i / p.L_i.sum()
    weight = 1.0 / (n * pi)
    gamma = 1.0 / (6.0 * p.L_bar)
    snap_p = 1.0 / n
    if grad_tol is not None and np.linalg.norm(p.composite_grad(full, x)) <= grad_tol:
        _fill(info, 0, x, True)
        return x
    k = 0
    w = x
    while k < budget:
        m = min(_CHUNK, budget - k)
        idx = rng.choice(n, size=m, p=pi)
        coins = rng.random(m)
        for i, c in zip(idx, coins):
            g = weight[i] * (p._grad(i, x) - table[i]) + full
            x = p.prox(x - gamma * g, gamma)
            k += 1
            if c < snap_p:
                w = x
                table = p.full_grad_table(w)
                full = table.mean(axis=0)
                if grad_tol is not None and np.linalg.norm(p.composite_grad(full, w)) <= grad_tol:
                    _fill(info, k, w, True)
                    return w
    if grad_tol is not None:
        raise BudgetExceeded(f"L-SVRG used {budget} steps without reaching |grad| <= {grad_tol:.3e}",
                             best=x)
    _fill(info, k, x, False)
    return x


def _fill(info, k, x, certified):
    if info is not None:
        info.update(iterations=k, certified=certified)


def finite_sum_max_solve(problem, x, kappa, center, y0, grad_tol, seed, safety=2.0):
    """``argmin_y -G(x, y) + h(y) + kappa/2 |y - center|^2`` for a finite-sum h.

    Outer restarted AM linearizes -G(x, .) with H = 2 L_G; each prox step is a
    finite sum over the h_i solved by L-SVRG, certified by a full gradient.
    """
    from .am_solver import ram_minimize
    from .saddle_framework import _step_cap

    pr = problem
    H_out = 2.0 * pr.L_G
    mu = pr.mu_y + kappa
    center = np.asarray(center, dtype=float)
    state = {"seed": int(seed) * 7919, "s": math.inf}

    def phi(y):
        return -pr.dyG(x, y), 0.0

    def prox(g_md, u_md, H):
        target = 0.25 * max(state["s"], grad_tol)
        # phi_i(u) = h_i(u) + <g, u> + kappa/2 |u - c|^2 + H/2 |u - u_md|^2
        fs = FiniteSumProblem(
            grad_i=lambda i, u: pr.h_grad_i(i, u) + g_md + kappa * (u - center) + H * (u - u_md),
            L_i=pr.L_h_i + kappa + H, mu=pr.mu_y + kappa + H, dim=pr.dy,
            count=lambda k: pr.ledger.add("GradH_i", k * pr.tau_h),
        )
        state["seed"] += 1
        u = lsvrg_solve(fs, target, 0.5, state["seed"], x0=u_md, safety=safety, grad_tol=target)
        # psi-gradient from the certified full gradient of the model
        g_h = np.mean([pr.h_grad_i(i, u) for i in range(pr.m_h)], axis=0)
        return u, g_h + kappa * (u - center), 0.0

    def stop(y, grad, err):
        state["s"] = float(np.linalg.norm(grad))
        return state["s"] <= grad_tol

    y, _, _, _ = ram_minimize(phi, prox, H_out, mu, y0, stop, _step_cap(H_out, mu, safety))
    return y


# ---------------------------------------------------------------------------
# SAGA for saddle points


def prox_saddle(M_prox, lam, scale, z):
    """Joint prox of ``M(x, y) = f(x) - h(y)`` in the metric scaled by (mu_x, mu_y).

    M_prox = (prox_f, prox_h) with ``prox(v, step)``; scale = (1/mu_x, 1/mu_y);
    z = (x', y'). Returns ``(prox_f(x', lam/mu_x), prox_h(y', lam/mu_y))``.
    """
    x, y = z
    if lam == 0:
        return np.array(x, dtype=float), np.array(y, dtype=float)
    pf, ph = M_prox
    return pf(x, lam * scale[0]), ph(y, lam * scale[1])


def saga_constants(L_G, mu_x, mu_y):
    """(L, Lbar) of the mu-rescaled operator, which is 1-strongly monotone.

    Both are bounded by 2 L_G / min(mu_x, mu_y).
    """
    L = 2.0 * L_G / min(mu_x, mu_y)
    return L, L


def saga_step_size(J, m, L, L_bar):
    """lambda = 1 / max{3|J|/(2m) - 1, L^2 + 3 Lbar^2 / m}."""
    return 1.0 / max(1.5 * J / m - 1.0, L**2 + 3.0 * L_bar**2 / m)


def saga_eta(m_G, L_G, mu_min):
    """eta = 1 / max{3 m_G / 2, 3 L_G^2 / mu^2}; E|z_t - z*|^2 <= 2 (1 - eta/4)^t |z_0 - z*|^2."""
    return 1.0 / max(1.5 * m_G, 3.0 * L_G**2 / mu_min**2)


def saga_accuracy(eps, L_G, mu_x, mu_y, M_gap):
    """Squared-distance target eps' turning E|z - z*|^2 <= eps' sigma into an (eps, sigma) gap."""
    return min(eps, eps / (4 * L_G + 4 * L_G**2 / mu_y + 4 * L_G**2 / mu_x),
               eps**4 / (4.0 * M_gap**2) if M_gap > 0 else math.inf)


def saga_iterations(eta, R0_sq, eps_p, sigma_p):
    """N = ceil(4/eta ln(2 R0^2 / (eps' sigma')))."""
    return max(1, math.ceil(4.0 / eta * math.log(max(2.0 * R0_sq / (eps_p * sigma_p), 1.0))))


@dataclass
class SagaState:
    z: tuple
    table: np.ndarray
    W: np.ndarray
    lam: float
    pis: np.ndarray
    m: int = 1
    it: int = 0
    history: list = field(default_factory=list)


def _operator_i(problem, i, x, y):
    """B_i(x, y) = (1/m_G) (grad_x G_i, -grad_y G_i), stacked."""
    m = problem.m_G
    return np.concatenate([problem.dxG_i(i, x, y), -problem.dyG_i(i, x, y)]) / m


def saga_init(problem, x0, y0, m=1, uniform=False, L=None, L_bar=None):
    p = problem
    if p.prox_f is None or p.prox_h is None:
        raise ContractError("SAGA needs the prox of f and of h")
    if m < 1:
        raise ContractError("batch size must be positive")
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if L is None or L_bar is None:
        L, L_bar = saga_constants(p.L_G, p.mu_x, p.mu_y)
    lam = saga_step_size(p.m_G, m, L, L_bar)
    pis = np.full(p.m_G, 1.0 / p.m_G) if uniform else p.L_G_i / p.L_G_i.sum()
    table = np.array([_operator_i(p, i, x0, y0) for i in range(p.m_G)])
    return SagaState((x0, y0), table, table.sum(axis=0), lam, pis, m)


def saga_estimate(problem, st: SagaState, idx):
    """Variance-reduced estimate of the full operator at st.z from the sampled indices."""
    x, y = st.z
    corr = np.zeros_like(st.W)
    for i in idx:
        corr += (_operator_i(problem, i, x, y) - st.table[i]) / st.pis[i]
    return st.W + corr / len(idx)


def saga_step(problem, st: SagaState, idx, resample):
    """One iteration with sampled indices ``idx`` and uniform resampling indices ``resample``."""
    p = problem
    x, y = st.z
    dx = p.dx
    est = saga_estimate(p, st, idx)
    xp = x - st.lam * est[:dx] / p.mu_x
    yp = y - st.lam * est[dx:] / p.mu_y
    st.z = (p.pf(xp, st.lam / p.mu_x), p.ph(yp, st.lam / p.mu_y))
    for j in resample:
        v = _operator_i(p, j, *st.z)
        st.W = st.W - (st.table[j] - v)
        st.table[j] = v
    st.it += 1
    if st.it % p.m_G == 0:
        st.W = st.table.sum(axis=0)
    return st


def saga_residual(problem, st: SagaState):
    """Forward-backward fixed-point residual at st.z with the exact full operator.

    Returns a bound on |z - z*| (Euclidean): the map
    ``z -> prox(z - lam D B(z))`` is q-Lipschitz with
    ``q = sqrt(1 + lam^2 L^2) / (1 + lam)`` for the rescaled operator, so
    ``|z - z*| <= |z - T z| / (1 - q)``.
    """
    p = problem
    x, y = st.z
    gx = p.dxG(x, y)
    gy = p.dyG(x, y)
    L, _ = saga_constants(p.L_G, p.mu_x, p.mu_y)
    xp = p.pf(x - st.lam * gx / p.mu_x, st.lam / p.mu_x)
    yp = p.ph(y + st.lam * gy / p.mu_y, st.lam / p.mu_y)
    r = math.sqrt(float(np.sum((x - xp) ** 2) + np.sum((y - yp) ** 2)))
    q = math.sqrt(1.0 + (st.lam * L) ** 2) / (1.0 + st.lam)
    if q >= 1:
        return math.inf
    return r / (1.0 - q)


def saga_sp_run(problem, iterations, seed, x0=None, y0=None, m=1, uniform=False,
                callback=None, dist_tol=None, check_every=None, certify=None):
    """Run SAGA for saddle points; optionally stop once the certified |z - z*| <= dist_tol.

    ``certify(state, bound) -> bool`` replaces the fixed ``dist_tol`` test.
    The residual check runs every ``check_every`` iterations (default 4 m_G).
    callback(state) is called after every iteration. Returns the final state;
    ``state.history`` records the certification, if any.
    """
    if certify is None and dist_tol is not None:
        certify = lambda st, bound: bound <= dist_tol
    p = problem
    x0 = np.zeros(p.dx) if x0 is None else x0
    y0 = np.zeros(p.dy) if y0 is None else y0
    st = saga_init(p, x0, y0, m, uniform)
    rng = np.random.default_rng(seed)
    check_every = check_every or 4 * p.m_G
    done = 0
    while done < iterations:
        n = min(_CHUNK, iterations - done)
        idx = rng.choice(p.m_G, size=(n, m), p=st.pis)
        res = rng.integers(p.m_G, size=(n, m))
        for k in range(n):
            saga_step(p, st, idx[k], res[k])
            if callback is not None:
                callback(st)
            if certify is not None and st.it % check_every == 0:
                bound = saga_residual(p, st)
                if certify(st, bound):
                    st.history.append(("certified", st.it, bound))
                    return st
        done += n
    return st


def saga_sp_solve(problem, eps, sigma, seed, m=1, x0=None, y0=None, R0=None, M_gap=None,
                  certify=False, info: dict | None = None):
    """(eps, sigma)-solution (x, y) of ``min_x max_y f + G - h`` with prox-friendly f, h.

    The iteration count follows the expected contraction with eta and the
    Markov step; ``R0`` bounds |z0 - z*| (estimated from the full operator at
    z0 when None) and ``M_gap`` bounds ``sup f + h - f* - h*`` on the target
    ball (bounded through smoothness when None). With ``certify`` the run
    stops early once a deterministic residual bound certifies the target.
    """
    p = problem
    if p.prox_f is None or p.prox_h is None:
        raise ContractError("SAGA needs the prox of f and of h")
    if eps <= 0 or not 0 < sigma <= 1:
        raise ContractError("need eps > 0 and sigma in (0, 1]")
    x0 = np.zeros(p.dx) if x0 is None else np.asarray(x0, dtype=float)
    y0 = np.zeros(p.dy) if y0 is None else np.asarray(y0, dtype=float)
    mu_min = min(p.mu_x, p.mu_y)
    gf, gh = p.df(x0), p.dh(y0)
    if R0 is None:
        op = np.concatenate([gf + p.dxG(x0, y0), gh - p.dyG(x0, y0)])
        R0 = float(np.linalg.norm(op)) / mu_min
    if M_gap is None:
        r = math.sqrt(eps)
        slope = np.linalg.norm(gf) + np.linalg.norm(gh) + (p.L_f + p.L_h) * R0
        M_gap = slope * r + 0.5 * (p.L_f + p.L_h) * r**2
    eps_p = saga_accuracy(eps, p.L_G, p.mu_x, p.mu_y, M_gap)
    eta = saga_eta(p.m_G, p.L_G, mu_min)
    N = saga_iterations(eta, R0**2, eps_p, sigma)
    st = saga_sp_run(p, N, seed, x0, y0, m, dist_tol=math.sqrt(eps_p) if certify else None)
    if info is not None:
        info.update(iterations=st.it, planned=N, eps_prime=eps_p, eta=eta, R0=R0, M_gap=M_gap,
                    certified=bool(st.history))
    return st.z

"""Inexact first-order oracles, their algebra and per-class call accounting."""

from __future__ import annotations

import enum
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ContractError(ValueError):
    """Raised when an oracle or solver is used outside its declared contract."""


class SolverFailure(RuntimeError):
    """An inner solver could not certify the accuracy it was asked for."""


class BudgetExceeded(RuntimeError):
    """An iteration budget ran out before the target was certified.

    ``best`` carries the last iterate so callers can still inspect it.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class OracleClass(str, enum.Enum):
    GRAD_F = "GradF"
    GRAD_H = "GradH_i"
    GRAD_XG = "GradXG_i"
    GRAD_YG = "GradYG_i"
    PROX_F = "ProxF"
    PROX_H = "ProxH"


# column names used by traces and CSV output
CSV_FIELDS = {
    OracleClass.GRAD_F: "grad_f",
    OracleClass.GRAD_H: "grad_h",
    OracleClass.GRAD_XG: "grad_xg",
    OracleClass.GRAD_YG: "grad_yg",
    OracleClass.PROX_F: "prox_f",
    OracleClass.PROX_H: "prox_h",
}


class CallLedger:
    """Monotone per-class call counters. Safe to bump from several threads."""

    def __init__(self, counts=None):
        self._counts = Counter({c: 0 for c in OracleClass})
        if counts:
            for key, n in dict(counts).items():
                self.add(OracleClass(key), n)
        self._lock = threading.Lock()

    def add(self, cls: OracleClass, n: int = 1) -> None:
        if n < 0:
            raise ContractError("ledger counts never decrease")
        lock = getattr(self, "_lock", None)
        if lock is None:
            self._counts[cls] += int(n)
            return
        with lock:
            self._counts[cls] += int(n)

    def __getitem__(self, cls) -> int:
        return self._counts[OracleClass(cls)]

    def merge(self, other: "CallLedger") -> "CallLedger":
        out = CallLedger()
        for c in OracleClass:
            out._counts[c] = self._counts[c] + other._counts[c]
        return out

    def snapshot(self) -> dict:
        return {c.value: self._counts[c] for c in OracleClass}

    def as_row(self) -> dict:
        return {CSV_FIELDS[c]: self._counts[c] for c in OracleClass}

    def total(self) -> int:
        return sum(self._counts.values())

    def diff(self, earlier: dict) -> dict:
        """Counts accumulated since ``earlier`` (a :meth:`snapshot`)."""
        return {c.value: self._counts[c] - earlier.get(c.value, 0) for c in OracleClass}

    def __repr__(self):
        body = ", ".join(f"{k}={v}" for k, v in self.snapshot().items() if v)
        return f"CallLedger({body})"


@dataclass(frozen=True)
class OracleSpec:
    """Inexactness and regularity of a first-order oracle.

    The model ``v + <g, z - x>`` satisfies, with probability ``1 - sigma0``,
    ``-delta1 + mu/2 |z-x|^2 <= phi(z) - model <= L/2 |z-x|^2 + delta2``.
    """

    delta1: float = 0.0
    delta2: float = 0.0
    sigma0: float = 0.0
    L: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.delta1 < 0 or self.delta2 < 0:
            raise ContractError("oracle slacks must be nonnegative")
        if not 0.0 <= self.sigma0 <= 1.0:
            raise ContractError("sigma0 must lie in [0, 1]")
        if self.L < 0 or self.mu < 0:
            raise ContractError("L and mu must be nonnegative")
        if self.L > 0 and self.mu > self.L * (1 + 1e-12):
            raise ContractError(f"mu={self.mu} exceeds L={self.L}")

    @classmethod
    def exact(cls, L: float, mu: float = 0.0) -> "OracleSpec":
        return cls(0.0, 0.0, 0.0, L, mu)

    @classmethod
    def scalar(cls, delta: float, L: float, mu: float = 0.0, sigma0: float = 0.0) -> "OracleSpec":
        """The common ``(delta1, delta2) = (0, delta)`` case."""
        return cls(0.0, delta, sigma0, L, mu)

    @property
    def is_exact(self) -> bool:
        return self.delta1 == 0 and self.delta2 == 0 and self.sigma0 == 0

    def __add__(self, other: "OracleSpec") -> "OracleSpec":
        return OracleSpec(
            self.delta1 + other.delta1,
            self.delta2 + other.delta2,
            min(1.0, self.sigma0 + other.sigma0),
            self.L + other.L,
            self.mu + other.mu,
        )


@dataclass
class CountedOracle:
    """Value/gradient oracle wired to a ledger.

    ``eval(x) -> (value, grad)``. Each call bumps ``oracle_class`` by
    ``multiplicity`` (a full gradient of an m-term sum counts m calls).
    Oracles built from other counted oracles leave ``oracle_class`` as None
    and let their parts do the counting.
    """

    eval: Callable[[np.ndarray], tuple]
    spec: OracleSpec
    dim: int
    oracle_class: OracleClass | None = None
    ledger: CallLedger | None = None
    multiplicity: int = 1
    calls: int = field(default=0, init=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ContractError(f"expected a point of shape ({self.dim},), got {x.shape}")
        self.calls += 1
        if self.oracle_class is not None and self.ledger is not None:
            self.ledger.add(self.oracle_class, self.multiplicity)
        return self.eval(x)

    def value(self, x) -> float:
        return self(x)[0]

    def grad(self, x) -> np.ndarray:
        return self(x)[1]


def quadratic_oracle(Q, b, c=0.0, oracle_class=None, ledger=None, multiplicity=1) -> CountedOracle:
    """Exact oracle of ``x -> x'Qx/2 + b'x + c`` with spec read off the spectrum of Q."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    b = np.asarray(b, dtype=float)
    eig = np.linalg.eigvalsh((Q + Q.T) / 2)
    spec = OracleSpec.exact(max(float(eig[-1]), 0.0), max(float(eig[0]), 0.0))

    def ev(x):
        Qx = Q @ x
        return 0.5 * x @ Qx + b @ x + c, Qx + b

    return CountedOracle(ev, spec, b.size, oracle_class, ledger, multiplicity)


def linear_oracle(g, x_ref=None, ledger=None) -> CountedOracle:
    """Oracle of ``z -> <g, z - x_ref>``; free (not counted)."""
    g = np.asarray(g, dtype=float)
    x_ref = np.zeros_like(g) if x_ref is None else np.asarray(x_ref, dtype=float)
    return CountedOracle(lambda z: (g @ (z - x_ref), g.copy()), OracleSpec.exact(0.0), g.size)


def sum_oracles(a: CountedOracle, b: CountedOracle) -> CountedOracle:
    """Oracle of ``phi + psi``: slacks, failure probabilities, L and mu all add."""
    if a.dim != b.dim:
        raise ContractError(f"dimension mismatch: {a.dim} vs {b.dim}")

    def ev(x):
        va, ga = a(x)
        vb, gb = b(x)
        return va + vb, ga + gb

    return CountedOracle(ev, a.spec + b.spec, a.dim)


def nesterov_minimize(grad, z0, L, mu, tol_grad, max_iter=100000):
    """Constant-momentum accelerated gradient for an L-smooth mu-strongly convex map.

    Stops at the first evaluated point whose gradient norm is <= tol_grad and
    returns ``(point, grad_norm, evaluations)``. The returned point is always
    the one where the last gradient was taken, so the norm certifies it.
    """
    if mu <= 0:
        raise ContractError("nesterov_minimize needs mu > 0")
    beta = (np.sqrt(L) - np.sqrt(mu)) / (np.sqrt(L) + np.sqrt(mu))
    x_prev = z = np.array(z0, dtype=float)
    best = (z, np.inf)
    for n in range(1, max_iter + 1):
        g = grad(z)
        gn = float(np.linalg.norm(g))
        if gn < best[1]:
            best = (z, gn)
        if gn <= tol_grad:
            return z, gn, n
        x_next = z - g / L
        z = x_next + beta * (x_next - x_prev)
        x_prev = x_next
    raise BudgetExceeded(
        f"accelerated gradient stalled at |grad|={best[1]:.3e} > {tol_grad:.3e}", best=best[0]
    )


def max_function_oracle(F_grad_x, F_grad_y, w_grad, L_F, mu_y, delta, y0, dim_x,
                        sigma=0.0, F_value=None, w_value=None, inner_solver=None, L_w=None):
    """Inexact oracle of ``g(x) = max_y {F(x, y) - w(y)}`` built from an inner maximizer.

    Every evaluation computes a point ``y~`` whose objective gap in the inner
    problem is <= delta/2 (certified by ``|grad_y|^2 / (2 mu_y)``) and returns
    ``(F(x, y~) - w(y~), grad_x F(x, y~))``. The returned spec is
    ``(0, delta, sigma, 2 (L_F + 2 L_F^2 / mu_y), 0)``. Inner solves are
    warm-started from the previous maximizer, beginning at ``y0``.

    ``inner_solver(x, y_start, tol_grad) -> y`` replaces the default
    accelerated ascent (which needs ``L_w``, the smoothness of w).
    """
    if mu_y <= 0:
        raise ContractError("the inner problem must be strongly concave (mu_y > 0)")
    L_g = L_F + 2.0 * L_F**2 / mu_y
    spec = OracleSpec.scalar(delta, 2.0 * L_g, 0.0, sigma)
    tol_grad = np.sqrt(mu_y * delta)
    state = {"y": np.asarray(y0, dtype=float)}

    if inner_solver is None:
        if L_w is None:
            raise ContractError("default inner solver needs L_w")

        def inner_solver(x, y_start, tol):
            def neg_grad(y):
                return w_grad(y) - F_grad_y(x, y)
            try:
                y, _, _ = nesterov_minimize(neg_grad, y_start, L_F + L_w, mu_y, tol)
            except BudgetExceeded as err:
                raise SolverFailure(str(err)) from err
            return y

    def ev(x):
        y = inner_solver(x, state["y"], tol_grad)
        state["y"] = y
        val = np.nan
        if F_value is not None and w_value is not None:
            val = F_value(x, y) - w_value(y)
        return val, F_grad_x(x, y)

    oracle = CountedOracle(ev, spec, dim_x)
    oracle.L_smooth = L_g
    oracle.inner_state = state
    return oracle


def oracle_envelope_check(oracle: CountedOracle, truth: Callable, samples: int, rng_seed: int,
                          scale: float = 1.0, center=None, rtol: float = 1e-9) -> bool:
    """Sample the two-sided model inequality of an inexact oracle.

    Draws ``samples`` pairs (x, z) around ``center`` and checks
    ``-delta1 <= truth(z) - [v(x) + <g(x), z - x>] <= L/2 |z-x|^2 + delta2``.
    ``rtol`` absorbs floating-point rounding relative to the magnitudes involved.
    """
    rng = np.random.default_rng(rng_seed)
    c = np.zeros(oracle.dim) if center is None else np.asarray(center, dtype=float)
    s = oracle.spec
    for _ in range(samples):
        x = c + scale * rng.standard_normal(oracle.dim)
        z = c + scale * rng.standard_normal(oracle.dim)
        v, g = oracle(x)
        tz = truth(z)
        gap = tz - (v + g @ (z - x))
        d2 = float((z - x) @ (z - x))
        slack = rtol * (1.0 + abs(tz) + abs(v) + abs(g @ (z - x)))
        if gap < -s.delta1 + s.mu / 2 * d2 - slack:
            return False
        if gap > s.L / 2 * d2 + s.delta2 + slack:
            return False
    return True

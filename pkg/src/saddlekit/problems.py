"""Quadratic saddle instances with known constants and closed-form reference answers.

The objective is ``f(x) + G(x, y) - h(y)`` with

    f(x)   = x'Ax/2 + a'x
    G(x,y) = (1/m_G) sum_i x'B_i y
    h(y)   = (1/m_h) sum_i (y'C_i y/2 + c_i'y)

Spectra are placed explicitly and conjugated by random rotations, so the
smoothness and strong-convexity constants are exact rather than estimated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import ortho_group

from .oracle_core import ContractError
from .saddle_framework import SaddleProblem


def _rotation(d, rng):
    if d == 1:
        return np.ones((1, 1))
    return ortho_group.rvs(d, random_state=rng)


def _spd(eigs, rng):
    Q = _rotation(len(eigs), rng)
    M = (Q * eigs) @ Q.T
    return (M + M.T) / 2


@dataclass
class QuadraticSaddleInstance:
    A: np.ndarray
    a: np.ndarray
    B: list
    C: list
    c: list
    seed: int | None = None
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.B = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.B]
        self.C = [np.atleast_2d(np.asarray(m, dtype=float)) for m in self.C]
        self.c = [np.asarray(v, dtype=float).reshape(-1) for v in self.c]
        self.B_bar = np.mean(self.B, axis=0)
        self.C_bar = np.mean(self.C, axis=0)
        self.c_bar = np.mean(self.c, axis=0)
        self._eig_A = np.linalg.eigh(self.A)
        self._eig_C = np.linalg.eigh(self.C_bar)
        if not self.constants:
            self.constants = self.measure_constants()

    @property
    def dims(self):
        return self.A.shape[0], self.C_bar.shape[0]

    @property
    def m_G(self):
        return len(self.B)

    @property
    def m_h(self):
        return len(self.C)

    @classmethod
    def from_matrices(cls, A, a, B, C, c, seed=None):
        B = B if isinstance(B, list) else [B]
        C = C if isinstance(C, list) else [C]
        c = c if isinstance(c, list) else [c]
        return cls(A, a, B, C, c, seed)

    def measure_constants(self) -> dict:
        eA = self._eig_A[0]
        eC = self._eig_C[0]
        L_G_i = [float(np.linalg.norm(b, 2)) for b in self.B]
        L_h_i = [float(np.linalg.eigvalsh(m)[-1]) for m in self.C]
        return {
            "L_f": float(eA[-1]), "mu_x": float(eA[0]),
            "L_G": float(np.mean(L_G_i)), "L_G_i": L_G_i,
            "L_h": float(np.mean(L_h_i)), "L_h_i": L_h_i,
            "mu_y": float(eC[0]),
            "m_G": self.m_G, "m_h": self.m_h,
        }

    # -- exact pieces ---------------------------------------------------
    def f(self, x):
        return 0.5 * x @ self.A @ x + self.a @ x

    def h(self, y):
        return 0.5 * y @ self.C_bar @ y + self.c_bar @ y

    def G(self, x, y):
        return x @ self.B_bar @ y

    def lagrangian(self, x, y):
        return self.f(x) + self.G(x, y) - self.h(y)

    def prox_f(self, v, lam):
        """argmin_x lam*f(x) + |x - v|^2 / 2."""
        e, Q = self._eig_A
        return Q @ ((Q.T @ (v - lam * self.a)) / (1.0 + lam * e))

    def prox_h(self, v, lam):
        e, Q = self._eig_C
        return Q @ ((Q.T @ (v - lam * self.c_bar)) / (1.0 + lam * e))

    def to_problem(self, ledger=None, with_prox=True) -> SaddleProblem:
        A, a, Bs, Cs, cs = self.A, self.a, self.B, self.C, self.c
        Bb, Cb, cb = self.B_bar, self.C_bar, self.c_bar
        k = self.constants
        return SaddleProblem(
            dx=self.dims[0], dy=self.dims[1],
            f_grad=lambda x: A @ x + a,
            h_grad_i=lambda i, y: Cs[i] @ y + cs[i],
            G_grad_x_i=lambda i, x, y: Bs[i] @ y,
            G_grad_y_i=lambda i, x, y: Bs[i].T @ x,
            h_grad=lambda y: Cb @ y + cb,
            G_grad_x=lambda x, y: Bb @ y,
            G_grad_y=lambda x, y: Bb.T @ x,
            f_value=self.f, h_value=self.h, G_value=self.G,
            prox_f=self.prox_f if with_prox else None,
            prox_h=self.prox_h if with_prox else None,
            L_f=k["L_f"], mu_x=k["mu_x"], mu_y=k["mu_y"],
            L_h_i=np.asarray(k["L_h_i"]), L_G_i=np.asarray(k["L_G_i"]),
            **({"ledger": ledger} if ledger is not None else {}),
        )

    # -- serialization ---------------------------------------------------
    def to_json(self) -> str:
        doc = {
            "dims": list(self.dims), "seed": self.seed,
            "A": self.A.tolist(), "a": self.a.tolist(),
            "B": [b.tolist() for b in self.B],
            "C": [m.tolist() for m in self.C],
            "c": [v.tolist() for v in self.c],
            "constants": self.constants,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "QuadraticSaddleInstance":
        doc = json.loads(text)
        return cls(doc["A"], doc["a"], doc["B"], doc["C"], doc["c"], doc.get("seed"),
                   doc.get("constants") or {})


def generate(dims, target_constants: dict, seed: int) -> QuadraticSaddleInstance:
    """Build an instance whose constants equal ``target_constants``.

    ``target_constants`` holds L_f, mu_x, L_G, L_h, mu_y and optionally m_G,
    m_h (default 1) and ``offset_scale`` for the linear terms (default 1).
    With m_G > 1 the components B_i differ and are rescaled so that the
    average of their spectral norms is exactly L_G.
    """
    dx, dy = dims
    if dx < 1 or dy < 1:
        raise ContractError("dimensions must be positive")
    t = dict(target_constants)
    m_G, m_h = int(t.get("m_G", 1)), int(t.get("m_h", 1))
    for lo, hi in (("mu_x", "L_f"), ("mu_y", "L_h")):
        if not 0 < t[lo] <= t[hi]:
            raise ContractError(f"need 0 < {lo} <= {hi}, got {t[lo]} and {t[hi]}")
    if dx == 1 and t["mu_x"] != t["L_f"]:
        raise ContractError("a one-dimensional f has a single curvature: set mu_x = L_f")
    if dy == 1 and t["mu_y"] != t["L_h"]:
        raise ContractError("a one-dimensional h has a single curvature: set mu_y = L_h")
    if t["L_G"] <= 0 or m_G < 1 or m_h < 1:
        raise ContractError("L_G must be positive and m_G, m_h at least 1")

    rng = np.random.default_rng(seed)
    A = _spd(np.linspace(t["mu_x"], t["L_f"], dx), rng)
    C_bar = _spd(np.linspace(t["mu_y"], t["L_h"], dy), rng)

    r = min(dx, dy)
    sv = np.linspace(1.0, 0.5, r) if r > 1 else np.ones(1)
    U = _rotation(dx, rng)[:, :r]
    V = _rotation(dy, rng)[:, :r]
    B = (U * sv) @ V.T
    if m_G == 1:
        Bs = [B]
    else:
        E = rng.standard_normal((m_G, dx, dy))
        E -= E.mean(axis=0)
        E *= 0.5 / np.linalg.norm(E, ord=2, axis=(1, 2)).max()
        Bs = [B + e for e in E]
    scale = t["L_G"] / np.mean([np.linalg.norm(b, 2) for b in Bs])
    Bs = [b * scale for b in Bs]

    off = float(t.get("offset_scale", 1.0))
    a = off * rng.standard_normal(dx)
    c_bar = off * rng.standard_normal(dy)
    if m_h == 1:
        cs = [c_bar]
    else:
        d = rng.standard_normal((m_h, dy))
        d -= d.mean(axis=0)
        cs = list(c_bar + d)
    Cs = [C_bar.copy() for _ in range(m_h)]
    return QuadraticSaddleInstance(A, a, Bs, Cs, cs, seed)


def kkt_solve(inst: QuadraticSaddleInstance):
    """Exact saddle point from the stationarity system

        A x + B y = -a,   B'x - C y = c.
    """
    dx, dy = inst.dims
    K = np.block([[inst.A, inst.B_bar], [inst.B_bar.T, -inst.C_bar]])
    rhs = np.concatenate([-inst.a, inst.c_bar])
    z = np.linalg.solve(K, rhs)
    res = np.linalg.norm(K @ z - rhs)
    if not np.isfinite(res) or res > 1e-10 * max(1.0, np.linalg.norm(rhs)):
        raise RuntimeError(f"KKT solve inaccurate (residual {res:.2e})")
    return z[:dx], z[dx:]


def brute_force_gap(inst: QuadraticSaddleInstance, x_hat, y_hat) -> float:
    """Exact duality gap ``max_y L(x^, y) - min_x L(x, y^)``.

    For a quadratic Lagrangian the gap splits into the two one-sided
    suboptimalities ``|grad_y L|^2_{C^-1}/2 + |grad_x L|^2_{A^-1}/2`` at (x^, y^),
    which avoids cancellation between two large numbers.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    r_x = inst.A @ x_hat + inst.a + inst.B_bar @ y_hat
    r_y = inst.B_bar.T @ x_hat - inst.C_bar @ y_hat - inst.c_bar
    gx = r_x @ cho_solve(cho_factor(inst.A), r_x)
    gy = r_y @ cho_solve(cho_factor(inst.C_bar), r_y)
    return 0.5 * float(gx + gy)


def one_sided_gaps(inst: QuadraticSaddleInstance, x_hat, y_hat):
    """(primal suboptimality of x^, dual suboptimality of y^) relative to the saddle value."""
    xs, ys = kkt_solve(inst)
    val = inst.lagrangian(xs, ys)
    r_y = inst.B_bar.T @ x_hat - inst.c_bar
    primal = inst.f(x_hat) + 0.5 * r_y @ cho_solve(cho_factor(inst.C_bar), r_y)
    r_x = inst.a + inst.B_bar @ y_hat
    dual = -0.5 * r_x @ cho_solve(cho_factor(inst.A), r_x) - inst.h(y_hat)
    return float(primal - val), float(val - dual)

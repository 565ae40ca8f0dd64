"""Energy functional, its derivatives, Rayleigh quotients, and the fiber map.

All pairings use the grid quadrature; the gradient pairing <grad u, grad v>
is computed as <-Delta_h u, v>, which is exact summation by parts for the
Dirichlet stencil.  A state is "cone interior" when every node value exceeds
1e-14 times the sup norm; operations involving the weight u^(q-2) reject
anything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConeError, SigmaError
from .linalg import LinearOperator
from .mesh import Grid, apply_laplacian, inner_product, norm
from .model import ModelSpec, eval_G, eval_g, eval_g_jacobian

CONE_FLOOR_REL = 1e-14


@dataclass(frozen=True)
class State:
    """An m-component grid function tied to its grid and model."""

    grid: Grid
    spec: ModelSpec
    u: np.ndarray  # shape (m, n_nodes)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim == 1:
            u = u[None, :]
        if u.shape != (self.spec.m, self.grid.n_nodes):
            raise ValueError(
                f"state shape {u.shape} != (m, N) = "
                f"({self.spec.m}, {self.grid.n_nodes})")
        if not np.all(np.isfinite(u)):
            raise ValueError("state contains non-finite values")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    def with_u(self, u: np.ndarray) -> "State":
        return State(self.grid, self.spec, u)

    @cached_property
    def sup(self) -> float:
        return float(np.abs(self.u).max())

    def cone_interior(self) -> bool:
        return self.sup > 0 and float(self.u.min()) > CONE_FLOOR_REL * self.sup


def make_state(grid: Grid, spec: ModelSpec, u) -> State:
    return State(grid, spec, np.asarray(u, dtype=float))


def require_cone_interior(state: State) -> None:
    if not state.cone_interior():
        raise ConeError(
            "state has a node at or below the cone floor "
            f"({CONE_FLOOR_REL:g} * sup norm)")


def phi(state: State, lam: float) -> float:
    """Energy value 1/2 ||grad u||^2 - (lam/q) int |u|^q - int G(u)."""
    # all terms act on |u|, making the energy even in each node value; on
    # the cone this changes nothing and it justifies keeping iterates there
    g, u = state.grid, np.abs(state.u)
    grad2 = inner_product(g, apply_laplacian(g, u), u)
    uq = g.node_weight * float((u ** state.spec.q).sum())
    big_g = g.node_weight * float(np.sum(eval_G(state.spec, u)))
    return 0.5 * grad2 - (lam / state.spec.q) * uq - big_g


def phi_grad(state: State, lam: float) -> np.ndarray:
    """Residual field r = -Delta_h u - lam u^(q-1) - g(u), shape (m, N).

    <r, xi> in the quadrature pairing is the directional derivative of phi.
    """
    require_cone_interior(state)
    g, u, q = state.grid, state.u, state.spec.q
    return apply_laplacian(g, u) - lam * u ** (q - 1.0) - eval_g(state.spec, u)


def hessian_operator(state: State, lam: float) -> LinearOperator:
    """Linearization H phi = -Delta_h phi - G_uu(u) phi - lam (q-1) u^(q-2) phi."""
    require_cone_interior(state)
    g, u, q, m = state.grid, state.u, state.spec.q, state.spec.m
    n = g.n_nodes
    jac = eval_g_jacobian(state.spec, u)  # (m, m, N)
    blocks = [[sp.diags(jac[i, j]) for j in range(m)] for i in range(m)]
    mat = (sp.kron(sp.eye(m), g.laplacian)
           - sp.bmat(blocks)
           - sp.diags((lam * (q - 1.0) * u ** (q - 2.0)).ravel()))
    return LinearOperator.from_matrix(mat.tocsr(), weight=g.node_weight)


def hessian_local_apply(state: State, lam: float, v: np.ndarray) -> np.ndarray:
    """Only the nodewise (non-Laplacian) part of the Hessian applied to v."""
    u, q = state.u, state.spec.q
    jac = eval_g_jacobian(state.spec, u)
    return -(np.einsum("ijn,jn->in", jac, v)
             + lam * (q - 1.0) * u ** (q - 2.0) * v)


def _sigma_denominator(state: State, v: np.ndarray) -> float:
    q = state.spec.q
    den = inner_product(state.grid, state.u ** (q - 1.0), v)
    ref = norm(state.grid, state.u ** (q - 1.0)) * norm(state.grid, v)
    if abs(den) <= 1e-14 * max(ref, 1e-300):
        raise SigmaError("v lies outside Sigma(u): <u^(q-1), v> = 0")
    return den


def rayleigh_ext(state: State, v: np.ndarray) -> float:
    """Extended Rayleigh quotient R(u, v); zero-homogeneous in v."""
    require_cone_interior(state)
    g, u = state.grid, state.u
    v = np.asarray(v, dtype=float).reshape(u.shape)
    den = _sigma_denominator(state, v)
    num = inner_product(g, apply_laplacian(g, u), v) \
        - inner_product(g, eval_g(state.spec, u), v)
    return num / den


def rayleigh_ext_grad_v(state: State, v: np.ndarray) -> np.ndarray:
    """Field representing the v-derivative of R(u, .) at v.

    Vanishes exactly when u is a discrete solution at lambda = R(u, v).
    """
    require_cone_interior(state)
    g, u, q = state.grid, state.u, state.spec.q
    v = np.asarray(v, dtype=float).reshape(u.shape)
    den = _sigma_denominator(state, v)
    r = rayleigh_ext(state, v)
    num_field = (apply_laplacian(g, u) - eval_g(state.spec, u)
                 - r * u ** (q - 1.0))
    return num_field / den


def rayleigh_nl(state: State) -> float:
    """Nonlinear Rayleigh quotient R(u) = R(u, u)."""
    g, u, q = state.grid, state.u, state.spec.q
    uq = g.node_weight * float((np.abs(u) ** q).sum())
    if uq == 0.0:
        raise SigmaError("R(u) undefined at u = 0")
    num = inner_product(g, apply_laplacian(g, u), u) \
        - inner_product(g, eval_g(state.spec, np.abs(u)) * np.sign(u), u)
    return num / uq


@dataclass(frozen=True)
class FiberExpansion:
    """Closed-form monomial expansion of t -> R(t v) along a direction v.

    value(t) = (a t^2 - sum_k beta_k t^(d_k)) / (qn t^q); the exact expansion
    avoids cancellation near the fiber maximum.
    """

    a: float                     # <-Delta_h v, v>
    qn: float                    # int |v|^q
    q: float
    degrees: tuple[float, ...]
    betas: tuple[float, ...]     # d_k c_k int term_k(v)

    def value(self, t: float) -> float:
        if t <= 0:
            raise ValueError("fiber parameter t must be positive")
        out = (self.a / self.qn) * t ** (2.0 - self.q)
        for d, b in zip(self.degrees, self.betas):
            out -= (b / self.qn) * t ** (d - self.q)
        return out

    def derivative(self, t: float) -> float:
        if t <= 0:
            raise ValueError("fiber parameter t must be positive")
        out = (2.0 - self.q) * (self.a / self.qn) * t ** (1.0 - self.q)
        for d, b in zip(self.degrees, self.betas):
            out -= (d - self.q) * (b / self.qn) * t ** (d - self.q - 1.0)
        return out

    def argmax(self) -> float | None:
        """Location of the fiber maximum; None when the fiber is monotone."""
        active = [(d, b) for d, b in zip(self.degrees, self.betas) if b > 0]
        if not active:
            return None
        from scipy.optimize import brentq

        # derivative * qn * t^(q-1) = (2-q) a - sum (d-q) b t^(d-2), decreasing
        def psi(t):
            return (2.0 - self.q) * self.a - sum(
                (d - self.q) * b * t ** (d - 2.0) for d, b in active)

        hi = 1.0
        while psi(hi) > 0:
            hi *= 2.0
            if hi > 1e150:
                return None
        lo = hi / 2.0
        while psi(lo) <= 0:
            lo /= 2.0
            if lo < 1e-150:
                return None
        return float(brentq(psi, lo, hi, rtol=8.9e-16, maxiter=200))

    def max_value(self) -> float:
        t = self.argmax()
        return math.inf if t is None else self.value(t)


def fiber_expansion(state: State, v: np.ndarray | None = None) -> FiberExpansion:
    """Expansion coefficients of the fiber through direction v (default u)."""
    g, spec = state.grid, state.spec
    v = state.u if v is None else np.asarray(v, dtype=float).reshape(state.u.shape)
    if np.any(v < 0):
        raise ConeError("fiber directions must lie in the positive cone")
    w = g.node_weight
    a = inner_product(g, apply_laplacian(g, v), v)
    qn = w * float((v ** spec.q).sum())
    if qn == 0.0:
        raise SigmaError("fiber undefined along the zero direction")
    degrees, betas = [], []
    for c, ps in spec.terms:
        if c == 0.0:
            continue
        d = sum(ps)
        term = np.full(g.n_nodes, c)
        for i, p in enumerate(ps):
            if p:
                term = term * v[i] ** p
        degrees.append(d)
        betas.append(d * w * float(term.sum()))
    return FiberExpansion(a=a, qn=qn, q=spec.q,
                          degrees=tuple(degrees), betas=tuple(betas))


def fiber(state: State, t: float) -> tuple[float, float]:
    """(R(t v), d/dt R(t v)) for the direction v stored in the state."""
    exp = fiber_expansion(state)
    return exp.value(t), exp.derivative(t)


def rayleigh_direction_descent(state: State, v0: np.ndarray,
                               max_iters: int = 100,
                               tol: float = 1e-8) -> tuple[bool, list[float]]:
    """Descent diagnostic on v -> R(u, v) with u fixed.

    Returns (solution_like, gradient_norms).  At a discrete solution the
    quotient is constant in v, so the v-gradient norm drops below
    ``tol * stencil_scale`` immediately; otherwise the run flags u as a
    non-solution.
    """
    g = state.grid
    v = np.asarray(v0, dtype=float).reshape(state.u.shape).copy()
    norms: list[float] = []
    threshold = tol * g.stencil_scale
    for _ in range(max_iters):
        grad = rayleigh_ext_grad_v(state, v)
        gn = norm(g, grad)
        norms.append(gn)
        if gn <= threshold:
            return True, norms
        step = 0.5 * norm(g, v) / max(gn, 1e-300)
        v_new = v - step * grad
        try:
            if rayleigh_ext(state, v_new) >= rayleigh_ext(state, v):
                break
        except SigmaError:
            break
        v = v_new
    return False, norms

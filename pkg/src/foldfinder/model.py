"""Monomial nonlinearity family: evaluation, derivatives, hypothesis checks.

The nonlinear term is the gradient of a primitive
``G(u) = sum_k c_k * prod_i u_i^(p_ki)`` with nonnegative coefficients and
exponents, evaluated on the closed positive cone.  This family keeps all the
structural hypotheses decidable in closed form via Euler's identity while
covering both the scalar concave-convex benchmark and a genuinely coupled
two-component system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConeError

Term = tuple[float, tuple[float, ...]]  # (coefficient, exponents per component)


@dataclass(frozen=True)
class ModelSpec:
    m: int
    q: float
    terms: tuple[Term, ...] = ()

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("component count m must be at least 1")
        terms = tuple((float(c), tuple(float(p) for p in ps)) for c, ps in self.terms)
        object.__setattr__(self, "terms", terms)
        for c, ps in terms:
            if c < 0:
                raise ValueError("term coefficients must be nonnegative")
            if len(ps) != self.m:
                raise ValueError("each term needs one exponent per component")
            if any(p < 0 for p in ps):
                raise ValueError("exponents must be nonnegative")

    @property
    def degrees(self) -> tuple[float, ...]:
        """Total degree of each term with a positive coefficient."""
        return tuple(sum(ps) for c, ps in self.terms if c > 0)

    @property
    def gamma1(self) -> float | None:
        return min(self.degrees) if self.degrees else None

    @property
    def gamma2(self) -> float | None:
        return max(self.degrees) if self.degrees else None


def _check_cone(spec: ModelSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[0] != spec.m:
        raise ValueError(f"state has {u.shape[0]} components, model has {spec.m}")
    if np.any(u < 0):
        raise ConeError("negative component: g is defined on the positive cone only")
    return u


def _power(x: np.ndarray, p: float) -> np.ndarray:
    if p == 0.0:
        return np.ones_like(x)
    if p == 1.0:
        return x
    return x**p


def eval_G(spec: ModelSpec, u) -> float | np.ndarray:
    """Primitive G(u); supports nodewise evaluation with shape (m, ...)."""
    u = _check_cone(spec, u)
    out = np.zeros(u.shape[1:])
    for c, ps in spec.terms:
        if c == 0.0:
            continue
        term = np.full(u.shape[1:], c)
        for i, p in enumerate(ps):
            term = term * _power(u[i], p)
        out += term
    return float(out) if out.ndim == 0 else out


def eval_g(spec: ModelSpec, u) -> np.ndarray:
    """Gradient g_i = dG/du_i, shape (m, ...)."""
    u = _check_cone(spec, u)
    out = np.zeros_like(u)
    for c, ps in spec.terms:
        if c == 0.0:
            continue
        for i, p in enumerate(ps):
            if p == 0.0:
                continue
            term = c * p * _power(u[i], p - 1.0)
            for j, pj in enumerate(ps):
                if j != i:
                    term = term * _power(u[j], pj)
            out[i] += term
    return out


def eval_g_jacobian(spec: ModelSpec, u) -> np.ndarray:
    """Second derivatives G_{u_i u_j}, shape (m, m, ...); symmetric."""
    u = _check_cone(spec, u)
    out = np.zeros((spec.m,) + u.shape)
    for c, ps in spec.terms:
        if c == 0.0:
            continue
        for i, pi in enumerate(ps):
            if pi == 0.0:
                continue
            for j, pj in enumerate(ps):
                if i == j:
                    if pi == 1.0:
                        continue
                    term = c * pi * (pi - 1.0) * _power(u[i], pi - 2.0)
                    for k, pk in enumerate(ps):
                        if k != i:
                            term = term * _power(u[k], pk)
                else:
                    if pj == 0.0:
                        continue
                    term = c * pi * pj * _power(u[i], pi - 1.0) * _power(u[j], pj - 1.0)
                    for k, pk in enumerate(ps):
                        if k != i and k != j:
                            term = term * _power(u[k], pk)
                out[i, j] += term
    return out


@dataclass
class HypothesisReport:
    """Outcome of the structural checks (g1)-(g4) plus the exponent window."""

    q_ok: bool
    g1: bool
    g2: bool
    g3: bool
    g4: bool
    theta: float | None
    gamma1: float | None
    gamma2: float | None
    g4_method: str | None = None
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.q_ok and self.g1 and self.g2 and self.g3 and self.g4

    def summary(self) -> str:
        lines = []
        for name, passed in [("q", self.q_ok), ("g1", self.g1), ("g2", self.g2),
                             ("g3", self.g3), ("g4", self.g4)]:
            lines.append(f"({name}): {'pass' if passed else 'FAIL'}")
        if self.theta is not None:
            lines.append(f"theta={self.theta:g} gamma1={self.gamma1:g} "
                         f"gamma2={self.gamma2:g}")
        if self.g4_method:
            lines.append(f"(g4) checked via {self.g4_method}")
        lines.extend(self.failures)
        return "\n".join(lines)


def validate_hypotheses(spec: ModelSpec) -> HypothesisReport:
    """Closed-form checks of the structural hypotheses for monomial models.

    Degrees must sit in (2, 2*); on the (<= 2)-dimensional domains supported
    here the upper Sobolev bound is +infinity.  By Euler's identity the
    superhomogeneity checks reduce to degree comparisons: (g2) needs the
    minimum total degree theta > 2 and (g3) needs it >= q + 2.  (g4) passes
    exactly when every component owns a pure single-variable term; otherwise
    a heuristic ray-sampling fallback is used and reported as such.
    """
    failures: list[str] = []
    q_ok = 1.0 < spec.q < 2.0
    if not q_ok:
        failures.append(f"exponent window violated: 1 < q < 2 fails for q={spec.q:g}")

    degrees = spec.degrees
    if not degrees:
        g1 = g2 = g3 = True  # vacuous for g == 0
        g4 = False
        failures.append("(g4): g vanishes identically, no superlinear growth")
        return HypothesisReport(q_ok, g1, g2, g3, g4, theta=None,
                                gamma1=None, gamma2=None, failures=failures)

    gamma1, gamma2 = min(degrees), max(degrees)
    theta = gamma1
    g1 = gamma1 > 2.0
    if not g1:
        failures.append(f"(g1): minimum total degree {gamma1:g} is not > 2")
    g2 = theta > 2.0
    if not g2:
        failures.append(f"(g2): theta = {theta:g} is not > 2")
    g3 = gamma1 >= spec.q + 2.0
    if not g3:
        failures.append(
            f"(g3): minimum total degree {gamma1:g} < q + 2 = {spec.q + 2.0:g}")

    pure = all(
        any(c > 0 and ps[i] > 0 and all(ps[j] == 0 for j in range(spec.m) if j != i)
            for c, ps in spec.terms)
        for i in range(spec.m)
    )
    if pure:
        g4 = True
        g4_method = "pure-terms"
    else:
        g4_method = "ray-sampling (heuristic)"
        g4 = True
        rays = _simplex_rays(spec.m)
        for e in rays:
            growth = 0.0
            for c, ps in spec.terms:
                if c == 0.0:
                    continue
                val = c * sum(ps)
                for i, p in enumerate(ps):
                    val *= float(_power(np.asarray(e[i]), p))
                growth += val
            if growth <= 0.0:
                g4 = False
                failures.append(
                    f"(g4): no superlinear growth along the ray {tuple(e)}")
                break

    return HypothesisReport(q_ok, g1, g2, g3, g4, theta=theta,
                            gamma1=gamma1, gamma2=gamma2, g4_method=g4_method,
                            failures=failures)


def _simplex_rays(m: int, count: int = 64) -> np.ndarray:
    """Deterministic sample of directions on the positive unit simplex."""
    if m == 1:
        return np.ones((1, 1))
    if m == 2:
        t = np.linspace(0.0, 1.0, count)
        return np.column_stack([t, 1.0 - t])
    rng = np.random.default_rng(0)
    rays = rng.dirichlet(np.ones(m), size=count)
    rays = np.vstack([rays, np.eye(m)])
    return rays


# --- built-in registry ------------------------------------------------------

def abc_model(q: float, gamma: float) -> ModelSpec:
    """Scalar concave-convex benchmark: G(u) = u^gamma / gamma."""
    return ModelSpec(m=1, q=q, terms=((1.0 / gamma, (gamma,)),))


def coupled_model(q: float) -> ModelSpec:
    """Symmetric two-component model G = (u1^4 + u2^4)/4 + u1^2 u2^2."""
    return ModelSpec(m=2, q=q, terms=(
        (0.25, (4.0, 0.0)),
        (0.25, (0.0, 4.0)),
        (1.0, (2.0, 2.0)),
    ))


def zero_model(q: float, m: int = 1) -> ModelSpec:
    """Pure sublinear problem, g == 0 (no fold exists)."""
    return ModelSpec(m=m, q=q, terms=())


def make_model(name: str, *, q: float, gamma: float | None = None,
               m: int = 1) -> ModelSpec:
    if name == "abc":
        return abc_model(q, gamma if gamma is not None else 4.0)
    if name == "coupled":
        return coupled_model(q)
    if name == "zero":
        return zero_model(q, m=m)
    raise ValueError(f"unknown model {name!r} (expected abc, coupled, or zero)")

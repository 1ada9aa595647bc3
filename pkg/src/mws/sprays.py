"""Flow sprays on the null quadric, period Jacobians, and Newton period closing.

The linear fields V_{j,k} = z_j d/dz_k - z_k d/dz_j are tangent to the null
quadric and have real coefficients on R^n, so their time-t flows

    z_j -> z_j cos t - z_k sin t,   z_k -> z_j sin t + z_k cos t

preserve sum z_i^2 exactly and commute with conjugation for real t.  A spray
composes such flows with parameters zeta_i * h_i(p) for I-invariant
coefficients h_i; evaluated at real zeta it therefore stays I-invariant.

Period closing runs damped Gauss-Newton on the stacked real periods of the
sprayed map, steering Re P to a target (zero for minimal-surface data).  The
period-domination check certifies that the parameter-to-period differential
at zeta = 0 is surjective onto R^n x (C^n)^(l-1); for one-curve domains the
target degenerates to R^n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import Expr, NullMap, OneForm, invariance_residual, symmetrize, ZETA, Const
from .domain import Curve, IBasis
from .periods import PeriodVector, period_map

__all__ = [
    "flow",
    "SprayFactor",
    "Spray",
    "spray_eval",
    "SprayMap",
    "pushed_map",
    "rational_peak",
    "default_spray",
    "period_jacobian",
    "JacobianResult",
    "domination_check",
    "DominationResult",
    "close_periods",
    "CloseResult",
    "IterationError",
    "DominationLostError",
    "nonflat_check",
    "winding_number",
]

RANK_TOL = 1e-6  # sigma_min > RANK_TOL * sigma_max counts as full rank


class IterationError(RuntimeError):
    """Newton loop failed to converge; carries the residual history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class DominationLostError(RuntimeError):
    """The period Jacobian lost rank during iteration."""


def flow(j: int, k: int, t, z):
    """Closed-form flow of V_{j,k} applied to vectors z (axes 0-based).

    Works on a single n-vector or an array of them stacked along the last
    axis; t may be complex.  Preserves sum z_i^2 identically.
    """
    if j == k:
        raise ValueError("flow axes must differ")
    z = np.array(z, dtype=complex, copy=True)
    n = z.shape[-1]
    if not (0 <= j < n and 0 <= k < n):
        raise ValueError(f"axes ({j},{k}) out of range for dimension {n}")
    c, s = np.cos(t), np.sin(t)
    zj = z[..., j].copy()
    zk = z[..., k].copy()
    z[..., j] = zj * c - zk * s
    z[..., k] = zj * s + zk * c
    return z


@dataclass(frozen=True)
class SprayFactor:
    """One flow factor: axis pair and I-invariant coefficient function."""

    j: int
    k: int
    h: Expr


@dataclass(frozen=True)
class Spray:
    """Base null map composed with flow factors F(p, zeta) = phi^1_{zeta_1 h_1(p)} o ... (f(p))."""

    base: object  # NullMap or any map with .n and .eval
    factors: tuple

    @property
    def m(self) -> int:
        return len(self.factors)

    def validate(self, grid, tol: float = 1e-10) -> None:
        for fac in self.factors:
            r = invariance_residual(fac.h, grid)
            if r > tol:
                raise ValueError(f"factor ({fac.j},{fac.k}) coefficient not I-invariant: {r:.3e}")


def spray_eval(spray: Spray, p, zeta) -> np.ndarray:
    """Evaluate F(p, zeta); composition applies the last factor innermost.

    p may be a scalar or array of domain points; zeta is an m-vector (real
    zeta yields an I-invariant map).
    """
    zeta = np.asarray(zeta, dtype=complex).ravel()
    if len(zeta) != spray.m:
        raise ValueError(f"expected {spray.m} parameters, got {len(zeta)}")
    z = spray.base.eval(p)
    for fac, t in zip(reversed(spray.factors), reversed(zeta)):
        z = flow(fac.j, fac.k, t * fac.h.eval(p), z)
    return z


class SprayMap:
    """A spray frozen at a parameter vector; quacks like a null map for
    residual checks, periods, and immersion integration."""

    def __init__(self, spray: Spray, zeta):
        self.spray = spray
        self.zeta = np.asarray(zeta, dtype=complex).ravel()

    @property
    def n(self) -> int:
        return self.spray.base.n

    def eval(self, z):
        return spray_eval(self.spray, z, self.zeta)

    def poles(self):
        get = getattr(self.spray.base, "poles", None)
        return get() if get is not None else np.empty(0, dtype=complex)


def pushed_map(f, j: int, k: int, t: float, h: Expr | None = None) -> SprayMap:
    """The base map pushed by one flow, optionally with a position-dependent
    I-invariant coefficient h (h = 1 is the constant, period-preserving case)."""
    fac = SprayFactor(j, k, h if h is not None else Const(1.0))
    return SprayMap(Spray(base=f, factors=(fac,)), [t])


def rational_peak(center: complex, width: float) -> Expr:
    """I-invariant rational stand-in for a bump at ``center``:
    Pi_I of 1 / (1 + ((z - center)/width)^2)."""
    bump = Const(1.0) / (Const(1.0) + ((ZETA - Const(center)) / Const(width)) ** 2)
    return symmetrize(bump)


def default_spray(
    f,
    n: int | None = None,
    m: int | None = None,
    seed: int = 0,
    centers=None,
    width: float = 0.6,
) -> Spray:
    """A spray with randomized axis pairs and I-invariant rational-peak
    coefficients centered near the unit circle (where alpha_0 lives)."""
    n = n if n is not None else f.n
    m = m if m is not None else 2 * n
    rng = np.random.default_rng(seed)
    pairs = [(j, k) for j in range(n) for k in range(n) if j < k]
    factors = []
    for i in range(m):
        j, k = pairs[int(rng.integers(len(pairs)))]
        if centers is not None:
            c = centers[i % len(centers)]
        else:
            ang = rng.uniform(0.0, 2 * np.pi)
            rad = rng.uniform(1.1, 1.8)
            c = rad * np.exp(1j * ang)
        factors.append(SprayFactor(j, k, rational_peak(complex(c), width)))
    return Spray(base=f, factors=tuple(factors))


# ---------------------------------------------------------------------------
# period Jacobian, domination, closing
# ---------------------------------------------------------------------------

def _real_period_stack(P: PeriodVector) -> np.ndarray:
    """[Re P_1; (Re, Im) P_2 ... P_l] as one real vector (domination target)."""
    parts = [P.entries[0].real]
    for j in range(1, P.l):
        parts.append(P.entries[j].real)
        parts.append(P.entries[j].imag)
    return np.concatenate(parts)


def _re_stack(P: PeriodVector) -> np.ndarray:
    """Stacked real parts Re P_j for all j (the closing residual)."""
    return P.entries.real.ravel()


@dataclass
class JacobianResult:
    matrix: np.ndarray  # (n + 2n(l-1), m)
    singular_values: np.ndarray
    step: float


def period_jacobian(
    spray: Spray,
    theta: OneForm,
    basis: IBasis,
    step: float = 1e-5,
    tol: float = 1e-11,
    richardson: bool = False,
) -> JacobianResult:
    """Central finite differences of the stacked periods in each real
    parameter direction at zeta = 0.

    Rows span R^n + R^{2n(l-1)} (Re over delta_1; Re and Im over the rest).
    ``richardson`` combines steps h and h/2 for an O(h^4) estimate.
    """
    m = spray.m

    def stack_at(zeta):
        P = period_map(SprayMap(spray, zeta), theta, basis, tol=tol)
        return _real_period_stack(P)

    def central(h):
        cols = []
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            cols.append((stack_at(e) - stack_at(-e)) / (2.0 * h))
        return np.stack(cols, axis=1)

    J = central(step)
    if richardson:
        J2 = central(step / 2.0)
        J = (4.0 * J2 - J) / 3.0
    svals = np.linalg.svd(J, compute_uv=False)
    return JacobianResult(matrix=J, singular_values=svals, step=step)


@dataclass
class DominationResult:
    dominating: bool
    sigma_min: float
    jacobian: JacobianResult


def domination_check(spray: Spray, theta: OneForm, basis: IBasis, step: float = 1e-5) -> DominationResult:
    """Period domination: the real-parameter differential surjects onto
    R^n x (C^n)^(l-1), certified by the smallest singular value of the
    finite-difference Jacobian."""
    jac = period_jacobian(spray, theta, basis, step=step)
    rows = jac.matrix.shape[0]
    if spray.m < rows:
        return DominationResult(False, 0.0, jac)
    s = jac.singular_values
    sigma_min = float(s[rows - 1]) if len(s) >= rows else 0.0
    dominating = sigma_min > RANK_TOL * float(s[0]) if s[0] > 0 else False
    return DominationResult(dominating, sigma_min, jac)


@dataclass
class CloseResult:
    zeta: np.ndarray
    residual_norm: float
    iterations: int
    history: list  # dicts: {iter, residual, step}
    closed_map: SprayMap


def close_periods(
    spray: Spray,
    theta: OneForm,
    basis: IBasis,
    target: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 20,
    quad_tol: float = 1e-11,
    step: float = 1e-5,
    trust: float = 0.5,
) -> CloseResult:
    """Damped Gauss-Newton on G(zeta) = stacked Re-periods minus target.

    Returns a real parameter vector zeta0 with max |G| < tol; the closed map
    p -> F(p, zeta0) is I-invariant because the parameters stay real.  Raises
    DominationLostError on rank collapse and IterationError when max_iter is
    exhausted (with the residual history attached).
    """
    dom = domination_check(spray, theta, basis, step=step)
    if not dom.dominating:
        raise ValueError(
            f"spray is not period dominating (sigma_min={dom.sigma_min:.3e}); "
            "cannot start Newton closing"
        )
    m = spray.m
    nl = spray.base.n * basis.l
    target = np.zeros(nl) if target is None else np.asarray(target, dtype=float).ravel()
    if target.size != nl:
        raise ValueError(f"target must have {nl} real entries")

    def G(zeta):
        P = period_map(SprayMap(spray, zeta), theta, basis, tol=quad_tol)
        return _re_stack(P) - target

    def J(zeta):
        cols = []
        for i in range(m):
            e = np.zeros(m)
            e[i] = step
            cols.append((G(zeta + e) - G(zeta - e)) / (2.0 * step))
        return np.stack(cols, axis=1)

    zeta = np.zeros(m)
    g = G(zeta)
    history = [{"iter": 0, "residual": float(np.max(np.abs(g))), "step": 0.0}]
    radius = trust
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < tol:
            return CloseResult(zeta, float(np.max(np.abs(g))), it - 1, history, SprayMap(spray, zeta))
        Jm = J(zeta)
        s = np.linalg.svd(Jm, compute_uv=False)
        if s[0] == 0 or s[min(len(s), Jm.shape[0]) - 1] < RANK_TOL * s[0]:
            raise DominationLostError(f"rank collapse at iteration {it} (sigma={s})")
        d, *_ = np.linalg.lstsq(Jm, -g, rcond=None)
        nd = np.linalg.norm(d)
        if nd > radius:
            d *= radius / nd
        # Armijo backtracking on the squared norm
        phi0 = float(g @ g)
        lam = 1.0
        accepted = False
        for _ in range(30):
            g_try = G(zeta + lam * d)
            if float(g_try @ g_try) <= phi0 * (1.0 - 2e-4 * lam):
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            raise IterationError(
                f"line search stalled at iteration {it}", history=history
            )
        zeta = zeta + lam * d
        g = g_try
        radius = min(radius * 2.0, 4.0) if lam == 1.0 else max(radius * 0.5, 1e-6)
        history.append(
            {"iter": it, "residual": float(np.max(np.abs(g))), "step": float(np.linalg.norm(lam * d))}
        )
        if np.max(np.abs(g)) < tol:
            return CloseResult(zeta, float(np.max(np.abs(g))), it, history, SprayMap(spray, zeta))
    raise IterationError(
        f"no convergence within {max_iter} iterations "
        f"(residual {float(np.max(np.abs(g))):.3e})",
        history=history,
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def nonflat_check(f, samples) -> dict:
    """Image not contained in one complex ray: second singular value of the
    stacked sample values must exceed 1e-8 times the first."""
    samples = np.asarray(samples, dtype=complex).ravel()
    if samples.size < 2:
        raise ValueError("need at least 2 sample points")
    rows = f.eval(samples)
    s = np.linalg.svd(rows, compute_uv=False)
    second = float(s[1]) if len(s) > 1 else 0.0
    return {"nonflat": bool(second > 1e-8 * float(s[0])), "second_singular_value": second}


def winding_number(
    h: Expr,
    curve: Curve,
    clearance: float = 1e-9,
    n_start: int = 512,
    max_doublings: int = 14,
) -> int:
    """Total argument increment of h along the curve divided by 2*pi.

    Samples adaptively until every per-step argument change is below pi/2,
    then unwraps; the result is asserted to be within 1e-3 of an integer.
    """
    n = n_start
    for _ in range(max_doublings + 1):
        t = np.linspace(0.0, 1.0, n + 1)
        v = np.asarray(h.eval(curve.param(t)), dtype=complex)
        if np.min(np.abs(v)) <= clearance:
            raise ValueError("function vanishes (or nearly) on the curve")
        steps = np.angle(v[1:] / v[:-1])
        if np.max(np.abs(steps)) < 0.5 * np.pi:
            total = float(np.sum(steps))
            k = total / (2.0 * np.pi)
            if abs(k - round(k)) > 1e-3:
                raise ArithmeticError(f"argument unwrapping inconsistent: {k}")
            return int(round(k))
        n *= 2
    raise ArithmeticError("argument steps kept exceeding pi/2 after refinement")

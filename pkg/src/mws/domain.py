"""Genus-zero symmetric domains, the antiholomorphic involution, and homology bases.

The double cover of every surface handled here is a genus-zero model: the
punctured plane C*, a symmetric annulus {r < |z| < 1/r}, or the punctured
plane with finitely many involution-paired punctures removed.  The involution
is I(z) = -1/conj(z); it is fixed-point-free and swaps 0 and infinity, so the
quotient is a Moebius-strip-like non-orientable surface.

The homology basis kept here consists of the unit circle alpha_0 (setwise
I-invariant) plus one small loop per puncture pair; the loop around the
distinguished pair {0, inf} is omitted as homologically dependent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "ConfigurationError",
    "involution_apply",
    "Curve",
    "circle",
    "pushforward_curve",
    "Domain",
    "punctured_plane",
    "annulus",
    "punctured_plane_with_pairs",
    "IBasis",
    "build_ibasis",
]

# Quadrature and sampling keep this relative clearance from every puncture.
DEFAULT_EXCLUSION = 1e-3

# Distinct special points must be separated at least this much.
DEFAULT_SEPARATION = 1e-3

_CLOSURE_TOL = 1e-12


class DomainError(ValueError):
    """A point or curve leaves the domain (hits a puncture or 0)."""


class ConfigurationError(ValueError):
    """Domain data does not admit the requested construction."""


def involution_apply(z):
    """The fixed-point-free antiholomorphic involution I(z) = -1/conj(z).

    Accepts scalars or arrays.  Applying it twice is the identity; 0 is not
    in the domain (it maps to the puncture at infinity).
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise DomainError("involution is undefined at 0 (maps to infinity)")
    out = -1.0 / np.conj(z)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class Curve:
    """Closed piecewise-smooth parametric curve t in [0,1] -> C.

    ``param`` must accept numpy arrays.  ``dparam`` is the exact derivative
    with respect to t when available; quadrature falls back to high-order
    finite differences otherwise.
    """

    param: Callable
    label: str = ""
    orientation: int = 1
    dparam: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.orientation not in (1, -1):
            raise ConfigurationError("orientation must be +1 or -1")
        a = complex(np.asarray(self.param(0.0)))
        b = complex(np.asarray(self.param(1.0)))
        if abs(a - b) > _CLOSURE_TOL:
            raise ConfigurationError(
                f"curve {self.label!r} is not closed: |c(0)-c(1)|={abs(a - b):.3e}"
            )

    def points(self, n: int) -> np.ndarray:
        t = np.linspace(0.0, 1.0, n, endpoint=False)
        return np.asarray(self.param(t), dtype=complex)

    def velocity(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.dparam is not None:
            return np.asarray(self.dparam(t), dtype=complex)
        # 4th-order central difference; adequate for smooth parametrizations
        h = 1e-5
        p = self.param
        return (8.0 * (p(t + h) - p(t - h)) - (p(t + 2 * h) - p(t - 2 * h))) / (12.0 * h)


def circle(center: complex, radius: float, label: str = "", orientation: int = 1) -> Curve:
    """Positively oriented circle of given center and radius."""
    if radius <= 0:
        raise ConfigurationError("circle radius must be positive")
    w = 2.0j * np.pi * orientation

    def param(t):
        return center + radius * np.exp(w * np.asarray(t))

    def dparam(t):
        return radius * w * np.exp(w * np.asarray(t))

    return Curve(param=param, label=label, orientation=orientation, dparam=dparam)


def pushforward_curve(c: Curve) -> Curve:
    """The image curve t -> I(c(t)).

    The orientation flag is carried over unchanged; sign bookkeeping for
    periods lives in the period module.  Raises if the curve passes through 0.
    """
    pts = c.points(257)
    if np.min(np.abs(pts)) == 0.0:
        raise DomainError(f"curve {c.label!r} passes through 0")

    def param(t):
        return -1.0 / np.conj(c.param(t))

    def dparam(t):
        z = np.asarray(c.param(t), dtype=complex)
        return np.conj(c.velocity(t)) / np.conj(z) ** 2

    dp = dparam if c.dparam is not None else None
    return Curve(param=param, label=f"I*{c.label}", orientation=c.orientation, dparam=dp)


@dataclass(frozen=True)
class Domain:
    """A genus-zero symmetric domain with the involution I(z) = -1/conj(z).

    ``punctures`` holds only the representative of each pair with |q| > 1;
    the partner I(q) is derived, which keeps the puncture set exactly
    involution-closed.  0 and infinity are always the distinguished pair.
    """

    kind: str  # "punctured_plane" | "annulus" | "punctured_plane_pairs"
    basepoint: complex
    annulus_r: float | None = None
    punctures: tuple = ()
    exclusion: float = DEFAULT_EXCLUSION
    separation: float = DEFAULT_SEPARATION

    def all_punctures(self) -> np.ndarray:
        """Finite punctures: representatives and their involution images (0 excluded)."""
        reps = np.asarray(self.punctures, dtype=complex)
        if reps.size == 0:
            return reps
        return np.concatenate([reps, np.asarray(involution_apply(reps)).ravel()])

    def special_points(self) -> np.ndarray:
        """Finite punctures plus 0; every construction keeps clear of these."""
        return np.concatenate([self.all_punctures(), [0.0 + 0.0j]])

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        ok = np.ones(z.shape, dtype=bool)
        for q in self.special_points():
            scale = max(abs(q), 1.0)
            ok &= np.abs(z - q) > self.exclusion * scale
        if self.kind == "annulus":
            r = self.annulus_r
            ok &= (np.abs(z) > r) & (np.abs(z) < 1.0 / r)
        return ok

    def involution_invariant(self, samples: int = 256, seed: int = 0) -> bool:
        """Spot-check that I maps the domain onto itself."""
        rng = np.random.default_rng(seed)
        if self.kind == "annulus":
            lo, hi = self.annulus_r, 1.0 / self.annulus_r
        else:
            lo, hi = 0.05, 20.0
        rho = np.exp(rng.uniform(np.log(lo * 1.01), np.log(hi * 0.99), samples))
        ang = rng.uniform(0.0, 2 * np.pi, samples)
        z = rho * np.exp(1j * ang)
        z = z[self.contains(z)]
        return bool(np.all(self.contains(involution_apply(z))))


def _validate_separation(d: Domain) -> None:
    pts = list(d.special_points()) + [complex(d.basepoint)]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if abs(pts[i] - pts[j]) < d.separation:
                raise ConfigurationError(
                    f"special points {pts[i]} and {pts[j]} closer than separation "
                    f"{d.separation}"
                )


def punctured_plane(basepoint: complex = 1j, **kw) -> Domain:
    d = Domain(kind="punctured_plane", basepoint=complex(basepoint), **kw)
    _validate_separation(d)
    return d


def annulus(r: float, basepoint: complex = 1.0, **kw) -> Domain:
    if not 0.0 < r < 1.0:
        raise ConfigurationError("annulus parameter must satisfy 0 < r < 1")
    if not r < abs(basepoint) < 1.0 / r:
        raise ConfigurationError("basepoint must lie inside the annulus")
    d = Domain(kind="annulus", basepoint=complex(basepoint), annulus_r=float(r), **kw)
    _validate_separation(d)
    return d


def punctured_plane_with_pairs(punctures, basepoint: complex = 1j, **kw) -> Domain:
    """Punctured plane minus involution pairs {q, I(q)}.

    Input punctures with |q| < 1 are replaced by their partner so only the
    representative with |q| > 1 is stored; |q| = 1 is rejected (the loop
    radii would collide with alpha_0).
    """
    reps = []
    for q in punctures:
        q = complex(q)
        if abs(abs(q) - 1.0) < DEFAULT_SEPARATION:
            raise ConfigurationError(f"puncture {q} too close to the unit circle")
        reps.append(q if abs(q) > 1.0 else complex(involution_apply(q)))
    d = Domain(
        kind="punctured_plane_pairs",
        basepoint=complex(basepoint),
        punctures=tuple(reps),
        **kw,
    )
    _validate_separation(d)
    return d


@dataclass(frozen=True)
class IBasis:
    """Homology generators B+ = {delta_1 = alpha_0, gamma_j^+} and the images I*gamma_j^+."""

    plus: tuple
    minus: tuple

    @property
    def l(self) -> int:
        return len(self.plus)

    def curves(self):
        return tuple(self.plus) + tuple(self.minus)


def _loop_radius(q: complex, others: np.ndarray) -> float:
    """Loop radius around q: clears other special points and the unit circle."""
    d_other = min(abs(q - o) for o in others) if len(others) else np.inf
    return min(0.25 * d_other, 0.25 * abs(abs(q) - 1.0))


def build_ibasis(d: Domain) -> IBasis:
    """The I-basis for the supported genus-zero domains.

    alpha_0 is the unit circle (I acts on it antipodally, so it is setwise
    invariant).  Each puncture pair beyond the distinguished {0, inf} pair
    contributes one loop gamma_j^+ around the representative q_j; the images
    I*gamma_j^+ are small loops around the partners.
    """
    alpha0 = circle(0.0, 1.0, label="alpha_0")
    plus = [alpha0]
    minus = []
    special = d.special_points()
    for j, q in enumerate(np.asarray(d.punctures, dtype=complex), start=1):
        others = special[np.abs(special - q) > d.separation / 2]
        r = _loop_radius(q, others)
        if r <= d.exclusion * max(abs(q), 1.0):
            raise ConfigurationError(
                f"puncture {q} too close to the unit circle or another pair "
                f"for a disjoint loop (radius {r:.3e})"
            )
        gp = circle(q, r, label=f"gamma_{j}+")
        plus.append(gp)
        minus.append(pushforward_curve(gp))
    return IBasis(plus=tuple(plus), minus=tuple(minus))

"""Built-in scenarios: the two classical Moebius-strip immersions.

meeks-r3    Meeks's complete immersed minimal Moebius strip in R^3 on C*,
            Gauss map g = z^2 (z+1)/(z-1), height function f3 = 2(z^2-1)/z,
            theta = i dz/z; total curvature -6 pi; flux-vanishing.

mobius-r4   The properly embedded minimal Moebius strip in R^4 with
            components ((z^2-1)/z, -i(z^2+1)/z, (z^4+1)/z^2, -i(z^4-1)/z^2);
            it satisfies ||X(rho e^(it))|| >= |rho - 1/rho| and has an
            explicit closed form used as a pointwise oracle.

All data is normalized to the f*theta = 2*dX convention, so the immersion is
X(p) = X(p0) + integral of Re(f*theta).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analytic import Const, NullMap, OneForm, ZETA, weierstrass_lift
from .analytic import rational_cancel as _cancel
from .analytic import to_rational as _to_rational
from .analytic import from_rational as _from_rat
from .domain import Domain, IBasis, build_ibasis, punctured_plane
from .immersion import ImmersionField, integrate_immersion

__all__ = ["Scenario", "GALLERY_NAMES", "gallery", "UnknownScenarioError"]

GALLERY_NAMES = ("meeks-r3", "mobius-r4")


class UnknownScenarioError(KeyError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int
    domain: Domain
    basis: IBasis
    theta: OneForm
    f: NullMap
    p0: complex
    X0: tuple
    g: object = None
    f3: object = None
    closed_form: Callable | None = None
    radial_bound: Callable | None = None

    def immersion(self, tol: float = 1e-10) -> ImmersionField:
        return integrate_immersion(
            self.f,
            self.theta,
            self.p0,
            np.asarray(self.X0, dtype=float),
            tol=tol,
            basis=self.basis,
            radial_bound=self.radial_bound,
        )

    def with_sign_error(self) -> NullMap:
        """The classic transcription mistake: the inner sign of the second
        component flipped.  Breaks nullity by O(1) (a plain global sign flip
        of f2 would square away); used as the verify negative control."""
        z = ZETA
        if self.g is not None:
            p, q = _cancel(*_to_rational(self.g))
            inv_g = _from_rat(q, p)
            bad = Const(0.5j) * (inv_g - self.g) * self.f3
        else:
            bad = Const(-1j) * (z**2 - Const(1.0)) / z
        comps = list(self.f.components)
        comps[1] = bad
        return NullMap(tuple(comps))

    def describe(self) -> dict:
        out = {
            "name": self.name,
            "n": self.n,
            "theta": "i dz / z",
            "components": [repr(c) for c in self.f.components],
            "basepoint": [self.p0.real, self.p0.imag],
            "base_value": list(self.X0),
        }
        if self.g is not None:
            out["gauss_map"] = repr(self.g)
            out["height_function"] = repr(self.f3)
        return out


def _theta() -> OneForm:
    return OneForm(Const(1j) / ZETA)


def _meeks_r3() -> Scenario:
    z = ZETA
    g = z**2 * (z + Const(1.0)) / (z - Const(1.0))
    f3 = Const(2.0) * (z**2 - Const(1.0)) / z
    f = weierstrass_lift(g, f3)
    domain = punctured_plane(basepoint=1j)
    return Scenario(
        name="meeks-r3",
        n=3,
        domain=domain,
        basis=build_ibasis(domain),
        theta=_theta(),
        f=f,
        p0=1j,
        X0=(0.0, 0.0, 0.0),
        g=g,
        f3=f3,
    )


def _mobius_r4_closed_form(z):
    """Componentwise closed form; the integration constant matches X(1) = (0,0,0,1)."""
    z = np.asarray(z, dtype=complex)
    w1 = 1j * (z + 1.0 / z)
    w2 = z - 1.0 / z
    w3 = 0.5j * (z**2 - 1.0 / z**2)
    w4 = 0.5 * (z**2 + 1.0 / z**2)
    return np.stack([w1.real, w2.real, w3.real, w4.real], axis=-1)


def _mobius_r4() -> Scenario:
    z = ZETA
    f = NullMap(
        (
            (z**2 - Const(1.0)) / z,
            Const(-1j) * (z**2 + Const(1.0)) / z,
            (z**4 + Const(1.0)) / z**2,
            Const(-1j) * (z**4 - Const(1.0)) / z**2,
        )
    )
    domain = punctured_plane(basepoint=1.0 + 0.0j)
    return Scenario(
        name="mobius-r4",
        n=4,
        domain=domain,
        basis=build_ibasis(domain),
        theta=_theta(),
        f=f,
        p0=1.0 + 0.0j,
        X0=(0.0, 0.0, 0.0, 1.0),
        closed_form=_mobius_r4_closed_form,
        radial_bound=lambda rho: np.abs(np.asarray(rho) - 1.0 / np.asarray(rho)),
    )


def gallery(name: str) -> Scenario:
    """Load a named scenario; unknown names raise with the available list."""
    if name == "meeks-r3":
        return _meeks_r3()
    if name == "mobius-r4":
        return _mobius_r4()
    raise UnknownScenarioError(
        f"unknown scenario {name!r}; available: {', '.join(GALLERY_NAMES)}"
    )

"""Expression trees for meromorphic functions, invariance projectors, and null maps.

Functions are rational expression trees in one complex variable with exact
symbolic derivatives.  Besides the arithmetic nodes there is one structural
operation, the bar-pullback B: (Bf)(z) = conj(f(I(z))) with I(z) = -1/conj(z).
For a rational f the bar-pullback is again rational (conjugate the
coefficients and substitute z -> -1/z), and the invariance projector is
Pi_I f = (f + Bf)/2.

The checks in this module are pointwise residuals evaluated over a grid:
  - map invariance      |f(I(p)) - conj(f(p))|
  - form invariance     |a(-1/conj(z))/conj(z)^2 - conj(a(z))|   for phi = a dz
  - nullity             |sum_j f_j(p)^2| / sup |f|^2
  - Gauss-map symmetry  |g(I(z)) + 1/conj(g(z))|
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.polynomial import polynomial as npoly

from .domain import involution_apply

__all__ = [
    "EvaluationError",
    "ValidationError",
    "Expr",
    "Const",
    "Var",
    "ZETA",
    "const",
    "poly_expr",
    "bar_pullback",
    "parse_expr",
    "symmetrize",
    "antisymmetrize",
    "verification_grid",
    "invariance_residual",
    "form_invariance_residual",
    "gauss_symmetry_residual",
    "null_residual",
    "map_invariance_residual",
    "OneForm",
    "NullMap",
    "weierstrass_lift",
    "gauss_from_nullmap",
]


class EvaluationError(ArithmeticError):
    """Evaluation hit a pole or produced non-finite values."""


class ValidationError(ValueError):
    """Structural precondition on analytic data failed."""


# ---------------------------------------------------------------------------
# expression nodes
# ---------------------------------------------------------------------------

class Expr:
    """Base node.  Trees are immutable after construction; eval is pure."""

    __slots__ = ("_diff",)

    def __init__(self):
        self._diff = None

    # -- arithmetic sugar ---------------------------------------------------
    def __add__(self, o):
        return Add(self, _as_expr(o))

    def __radd__(self, o):
        return Add(_as_expr(o), self)

    def __sub__(self, o):
        return Sub(self, _as_expr(o))

    def __rsub__(self, o):
        return Sub(_as_expr(o), self)

    def __mul__(self, o):
        return Mul(self, _as_expr(o))

    def __rmul__(self, o):
        return Mul(_as_expr(o), self)

    def __truediv__(self, o):
        return Div(self, _as_expr(o))

    def __rtruediv__(self, o):
        return Div(_as_expr(o), self)

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)):
            raise ValidationError("only integer powers are supported")
        return Pow(self, int(k))

    def __neg__(self):
        return Sub(Const(0.0), self)

    # -- core interface -----------------------------------------------------
    def eval(self, z):
        raise NotImplementedError

    def _derivative(self) -> "Expr":
        raise NotImplementedError

    def diff(self) -> "Expr":
        """Exact symbolic derivative, cached."""
        if self._diff is None:
            self._diff = self._derivative()
        return self._diff

    def __call__(self, z):
        return self.eval(z)

    def poles(self) -> np.ndarray:
        """Finite poles, computed from the denominators of the rational form
        after cancelling removable factors."""
        p, q = rational_cancel(*to_rational(self))
        if len(q) <= 1:
            return np.empty(0, dtype=complex)
        return np.asarray(_cluster_roots(npoly.polyroots(q)), dtype=complex)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        super().__init__()
        self.value = complex(value)

    def eval(self, z):
        z = np.asarray(z)
        return np.full(z.shape, self.value) if z.ndim else self.value

    def _derivative(self):
        return Const(0.0)

    def __repr__(self):
        return _fmt_complex(self.value)


class Var(Expr):
    __slots__ = ()

    def eval(self, z):
        return np.asarray(z, dtype=complex) if np.asarray(z).ndim else complex(z)

    def _derivative(self):
        return Const(1.0)

    def __repr__(self):
        return "z"


class Add(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        super().__init__()
        self.a, self.b = a, b

    def eval(self, z):
        return self.a.eval(z) + self.b.eval(z)

    def _derivative(self):
        return Add(self.a.diff(), self.b.diff())

    def __repr__(self):
        return f"({self.a!r} + {self.b!r})"


class Sub(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        super().__init__()
        self.a, self.b = a, b

    def eval(self, z):
        return self.a.eval(z) - self.b.eval(z)

    def _derivative(self):
        return Sub(self.a.diff(), self.b.diff())

    def __repr__(self):
        return f"({self.a!r} - {self.b!r})"


class Mul(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        super().__init__()
        self.a, self.b = a, b

    def eval(self, z):
        return self.a.eval(z) * self.b.eval(z)

    def _derivative(self):
        return Add(Mul(self.a.diff(), self.b), Mul(self.a, self.b.diff()))

    def __repr__(self):
        return f"({self.a!r} * {self.b!r})"


class Div(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        super().__init__()
        self.a, self.b = a, b

    def eval(self, z):
        return self.a.eval(z) / self.b.eval(z)

    def _derivative(self):
        num = Sub(Mul(self.a.diff(), self.b), Mul(self.a, self.b.diff()))
        return Div(num, Pow(self.b, 2))

    def __repr__(self):
        return f"({self.a!r} / {self.b!r})"


class Pow(Expr):
    __slots__ = ("base", "k")

    def __init__(self, base, k: int):
        super().__init__()
        self.base, self.k = base, int(k)

    def eval(self, z):
        return self.base.eval(z) ** self.k

    def _derivative(self):
        if self.k == 0:
            return Const(0.0)
        return Mul(Mul(Const(self.k), Pow(self.base, self.k - 1)), self.base.diff())

    def __repr__(self):
        return f"({self.base!r})^{self.k}"


class Ibar(Expr):
    """Bar-pullback node: (Bf)(z) = conj(f(-1/conj(z)))."""

    __slots__ = ("child",)

    def __init__(self, child):
        super().__init__()
        self.child = child

    def eval(self, z):
        return np.conj(self.child.eval(involution_apply(z)))

    def _derivative(self):
        # (Bf)'(z) = B(f')(z) / z^2
        return Div(Ibar(self.child.diff()), Pow(ZETA, 2))

    def __repr__(self):
        return f"Ibar({self.child!r})"


class PolyNode(Expr):
    """Fused dense polynomial leaf (ascending coefficients); used by the
    rational simplifier for fast vectorized evaluation."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        super().__init__()
        c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
        c = np.trim_zeros(c, "b")
        self.coeffs = c if c.size else np.zeros(1, dtype=complex)

    def eval(self, z):
        z = np.asarray(z, dtype=complex)
        v = npoly.polyval(z, self.coeffs)
        return v if z.ndim else complex(v)

    def _derivative(self):
        return PolyNode(npoly.polyder(self.coeffs))

    def __repr__(self):
        parts = []
        for k, c in enumerate(self.coeffs):
            if c == 0:
                continue
            if k == 0:
                parts.append(_fmt_complex(c))
            else:
                zk = "z" if k == 1 else f"z^{k}"
                parts.append(zk if c == 1 else f"{_fmt_complex(c)}*{zk}")
        return "(" + " + ".join(parts) + ")" if parts else "0"


ZETA = Var()


def const(c) -> Const:
    return Const(c)


def poly_expr(coeffs) -> Expr:
    return PolyNode(coeffs)


def _as_expr(o):
    if isinstance(o, Expr):
        return o
    return Const(o)


def _fmt_complex(c: complex) -> str:
    c = complex(c)
    if c.imag == 0:
        return f"{c.real:g}"
    if c.real == 0:
        return f"{c.imag:g}i"
    return f"({c.real:g}{c.imag:+g}i)"


def bar_pullback(f: Expr) -> Expr:
    """The bar-pullback as a node; B(Bf) simplifies back to f."""
    if isinstance(f, Ibar):
        return f.child
    return Ibar(f)


def symmetrize(f: Expr) -> Expr:
    """Invariance projector Pi_I f = (f + conj(f o I))/2; its image is exactly
    the I-invariant functions, and Pi_I + Pi_Ibar = id."""
    return Mul(Const(0.5), Add(f, bar_pullback(f)))


def antisymmetrize(f: Expr) -> Expr:
    """Complementary projector Pi_Ibar f = (f - conj(f o I))/2."""
    return Mul(Const(0.5), Sub(f, bar_pullback(f)))


# ---------------------------------------------------------------------------
# rational normal form
# ---------------------------------------------------------------------------

def _expand_ibar(e: Expr) -> Expr:
    """Rewrite bar-pullback nodes structurally: conjugate the constants and
    substitute z -> -1/z.  Valid because the tree is rational."""
    if isinstance(e, Const):
        return Const(np.conj(e.value))
    if isinstance(e, Var):
        return Div(Const(-1.0), ZETA)
    if isinstance(e, PolyNode):
        return _expand_ibar_poly(e)
    if isinstance(e, Add):
        return Add(_expand_ibar(e.a), _expand_ibar(e.b))
    if isinstance(e, Sub):
        return Sub(_expand_ibar(e.a), _expand_ibar(e.b))
    if isinstance(e, Mul):
        return Mul(_expand_ibar(e.a), _expand_ibar(e.b))
    if isinstance(e, Div):
        return Div(_expand_ibar(e.a), _expand_ibar(e.b))
    if isinstance(e, Pow):
        return Pow(_expand_ibar(e.base), e.k)
    if isinstance(e, Ibar):
        return _strip_ibar(e.child)
    raise TypeError(f"unknown node {type(e).__name__}")


def _expand_ibar_poly(e: PolyNode) -> Expr:
    # sum conj(c_k) (-1/z)^k = (sum conj(c_k) (-1)^k z^(n-k)) / z^n
    c = np.conj(e.coeffs)
    n = len(c) - 1
    num = np.array([c[n - j] * (-1) ** (n - j) for j in range(n + 1)], dtype=complex)
    if n == 0:
        return PolyNode(num)
    return Div(PolyNode(num), PolyNode([0.0] * n + [1.0]))


def _strip_ibar(e: Expr) -> Expr:
    """Resolve a nested bar-pullback: B(B f) = f, with inner B expanded first."""
    if isinstance(e, Ibar):
        return _expand_ibar(_expand_ibar(e.child))
    return e


def to_rational(e: Expr) -> tuple[np.ndarray, np.ndarray]:
    """Numerator/denominator coefficient arrays (ascending) of the tree."""
    e = _expand_ibar(e) if _has_ibar(e) else e
    p, q = _to_rat(e)
    return _normalize_rat(p, q)


def _has_ibar(e: Expr) -> bool:
    if isinstance(e, Ibar):
        return True
    for name in getattr(e, "__slots__", ()):
        if name in ("a", "b", "base", "child"):
            if _has_ibar(getattr(e, name)):
                return True
    return False


def _to_rat(e: Expr):
    one = np.ones(1, dtype=complex)
    if isinstance(e, Const):
        return np.array([e.value], dtype=complex), one
    if isinstance(e, Var):
        return np.array([0.0, 1.0], dtype=complex), one
    if isinstance(e, PolyNode):
        return e.coeffs.copy(), one
    if isinstance(e, Add):
        pa, qa = _to_rat(e.a)
        pb, qb = _to_rat(e.b)
        return npoly.polyadd(npoly.polymul(pa, qb), npoly.polymul(pb, qa)), npoly.polymul(qa, qb)
    if isinstance(e, Sub):
        pa, qa = _to_rat(e.a)
        pb, qb = _to_rat(e.b)
        return npoly.polysub(npoly.polymul(pa, qb), npoly.polymul(pb, qa)), npoly.polymul(qa, qb)
    if isinstance(e, Mul):
        pa, qa = _to_rat(e.a)
        pb, qb = _to_rat(e.b)
        return npoly.polymul(pa, pb), npoly.polymul(qa, qb)
    if isinstance(e, Div):
        pa, qa = _to_rat(e.a)
        pb, qb = _to_rat(e.b)
        return npoly.polymul(pa, qb), npoly.polymul(qa, pb)
    if isinstance(e, Pow):
        p, q = _to_rat(e.base)
        k = e.k
        if k >= 0:
            return npoly.polypow(p, k) if k else one.copy(), npoly.polypow(q, k) if k else one.copy()
        return npoly.polypow(q, -k), npoly.polypow(p, -k)
    raise TypeError(f"cannot normalize node {type(e).__name__}")


def _cluster_roots(roots, tol: float = 1e-7):
    """Group nearly equal roots; returns representatives with multiplicity folded."""
    out = []
    for r in roots:
        for i, (s, m) in enumerate(out):
            if abs(r - s) < tol * max(1.0, abs(s)):
                out[i] = ((s * m + r) / (m + 1), m + 1)
                break
        else:
            out.append((r, 1))
    return [s for s, _ in out]


def _root_multiset(coeffs, tol: float = 1e-7):
    if len(coeffs) <= 1:
        return []
    roots = npoly.polyroots(coeffs)
    out = []
    for r in roots:
        for i, (s, m) in enumerate(out):
            if abs(r - s) < tol * max(1.0, abs(s)):
                out[i] = ((s * m + r) / (m + 1), m + 1)
                break
        else:
            out.append((r, 1))
    return out


def _normalize_rat(p, q):
    p = np.trim_zeros(np.atleast_1d(p), "b")
    q = np.trim_zeros(np.atleast_1d(q), "b")
    if p.size == 0:
        return np.zeros(1, dtype=complex), np.ones(1, dtype=complex)
    if q.size == 0:
        raise ZeroDivisionError("identically zero denominator")
    return np.asarray(p, dtype=complex), np.asarray(q, dtype=complex)


def rational_cancel(p, q, tol: float = 1e-7):
    """Cancel matching numerator/denominator roots (root-matching GCD).

    Coefficients are rebuilt from the surviving roots; if every coefficient of
    the result lands within 1e-9 of a Gaussian integer it is snapped, which
    keeps small integer gallery data exact.
    """
    p, q = _normalize_rat(p, q)
    if len(p) == 1 or len(q) == 1:
        return p, q
    rp = list(npoly.polyroots(p))
    rq = list(npoly.polyroots(q))
    changed = False
    for r in list(rq):
        for i, s in enumerate(rp):
            if abs(r - s) < tol * max(1.0, abs(r)):
                rp.pop(i)
                rq.remove(r)
                changed = True
                break
    if not changed:
        return p, q
    lead = p[-1] / q[-1]
    pn = npoly.polyfromroots(rp) if rp else np.ones(1, dtype=complex)
    qn = npoly.polyfromroots(rq) if rq else np.ones(1, dtype=complex)
    pn = pn * lead
    return _snap_gaussian(pn), _snap_gaussian(qn)


def _snap_gaussian(c, tol: float = 1e-9):
    c = np.asarray(c, dtype=complex)
    scale = max(1.0, np.max(np.abs(c)))
    r = np.round(c.real)
    i = np.round(c.imag)
    if np.all(np.abs(c.real - r) < tol * scale) and np.all(np.abs(c.imag - i) < tol * scale):
        return r + 1j * i
    return c


def from_rational(p, q) -> Expr:
    p, q = _normalize_rat(p, q)
    if len(q) == 1:
        if q[0] == 1.0:
            return PolyNode(p)
        return PolyNode(p / q[0])
    return Div(PolyNode(p), PolyNode(q))


def simplified(e: Expr) -> Expr:
    """Rational normal form with root-matching cancellation."""
    p, q = to_rational(e)
    p, q = rational_cancel(p, q)
    return from_rational(p, q)


def invert_variable(e: Expr) -> Expr:
    """The rational function w -> e(1/w) (exact coefficient reversal)."""
    p, q = to_rational(e)
    dp, dq = len(p) - 1, len(q) - 1
    num, den = p[::-1].copy(), q[::-1].copy()
    if dq > dp:
        num = npoly.polymul(num, [0.0] * (dq - dp) + [1.0])
    elif dp > dq:
        den = npoly.polymul(den, [0.0] * (dp - dq) + [1.0])
    return from_rational(*rational_cancel(num, den))


# ---------------------------------------------------------------------------
# parser: infix arithmetic over z with integer powers and complex literals
# ---------------------------------------------------------------------------

def parse_expr(text: str) -> Expr:
    """Parse ``(z^2 - 1) * 2 / z`` style strings.

    Grammar (see README): expr := term (('+'|'-') term)*;
    term := factor (('*'|'/') factor)*; factor := unary ('^' int)?;
    unary := ('-'|'+')* atom; atom := number | 'i' | 'z' | '(' expr ')'.
    Numbers may carry an ``i`` suffix (``2i``, ``1.5i``).
    """
    tokens = _tokenize(text)
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def take():
        t = tokens[pos[0]]
        pos[0] += 1
        return t

    def parse_sum():
        node = parse_term()
        while peek() in ("+", "-"):
            op = take()
            rhs = parse_term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def parse_term():
        node = parse_factor()
        while peek() in ("*", "/"):
            op = take()
            rhs = parse_factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def parse_factor():
        node = parse_unary()
        if peek() == "^":
            take()
            sign = 1
            while peek() in ("+", "-"):
                if take() == "-":
                    sign = -sign
            t = peek()
            if not (isinstance(t, complex) and t.imag == 0 and float(t.real).is_integer()):
                raise ValidationError(f"integer exponent expected, got {t!r}")
            take()
            node = Pow(node, sign * int(t.real))
        return node

    def parse_unary():
        sign = 1
        while peek() in ("+", "-"):
            if take() == "-":
                sign = -sign
        node = parse_atom()
        return node if sign == 1 else Sub(Const(0.0), node)

    def parse_atom():
        t = peek()
        if t == "(":
            take()
            node = parse_sum()
            if peek() != ")":
                raise ValidationError("unbalanced parentheses")
            take()
            return node
        if t == "z":
            take()
            return ZETA
        if isinstance(t, complex):
            take()
            return Const(t)
        raise ValidationError(f"unexpected token {t!r}")

    node = parse_sum()
    if pos[0] != len(tokens):
        raise ValidationError(f"trailing input at token {tokens[pos[0]]!r}")
    return node


def _tokenize(text: str):
    out = []
    i = 0
    s = text.replace("ζ", "z").replace("**", "^")
    while i < len(s):
        c = s[i]
        if c.isspace():
            i += 1
        elif c in "+-*/^()":
            out.append(c)
            i += 1
        elif c == "z":
            out.append("z")
            i += 1
        elif c == "i":
            out.append(1j)
            i += 1
        elif c.isdigit() or c == ".":
            j = i
            while j < len(s) and (s[j].isdigit() or s[j] == "."):
                j += 1
            val = float(s[i:j])
            if j < len(s) and s[j] == "i":
                out.append(val * 1j)
                j += 1
            else:
                out.append(complex(val))
            i = j
        else:
            raise ValidationError(f"bad character {c!r} in expression")
    return out


# ---------------------------------------------------------------------------
# verification grid
# ---------------------------------------------------------------------------

def verification_grid(
    n_r: int = 64,
    n_t: int = 64,
    r_min: float = 0.05,
    r_max: float = 20.0,
    avoid: Iterable[complex] = (),
    exclusion: float = 1e-3,
) -> np.ndarray:
    """Involution-symmetric log-polar grid.

    Radii are geometric in [r_min, r_max] with r_min*r_max = 1 preserving
    rho -> 1/rho symmetry; angles are offset half a step so the grid dodges
    the real axis (where gallery data has poles).  Points within
    ``exclusion`` (times local scale) of any point in ``avoid`` are dropped
    together with their involution partners.
    """
    if n_t % 2:
        raise ValidationError("n_t must be even for involution symmetry")
    if abs(r_min * r_max - 1.0) > 1e-12:
        raise ValidationError("need r_min*r_max = 1 for involution symmetry")
    radii = np.geomspace(r_min, r_max, n_r)
    angles = (np.arange(n_t) + 0.5) * (2 * np.pi / n_t)
    z = (radii[:, None] * np.exp(1j * angles[None, :])).ravel()
    avoid = np.asarray(list(avoid), dtype=complex)
    if avoid.size:
        keep = np.ones(z.shape, dtype=bool)
        for q in avoid:
            scale = max(abs(q), 1.0)
            keep &= np.abs(z - q) > exclusion * scale
            keep &= np.abs(z - involution_apply(q)) > exclusion * scale if q != 0 else True
        z = z[keep]
        zi = involution_apply(z)
        ok = np.ones(z.shape, dtype=bool)
        for q in avoid:
            scale = max(abs(q), 1.0)
            ok &= np.abs(zi - q) > exclusion * scale
        z = z[ok]
    return z


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------

def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=complex).ravel()
    if grid.size == 0:
        raise ValidationError("empty verification grid")
    return grid


def invariance_residual(f: Expr, grid) -> float:
    """sup over the grid of |f(I(p)) - conj(f(p))|; zero iff f is I-invariant there."""
    grid = _check_grid(grid)
    lhs = f.eval(involution_apply(grid))
    rhs = np.conj(f.eval(grid))
    return float(np.max(np.abs(lhs - rhs)))


def form_invariance_residual(phi: "OneForm", grid) -> float:
    """Pullback condition I*phi = conj(phi) for phi = a dz in the z chart:
    a(-1/conj(z)) / conj(z)^2 = conj(a(z))."""
    grid = _check_grid(grid)
    a = phi.coef
    lhs = a.eval(involution_apply(grid)) / np.conj(grid) ** 2
    rhs = np.conj(a.eval(grid))
    return float(np.max(np.abs(lhs - rhs)))


def gauss_symmetry_residual(g: Expr, grid) -> float:
    """sup of |g(I(z)) + 1/conj(g(z))|: the Gauss-map symmetry for quotient data."""
    grid = _check_grid(grid)
    gv = g.eval(grid)
    if np.min(np.abs(gv)) == 0.0:
        raise EvaluationError("grid hits a zero of g")
    lhs = g.eval(involution_apply(grid))
    return float(np.max(np.abs(lhs + 1.0 / np.conj(gv))))


# ---------------------------------------------------------------------------
# 1-forms and null maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OneForm:
    """Holomorphic/meromorphic 1-form phi = coef dz."""

    coef: Expr

    def poles(self) -> np.ndarray:
        return self.coef.poles()

    def eval_coef(self, z):
        return self.coef.eval(z)


class NullMap:
    """An n-vector of expressions meant to land in the punctured null quadric."""

    def __init__(self, components):
        comps = tuple(components)
        if len(comps) < 3:
            raise ValidationError("null maps need dimension n >= 3")
        self.components = comps

    @property
    def n(self) -> int:
        return len(self.components)

    def eval(self, z) -> np.ndarray:
        """Values stacked along the last axis: shape z.shape + (n,)."""
        z = np.asarray(z, dtype=complex)
        return np.stack([np.broadcast_to(c.eval(z), z.shape) for c in self.components], axis=-1)

    def poles(self) -> np.ndarray:
        ps = [c.poles() for c in self.components]
        ps = [p for p in ps if p.size]
        if not ps:
            return np.empty(0, dtype=complex)
        return np.asarray(_cluster_roots(np.concatenate(ps)), dtype=complex)

    def validate(self, grid, tol: float = 1e-10) -> None:
        """Raise unless the map is null, I-invariant, and nonvanishing on the grid."""
        nr = null_residual(self, grid)
        if nr > tol:
            raise ValidationError(f"null residual {nr:.3e} exceeds {tol:.1e}")
        ir = map_invariance_residual(self, grid)
        if ir > tol:
            raise ValidationError(f"invariance residual {ir:.3e} exceeds {tol:.1e}")
        v = self.eval(_check_grid(grid))
        if float(np.min(np.linalg.norm(v, axis=-1))) == 0.0:
            raise ValidationError("components share a zero on the grid")


def null_residual(f, grid, relative: bool = True) -> float:
    """sup |sum_j f_j^2| over the grid, relative to the local |f|^2 scale."""
    grid = _check_grid(grid)
    v = f.eval(grid)
    s = np.abs(np.sum(v * v, axis=-1))
    if not relative:
        return float(np.max(s))
    scale = np.sum(np.abs(v) ** 2, axis=-1)
    scale = np.maximum(scale, np.finfo(float).tiny)
    return float(np.max(s / scale))


def map_invariance_residual(f, grid) -> float:
    """Vector version of the invariance residual: sup_p max_j |f_j(I(p)) - conj(f_j(p))|."""
    grid = _check_grid(grid)
    lhs = f.eval(involution_apply(grid))
    rhs = np.conj(f.eval(grid))
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# Weierstrass representation (n = 3)
# ---------------------------------------------------------------------------

def _zero_multiset(e: Expr):
    """Zeros (with orders) of a rational expression: numerator roots minus
    cancellations."""
    p, q = to_rational(e)
    p, q = rational_cancel(p, q)
    return _root_multiset(p)


def _pole_multiset(e: Expr):
    p, q = to_rational(e)
    p, q = rational_cancel(p, q)
    return _root_multiset(q)


def weierstrass_lift(g: Expr, f3: Expr, check: bool = True, puncture_tol: float = 1e-6) -> NullMap:
    """Classical lift ((1/g - g)/2, i(1/g + g)/2, 1) * f3 in cancelled rational form.

    The zeros of f3 must match the zeros and poles of g with equal orders
    (zeros sitting at the puncture 0 are exempt: they are off the domain).
    Components are assembled as f3/g and g*f3 with root-matching cancellation
    so removable points evaluate cleanly.
    """
    if check:
        zeros_f3 = [(r, m) for r, m in _zero_multiset(f3) if abs(r) > puncture_tol]
        targets = [(r, m) for r, m in _zero_multiset(g) + _pole_multiset(g) if abs(r) > puncture_tol]
        for r, m in targets:
            hit = [(s, k) for s, k in zeros_f3 if abs(s - r) < 1e-6 * max(1.0, abs(r))]
            if not hit or hit[0][1] != m:
                raise ValidationError(
                    f"f3 must vanish to order {m} at z={r:.6g} (zero/pole of g); "
                    f"found order {hit[0][1] if hit else 0}"
                )
        extra = len(zeros_f3) and sum(m for _, m in zeros_f3) != sum(m for _, m in targets)
        if extra:
            raise ValidationError("f3 has zeros not matched by zeros/poles of g")

    pg, qg = rational_cancel(*to_rational(g))
    p3, q3 = rational_cancel(*to_rational(f3))
    # f3/g and f3*g, each cancelled
    a_p, a_q = rational_cancel(npoly.polymul(p3, qg), npoly.polymul(q3, pg))
    b_p, b_q = rational_cancel(npoly.polymul(p3, pg), npoly.polymul(q3, qg))
    half = 0.5
    f1 = Sub(Mul(Const(half), from_rational(a_p, a_q)), Mul(Const(half), from_rational(b_p, b_q)))
    f2 = Add(Mul(Const(0.5j), from_rational(a_p, a_q)), Mul(Const(0.5j), from_rational(b_p, b_q)))
    f1 = simplified(f1)
    f2 = simplified(f2)
    return NullMap((f1, f2, from_rational(p3, q3)))


def gauss_from_nullmap(f: NullMap) -> Expr:
    """Recover g = f3 / (f1 - i f2); inverse of the lift on admissible data."""
    if f.n != 3:
        raise ValidationError("Gauss map recovery needs n = 3")
    f1, f2, f3 = f.components
    den = Sub(f1, Mul(Const(1j), f2))
    dp, dq = rational_cancel(*to_rational(den))
    if len(dp) == 1 and dp[0] == 0:
        raise ValidationError("f1 - i*f2 vanishes identically (degenerate data)")
    p3, q3 = rational_cancel(*to_rational(f3))
    gp, gq = rational_cancel(npoly.polymul(p3, dq), npoly.polymul(q3, dp))
    return from_rational(gp, gq)

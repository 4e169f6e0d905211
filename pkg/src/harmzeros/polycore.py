"""Complex polynomial and rational-function arithmetic.

Coefficient arrays are stored in ascending order (``coeffs[k]`` multiplies
``z**k``); the zero polynomial is the empty array.  All values are immutable
after construction.

Root finding uses the Aberth-Ehrlich simultaneous iteration.  Rational
functions are normalized on construction: common roots of numerator and
denominator are cancelled and the denominator is made monic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NonConvergence, NotAPole, PoleProximity

EPS = np.finfo(float).eps

#: relative tolerance for cancelling common numerator/denominator roots
CANCEL_TOL = 1e-10
#: roots closer than this (relative) are treated as one multiple root
CLUSTER_TOL = 1e-6
#: |den(z)| below this (relative to the coefficient scale) is a pole hit
POLE_TOL = 1e-14
MAX_MULTIPLICITY = 8

_ABERTH_RNG_SEED = 20210515


class _Infinity(enum.Enum):
    INF = "INF"

    def __repr__(self):
        return "INF"


#: marker for the point at infinity
INF = _Infinity.INF


def is_inf(point) -> bool:
    return point is INF


def _horner(c: np.ndarray, z):
    """Evaluate the ascending coefficient array ``c`` at ``z`` (vectorized)."""
    z = np.asarray(z, dtype=complex)
    if c.size == 0:
        return np.zeros(z.shape, dtype=complex)
    acc = np.full(z.shape, c[-1], dtype=complex)
    for a in c[-2::-1]:
        acc = acc * z + a
    return acc


def _horner_abs(c: np.ndarray, r):
    """``sum |c_k| r**k`` -- the scale of rounding errors in Horner's rule."""
    r = np.asarray(r, dtype=float)
    a = np.abs(c)
    if a.size == 0:
        return np.zeros(r.shape)
    acc = np.full(r.shape, a[-1])
    for x in a[-2::-1]:
        acc = acc * r + x
    return acc


def _horner_with_derivative(c: np.ndarray, z):
    z = np.asarray(z, dtype=complex)
    if c.size == 0:
        zero = np.zeros(z.shape, dtype=complex)
        return zero, zero.copy()
    p = np.full(z.shape, c[-1], dtype=complex)
    dp = np.zeros(z.shape, dtype=complex)
    for a in c[-2::-1]:
        dp = dp * z + p
        p = p * z + a
    return p, dp


def _scalarize(value, z):
    if np.ndim(z) == 0:
        return complex(value)
    return value


def _trim(c: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else c[:0]


def _frozen(c: np.ndarray) -> np.ndarray:
    c = np.array(c, dtype=complex)
    c.setflags(write=False)
    return c


class Polynomial:
    """Complex polynomial with ascending coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        c = np.asarray(list(coeffs) if not isinstance(coeffs, np.ndarray) else coeffs,
                       dtype=complex).ravel()
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        self.coeffs = _frozen(_trim(c))

    @classmethod
    def _from_array(cls, c: np.ndarray) -> "Polynomial":
        p = object.__new__(cls)
        p.coeffs = _frozen(_trim(c))
        return p

    @classmethod
    def from_roots(cls, roots: Sequence[complex], lead: complex = 1.0) -> "Polynomial":
        c = np.array([lead], dtype=complex)
        for r in roots:
            c = np.convolve(c, [-r, 1.0])
        return cls._from_array(c)

    @classmethod
    def monomial(cls, k: int, coeff: complex = 1.0) -> "Polynomial":
        c = np.zeros(k + 1, dtype=complex)
        c[k] = coeff
        return cls._from_array(c)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    @property
    def lead(self) -> complex:
        return complex(self.coeffs[-1]) if self.coeffs.size else 0j

    def __call__(self, z):
        return _scalarize(_horner(self.coeffs, z), z)

    def eval_with_derivative(self, z):
        p, dp = _horner_with_derivative(self.coeffs, z)
        return _scalarize(p, z), _scalarize(dp, z)

    def scale_at(self, z):
        """Rounding scale ``sum |c_k| |z|**k`` used by residual tests."""
        return _horner_abs(self.coeffs, np.abs(z))

    def derivative(self) -> "Polynomial":
        if self.coeffs.size <= 1:
            return Polynomial()
        k = np.arange(1, self.coeffs.size)
        return Polynomial._from_array(self.coeffs[1:] * k)

    def trailing_zeros(self) -> int:
        nz = np.flatnonzero(self.coeffs)
        return int(nz[0]) if nz.size else 0

    def shift_down(self, k: int) -> "Polynomial":
        """Divide by ``z**k`` (the caller guarantees exactness)."""
        return Polynomial._from_array(self.coeffs[k:])

    def deflate(self, root: complex) -> tuple["Polynomial", complex]:
        """Synthetic division by ``(z - root)``; returns (quotient, remainder)."""
        c = self.coeffs
        n = c.size
        if n <= 1:
            return Polynomial(), complex(c[0]) if n else 0j
        q = np.empty(n - 1, dtype=complex)
        acc = c[-1]
        for k in range(n - 2, -1, -1):
            q[k] = acc
            acc = c[k] + root * acc
        return Polynomial._from_array(q), complex(acc)

    def taylor(self, z0: complex, order: int) -> np.ndarray:
        """Taylor coefficients ``p^{(k)}(z0)/k!`` for ``k = 0..order``."""
        out = np.zeros(order + 1, dtype=complex)
        p = self
        for k in range(order + 1):
            if p.is_zero:
                break
            p, out[k] = p.deflate(z0)
        return out

    def divmod(self, other: "Polynomial") -> tuple["Polynomial", "Polynomial"]:
        if other.is_zero:
            raise ZeroDivisionError("polynomial division by zero")
        rem = np.array(self.coeffs)
        dd = other.degree
        if self.degree < dd:
            return Polynomial(), self
        q = np.zeros(self.degree - dd + 1, dtype=complex)
        lead = other.coeffs[-1]
        for k in range(self.degree - dd, -1, -1):
            q[k] = rem[k + dd] / lead
            rem[k:k + dd + 1] -= q[k] * other.coeffs
        return Polynomial._from_array(q), Polynomial._from_array(rem[:dd])

    # arithmetic with cancellation-aware zeroing: a coefficient that cancels
    # down to the rounding level of its inputs is set to exactly zero.
    def _combine(self, other: "Polynomial", sign: float) -> "Polynomial":
        n = max(self.coeffs.size, other.coeffs.size)
        a = np.zeros(n, dtype=complex)
        b = np.zeros(n, dtype=complex)
        a[: self.coeffs.size] = self.coeffs
        b[: other.coeffs.size] = other.coeffs
        c = a + sign * b
        noise = 4 * EPS * (np.abs(a) + np.abs(b))
        c[np.abs(c) <= noise] = 0
        return Polynomial._from_array(c)

    def __add__(self, other):
        return self._combine(_as_poly(other), 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(_as_poly(other), -1.0)

    def __rsub__(self, other):
        return _as_poly(other)._combine(self, -1.0)

    def __neg__(self):
        return Polynomial._from_array(-self.coeffs)

    def __mul__(self, other):
        other = _as_poly(other)
        if self.is_zero or other.is_zero:
            return Polynomial()
        c = np.convolve(self.coeffs, other.coeffs)
        noise = 4 * EPS * min(self.coeffs.size, other.coeffs.size) * np.convolve(
            np.abs(self.coeffs), np.abs(other.coeffs))
        c[np.abs(c) <= noise] = 0
        return Polynomial._from_array(c)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def __repr__(self):
        return f"Polynomial({[complex(c) for c in self.coeffs]})"


def _as_poly(x) -> Polynomial:
    if isinstance(x, Polynomial):
        return x
    if np.isscalar(x):
        return Polynomial([x])
    return Polynomial(x)


def poly_eval(p: Polynomial, z):
    """Horner evaluation of ``p`` at ``z``."""
    return p(z)


def poly_derivative(p: Polynomial) -> Polynomial:
    return p.derivative()


# --------------------------------------------------------------------------
# roots


def _cauchy_radius(c: np.ndarray) -> float:
    """Unique positive root of ``|c_n| x^n - sum_{k<n} |c_k| x^k``."""
    a = np.abs(c)
    n = a.size - 1
    if not np.any(a[:-1]):
        return 0.0
    aux = -a.copy()
    aux[-1] = a[-1]
    # start right of the root (classical Cauchy bound); Newton decreases
    # monotonically because the auxiliary polynomial is convex there
    x = 1.0 + np.max(a[:-1]) / a[-1]
    daux = aux[1:] * np.arange(1, n + 1)
    for _ in range(100):
        v = np.polyval(aux[::-1], x)
        dv = np.polyval(daux[::-1], x)
        if dv <= 0:
            break
        step = v / dv
        x -= step
        if abs(step) <= 1e-12 * x:
            break
    return float(x)


def _aberth(c: np.ndarray, tol: float, max_sweeps: int) -> np.ndarray:
    n = c.size - 1
    if n == 1:
        return np.array([-c[0] / c[1]])
    radius = _cauchy_radius(c)
    rng = np.random.default_rng(_ABERTH_RNG_SEED)
    phase = 2 * np.pi * (np.arange(n) + 0.25) / n + 1e-3 * rng.uniform(-1, 1, n)
    z = radius * np.exp(1j * phase)
    dc = c[1:] * np.arange(1, n + 1)
    cmax = np.max(np.abs(c))
    active = np.ones(n, dtype=bool)
    eye = np.eye(n, dtype=bool)
    ok = np.zeros(n, dtype=bool)
    with np.errstate(all="ignore"):
        for _ in range(max_sweeps):
            p = _horner(c, z)
            dp = _horner(dc, z)
            absz = np.abs(z)
            roundoff = 4 * n * EPS * _horner_abs(c, absz)
            scale = cmax * np.maximum(1.0, absz) ** n
            res = np.abs(p)
            ok = (res <= np.maximum(tol * scale, roundoff))
            diff = z[:, None] - z[None, :]
            diff[eye] = 1.0
            inv = 1.0 / diff
            inv[eye] = 0.0
            ratio = p / dp
            w = ratio / (1.0 - ratio * inv.sum(axis=1))
            w[~np.isfinite(w)] = 0.0
            tiny = np.abs(w) <= 4 * EPS * (1 + absz)
            active &= ~((res <= roundoff) | (ok & tiny))
            if not active.any():
                break
            z = np.where(active, z - w, z)
    p = _horner(c, z)
    absz = np.abs(z)
    ok = np.abs(p) <= np.maximum(tol * np.max(np.abs(c)) * np.maximum(1.0, absz) ** n,
                                 4 * n * EPS * _horner_abs(c, absz))
    if not np.all(ok) or not np.all(np.isfinite(z)):
        raise NonConvergence(
            f"Aberth iteration did not converge for degree {n} after {max_sweeps} sweeps")
    return z


def poly_roots(p: Polynomial, tol: float = 1e-12, max_sweeps: int = 200) -> np.ndarray:
    """All ``deg(p)`` roots of ``p`` (with multiplicity).

    Exact zero roots are split off first; the remaining roots come from the
    Aberth-Ehrlich iteration started on a slightly perturbed circle whose
    radius is the Cauchy bound.

    Raises
    ------
    NonConvergence
        if some root misses ``|p(root)| <= tol * max|c| * max(1, |root|)**deg``
        after ``max_sweeps`` sweeps.
    """
    if p.degree < 1:
        raise ValueError("poly_roots needs a polynomial of degree >= 1")
    k = p.trailing_zeros()
    rest = p.coeffs[k:]
    roots = np.zeros(k, dtype=complex)
    if rest.size > 1:
        roots = np.concatenate([_aberth(np.array(rest), tol, max_sweeps), roots])
    return roots


def cluster_roots(p: Polynomial, roots: np.ndarray, tol: float = CLUSTER_TOL):
    """Group approximate roots into ``[(root, multiplicity), ...]``.

    A cluster of ``m`` roots may spread over ``~eps**(1/m)``, so the radius
    accepted for a group grows with its size (up to ``MAX_MULTIPLICITY``).
    Each cluster center is the mean of its members, polished by Newton's
    method on ``p^{(m-1)}`` where the root is simple.
    """
    roots = list(np.asarray(roots, dtype=complex))
    out = []
    used = [False] * len(roots)
    for i, r in enumerate(roots):
        if used[i]:
            continue
        used[i] = True
        free = [j for j in range(len(roots)) if not used[j]]
        order = [i] + sorted(free, key=lambda j: abs(roots[j] - r))[:MAX_MULTIPLICITY - 1]
        members = [i]
        # largest group around r that is tight enough to be one m-fold root
        for m in range(len(order), 1, -1):
            group = order[:m]
            center = np.mean([roots[j] for j in group])
            radius = max(tol, 4 * EPS ** (1.0 / m)) * (1 + abs(center))
            if all(abs(roots[j] - center) <= radius for j in group):
                members = group
                break
        for j in members:
            used[j] = True
        members = [roots[j] for j in members]
        m = len(members)
        center = complex(np.mean(members))
        q = p
        for _ in range(m - 1):
            q = q.derivative()
        dq = q.derivative()
        for _ in range(4):
            val, dval = q(center), dq(center)
            if dval == 0:
                break
            step = val / dval
            if not np.isfinite(step) or abs(step) > tol * (1 + abs(center)):
                break
            center -= step
        out.append((center, m))
    return out


# --------------------------------------------------------------------------
# rational functions


def _cancel(num: Polynomial, den: Polynomial, candidates, tol: float):
    """Cancel common roots drawn from ``candidates = [(root, mult), ...]``."""
    for root, mult in candidates:
        for _ in range(mult):
            if num.degree < 1 or den.degree < 1:
                return num, den
            vn = abs(num(root))
            vd = abs(den(root))
            sn, sd = float(num.scale_at(root)), float(den.scale_at(root))
            if not np.isfinite(vn + vd + sn + sd):
                break
            if vn > tol * sn or vd > tol * sd:
                break
            num, _ = num.deflate(root)
            den, _ = den.deflate(root)
    return num, den


class RationalFunction:
    """Quotient of two complex polynomials, stored normalized.

    Normalization strips common powers of ``z``, cancels common roots within
    relative tolerance ``tol`` and makes the denominator monic.  When
    ``candidates`` is given, only those ``(root, multiplicity)`` pairs are
    tested for cancellation; otherwise the roots of the lower-degree part are.
    """

    __slots__ = ("numerator", "denominator", "_den_clusters", "_num_clusters")

    def __init__(self, numerator, denominator=None, *, normalize: bool = True,
                 tol: float = CANCEL_TOL, candidates=None):
        num = _as_poly(numerator)
        den = Polynomial([1.0]) if denominator is None else _as_poly(denominator)
        if den.is_zero:
            raise ZeroDivisionError("denominator is the zero polynomial")
        self._den_clusters = None
        self._num_clusters = None
        if num.is_zero:
            num, den = Polynomial(), Polynomial([1.0])
        elif normalize:
            k = min(num.trailing_zeros(), den.trailing_zeros())
            if k:
                num, den = num.shift_down(k), den.shift_down(k)
            if num.degree >= 1 and den.degree >= 1:
                if candidates is None:
                    small = den if den.degree <= num.degree else num
                    try:
                        candidates = cluster_roots(small, poly_roots(small))
                    except NonConvergence:
                        candidates = []
                    if small is den:
                        self._den_clusters = candidates
                num, den = _cancel(num, den, candidates, tol)
        lead = den.lead
        if lead != 1:
            num = Polynomial._from_array(num.coeffs / lead)
            den = Polynomial._from_array(den.coeffs / lead)
        self.numerator = num
        self.denominator = den
        if self._den_clusters is not None and den.degree != sum(m for _, m in self._den_clusters):
            self._den_clusters = None

    @classmethod
    def constant(cls, value: complex) -> "RationalFunction":
        return cls(Polynomial([value]))

    @property
    def is_zero(self) -> bool:
        return self.numerator.is_zero

    @property
    def is_constant(self) -> bool:
        return self.numerator.degree <= 0 and self.denominator.degree == 0

    @property
    def degree(self) -> int:
        """``max(deg num, deg den)`` -- the number of preimages of a generic value."""
        return max(self.numerator.degree, self.denominator.degree)

    def __call__(self, z):
        """Unchecked vectorized evaluation (poles give inf/nan)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return _scalarize(_horner(self.numerator.coeffs, z)
                              / _horner(self.denominator.coeffs, z), z)

    def eval_with_derivative(self, z):
        n, dn = _horner_with_derivative(self.numerator.coeffs, z)
        d, dd = _horner_with_derivative(self.denominator.coeffs, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = n / d
            der = (dn * d - n * dd) / (d * d)
        return _scalarize(val, z), _scalarize(der, z)

    def pole_clusters(self):
        """Roots of the denominator as ``[(root, multiplicity), ...]``."""
        if self._den_clusters is None:
            den = self.denominator
            if den.degree < 1:
                self._den_clusters = []
            else:
                self._den_clusters = cluster_roots(den, poly_roots(den))
        return self._den_clusters

    def zero_clusters(self):
        if self._num_clusters is None:
            num = self.numerator
            if num.degree < 1:
                self._num_clusters = []
            else:
                self._num_clusters = cluster_roots(num, poly_roots(num))
        return self._num_clusters

    def derivative(self) -> "RationalFunction":
        n, d = self.numerator, self.denominator
        if d.degree == 0:
            return RationalFunction(n.derivative() * (1.0 / d.lead), normalize=False)
        num = n.derivative() * d - n * d.derivative()
        cands = [(r, 2 * m) for r, m in self.pole_clusters()]
        return RationalFunction(num, d * d, candidates=cands)

    def __add__(self, other):
        other = _as_rat(other)
        cands = _merge_clusters(self.pole_clusters(), other.pole_clusters())
        num = self.numerator * other.denominator + other.numerator * self.denominator
        return RationalFunction(num, self.denominator * other.denominator, candidates=cands)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.numerator, self.denominator, normalize=False)

    def __sub__(self, other):
        return self + (-_as_rat(other))

    def __rsub__(self, other):
        return _as_rat(other) + (-self)

    def __mul__(self, other):
        other = _as_rat(other)
        cands = _merge_clusters(self.pole_clusters(), other.pole_clusters(),
                                self.zero_clusters(), other.zero_clusters())
        return RationalFunction(self.numerator * other.numerator,
                                self.denominator * other.denominator, candidates=cands)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_rat(other)
        if other.is_zero:
            raise ZeroDivisionError("division by the zero rational function")
        cands = _merge_clusters(other.pole_clusters(), other.zero_clusters())
        return RationalFunction(self.numerator * other.denominator,
                                self.denominator * other.numerator, candidates=cands)

    def scaled(self, factor: complex) -> "RationalFunction":
        return RationalFunction(self.numerator * factor, self.denominator, normalize=False)

    def __repr__(self):
        return f"RationalFunction({self.numerator!r}, {self.denominator!r})"


def _as_rat(x) -> RationalFunction:
    if isinstance(x, RationalFunction):
        return x
    return RationalFunction(_as_poly(x))


def _merge_clusters(*groups, tol: float = CLUSTER_TOL):
    out: list[list] = []
    for group in groups:
        for r, m in group:
            for item in out:
                if abs(item[0] - r) <= tol * (1 + abs(r)):
                    item[1] = max(item[1], m)
                    break
            else:
                out.append([r, m])
    return [(r, m) for r, m in out]


def rat_eval(r: RationalFunction, z: complex) -> complex:
    """Evaluate ``r`` at a single point, refusing to evaluate at a pole."""
    z = complex(z)
    d = r.denominator(z)
    dscale = np.max(np.abs(r.denominator.coeffs)) * max(1.0, abs(z)) ** r.denominator.degree
    if abs(d) <= POLE_TOL * dscale:
        raise PoleProximity(f"{z} is numerically a pole")
    return r.numerator(z) / d


def rat_derivative(r: RationalFunction) -> RationalFunction:
    return r.derivative()


# --------------------------------------------------------------------------
# Laurent data


@dataclass(frozen=True)
class LaurentHead:
    """Principal part and constant term at a pole.

    For a finite pole ``principal = (a_{-n}, ..., a_{-1})``; at infinity it
    holds the polynomial-part coefficients ``(a_n, ..., a_1)``.
    """

    pole: object
    order: int
    principal: tuple
    constant: complex

    def __post_init__(self):
        if self.order != len(self.principal):
            raise ValueError("order must match the principal part length")

    @property
    def leading(self) -> complex:
        return self.principal[0]


def laurent_head(r: RationalFunction, pole) -> LaurentHead:
    """Laurent coefficients of ``r`` at ``pole`` down to the constant term.

    Raises
    ------
    NotAPole
        if ``pole`` is not a pole of ``r``.
    """
    num, den = r.numerator, r.denominator
    if is_inf(pole):
        order = num.degree - den.degree
        if num.is_zero or order < 1:
            raise NotAPole("r has no pole at infinity")
        q, _ = num.divmod(den)
        coeffs = q.coeffs
        principal = tuple(complex(coeffs[k]) for k in range(order, 0, -1))
        return LaurentHead(INF, order, principal, complex(coeffs[0]))

    pole = complex(pole)
    match = None
    for root, mult in r.pole_clusters():
        if abs(root - pole) <= CLUSTER_TOL * (1 + abs(root)):
            match = (root, mult)
            break
    if match is None:
        raise NotAPole(f"{pole} is not a pole of r")
    root, order = match
    rest = den
    for _ in range(order):
        rest, _ = rest.deflate(root)
    nt = num.taylor(root, order)
    et = rest.taylor(root, order)
    g = np.zeros(order + 1, dtype=complex)
    for k in range(order + 1):
        acc = nt[k]
        for j in range(1, k + 1):
            acc -= et[j] * g[k - j]
        g[k] = acc / et[0]
    if g[0] == 0:
        raise NotAPole(f"{pole} is a removable singularity of r")
    return LaurentHead(root, order, tuple(complex(x) for x in g[:order]), complex(g[order]))

"""Harmonic mappings ``f(z) = r(z) + conj(s(z)) + sum 2 A_j log|z - z_j|``.

``r`` and ``s`` are rational functions, the log terms carry complex
coefficients ``A_j`` anchored at ``z_j``.  Besides evaluation this module
provides the Wirtinger derivatives, the Jacobian, the second complex
dilatation, local Taylor data at a point and the pole inventory, plus
builders for the standard test families.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateMapping, DegeneratePole, PoleProximity
from .polycore import (
    CLUSTER_TOL,
    INF,
    POLE_TOL,
    LaurentHead,
    Polynomial,
    RationalFunction,
    is_inf,
    laurent_head,
)

#: relative gap required between |a_{-n}| and |b_{-n}| at every pole
NONDEGENERACY_GAP = 1e-8


class LogTerm(NamedTuple):
    anchor: complex
    coeff: complex


class Wirtinger(NamedTuple):
    dz: RationalFunction          # d f / dz
    dzbar_conj: RationalFunction  # conj(d f / d zbar)


@dataclass(frozen=True)
class LocalJet:
    """Second-order Taylor data of the analytic / anti-analytic parts."""

    a1: complex
    b1: complex
    a2: complex
    b2: complex

    @property
    def c(self) -> complex:
        """Direction in which a fold spawns two preimages."""
        return -(self.a2 * self.b1.conjugate() / self.a1
                 + self.b2.conjugate() * self.a1 / self.b1.conjugate())


@dataclass(frozen=True)
class PoleInfo:
    location: object              # complex or INF
    order: int
    a_head: LaurentHead | None    # expansion of r (None if r is regular here)
    b_head: LaurentHead | None    # expansion of s
    log_coeff: complex
    a_lead: complex               # a_{-n} (a_n at infinity), 0 if r has lower order
    b_lead: complex
    offset: complex               # a_0 + conj(b_0), smooth log terms included

    @property
    def is_infinite(self) -> bool:
        return is_inf(self.location)


def _rat(x) -> RationalFunction:
    if x is None:
        return RationalFunction(Polynomial())
    if isinstance(x, RationalFunction):
        return x
    if isinstance(x, Polynomial):
        return RationalFunction(x)
    return RationalFunction(Polynomial(x))


class HarmonicMapping:
    """``f(z) = r(z) + conj(s(z)) + sum_j 2 A_j log|z - z_j|``.

    Construction validates non-degeneracy at every pole (including infinity)
    and raises :class:`DegeneratePole` when ``|a_{-n}|`` and ``|b_{-n}|`` agree
    to within a relative gap of ``1e-8``.
    """

    def __init__(self, r=None, s=None, logs: Sequence = (), *, name: str | None = None,
                 check: bool = True):
        self.r = _rat(r)
        self.s = _rat(s)
        self.logs = tuple(LogTerm(complex(a), complex(c)) for a, c in logs)
        self.name = name
        if check:
            self.poles()

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<HarmonicMapping{label}: r={self.r!r}, s={self.s!r}, logs={list(self.logs)}>"

    # -- evaluation ---------------------------------------------------------

    def __call__(self, z):
        """Vectorized evaluation without pole checks."""
        z = np.asarray(z, dtype=complex)
        val = self.r(z) + np.conj(self.s(z))
        with np.errstate(divide="ignore"):
            for anchor, coeff in self.logs:
                val = val + 2 * coeff * np.log(np.abs(z - anchor))
        return complex(val) if val.ndim == 0 else val

    def singular_points(self) -> list[complex]:
        pts = [r for r, _ in self.r.pole_clusters()] + [r for r, _ in self.s.pole_clusters()]
        pts += [a for a, _ in self.logs]
        return pts

    def near_singularity(self, z: complex) -> bool:
        for p in (self.r.denominator, self.s.denominator):
            if p.degree >= 1:
                dscale = np.max(np.abs(p.coeffs)) * max(1.0, abs(z)) ** p.degree
                if abs(p(z)) <= POLE_TOL * dscale:
                    return True
        return any(abs(z - a) <= POLE_TOL * (1 + abs(a)) for a, _ in self.logs)

    def eval(self, z: complex) -> complex:
        z = complex(z)
        if self.near_singularity(z):
            raise PoleProximity(f"{z} is at a singularity of f")
        return self(z)

    # -- derivatives --------------------------------------------------------

    @cached_property
    def wirtinger(self) -> Wirtinger:
        dz = self.r.derivative()
        dzb = self.s.derivative()
        for anchor, coeff in self.logs:
            simple = RationalFunction(Polynomial([1.0]), Polynomial([-anchor, 1.0]),
                                      normalize=False)
            dz = dz + simple.scaled(coeff)
            dzb = dzb + simple.scaled(coeff.conjugate())
        return Wirtinger(dz, dzb)

    def derivatives(self, z):
        """``(d f/dz, conj(d f/dzbar))`` evaluated at ``z`` (vectorized)."""
        w = self.wirtinger
        return w.dz(z), w.dzbar_conj(z)

    @cached_property
    def dilatation(self) -> RationalFunction:
        """Second complex dilatation ``omega = conj(f_zbar) / f_z``."""
        w = self.wirtinger
        if w.dz.is_zero:
            raise DegenerateMapping("d f / dz vanishes identically")
        return w.dzbar_conj / w.dz

    def jacobian(self, z):
        hz, gz = self.derivatives(z)
        return np.abs(hz) ** 2 - np.abs(gz) ** 2

    def local_jet(self, z0: complex) -> LocalJet:
        z0 = complex(z0)
        if self.near_singularity(z0):
            raise PoleProximity(f"{z0} is at a singularity of f")
        w = self.wirtinger
        a1, da = w.dz.eval_with_derivative(z0)
        b1, db = w.dzbar_conj.eval_with_derivative(z0)
        return LocalJet(complex(a1), complex(b1), complex(da) / 2, complex(db) / 2)

    # -- poles --------------------------------------------------------------

    def poles(self) -> list[PoleInfo]:
        if not hasattr(self, "_poles"):
            self._poles = self._compute_poles()
        return self._poles

    @property
    def pole_count(self) -> int:
        """``P(f)``, the sum of all pole orders."""
        return sum(p.order for p in self.poles())

    def _compute_poles(self) -> list[PoleInfo]:
        sites: list[list] = []   # [location, order_r, order_s]

        def add(loc, idx, order):
            for site in sites:
                if abs(site[0] - loc) <= CLUSTER_TOL * (1 + abs(loc)):
                    site[idx] = max(site[idx], order)
                    return
            site = [loc, 0, 0]
            site[idx] = order
            sites.append(site)

        for loc, m in self.r.pole_clusters():
            add(loc, 1, m)
        for loc, m in self.s.pole_clusters():
            add(loc, 2, m)

        infos = []
        for loc, order_r, order_s in sites:
            infos.append(self._pole_info(loc, order_r, order_s))

        for anchor, _ in self.logs:
            if not any(abs(anchor - s[0]) <= CLUSTER_TOL * (1 + abs(anchor)) for s in sites):
                warnings.warn(f"log anchor {anchor} is not a pole of r or s", stacklevel=3)

        order_r = max(self.r.numerator.degree - self.r.denominator.degree, 0)
        order_s = max(self.s.numerator.degree - self.s.denominator.degree, 0)
        if self.r.is_zero:
            order_r = 0
        if self.s.is_zero:
            order_s = 0
        if max(order_r, order_s) >= 1:
            infos.append(self._pole_info(INF, order_r, order_s))
        return infos

    def _pole_info(self, loc, order_r: int, order_s: int) -> PoleInfo:
        n = max(order_r, order_s)
        a_head = laurent_head(self.r, loc) if order_r else None
        b_head = laurent_head(self.s, loc) if order_s else None
        if a_head is not None:
            loc = a_head.pole
        elif b_head is not None:
            loc = b_head.pole
        a_lead = a_head.leading if order_r == n else 0j
        b_lead = b_head.leading if order_s == n else 0j
        if is_inf(loc):
            a0 = a_head.constant if a_head else _value_at_infinity(self.r)
            b0 = b_head.constant if b_head else _value_at_infinity(self.s)
            offset = a0 + b0.conjugate()
            log_coeff = sum((c for _, c in self.logs), 0j)
        else:
            a0 = a_head.constant if a_head else complex(self.r(loc))
            b0 = b_head.constant if b_head else complex(self.s(loc))
            offset = a0 + b0.conjugate()
            log_coeff = 0j
            for anchor, coeff in self.logs:
                if abs(anchor - loc) <= CLUSTER_TOL * (1 + abs(loc)):
                    log_coeff += coeff
                else:
                    offset += 2 * coeff * math.log(abs(loc - anchor))
        big = max(abs(a_lead), abs(b_lead))
        if abs(abs(a_lead) - abs(b_lead)) <= NONDEGENERACY_GAP * big:
            raise DegeneratePole(
                f"pole at {loc!r}: |a_-n| = {abs(a_lead):.17g} equals |b_-n| = {abs(b_lead):.17g}")
        return PoleInfo(loc, n, a_head, b_head, log_coeff, a_lead, b_lead, offset)

    # -- serialization ------------------------------------------------------

    def to_spec(self) -> dict:
        def pairs(p: Polynomial):
            return [[float(c.real), float(c.imag)] for c in p.coeffs]

        return {
            "r_num": pairs(self.r.numerator),
            "r_den": pairs(self.r.denominator),
            "s_num": pairs(self.s.numerator),
            "s_den": pairs(self.s.denominator),
            "logs": [{"anchor": [a.real, a.imag], "coeff": [c.real, c.imag]}
                     for a, c in self.logs],
        }

    @classmethod
    def from_spec(cls, spec: dict) -> "HarmonicMapping":
        def poly(key, default):
            raw = spec.get(key, default)
            return Polynomial([complex(re, im) for re, im in raw])

        r = RationalFunction(poly("r_num", []), poly("r_den", [[1.0, 0.0]]))
        s = RationalFunction(poly("s_num", []), poly("s_den", [[1.0, 0.0]]))
        logs = [(complex(*item["anchor"]), complex(*item["coeff"]))
                for item in spec.get("logs", [])]
        return cls(r, s, logs)


def _value_at_infinity(r: RationalFunction) -> complex:
    if r.is_zero or r.numerator.degree < r.denominator.degree:
        return 0j
    return r.numerator.lead / r.denominator.lead


def load_mapping(path) -> HarmonicMapping:
    with open(path) as fh:
        return HarmonicMapping.from_spec(json.load(fh))


def save_mapping(f: HarmonicMapping, path) -> None:
    with open(path, "w") as fh:
        json.dump(f.to_spec(), fh, indent=1)


# -- module-level aliases matching the operation names ------------------------

def eval(f: HarmonicMapping, z: complex) -> complex:  # noqa: A001 - public API name
    return f.eval(z)


def wirtinger(f: HarmonicMapping) -> Wirtinger:
    return f.wirtinger


def jacobian(f: HarmonicMapping, z: complex) -> float:
    z = complex(z)
    if f.near_singularity(z):
        raise PoleProximity(f"{z} is at a singularity of f")
    return float(f.jacobian(z))


def dilatation(f: HarmonicMapping) -> RationalFunction:
    return f.dilatation


def local_jet(f: HarmonicMapping, z0: complex) -> LocalJet:
    return f.local_jet(z0)


def poles(f: HarmonicMapping) -> list[PoleInfo]:
    return f.poles()


# -- builders -----------------------------------------------------------------

def _binomial_power(a: complex, n: int) -> Polynomial:
    """Expanded ``(z + a)**n``."""
    return Polynomial([math.comb(n, k) * a ** (n - k) for k in range(n + 1)])


def wilmshurst(n: int) -> HarmonicMapping:
    """``(z-1)^n + z^n + conj(i (z-1)^n - i z^n)``; exactly ``n**2`` zeros."""
    if n < 1:
        raise ValueError("wilmshurst needs n >= 1")
    zm1 = _binomial_power(-1.0, n)
    zn = Polynomial.monomial(n)
    p = zm1 + zn
    q = zm1 * 1j - zn * 1j
    return HarmonicMapping(RationalFunction(p), RationalFunction(q), name=f"wilmshurst({n})")


def _mpw_s(n: int, rho: float) -> RationalFunction:
    return RationalFunction(Polynomial.monomial(n - 1, -1.0),
                            Polynomial.monomial(n) - rho ** n)


def mpw(n: int, rho: float) -> HarmonicMapping:
    """``z - conj(z^{n-1} / (z^n - rho^n))``."""
    if n < 3 or not rho > 0:
        raise ValueError("mpw needs n >= 3 and rho > 0")
    return HarmonicMapping(RationalFunction([0.0, 1.0]), _mpw_s(n, rho),
                           name=f"mpw({n}, {rho})")


def rhie(n: int, rho: float, eps: float) -> HarmonicMapping:
    """``z - conj((1-eps) z^{n-1}/(z^n - rho^n) + eps/z)``."""
    if n < 3 or not rho > 0 or not 0 < eps < 1:
        raise ValueError("rhie needs n >= 3, rho > 0 and 0 < eps < 1")
    # -((1-eps) z^n + eps (z^n - rho^n)) / (z (z^n - rho^n))
    num = Polynomial.monomial(n, -1.0) + eps * rho ** n
    den = Polynomial.monomial(n + 1) - Polynomial.monomial(1, rho ** n)
    s = RationalFunction(num, den)
    return HarmonicMapping(RationalFunction([0.0, 1.0]), s, name=f"rhie({n}, {rho}, {eps})")


def log_example() -> HarmonicMapping:
    """``z^2 + conj(1/z + 1/(z+1)) + 2 log|z|``."""
    s = RationalFunction(Polynomial([1.0, 2.0]), Polynomial([0.0, 1.0, 1.0]))
    return HarmonicMapping(RationalFunction([0.0, 0.0, 1.0]), s, [(0j, 1.0)],
                           name="log_example")


def chang_refsdal() -> HarmonicMapping:
    """``z - 1/conj(z)``; not light, its critical circle maps to 0."""
    s = RationalFunction(Polynomial([-1.0]), Polynomial([0.0, 1.0]))
    return HarmonicMapping(RationalFunction([0.0, 1.0]), s, name="chang_refsdal")


BUILDERS = {
    "wilmshurst": wilmshurst,
    "mpw": mpw,
    "rhie": rhie,
    "log_example": log_example,
    "chang_refsdal": chang_refsdal,
}


def rho_critical(n: int) -> float:
    """Critical radius separating the 3n+1 and n+1 zero regimes of ``mpw``."""
    if n < 3:
        raise ValueError("rho_critical needs n >= 3")
    return math.sqrt((n - 2) / n) * (2 / (n - 2)) ** (1 / n)

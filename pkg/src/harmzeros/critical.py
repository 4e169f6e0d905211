"""Critical curves, caustics, winding numbers and ray crossings.

The non-isolated critical set is the level set ``|omega| = 1`` of the second
complex dilatation.  Writing ``omega = N / D``, the equation
``omega(z) = e^{it}`` is the polynomial equation ``N(z) - e^{it} D(z) = 0``.
It is solved from scratch at ``t = 0`` and then continued in ``t`` with a
predictor (the implicit tangent ``gamma' = i e^{it} / omega'``) and an
analytic Newton corrector.  The resulting arcs are glued at ``t = 2 pi`` into
closed curves; a curve made of ``w`` arcs has parameters in ``[0, 2 pi w)``.
"""

from __future__ import annotations

import csv
import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMapping, GuardViolation, HarmonicError, TraceFailure
from .harmonic import HarmonicMapping
from .polycore import EPS, Polynomial, RationalFunction, _horner, _horner_with_derivative, poly_roots

K_NODES = 1024
MAX_REFINE_DEPTH = 12
JUMP_FACTOR = 10.0
GLUE_TOL = 1e-6
PHASE_TOL = 1e-10
CUSP_GUARD = 1e-6
TANGENT_GUARD = 1e-4
CROSSING_TOL = 1e-12
_MEDIAN_WINDOW = 32
# grid phase offsets (in units of the step) tried in turn; a nonzero offset
# steps around phases where omega = e^{it} has a double root
GRID_SHIFTS = (0.0, 0.5 * (5 ** 0.5 - 1), 0.2137)


@dataclass(frozen=True, eq=False)
class CriticalCurve:
    params: np.ndarray
    points: np.ndarray
    closed: bool = True
    windings: int = 1      # number of arcs (full turns of the phase of omega)

    @property
    def period(self) -> float:
        return 2 * np.pi * self.windings


@dataclass(frozen=True, eq=False)
class CausticCurve:
    points: np.ndarray
    tangents: np.ndarray
    psi: np.ndarray
    cusp_indices: tuple
    critical: CriticalCurve | None = None
    mapping: HarmonicMapping | None = field(default=None, repr=False)
    not_light: bool = False

    @classmethod
    def from_points(cls, points) -> "CausticCurve":
        """Synthetic closed polyline (no underlying mapping)."""
        pts = np.asarray(points, dtype=complex)
        tang = np.roll(pts, -1) - np.roll(pts, 1)
        return cls(pts, tang, np.abs(tang), ())


class CrossingKind(enum.Enum):
    SIMPLE_FOLD = "simple_fold"
    SUSPECT = "suspect"


@dataclass(frozen=True)
class RayCrossing:
    xi: complex
    curve_index: int
    node_param: float
    preimage: complex | None
    kind: CrossingKind
    tangent: complex = 0j
    psi: float = 0.0

    @property
    def suspect(self) -> bool:
        return self.kind is CrossingKind.SUSPECT


class OmegaLevel:
    """Solver for ``omega(z) = e^{it}`` with ``omega = N / D``."""

    def __init__(self, omega: RationalFunction):
        self.num = omega.numerator.coeffs
        self.den = omega.denominator.coeffs
        n = max(self.num.size, self.den.size)
        self.N = np.zeros(n, dtype=complex)
        self.D = np.zeros(n, dtype=complex)
        self.N[: self.num.size] = self.num
        self.D[: self.den.size] = self.den

    @property
    def degree(self) -> int:
        return max(self.num.size, self.den.size) - 1

    def level_poly(self, t: float) -> Polynomial:
        return Polynomial(self.N - np.exp(1j * t) * self.D)

    def _p(self, z, t):
        c = self.N - np.exp(1j * np.asarray(t))[..., None] * self.D if np.ndim(t) else \
            self.N - np.exp(1j * t) * self.D
        if np.ndim(t):
            # per-point level: evaluate N and D separately
            n, dn = _horner_with_derivative(self.N, z)
            d, dd = _horner_with_derivative(self.D, z)
            e = np.exp(1j * np.asarray(t))
            return n - e * d, dn - e * dd, d
        p, dp = _horner_with_derivative(c, z)
        return p, dp, _horner(self.D, z)

    def velocity(self, z, t):
        """``gamma'(t) = i e^{it} / omega'(gamma(t))`` on the level set."""
        _, dp, d = self._p(z, t)
        with np.errstate(all="ignore"):
            return 1j * np.exp(1j * np.asarray(t)) * d / dp

    def correct(self, z, t, max_iter: int = 12):
        """Newton on ``N - e^{it} D``; returns (points, ok-mask)."""
        z = np.array(z, dtype=complex)
        with np.errstate(all="ignore"):
            for _ in range(max_iter):
                p, dp, _ = self._p(z, t)
                delta = p / dp
                delta[~np.isfinite(delta)] = 0
                z = z - delta
                if np.all(np.abs(delta) <= 4 * EPS * (1 + np.abs(z))):
                    break
            ok = self.phase_residual(z, t) <= 0.1 * PHASE_TOL
        return z, ok & np.isfinite(z)

    def omega(self, z):
        with np.errstate(all="ignore"):
            return _horner(self.N, z) / _horner(self.D, z)

    def phase_residual(self, z, t):
        with np.errstate(all="ignore"):
            return np.abs(self.omega(z) - np.exp(1j * np.asarray(t)))


def _min_separation(z: np.ndarray) -> float:
    if z.size < 2:
        return np.inf
    diff = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(diff, np.inf)
    return float(diff.min())


def _reassign(level: OmegaLevel, t: float, pred, z1, ok):
    """Fill the unconverged nodes with unclaimed roots of the level polynomial."""
    try:
        roots, good = level.correct(poly_roots(level.level_poly(t)), t)
    except HarmonicError:
        return None
    if not good.all():
        return None
    out = z1.copy()
    free = np.ones(roots.size, dtype=bool)
    for k in np.flatnonzero(ok):
        free[np.argmin(np.abs(roots - z1[k]))] = False
    for k in np.flatnonzero(~ok):
        cand = np.flatnonzero(free)
        if cand.size == 0:
            return None
        j = cand[np.argmin(np.abs(roots[cand] - pred[k]))]
        out[k] = roots[j]
        free[j] = False
    return out


def _arc_solver(level: OmegaLevel, dt: float):
    history: deque = deque(maxlen=_MEDIAN_WINDOW)

    def median_step():
        if len(history) < 4:
            return None
        return np.median(np.array(history), axis=0)

    def attempt(z, t0, t1, med):
        """Predict-correct one step; returns (points or None, suspicious flag)."""
        v = level.velocity(z, t0)
        pred = z + v * (t1 - t0)
        z1, ok = level.correct(pred, t1)
        if not ok.all():
            # Newton from the tangent predictor fails next to a double root of
            # N - e^{it} D (two arcs crossing); take those nodes from a full solve
            z1 = _reassign(level, t1, pred, z1, ok)
            if z1 is None:
                return None, False
        diff = np.abs(z1[:, None] - z1[None, :])
        np.fill_diagonal(diff, np.inf)
        near = diff.min(axis=1) if z1.size > 1 else np.full(1, np.inf)
        if np.any(near <= 1e-9 * (1 + np.abs(z1))):
            return None, False
        corr = np.abs(z1 - pred)
        moved = np.abs(pred - z) + 1e-12 * (1 + np.abs(z))
        # a correction that dwarfs the predicted motion and reaches across to a
        # neighbouring node means the corrector may have switched branches
        if np.any((corr >= 0.5 * near) & (corr > 2 * moved)):
            return z1, True
        if med is not None:
            step = np.abs(z1 - z)
            frac = (t1 - t0) / dt
            if np.any((step > JUMP_FACTOR * med * frac) & (corr > 0.25 * moved)):
                return z1, True
        return z1, False

    def advance(z, t0, t1, depth=0):
        z1, suspicious = attempt(z, t0, t1, median_step())
        if z1 is not None and (not suspicious or depth >= MAX_REFINE_DEPTH):
            # a large but unambiguous step at full depth is a genuine fast passage
            return z1
        if depth >= MAX_REFINE_DEPTH:
            raise TraceFailure(f"continuation of omega(z) = e^(it) failed near t = {t0:.6g}")
        tm = 0.5 * (t0 + t1)
        zm = advance(z, t0, tm, depth + 1)
        return advance(zm, tm, t1, depth + 1)

    def step(z, t0, t1):
        z1 = advance(z, t0, t1)
        history.append(np.abs(z1 - z))
        return z1

    return step


def trace_critical_curves(f: HarmonicMapping, k_nodes: int = K_NODES) -> list[CriticalCurve]:
    """Discretize all critical curves ``omega(gamma(t)) = e^{it}``.

    Returns an empty list when the critical set has no curves (e.g. an
    analytic mapping).  Raises :class:`DegenerateMapping` if ``|omega| = 1``
    identically and :class:`TraceFailure` if continuation cannot be kept on
    its branch.
    """
    omega = f.dilatation
    if omega.is_zero:
        return []
    if omega.is_constant:
        value = omega.numerator.lead / omega.denominator.lead
        if abs(abs(value) - 1) <= 1e-12:
            raise DegenerateMapping("|omega| is identically 1")
        return []
    level = OmegaLevel(omega)
    dt = 2 * np.pi / k_nodes
    failure = None
    for shift in GRID_SHIFTS:
        try:
            return _trace(level, k_nodes, shift * dt)
        except TraceFailure as exc:
            failure = exc
    raise failure


def _trace(level: OmegaLevel, k_nodes: int, t_start: float) -> list[CriticalCurve]:
    z, ok = level.correct(poly_roots(level.level_poly(t_start)), t_start)
    if not ok.all() or _min_separation(z) <= 1e-9 * (1 + np.max(np.abs(z))):
        raise TraceFailure("omega(z) = e^(it) has a multiple solution at the start phase")

    dt = 2 * np.pi / k_nodes
    ts = t_start + dt * np.arange(k_nodes + 1)
    nodes = np.empty((k_nodes + 1, z.size), dtype=complex)
    nodes[0] = z
    step = _arc_solver(level, dt)
    for j in range(k_nodes):
        nodes[j + 1] = step(nodes[j], ts[j], ts[j + 1])

    start, end = nodes[0], nodes[-1]
    dist = np.abs(end[:, None] - start[None, :])
    succ = np.argmin(dist, axis=1)
    if (len(set(succ.tolist())) != succ.size
            or np.any(dist[np.arange(succ.size), succ] > GLUE_TOL * (1 + np.abs(end)))):
        raise TraceFailure("critical arcs do not glue into closed curves")

    curves = []
    seen = np.zeros(z.size, dtype=bool)
    for first in range(z.size):
        if seen[first]:
            continue
        chain = []
        a = first
        while not seen[a]:
            seen[a] = True
            chain.append(a)
            a = succ[a]
        params = np.concatenate([ts[:-1] + 2 * np.pi * m for m in range(len(chain))])
        points = np.concatenate([nodes[:-1, a] for a in chain])
        curves.append(CriticalCurve(params, points, True, len(chain)))
    return curves


def isolated_critical_points(f: HarmonicMapping, tol: float = 1e-8) -> list[complex]:
    """Common zeros of ``f_z`` and ``conj(f_zbar)`` (the isolated critical set)."""
    w = f.wirtinger
    if w.dz.numerator.degree < 1:
        return []
    out = []
    for root, _ in w.dz.zero_clusters():
        g = w.dzbar_conj.numerator
        if abs(g(root)) <= tol * float(g.scale_at(root)):
            out.append(complex(root))
    return out


def caustics(f: HarmonicMapping, curves: list[CriticalCurve]) -> list[CausticCurve]:
    """Images ``f(gamma(t))`` with tangents ``tau = e^{-it/2} psi`` and cusps."""
    if not curves:
        return []
    level = OmegaLevel(f.dilatation)
    out = []
    for curve in curves:
        z, t = curve.points, curve.params
        fz = f(z)
        v = level.velocity(z, t)
        hz = f.wirtinger.dz(z)
        psi = 2 * np.real(np.exp(0.5j * t) * hz * v)
        tau = np.exp(-0.5j * t) * psi
        psi_next = np.roll(psi, -1)
        psi_next[-1] = psi[0] * (-1) ** curve.windings
        spread = np.max(np.abs(fz - fz[0]))
        not_light = bool(spread <= 1e-10 * (1 + np.max(np.abs(fz))))
        cusps = () if not_light else tuple(int(k) for k in np.flatnonzero(psi * psi_next < 0))
        out.append(CausticCurve(fz, tau, psi, cusps, curve, f, not_light))
    return out


def _segment_distance(points: np.ndarray, eta: complex) -> np.ndarray:
    a = points
    b = np.roll(points, -1)
    ab = b - a
    den = np.abs(ab) ** 2
    with np.errstate(all="ignore"):
        u = np.where(den > 0, np.real(np.conj(ab) * (eta - a)) / den, 0.0)
    u = np.clip(u, 0.0, 1.0)
    return np.abs(a + u * ab - eta)


def default_guard(caustics_list, scale: float = 1e-9) -> float:
    big = max((float(np.max(np.abs(c.points))) for c in caustics_list), default=0.0)
    return scale * (1 + big)


def winding_number(caustic: CausticCurve, eta: complex, guard: float | None = None) -> int:
    """Winding number of the closed caustic polyline about ``eta``.

    Raises
    ------
    GuardViolation
        if ``eta`` is within ``guard`` of the polyline or the summed angle is
        not close to an integer.
    """
    eta = complex(eta)
    p = caustic.points
    if guard is None:
        guard = 1e-9 * (1 + float(np.max(np.abs(p))))
    if np.min(_segment_distance(p, eta)) <= guard:
        raise GuardViolation(f"{eta} is within {guard:.3g} of a caustic")
    a = p - eta
    total = np.angle(np.roll(a, -1) / a).sum() / (2 * np.pi)
    w = int(round(total))
    if abs(total - w) > 0.3:
        raise GuardViolation(f"winding number {total:.3f} is not near an integer")
    return w


def total_winding(caustics_list, eta: complex, guard: float | None = None) -> int:
    return sum(winding_number(c, eta, guard) for c in caustics_list)


def caustic_distance(caustics_list, eta: complex) -> float:
    return min((float(np.min(_segment_distance(c.points, complex(eta))))
                for c in caustics_list), default=np.inf)


def max_caustic_modulus(caustics_list, origin: complex = 0j) -> float:
    if not caustics_list:
        raise ValueError("no caustic nodes")
    return max(float(np.max(np.abs(c.points - origin))) for c in caustics_list)


def _bisect_crossings(caustic: CausticCurve, k_idx: np.ndarray, origin: complex,
                      direction: complex):
    """Refine bracketed ray crossings on the true curve by bisection in ``t``."""
    curve = caustic.critical
    f = caustic.mapping
    level = OmegaLevel(f.dilatation)
    n = curve.points.size
    t_lo = curve.params[k_idx].astype(float)
    nxt = (k_idx + 1) % n
    t_hi = np.where(nxt == 0, curve.period, curve.params[nxt]).astype(float)
    z_lo = curve.points[k_idx].copy()
    rot = np.conj(direction)

    def g_of(z):
        return np.imag((f(z) - origin) * rot)

    g_lo = g_of(z_lo)
    z_mid = z_lo
    t_mid = t_lo
    for _ in range(64):
        t_mid = 0.5 * (t_lo + t_hi)
        guess = z_lo + level.velocity(z_lo, t_lo) * (t_mid - t_lo)
        z_mid, _ = level.correct(guess, t_mid)
        g_mid = g_of(z_mid)
        xi = f(z_mid)
        done = np.abs(g_mid) <= CROSSING_TOL * (1 + np.abs(xi))
        if done.all() or np.all(t_hi - t_lo <= 4 * EPS * (1 + np.abs(t_hi))):
            break
        same = np.sign(g_mid) == np.sign(g_lo)
        move_lo = same & ~done
        t_lo = np.where(move_lo, t_mid, t_lo)
        z_lo = np.where(move_lo, z_mid, z_lo)
        g_lo = np.where(move_lo, g_mid, g_lo)
        t_hi = np.where(~same & ~done, t_mid, t_hi)
        # converged entries keep t_lo == t_hi == t_mid on the next pass
        t_lo = np.where(done, t_mid, t_lo)
        t_hi = np.where(done, t_mid, t_hi)
        z_lo = np.where(done, z_mid, z_lo)
    return t_mid, z_mid


def ray_intersections(caustics_list, theta: float, origin: complex = 0j,
                      max_distance: float = np.inf, cusp_guard: float = CUSP_GUARD,
                      tangent_guard: float = TANGENT_GUARD) -> list[RayCrossing]:
    """Crossings of the caustics with the ray ``origin + r e^{i theta}``, ``r > 0``.

    Returned in order of decreasing distance from ``origin``.  Crossings too
    close to a cusp, nearly tangential to the ray, or coinciding with another
    crossing are marked :attr:`CrossingKind.SUSPECT`.
    """
    origin = complex(origin)
    d = np.exp(1j * theta)
    found: list[RayCrossing] = []
    guard = default_guard(caustics_list)
    for ci, c in enumerate(caustics_list):
        q = (c.points - origin) * np.conj(d)
        if c.not_light:
            # degenerate caustic (f constant on the critical curve)
            x = q.real
            if np.any((np.abs(q.imag) <= guard) & (x > -guard) & (x <= max_distance)):
                xi = complex(np.mean(c.points))
                found.append(RayCrossing(xi, ci, 0.0, complex(c.critical.points[0]) if c.critical
                                         else None, CrossingKind.SUSPECT))
            continue
        y = q.imag
        yn = np.roll(y, -1)
        x, xn = q.real, np.roll(q.real, -1)
        cand = np.flatnonzero((y >= 0) != (yn >= 0))
        if cand.size == 0:
            continue
        with np.errstate(all="ignore"):
            s = y[cand] / (y[cand] - yn[cand])
        xc = x[cand] + s * (xn[cand] - x[cand])
        keep = (xc > 0) & (xc <= max_distance * (1 + 1e-12))
        cand, s = cand[keep], s[keep]
        if cand.size == 0:
            continue
        if c.mapping is None or c.critical is None:
            pts = c.points
            xi = pts[cand] + s * (np.roll(pts, -1)[cand] - pts[cand])
            for k, x_i, s_i in zip(cand, xi, s):
                x_i = origin + np.real((x_i - origin) * np.conj(d)) * d
                found.append(RayCrossing(complex(x_i), ci, float(k + s_i), None,
                                         CrossingKind.SIMPLE_FOLD, complex(c.tangents[k]),
                                         float(c.psi[k])))
            continue
        t_star, z_star = _bisect_crossings(c, cand, origin, d)
        f = c.mapping
        level = OmegaLevel(f.dilatation)
        xi = f(z_star)
        v = level.velocity(z_star, t_star)
        hz = f.wirtinger.dz(z_star)
        psi = 2 * np.real(np.exp(0.5j * t_star) * hz * v)
        tau = np.exp(-0.5j * t_star) * psi
        local = 2 * np.abs(hz) * np.abs(v)
        for j in range(cand.size):
            kind = CrossingKind.SIMPLE_FOLD
            if abs(psi[j]) < cusp_guard * local[j]:
                kind = CrossingKind.SUSPECT
            elif abs(np.imag(np.conj(tau[j]) * d)) < tangent_guard * abs(tau[j]):
                kind = CrossingKind.SUSPECT
            found.append(RayCrossing(complex(xi[j]), ci, float(t_star[j]), complex(z_star[j]),
                                     kind, complex(tau[j]), float(psi[j])))
    found.sort(key=lambda r: -abs(r.xi - origin))
    out = list(found)
    for i in range(len(out) - 1):
        a, b = out[i], out[i + 1]
        if abs(a.xi - b.xi) <= 1e-9 * (1 + abs(a.xi)):
            out[i] = _as_suspect(a)
            out[i + 1] = _as_suspect(b)
    return out


def _as_suspect(r: RayCrossing) -> RayCrossing:
    return RayCrossing(r.xi, r.curve_index, r.node_param, r.preimage, CrossingKind.SUSPECT,
                       r.tangent, r.psi)


def write_caustics_csv(caustics_list, fh) -> None:
    """CSV with columns ``curve_id, t, re_z, im_z, re_fz, im_fz, psi``."""
    w = csv.writer(fh)
    w.writerow(["curve_id", "t", "re_z", "im_z", "re_fz", "im_fz", "psi"])
    for cid, c in enumerate(caustics_list):
        curve = c.critical
        for k in range(c.points.size):
            z = curve.points[k] if curve is not None else complex("nan")
            t = curve.params[k] if curve is not None else float(k)
            w.writerow([cid, repr(float(t)), repr(float(z.real)), repr(float(z.imag)),
                        repr(float(c.points[k].real)), repr(float(c.points[k].imag)),
                        repr(float(c.psi[k]))])

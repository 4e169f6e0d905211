"""Harmonic Newton corrector for ``f(z) = eta``.

The update

    z -> z - (conj(h') F - conj(g' F)) / (|h'|^2 - |g'|^2),   F = f(z) - eta,

with ``h' = df/dz`` and ``g' = conj(df/dzbar)``, is the real 2-D Newton step
written in complex form.  :func:`newton_solve_many` runs the iteration on a
whole array of starting points at once; the scalar helpers wrap it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import HitCritical
from .harmonic import HarmonicMapping

RESIDUAL_TOL = 1e-13
STEP_TOL = 1e-13
MAX_ITER = 50
JAC_FLOOR = 1e-14
DIVERGENCE_FACTOR = 1e8
SEP_TOL = 1e-8


class NewtonStatus(enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    HIT_CRITICAL = "hit_critical"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class NewtonOutcome:
    status: NewtonStatus
    limit: complex
    iterations: int
    residual: float

    @property
    def converged(self) -> bool:
        return self.status is NewtonStatus.CONVERGED


@dataclass
class NewtonBatch:
    """Result arrays of :func:`newton_solve_many`, aligned with the inputs."""

    status: np.ndarray       # object array of NewtonStatus
    limits: np.ndarray
    iterations: np.ndarray
    residuals: np.ndarray

    @property
    def converged(self) -> np.ndarray:
        return np.array([s is NewtonStatus.CONVERGED for s in self.status], dtype=bool)

    @property
    def total_iterations(self) -> int:
        return int(self.iterations.sum())

    def outcome(self, k: int) -> NewtonOutcome:
        return NewtonOutcome(self.status[k], complex(self.limits[k]),
                             int(self.iterations[k]), float(self.residuals[k]))


def _pole_scale(f: HarmonicMapping) -> float:
    pts = [abs(p) for p in f.singular_points()]
    return max(pts, default=0.0)


def _residual_scale(f: HarmonicMapping, z, eta):
    """Magnitude against which ``|f(z) - eta|`` is judged."""
    with np.errstate(all="ignore"):
        scale = 1.0 + np.abs(eta) + np.abs(f.r(z)) + np.abs(f.s(z))
        for anchor, coeff in f.logs:
            scale = scale + np.abs(2 * coeff * np.log(np.abs(z - anchor)))
    return scale


def _step(f: HarmonicMapping, eta, z):
    """Newton correction and the quantities needed to judge it (vectorized)."""
    with np.errstate(all="ignore"):
        F = f(z) - eta
        h, g = f.derivatives(z)
        ah, ag = np.abs(h) ** 2, np.abs(g) ** 2
        jac = ah - ag
        delta = (np.conj(h) * F - np.conj(g * F)) / jac
        critical = np.abs(jac) <= JAC_FLOOR * (ah + ag)
    return delta, F, critical


def newton_step(f: HarmonicMapping, eta: complex, z: complex) -> complex:
    """One harmonic Newton update for ``f - eta`` at ``z``.

    Raises
    ------
    HitCritical
        if the Jacobian at ``z`` is numerically zero.
    """
    delta, _, critical = _step(f, complex(eta), np.asarray(complex(z)))
    if bool(critical) or not np.isfinite(delta):
        raise HitCritical(f"Jacobian vanishes at {z}")
    return complex(z) - complex(delta)


def newton_solve_many(f: HarmonicMapping, eta: complex, z0, *, tol: float = RESIDUAL_TOL,
                      step_tol: float = STEP_TOL, max_iter: int = MAX_ITER) -> NewtonBatch:
    """Run the harmonic Newton iteration from every point of ``z0``.

    A point converges once both the step and the residual are small:
    ``|z_k - z_{k-1}| <= step_tol (1 + |z_k|)`` and
    ``|f(z_k) - eta| <= tol * scale`` where ``scale`` is ``1 + |eta|`` plus the
    magnitudes of the terms of ``f`` at ``z_k`` (the rounding level of the
    evaluation).  One extra polishing step is taken after convergence.
    """
    z = np.array(z0, dtype=complex).ravel()
    n = z.size
    eta = complex(eta)
    status = np.full(n, NewtonStatus.MAX_ITER, dtype=object)
    iters = np.zeros(n, dtype=int)
    residuals = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    escape = DIVERGENCE_FACTOR * (1.0 + _pole_scale(f) + abs(eta))

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        zi = z[idx]
        delta, F, critical = _step(f, eta, zi)
        bad = critical | ~np.isfinite(delta)
        for k in idx[bad & critical]:
            status[k] = NewtonStatus.HIT_CRITICAL
        for k in idx[bad & ~critical]:
            status[k] = NewtonStatus.DIVERGED
        active[idx[bad]] = False
        good = ~bad
        idx, zi, delta = idx[good], zi[good], delta[good]
        znew = zi - delta
        iters[idx] += 1
        z[idx] = znew
        escaped = np.abs(znew) > escape
        for k in idx[escaped]:
            status[k] = NewtonStatus.DIVERGED
        active[idx[escaped]] = False
        small = (np.abs(delta) <= step_tol * (1 + np.abs(znew))) & ~escaped
        if small.any():
            cand = idx[small]
            zc = z[cand]
            with np.errstate(all="ignore"):
                res = np.abs(f(zc) - eta)
            ok = res <= tol * _residual_scale(f, zc, eta)
            done = cand[ok]
            status[done] = NewtonStatus.CONVERGED
            active[done] = False

    done = np.flatnonzero([s is NewtonStatus.CONVERGED for s in status])
    if done.size:
        # polishing step; kept only where it does not increase the residual
        delta, _, critical = _step(f, eta, z[done])
        polished = z[done] - np.where(np.isfinite(delta) & ~critical, delta, 0)
        with np.errstate(all="ignore"):
            r_old = np.abs(f(z[done]) - eta)
            r_new = np.abs(f(polished) - eta)
        better = r_new <= r_old
        z[done] = np.where(better, polished, z[done])
        iters[done] += 1
    with np.errstate(all="ignore"):
        residuals = np.abs(f(z) - eta)
    return NewtonBatch(status, z, iters, np.asarray(residuals, dtype=float))


def newton_solve(f: HarmonicMapping, eta: complex, z0: complex, tol: float = RESIDUAL_TOL,
                 max_iter: int = MAX_ITER, step_tol: float = STEP_TOL) -> NewtonOutcome:
    """Scalar front end of :func:`newton_solve_many`; never raises."""
    batch = newton_solve_many(f, eta, [z0], tol=tol, step_tol=step_tol, max_iter=max_iter)
    return batch.outcome(0)


def distinct_filter(points, sep_tol: float = SEP_TOL) -> list[complex]:
    """Greedy de-duplication keeping the first representative of each cluster.

    A point is merged into an earlier representative ``r`` when
    ``|p - r| <= sep_tol * (1 + |p|)``.
    """
    reps: list[complex] = []
    for p in points:
        p = complex(p)
        if all(abs(p - r) > sep_tol * (1 + abs(p)) for r in reps):
            reps.append(p)
    return reps


def pairwise_distinct(points, sep_tol: float = SEP_TOL) -> bool:
    pts = np.asarray(points, dtype=complex)
    if pts.size < 2:
        return True
    order = np.argsort(pts.real)
    pts = pts[order]
    # sweep in real part; only neighbours within the tolerance window matter
    for i in range(pts.size):
        tol_i = sep_tol * (1 + abs(pts[i]))
        j = i + 1
        while j < pts.size and pts[j].real - pts[i].real <= sep_tol * (1 + abs(pts[j])) + tol_i:
            if abs(pts[j] - pts[i]) <= max(tol_i, sep_tol * (1 + abs(pts[j]))):
                return False
            j += 1
    return True

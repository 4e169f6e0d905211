"""Transport of images: carry all preimages from far out along a ray to a target.

Far from the caustics every solution of ``f(z) = eta`` sits next to a pole, and
the local expansion at each pole gives an explicit start for it.  From there
the solutions are moved towards the target along a ray by Newton correction.
Each time the ray crosses a fold of the caustics two solutions are born (and
get explicit starting points from the local normal form) or two merge and
are dropped.  Failed steps are split; a ray that cannot be made to work is
replaced by a new random one.
"""

from __future__ import annotations

import cmath
import enum
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .critical import (
    CausticCurve,
    RayCrossing,
    caustic_distance,
    caustics as compute_caustics,
    isolated_critical_points,
    ray_intersections,
    total_winding,
    trace_critical_curves,
)
from .errors import (
    Exhausted,
    GuardViolation,
    HarmonicError,
    InitialPhaseFailure,
    RayRejected,
    SingularZeroSuspected,
    SpawnFailure,
    StepFailure,
)
from .harmonic import HarmonicMapping, PoleInfo
from .newton import MAX_ITER, RESIDUAL_TOL, SEP_TOL, NewtonBatch, newton_solve_many, pairwise_distinct


@dataclass(frozen=True)
class SolveOptions:
    theta: float | None = None      # first ray angle; later restarts draw at random
    k_nodes: int = 1024
    tol: float = RESIDUAL_TOL
    sep_tol: float = SEP_TOL
    max_iter: int = MAX_ITER
    max_restarts: int = 25
    max_depth: int = 10
    max_doublings: int = 40
    guard: float = 1e-9             # relative caustic guard distance


class Provenance(enum.Enum):
    CARRIED = "carried"
    SPAWN_PLUS = "spawn_plus"
    SPAWN_MINUS = "spawn_minus"


@dataclass(frozen=True)
class PredictionSet:
    points: np.ndarray
    provenance: tuple

    def __len__(self):
        return self.points.size

    @classmethod
    def carried(cls, points) -> "PredictionSet":
        pts = np.asarray(points, dtype=complex)
        return cls(pts, (Provenance.CARRIED,) * pts.size)


@dataclass
class Segment:
    crossing: RayCrossing | None = None
    expected_delta: int = 0
    depth: int = 0


@dataclass
class TransportPath:
    theta: float
    nodes: list
    segments: list
    counts: list                    # expected number of preimages at each node
    thetas_tried: list = field(default_factory=list)
    refinements: int = 0

    def refine(self, index: int, max_depth: int = 10) -> None:
        """Split segment ``index`` in place (midpoint, or quarter points around a crossing)."""
        seg = self.segments[index]
        if seg.depth >= max_depth:
            raise RayRejected(f"refinement depth {max_depth} reached on segment {index}")
        a, b = self.nodes[index], self.nodes[index + 1]
        na, nb = self.counts[index], self.counts[index + 1]
        depth = seg.depth + 1
        if seg.crossing is None:
            self.nodes.insert(index + 1, 0.5 * (a + b))
            self.counts.insert(index + 1, na)
            self.segments[index:index + 1] = [Segment(None, 0, depth), Segment(None, 0, depth)]
        else:
            self.nodes[index + 1:index + 1] = [0.25 * (3 * a + b), 0.25 * (a + 3 * b)]
            self.counts[index + 1:index + 1] = [na, nb]
            self.segments[index:index + 1] = [Segment(None, 0, depth),
                                              Segment(seg.crossing, seg.expected_delta, depth),
                                              Segment(None, 0, depth)]
        self.refinements += 1


def refine(path: TransportPath, segment_index: int, max_depth: int = 10) -> TransportPath:
    """Functional form of :meth:`TransportPath.refine`; returns a refined copy."""
    new = TransportPath(path.theta, list(path.nodes), [replace(s) for s in path.segments],
                        list(path.counts), list(path.thetas_tried), path.refinements)
    new.refine(segment_index, max_depth)
    return new


@dataclass
class SolveReport:
    zeros: np.ndarray
    residuals: np.ndarray
    jacobians: np.ndarray
    newton_iterations: int
    steps: int
    refinements: int
    restarts: int
    theta: float
    seed: int | None
    target: complex = 0j
    expected_count: int = 0
    path: TransportPath | None = field(default=None, repr=False)
    isolated_critical: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0

    def to_dict(self, deterministic: bool = False) -> dict:
        out = {
            "target": [self.target.real, self.target.imag],
            "count": int(self.zeros.size),
            "expected_count": int(self.expected_count),
            "zeros": [[float(z.real), float(z.imag)] for z in self.zeros],
            "residuals": [float(r) for r in self.residuals],
            "jacobians": [float(j) for j in self.jacobians],
            "steps": int(self.steps),
            "refinements": int(self.refinements),
            "restarts": int(self.restarts),
            "newton_iterations": int(self.newton_iterations),
            "theta": float(self.theta),
            "seed": self.seed,
            "isolated_critical_points": [[float(z.real), float(z.imag)] for z in self.isolated_critical],
        }
        if not deterministic:
            out["elapsed_seconds"] = self.elapsed
            out["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        return out

    def to_json(self, deterministic: bool = False) -> str:
        return json.dumps(self.to_dict(deterministic), indent=1)


def _canonical(points) -> np.ndarray:
    pts = np.asarray(points, dtype=complex)
    return pts[np.lexsort((pts.imag, pts.real))]


# -- initial phase -------------------------------------------------------------

def _fallback_radius(f: HarmonicMapping) -> float:
    finite = [abs(p.location) for p in f.poles() if not p.is_infinite]
    finite += [abs(a) for a, _ in f.logs]
    return 1.0 + max(finite, default=0.0)


def initial_eta(caustics_list, theta: float, origin: complex = 0j,
                f: HarmonicMapping | None = None) -> complex:
    """``eta_1 = origin + 2 e^{i theta} max |caustic - origin|``."""
    radius = 0.0
    if caustics_list:
        radius = max(float(np.max(np.abs(c.points - origin))) for c in caustics_list)
    if radius <= 0.0 or not math.isfinite(radius):
        radius = _fallback_radius(f) if f is not None else 1.0
    return complex(origin) + 2 * radius * cmath.exp(1j * theta)


def pole_starts(pole: PoleInfo, eta: complex) -> np.ndarray:
    """The ``n`` explicit approximations of the preimages of ``eta`` near ``pole``."""
    n = pole.order
    a, b = pole.a_lead, pole.b_lead
    c = eta - pole.offset
    den = a.conjugate() * c - b.conjugate() * c.conjugate()
    if den == 0:
        raise InitialPhaseFailure("eta coincides with the constant term at a pole")
    rhs = (abs(a) ** 2 - abs(b) ** 2) / den
    mod = abs(rhs) ** (1.0 / n)
    arg = cmath.phase(rhs)
    roots = mod * np.exp(1j * (arg + 2 * np.pi * np.arange(n)) / n)
    if pole.is_infinite:
        return 1.0 / roots
    return pole.location + roots


def initial_solutions(f: HarmonicMapping, eta1: complex, options: SolveOptions = SolveOptions()):
    """Newton-corrected preimages of a far-out ``eta1`` from the pole expansions.

    Returns ``(PredictionSet, NewtonBatch)``.  Raises
    :class:`InitialPhaseFailure` unless exactly ``P(f)`` distinct solutions
    are found.
    """
    starts = np.concatenate([pole_starts(p, complex(eta1)) for p in f.poles()]) \
        if f.poles() else np.zeros(0, dtype=complex)
    pred = PredictionSet.carried(starts)
    if starts.size == 0:
        raise InitialPhaseFailure("mapping has no poles")
    batch = newton_solve_many(f, eta1, starts, tol=options.tol, max_iter=options.max_iter)
    if not batch.converged.all():
        raise InitialPhaseFailure(f"{int((~batch.converged).sum())} initial points did not converge")
    if not pairwise_distinct(batch.limits, options.sep_tol):
        raise InitialPhaseFailure("initial points converged to the same solution")
    if batch.limits.size != f.pole_count:
        raise InitialPhaseFailure("initial solution count differs from P(f)")
    return pred, batch


# -- steps ---------------------------------------------------------------------

def step_transport(f: HarmonicMapping, prediction: PredictionSet, eta_next: complex,
                   expected_count: int, options: SolveOptions = SolveOptions()) -> NewtonBatch:
    """Correct every prediction point towards ``eta_next``.

    Raises :class:`StepFailure` (mode ``non-convergence``, ``collision`` or
    ``count mismatch``) unless the limits are ``expected_count`` distinct solutions.
    """
    if len(prediction) != expected_count:
        raise StepFailure("count mismatch", f"{len(prediction)} predictions for {expected_count} solutions")
    batch = newton_solve_many(f, eta_next, prediction.points, tol=options.tol,
                              max_iter=options.max_iter)
    if not batch.converged.all():
        raise StepFailure("non-convergence", f"{int((~batch.converged).sum())} points")
    if not pairwise_distinct(batch.limits, options.sep_tol):
        raise StepFailure("collision")
    return batch


def spawn_points(f: HarmonicMapping, crossing: RayCrossing, eta: complex):
    """``z_0 +- i sqrt(t conj(b1)/a1)`` with ``t = |eta - xi| / |c|``."""
    z0 = crossing.preimage
    jet = f.local_jet(z0)
    c = jet.c
    if not (abs(c) > 0 and math.isfinite(abs(c))) or jet.a1 == 0 or jet.b1 == 0:
        raise SpawnFailure("degenerate fold data at the crossing")
    t = abs(eta - crossing.xi) / abs(c)
    w = 1j * cmath.sqrt(t * jet.b1.conjugate() / jet.a1)
    return z0 + w, z0 - w


def crossing_prediction_set(f: HarmonicMapping, solutions, crossing: RayCrossing,
                            eta_k: complex, eta_k1: complex, delta: int,
                            options: SolveOptions = SolveOptions()):
    """Prediction set for ``f^{-1}(eta_k1)`` when ``[eta_k, eta_k1]`` crosses one fold.

    Returns ``(PredictionSet, kept_indices, newton_iterations)`` where
    ``kept_indices`` are the positions of carried solutions in the result.
    """
    solutions = np.asarray(solutions, dtype=complex)
    if crossing.suspect or crossing.preimage is None:
        raise SpawnFailure("crossing is not a simple fold")
    if delta == 2:
        zp, zm = spawn_points(f, crossing, eta_k1)
        pts = np.concatenate([solutions, [zp, zm]])
        prov = (Provenance.CARRIED,) * solutions.size + (Provenance.SPAWN_PLUS, Provenance.SPAWN_MINUS)
        return PredictionSet(pts, prov), np.arange(solutions.size), 0
    if delta != -2:
        raise ValueError("delta must be +2 or -2")
    zp, zm = spawn_points(f, crossing, eta_k)
    batch = newton_solve_many(f, eta_k, [zp, zm], tol=options.tol, max_iter=options.max_iter)
    if not batch.converged.all():
        raise SpawnFailure("merging solutions could not be located")
    l1, l2 = batch.limits
    if abs(l1 - l2) <= options.sep_tol * (1 + abs(l1)):
        raise SpawnFailure("both merging candidates converged to the same solution")
    keep = np.ones(solutions.size, dtype=bool)
    for lim in (l1, l2):
        dist = np.abs(solutions - lim)
        dist[~keep] = np.inf
        j = int(np.argmin(dist)) if dist.size else -1
        if j < 0 or dist[j] > 1e-6 * (1 + abs(lim)):
            raise SpawnFailure("merging solution is not among the carried solutions")
        keep[j] = False
    kept = np.flatnonzero(keep)
    return PredictionSet.carried(solutions[kept]), kept, batch.total_iterations


# -- orchestration -------------------------------------------------------------

class TransportSolver:
    """Caches critical curves and caustics of ``f`` for repeated solves."""

    def __init__(self, f: HarmonicMapping, options: SolveOptions = SolveOptions()):
        self.f = f
        self.options = options
        self.curves = trace_critical_curves(f, options.k_nodes)
        self.caustics: list[CausticCurve] = compute_caustics(f, self.curves)
        self.pole_count = f.pole_count
        scale = max((float(np.max(np.abs(c.points))) for c in self.caustics), default=0.0)
        self.guard = options.guard * (1 + scale)
        self._isolated = None

    @property
    def isolated_critical(self) -> list:
        if self._isolated is None:
            self._isolated = isolated_critical_points(self.f)
        return self._isolated

    def expected_count(self, eta: complex) -> int:
        return self.pole_count + 2 * total_winding(self.caustics, eta, self.guard)

    def check_target(self, target: complex) -> None:
        if caustic_distance(self.caustics, target) <= self.guard:
            raise SingularZeroSuspected(f"target {target} lies on or near a caustic")
        for z in self.isolated_critical:
            try:
                if abs(self.f(z) - target) <= self.guard:
                    raise SingularZeroSuspected(f"target {target} is the image of a critical point")
            except HarmonicError:
                pass

    # path construction
    def build_candidate_path(self, theta: float, target: complex = 0j,
                             eta1: complex | None = None) -> TransportPath:
        target = complex(target)
        if eta1 is None:
            eta1 = initial_eta(self.caustics, theta, target, self.f)
        direction = cmath.exp(1j * theta)
        radius = abs(eta1 - target)
        crossings = ray_intersections(self.caustics, theta, origin=target, max_distance=radius)
        if any(c.suspect for c in crossings):
            raise RayRejected("ray meets the caustics at a cusp, tangentially or at a multiple point")
        dist = [abs(c.xi - target) for c in crossings]
        if any(d >= radius for d in dist):
            raise RayRejected("crossing beyond the initial point")
        bounds = [radius] + dist + [0.0]
        nodes = [complex(eta1)]
        segments: list[Segment] = []
        for k, cr in enumerate(crossings):
            d = dist[k]
            off = min(bounds[k] - d, d - bounds[k + 2], d) / 4
            if off <= 4 * np.finfo(float).eps * (1 + radius):
                raise RayRejected("crossings too close together")
            segments.append(Segment())
            nodes.append(target + (d + off) * direction)
            segments.append(Segment(cr))
            nodes.append(target + (d - off) * direction)
        segments.append(Segment())
        nodes.append(target)

        counts = self._path_counts(segments, -direction, self.pole_count)
        try:
            final = self.expected_count(target)
        except GuardViolation as exc:
            raise SingularZeroSuspected(str(exc)) from exc
        if counts[-1] != final:
            raise RayRejected(f"crossing orientations give {counts[-1]} preimages at the target, "
                              f"winding numbers give {final}")
        return TransportPath(theta, nodes, segments, counts)

    def _path_counts(self, segments, travel: complex, start: int) -> list:
        """Expected counts at the path nodes, accumulated crossing by crossing.

        The count changes by the local winding-number jump of the crossed
        caustic, read off from the orientation of its tangent against the
        ray; this uses the refined crossing on the true curve rather than
        the polyline, which matters where caustic strands lie very close.
        """
        counts = [start]
        for seg in segments:
            if seg.crossing is not None:
                seg.expected_delta = _tangent_delta(seg.crossing, travel)
            counts.append(counts[-1] + seg.expected_delta)
        if min(counts) < 0:
            raise RayRejected("negative preimage count along the path")
        return counts

    def _initial_phase(self, theta: float, target: complex):
        eta1 = initial_eta(self.caustics, theta, target, self.f)
        last = None
        for _ in range(self.options.max_doublings + 1):
            try:
                if caustic_distance(self.caustics, eta1) > self.guard:
                    _, batch = initial_solutions(self.f, eta1, self.options)
                    return eta1, batch
            except InitialPhaseFailure as exc:
                last = exc
            eta1 = target + 2 * (eta1 - target)
        raise InitialPhaseFailure(f"initial phase failed after {self.options.max_doublings} doublings: {last}")

    def transport(self, path: TransportPath, solutions, recorder=None):
        """Carry ``solutions`` (preimages of ``path.nodes[0]``) along ``path``."""
        current = np.asarray(solutions, dtype=complex)
        iterations = 0
        j = 0
        while j < len(path.segments):
            seg = path.segments[j]
            a, b = path.nodes[j], path.nodes[j + 1]
            try:
                if seg.crossing is None:
                    pred = PredictionSet.carried(current)
                    kept = np.arange(current.size)
                else:
                    pred, kept, its = crossing_prediction_set(
                        self.f, current, seg.crossing, a, b, seg.expected_delta, self.options)
                    iterations += its
                batch = step_transport(self.f, pred, b, path.counts[j + 1], self.options)
            except (StepFailure, SpawnFailure):
                path.refine(j, self.options.max_depth)
                continue
            iterations += batch.total_iterations
            if recorder is not None:
                recorder(j, seg, b, kept, pred, batch.limits)
            current = batch.limits
            j += 1
        return current, iterations

    def solve(self, target: complex = 0j, seed: int | None = 0) -> SolveReport:
        start = time.perf_counter()
        target = complex(target)
        self.check_target(target)
        expected = self.expected_count(target)
        rng = np.random.default_rng(seed)
        theta = self.options.theta if self.options.theta is not None else rng.uniform(0, 2 * np.pi)
        tried = []
        iterations = 0
        for restart in range(self.options.max_restarts + 1):
            if restart:
                theta = rng.uniform(0, 2 * np.pi)
            tried.append(theta)
            try:
                eta1, batch = self._initial_phase(theta, target)
                iterations += batch.total_iterations
                path = self.build_candidate_path(theta, target, eta1)
                path.thetas_tried = list(tried)
                zeros, its = self.transport(path, batch.limits)
                iterations += its
            except (RayRejected, InitialPhaseFailure):
                continue
            if zeros.size != expected:
                continue
            zeros = _canonical(zeros)
            with np.errstate(all="ignore"):
                residuals = np.abs(self.f(zeros) - target)
            return SolveReport(zeros, np.asarray(residuals, dtype=float),
                               np.asarray(self.f.jacobian(zeros), dtype=float), iterations,
                               len(path.segments), path.refinements, restart, theta, seed,
                               target, expected, path, list(self.isolated_critical),
                               time.perf_counter() - start)
        raise Exhausted(f"no transport path after {self.options.max_restarts} restarts")

    # homotopy curves
    def trace(self, path_nodes, samples_per_segment: int = 32, seed: int | None = 0):
        """Follow every preimage along the polyline ``path_nodes``; see :func:`trace_homotopy`."""
        nodes = [complex(z) for z in path_nodes]
        if len(nodes) < 2:
            nodes = nodes * 2
        start = self.solve(nodes[0], seed)
        branches = [HomotopyBranch([nodes[0]], [z]) for z in start.zeros]
        live = list(range(len(branches)))

        def record(j, seg, eta, kept, pred, limits):
            nonlocal live
            if seg.crossing is not None and seg.expected_delta == -2:
                dead = [live[i] for i in range(len(live)) if i not in set(kept.tolist())]
                for k in dead:
                    branches[k].etas.append(seg.crossing.xi)
                    branches[k].points.append(seg.crossing.preimage)
                    branches[k].end_turning = True
                live = [live[i] for i in kept]
            elif seg.crossing is not None:
                for _ in range(2):
                    branches.append(HomotopyBranch([seg.crossing.xi], [seg.crossing.preimage],
                                                   start_turning=True))
                    live.append(len(branches) - 1)
            for k, z in zip(live, limits):
                branches[k].etas.append(eta)
                branches[k].points.append(complex(z))

        for a, b in zip(nodes[:-1], nodes[1:]):
            path = self._segment_path(a, b, samples_per_segment)
            current = np.array([branches[k].points[-1] for k in live])
            self.transport(path, current, record)
        return branches

    def _segment_path(self, a: complex, b: complex, samples: int) -> TransportPath:
        if a == b:
            return TransportPath(0.0, [a, b], [Segment()], [self.expected_count(a)] * 2)
        theta = cmath.phase(b - a)
        direction = cmath.exp(1j * theta)
        length = abs(b - a)
        if caustic_distance(self.caustics, b) <= self.guard:
            raise SingularZeroSuspected(f"path end {b} lies on a caustic")
        # crossings along the segment, ordered from a towards b
        crossings = ray_intersections(self.caustics, theta, origin=a, max_distance=length)
        if any(c.suspect for c in crossings):
            raise RayRejected("path meets the caustics at a cusp or tangentially")
        dist = sorted(abs(c.xi - a) for c in crossings)
        crossings = sorted(crossings, key=lambda c: abs(c.xi - a))
        grid = list(np.linspace(0.0, length, max(samples, 1) + 1))
        events = [0.0] + dist + [length]
        nodes_s = [0.0]
        marks = []
        for k, d in enumerate(dist):
            off = min(d - events[k], events[k + 2] - d) / 4
            if off <= 0:
                raise RayRejected("crossings too close together")
            marks.append((d - off, d + off, crossings[k]))
        seg_list = []
        pos = [g for g in grid[1:]]
        cuts = sorted([m[0] for m in marks] + pos)
        i_mark = 0
        for s in cuts:
            if i_mark < len(marks) and abs(s - marks[i_mark][0]) == 0:
                if s > nodes_s[-1]:
                    nodes_s.append(s)
                    seg_list.append(Segment())
                nodes_s.append(marks[i_mark][1])
                seg_list.append(Segment(marks[i_mark][2]))
                i_mark += 1
            elif s > nodes_s[-1]:
                nodes_s.append(s)
                seg_list.append(Segment())
        etas = [complex(a + s * direction) for s in nodes_s]
        etas[-1] = b
        try:
            start, final = self.expected_count(a), self.expected_count(b)
        except GuardViolation as exc:
            raise SingularZeroSuspected(str(exc)) from exc
        counts = self._path_counts(seg_list, direction, start)
        if counts[-1] != final:
            raise RayRejected("crossing orientations and winding numbers disagree on the path")
        return TransportPath(theta, etas, seg_list, counts)


@dataclass
class HomotopyBranch:
    """One solution trajectory ``eta -> z(eta)``; turning points flag births/deaths at folds."""

    etas: list
    points: list
    start_turning: bool = False
    end_turning: bool = False


def _tangent_delta(crossing: RayCrossing, travel: complex) -> int:
    """Count change when passing the crossing in the direction ``travel``.

    The caustic tangent ``tau`` has the side with two more preimages on its
    left, so the count grows by two when ``Im(conj(tau) d) > 0`` for the
    travel direction ``d``.
    """
    return 2 if (np.conj(crossing.tangent) * travel).imag > 0 else -2


def solve_all_zeros(f: HarmonicMapping, seed: int | None = 0,
                    options: SolveOptions = SolveOptions()) -> SolveReport:
    """All zeros of ``f`` by transport of images along a random ray."""
    return TransportSolver(f, options).solve(0j, seed)


def solve_preimages(f: HarmonicMapping, eta: complex, seed: int | None = 0,
                    options: SolveOptions = SolveOptions()) -> SolveReport:
    """All solutions of ``f(z) = eta`` (``eta`` off the caustics)."""
    return TransportSolver(f, options).solve(complex(eta), seed)


def trace_homotopy(f: HarmonicMapping, path_nodes, samples_per_segment: int = 32,
                   seed: int | None = 0, options: SolveOptions = SolveOptions()):
    """Trajectories of all preimages while ``eta`` runs along ``path_nodes``.

    Returns a list of :class:`HomotopyBranch`.  Births and deaths at fold
    crossings start or end a branch at the fold preimage (a turning point).
    """
    return TransportSolver(f, options).trace(path_nodes, samples_per_segment, seed)

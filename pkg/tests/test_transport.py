import json
import math

import numpy as np
import pytest

from harmzeros.critical import CausticCurve, CrossingKind, RayCrossing
from harmzeros.errors import (
    InitialPhaseFailure,
    RayRejected,
    SingularZeroSuspected,
    SpawnFailure,
    StepFailure,
)
from harmzeros.harmonic import HarmonicMapping, chang_refsdal, log_example, mpw, rhie, wilmshurst
from harmzeros.polycore import RationalFunction
from harmzeros.transport import (
    PredictionSet,
    Provenance,
    Segment,
    SolveOptions,
    TransportPath,
    TransportSolver,
    crossing_prediction_set,
    initial_eta,
    initial_solutions,
    refine,
    solve_all_zeros,
    solve_preimages,
    spawn_points,
    step_transport,
    trace_homotopy,
)
from oracles import chang_refsdal_preimages, match_multisets, sort_complex

THETA = SolveOptions(theta=math.pi / 50)

# z + 2i z^2 + conj(z + i z^2): fold at 0 with c = -i
FOLD = HarmonicMapping(RationalFunction([0, 1, 2j]), RationalFunction([0, 1, 1j]))


def _solver(name, _cache={}):
    if name not in _cache:
        make = {"log": log_example, "w3": lambda: wilmshurst(3), "mpw5": lambda: mpw(5, 0.6),
                "mpw7": lambda: mpw(7, 0.7), "rhie7": lambda: rhie(7, 0.7, 0.1)}[name]
        _cache[name] = TransportSolver(make(), THETA)
    return _cache[name]


# -- paths -----------------------------------------------------------------------

def _path(crossing=None):
    seg = Segment(crossing, 2 if crossing else 0)
    return TransportPath(0.0, [1 + 0j, 0j], [seg], [4, 6 if crossing else 4])


def test_refine_midpoint():
    p = refine(_path(), 0)
    assert p.nodes == [1, 0.5, 0]
    assert p.counts == [4, 4, 4]
    assert p.refinements == 1


def test_refine_quarter_points_keep_crossing_in_middle():
    x = RayCrossing(0.5 + 0j, 0, 0.0, 0j, CrossingKind.SIMPLE_FOLD)
    p = refine(_path(x), 0)
    assert p.nodes == [1, 0.75, 0.25, 0]
    assert [s.crossing for s in p.segments] == [None, x, None]
    assert p.counts == [4, 4, 6, 6]


def test_refine_depth_cap():
    p = _path()
    for _ in range(3):
        p.refine(0, max_depth=3)
    with pytest.raises(RayRejected):
        p.refine(0, max_depth=3)


def test_initial_eta_synthetic():
    circle = CausticCurve.from_points(np.exp(2j * np.pi * np.arange(64) / 64))
    assert initial_eta([circle], 0.0) == pytest.approx(2)
    # no caustics: fall back to the pole scale
    assert abs(initial_eta([], 0.0, f=chang_refsdal())) == pytest.approx(2)


def test_initial_eta_is_outside_caustics():
    s = _solver("log")
    eta1 = initial_eta(s.caustics, math.pi / 50)
    assert s.expected_count(eta1) == s.f.pole_count == 4


@pytest.mark.parametrize("name,count", [("log", 4), ("w3", 3), ("mpw7", 8)])
def test_initial_solutions_count(name, count):
    s = _solver(name)
    # the doubling loop; log_example needs one doubling since its start near
    # the log pole ignores the logarithm
    eta1, batch = s._initial_phase(math.pi / 50, 0j)
    assert abs(eta1) <= 2 * abs(initial_eta(s.caustics, math.pi / 50)) * (1 + 1e-12)
    assert batch.limits.size == count
    assert np.max(batch.residuals) <= 1e-12 * (1 + abs(eta1))


def test_log_pole_start_needs_doubling():
    s = _solver("log")
    eta1 = initial_eta(s.caustics, math.pi / 50)
    with pytest.raises(InitialPhaseFailure):
        initial_solutions(s.f, eta1)
    pred, batch = initial_solutions(s.f, 2 * eta1)
    assert len(pred) == batch.limits.size == 4


def test_initial_points_chang_refsdal():
    f = chang_refsdal()
    eta = 50.0
    pred, batch = initial_solutions(f, eta)
    starts = sort_complex(pred.points)
    assert starts == pytest.approx([-1 / eta, eta])
    assert match_multisets(batch.limits, chang_refsdal_preimages(eta), 1e-12)


def test_candidate_path_without_crossings():
    s = TransportSolver(chang_refsdal())
    path = s.build_candidate_path(0.0, target=5.0)
    # the degenerate caustic at 0 is behind the ray origin
    assert len(path.nodes) == 2 and path.nodes[-1] == 5
    assert path.counts == [2, 2]


def test_candidate_path_structure():
    s = _solver("mpw7")
    path = s.build_candidate_path(math.pi / 50)
    crossings = [seg.crossing for seg in path.segments if seg.crossing is not None]
    assert len(path.nodes) == 2 * len(crossings) + 2
    mods = np.abs(path.nodes)
    assert np.all(np.diff(mods) < 0)
    assert path.counts[0] == s.f.pole_count
    assert path.counts[-1] == 22
    assert path.counts[0] + sum(seg.expected_delta for seg in path.segments) == 22
    for seg, a, b in zip(path.segments, path.nodes, path.nodes[1:]):
        if seg.crossing is not None:
            assert abs(b) < abs(seg.crossing.xi) < abs(a)


# -- steps -----------------------------------------------------------------------

def test_zero_length_step_keeps_solutions():
    s = _solver("w3")
    eta1, batch = s._initial_phase(math.pi / 50, 0j)
    again = step_transport(s.f, PredictionSet.carried(batch.limits), eta1, batch.limits.size)
    assert np.max(np.abs(again.limits - batch.limits)) <= 1e-13 * (1 + abs(eta1))


def test_skipping_a_crossing_fails():
    s = _solver("mpw5")
    eta1, batch = s._initial_phase(math.pi / 50, 0j)
    with pytest.raises(StepFailure) as info:
        step_transport(s.f, PredictionSet.carried(batch.limits), 0j, 16)
    assert info.value.mode == "count mismatch"
    # a big jump carrying the right number of points collides or stalls
    with pytest.raises(StepFailure):
        pred = PredictionSet.carried(np.concatenate([batch.limits, batch.limits[:10] + 1e-3]))
        step_transport(s.f, pred, 0j, 16)


def test_spawn_points_normal_form():
    fold = RayCrossing(0j, 0, 0.0, 0j, CrossingKind.SIMPLE_FOLD)
    jet = FOLD.local_jet(0)
    assert jet.c == pytest.approx(-1j)
    eta = 0.01 * jet.c
    zp, zm = spawn_points(FOLD, fold, eta)
    expected = 1j * math.sqrt(0.01)
    assert (zp, zm) == pytest.approx((expected, -expected))
    pred, kept, _ = crossing_prediction_set(FOLD, [], fold, 0j, eta, 2)
    assert pred.provenance == (Provenance.SPAWN_PLUS, Provenance.SPAWN_MINUS)
    limits = step_transport(FOLD, pred, eta, 2).limits
    assert abs(limits[0] - limits[1]) > 0.1
    assert np.max(np.abs(limits - pred.points)) < 0.02


def test_removal_drops_the_merging_pair():
    fold = RayCrossing(0j, 0, 0.0, 0j, CrossingKind.SIMPLE_FOLD)
    eta = 0.01 * FOLD.local_jet(0).c
    pair = step_transport(FOLD, crossing_prediction_set(FOLD, [], fold, 0j, eta, 2)[0], eta, 2).limits
    far = 3 + 0j
    pred, kept, _ = crossing_prediction_set(FOLD, np.append(pair, far), fold, eta, -eta, -2)
    assert list(pred.points) == [far] and list(kept) == [2]


def test_removal_with_coinciding_limits_fails():
    z0 = 0.3
    fake = RayCrossing(FOLD(z0), 0, 0.0, z0, CrossingKind.SIMPLE_FOLD)
    with pytest.raises(SpawnFailure):
        crossing_prediction_set(FOLD, [z0], fake, FOLD(z0) + 1e-4, FOLD(z0), -2)


def test_suspect_crossing_cannot_spawn():
    x = RayCrossing(0j, 0, 0.0, 0j, CrossingKind.SUSPECT)
    with pytest.raises(SpawnFailure):
        crossing_prediction_set(FOLD, [], x, 0j, 0.01j, 2)


# -- full solves -------------------------------------------------------------------

@pytest.mark.parametrize("name,count", [("log", 4), ("w3", 9), ("mpw7", 22), ("rhie7", 35)])
def test_solve_counts_and_report(name, count):
    s = _solver(name)
    rep = s.solve(0j, seed=1)
    assert rep.zeros.size == count == rep.expected_count
    assert rep.max_residual <= 1e-12
    assert np.all(np.abs(rep.jacobians) > 0)
    assert list(rep.zeros) == list(sort_complex(rep.zeros))
    assert rep.steps == len(rep.path.segments)


def test_spawned_solutions_are_distinct_at_every_crossing():
    s = _solver("mpw5")
    path = s.build_candidate_path(math.pi / 50)
    log = []
    eta1 = path.nodes[0]
    _, batch = initial_solutions(s.f, eta1)

    def record(j, seg, eta, kept, pred, limits):
        log.append((seg.expected_delta if seg.crossing else 0, len(kept), len(pred), limits.size))

    s.transport(path, batch.limits, record)
    for delta, kept, npred, nlim in log:
        if delta == 2:
            assert npred == kept + 2 == nlim
        elif delta == -2:
            assert npred == kept == nlim
    assert sum(d for d, *_ in log) == 16 - 6


def test_determinism():
    f = rhie(5, 0.7, 0.2)
    a = solve_all_zeros(f, seed=4)
    b = solve_all_zeros(f, seed=4)
    assert a.zeros.tobytes() == b.zeros.tobytes()
    assert a.to_json(deterministic=True) == b.to_json(deterministic=True)


@pytest.mark.parametrize("name", ["log", "w3", "mpw7", "rhie7"])
def test_seed_independence(name):
    s = TransportSolver(_solver(name).f)
    ref = s.solve(0j, seed=0).zeros
    for seed in range(1, 10):
        z = s.solve(0j, seed=seed).zeros
        assert match_multisets(z, ref, 1e-10)


def test_chang_refsdal_preimages():
    rep = solve_preimages(chang_refsdal(), 2 / math.sqrt(3))
    assert match_multisets(rep.zeros, [math.sqrt(3), -1 / math.sqrt(3)], 1e-12)


def test_zero_target_on_degenerate_caustic():
    with pytest.raises(SingularZeroSuspected):
        solve_all_zeros(chang_refsdal())


def test_plant_and_recover():
    rng = np.random.default_rng(8)
    for name in ("log", "mpw5", "w3"):
        s = _solver(name)
        for _ in range(3):
            z_star = complex(*rng.uniform(-1.2, 1.2, size=2))
            if min((abs(z_star - p) for p in s.f.singular_points()), default=1) < 0.05:
                continue
            rep = s.solve(s.f(z_star), seed=0)
            assert np.min(np.abs(rep.zeros - z_star)) <= 1e-10 * (1 + abs(z_star))


def test_report_json_schema():
    rep = _solver("log").solve(0j, seed=0)
    d = json.loads(rep.to_json())
    for key in ("zeros", "residuals", "jacobians", "steps", "refinements", "restarts",
                "newton_iterations", "theta", "seed", "count", "elapsed_seconds"):
        assert key in d
    assert d["count"] == len(d["zeros"]) == 4
    assert all(len(z) == 2 for z in d["zeros"])
    quiet = json.loads(rep.to_json(deterministic=True))
    assert "elapsed_seconds" not in quiet and "timestamp" not in quiet


# -- homotopy curves -------------------------------------------------------------

def test_trace_homotopy_mpw5():
    start = 0.6699 + 0.1795j
    branches = trace_homotopy(mpw(5, 0.6), [start, 0j], 16)
    ends = [b for b in branches if not b.end_turning]
    assert len(ends) == 16
    assert all(b.etas[-1] == 0 for b in ends)
    f = mpw(5, 0.6)
    for b in ends:
        assert abs(f(b.points[-1])) <= 1e-12
    born = [b for b in branches if b.start_turning]
    died = [b for b in branches if b.end_turning]
    assert len(born) % 2 == 0 and len(died) % 2 == 0
    n_start = sum(1 for b in branches if not b.start_turning)
    assert n_start + len(born) - len(died) == 16


def test_trace_constant_path():
    eta = 0.3 + 0.1j
    branches = trace_homotopy(log_example(), [eta, eta], 4)
    assert branches
    for b in branches:
        assert not b.start_turning and not b.end_turning
        assert max(abs(z - b.points[0]) for z in b.points) <= 1e-12

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radioslam.crowdsource import (
    Cloud, ConvergenceMonitor, LRFEntry, LRFMap, ORFEntry, ORFMap, WeightSchedule, bootstrap_orf, build_lrf,
    download, export_orf, import_orf, prune_orf, run_schedule, weighted_upload,
)
from radioslam.scenario import from_dict
from radioslam.slam import FeatureBelief, Priors
from radioslam.slam.engine import FeatureEstimate


def feature(x, y, pe, anchor=1, key=1):
    return FeatureBelief(anchor, key, np.array([[x, y, -30.0, 3.0]]), np.array([1.0]), pe)


def lrf(agent, slot, pts, anchor=1):
    return LRFMap(agent, slot, {anchor: tuple(LRFEntry(x, y, pe) for x, y, pe in pts)})


def test_build_lrf():
    assert build_lrf({}, 1, 5).count() == 0
    legacy = {1: [feature(3, 4, 0.9), feature(1, 1, 5e-5, key=2)], 2: []}
    m = build_lrf(legacy, 1, 5)
    assert m.features == {1: (LRFEntry(3.0, 4.0, 0.9),)}
    assert m.count() <= sum(len(v) for v in legacy.values())


def test_bootstrap_is_a_plain_union():
    a = lrf(1, 3, [(0, 0, 0.9), (1, 1, 0.8)])
    b = lrf(2, 3, [(5, 5, 0.7), (6, 6, 0.6), (0.01, 0, 0.9)])
    orf = bootstrap_orf([a, b])
    assert len(orf) == 5  # the near-duplicate at the origin is kept
    assert [e.reliability for e in orf.for_anchor(1)] == [0.9, 0.8, 0.7, 0.6, 0.9]


def test_weighted_upload_reliability():
    sched = WeightSchedule(60)
    orf = weighted_upload(ORFMap(), lrf(1, 30, [(3, 4, 0.8)]), sched)
    assert orf.entries[0].reliability == pytest.approx(0.4)
    orf = weighted_upload(ORFMap(), lrf(1, 60, [(3, 4, 1.0)]), sched)
    assert orf.entries[0].reliability == 1.0


def test_weighted_upload_keeps_others_and_supersedes_own():
    sched = WeightSchedule(10)
    orf = weighted_upload(ORFMap(), lrf(1, 2, [(0, 0, 1.0)]), sched)
    orf = weighted_upload(orf, lrf(2, 3, [(5, 5, 1.0)]), sched)
    orf = weighted_upload(orf, lrf(1, 4, [(0.1, 0, 1.0), (9, 9, 1.0)]), sched)
    got = sorted((e.source, e.x, e.upload_slot) for e in orf.entries)
    assert got == [(1, 0.1, 4), (1, 9.0, 4), (2, 5.0, 3)]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 200), st.integers(1, 200), st.integers(1, 100))
def test_schedule_strictly_increasing_below_reference(n1, n2, n_ref):
    s = WeightSchedule(n_ref)
    if n1 < n2 <= n_ref:
        assert s(n1) < s(n2)
    assert 0 < s(n1) <= 1


def test_schedule_rejects_bad_input():
    with pytest.raises(ValueError):
        WeightSchedule(0)
    with pytest.raises(ValueError):
        WeightSchedule(10)(0)


def test_prune():
    orf = ORFMap((ORFEntry(1, 0, 0, 1e-5, 1), ORFEntry(1, 1, 1, 0.5, 1)))
    assert [e.reliability for e in prune_orf(orf, 1e-4).entries] == [0.5]
    assert prune_orf(ORFMap(orf.entries[1:]), 1e-4) == ORFMap(orf.entries[1:])
    assert len(prune_orf(ORFMap(), 1e-4)) == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 5), st.floats(0, 1)), max_size=20), st.floats(1e-6, 0.5))
def test_prune_floor(items, thr):
    orf = ORFMap(tuple(ORFEntry(1, float(i), 0.0, p, slot) for i, (slot, p) in enumerate(items)))
    assert all(e.reliability >= thr for e in prune_orf(orf, thr).entries)


def test_download():
    pri = Priors()
    rng = np.random.default_rng(0)
    assert download(ORFMap(), [1, 2], 10, 0.2, pri, rng) == {1: [], 2: []}
    orf = ORFMap((ORFEntry(1, 3, 4, 0.7, 5), ORFEntry(2, 1, 1, 0.5, 5), ORFEntry(3, 9, 9, 0.5, 5)))
    seeds = download(orf, [1, 2], 4000, 0.2, pri, rng)
    assert sorted(seeds) == [1, 2]
    f = seeds[1][0]
    assert f.existence == 0.7 and f.origin == "download"
    assert f.position_estimate() == pytest.approx([3, 4], abs=0.02)
    assert np.std(f.particles[:, 0]) == pytest.approx(0.2, rel=0.1)


def test_export_round_trip_and_no_agent_positions():
    orf = ORFMap((ORFEntry(1, 3.25, -4.5, 0.7, 5, source=2), ORFEntry(2, 1.0, 1.0, 0.5, 6, source=1)))
    text = export_orf(orf)
    for line in text.splitlines():
        assert set(json.loads(line)) == {"anchor", "x", "y", "reliability", "upload_slot"}
    back = import_orf(text)
    assert [e.record() for e in back.entries] == [e.record() for e in orf.entries]
    assert export_orf(back) == text


def test_cloud_serialization_order():
    ups = [lrf(1, 3, [(0, 0, 0.9)]), lrf(2, 3, [(1, 0, 0.2)]), lrf(1, 5, [(0, 0.1, 0.95)])]
    c = Cloud(WeightSchedule(10), 1e-4)
    for u in ups:
        c.upload(u)
    manual = ORFMap()
    for u in ups:
        manual = prune_orf(weighted_upload(manual, u, WeightSchedule(10)), 1e-4)
    assert c.snapshot() == manual
    assert [(s, a) for s, a, _ in c.log] == [(3, 1), (3, 2), (5, 1)]


def est(key, x, y, detected=True):
    return FeatureEstimate(1, key, (x, y), 0.9, -30.0, 3.0, detected)


def test_convergence_monitor():
    mon = ConvergenceMonitor(tol=0.1, window=3)
    assert not mon.observe([est(1, 0, 0)])
    assert not mon.observe([est(1, 0.05, 0)])
    assert not mon.observe([est(1, 0.5, 0)])  # big jump resets the streak
    for x in (0.52, 0.54, 0.56):
        done = mon.observe([est(1, x, 0), est(2, 9, 9, detected=False)])
    assert done
    assert mon.observe([est(1, 5, 5)])  # latched


TINY = {
    "horizon": 6, "seed": 3,
    "floor_plan": {"roi_center": [5, 4], "roi_radius": 20,
                   "walls": [[[0, 0], [10, 0]], [[10, 0], [10, 8]], [[10, 8], [0, 8]], [[0, 8], [0, 0]]]},
    "anchors": [[8, 6]],
    "slam": {"n_particles": 300, "birth_eval_particles": 64},
    "crowdsourcing": {"convergence_window": 1, "convergence_tol": 10.0},
    "agents": [{"id": 1, "waypoints": [[1, 1], [6, 2]], "speed": 0.5},
               {"id": 2, "waypoints": [[1, 1], [6, 2]], "speed": 0.5, "entry_slot": 4}],
}


def test_single_agent_crowdsourcing_is_a_no_op():
    sc = from_dict(TINY)
    on = run_schedule(sc, 0, crowdsourcing=True, agent_ids=[1])
    off = run_schedule(sc, 0, crowdsourcing=False, agent_ids=[1])
    assert on.agents[1].estimate == off.agents[1].estimate
    assert off.orf_log == [] and len(on.orf_log) > 0


def test_entry_slots_honoured_and_only_the_late_agent_is_affected():
    sc = from_dict(TINY)
    res = run_schedule(sc, 0, crowdsourcing=True)
    assert res.agents[1].slots == [1, 2, 3, 4, 5, 6]
    assert res.agents[2].slots == [4, 5, 6]
    assert all(s >= 1 for s, _, _ in res.orf_log)
    alone = run_schedule(sc, 0, crowdsourcing=False)
    assert alone.agents[1].estimate == res.agents[1].estimate
    assert alone.agents[2].estimate != res.agents[2].estimate  # it downloaded the map

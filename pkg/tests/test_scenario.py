import math
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from radioslam.scenario import (
    AgentSection, ScenarioError, dump_scenario, from_dict, parse_scenario, trajectory,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

MINIMAL = {"floor_plan": {"walls": [[[0, 0], [10, 0]]]}, "anchors": [[2, 3]]}


def test_minimal_file_gets_defaults(tmp_path):
    p = tmp_path / "min.yaml"
    p.write_text(yaml.safe_dump(MINIMAL))
    sc = parse_scenario(p)
    assert sc.horizon == 60 and sc.runs == 1
    assert sc.slam.n_particles == 20_000
    assert sc.slam_params().p_detect == 0.95
    assert sc.priors.alpha == (-0.5, 0.5)
    assert len(sc.agents) == 1
    assert sc.measurements == ("aoa", "toa")


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_scenarios_parse_and_round_trip(path):
    sc = parse_scenario(path)
    again = from_dict(yaml.safe_load(dump_scenario(sc)))
    assert again == sc
    assert dump_scenario(again) == dump_scenario(sc)


@pytest.mark.parametrize("mutate,match", [
    (lambda d: d.update(bogus=1), "unknown key 'bogus'"),
    (lambda d: d.update(slam={"n_particle": 5}), "slam.n_particle"),
    (lambda d: d.pop("anchors"), "anchors"),
    (lambda d: d.update(anchors=[]), "anchor"),
    (lambda d: d.update(horizon=10, agents=[{"id": 1, "waypoints": [[1, 1]], "entry_slot": 11}]), "entry_slot"),
    (lambda d: d.update(agents=[{"id": 1, "waypoints": [[1, 1]]}, {"id": 1, "waypoints": [[1, 1]]}]), "duplicate"),
    (lambda d: d.update(agents=[{"id": 1, "waypoints": [[100, 1]]}]), "outside ROI"),
    (lambda d: d.update(measurements=["foa"]), "measurements"),
    (lambda d: d.update(floor_plan={"walls": [[[1, 1], [1, 1]]]}), "degenerate|length"),
    (lambda d: d.update(biases={"omega": [1, 2]}), "omega"),
    (lambda d: d.update(slam={"detection_threshold": 1.5}), "detection_threshold"),
])
def test_invalid_scenarios_rejected(mutate, match):
    d = yaml.safe_load(yaml.safe_dump(MINIMAL))
    mutate(d)
    with pytest.raises(ScenarioError, match=match):
        from_dict(d)


def test_malformed_and_empty_files(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("floor_plan: [unclosed")
    with pytest.raises(ScenarioError):
        parse_scenario(bad)
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    with pytest.raises(ScenarioError):
        parse_scenario(empty)


def test_trajectory_constant_speed_straight_line():
    a = AgentSection(1, ((0.0, 0.0), (10.0, 0.0)), entry_slot=3, speed=1.0)
    tr = trajectory(a, horizon=14)
    assert len(tr) == 12
    assert [t.x for t in tr[:11]] == pytest.approx(list(range(11)))
    assert tr[0].vx == pytest.approx(1.0)
    assert tr[-1].x == 10.0 and tr[-1].vx == 0.0  # halted at the end
    assert all(t.entry_slot == 3 for t in tr)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 1.5), st.floats(0.0, 3.0))
def test_filleted_path_keeps_speed_and_smooths_turns(speed, radius):
    a = AgentSection(1, ((0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)), speed=speed, corner_radius=radius)
    tr = trajectory(a, horizon=int(25 / speed))
    pts = np.array([[t.x, t.y] for t in tr])
    steps = np.hypot(*np.diff(pts, axis=0).T)
    moving = steps[:-1]  # the last step may be cut short by the end of the path
    # a chord spanning arc length s on radius r is 2 r sin(s / 2r) >= 0.95 s when s <= r
    assert np.all(moving <= speed + 1e-9)
    assert np.all(moving >= speed * (0.95 if radius >= speed else 0.7))
    v = np.array([[t.vx, t.vy] for t in tr])
    turn = np.abs(np.arctan2(v[:-1, 0] * v[1:, 1] - v[:-1, 1] * v[1:, 0], np.einsum("ij,ij->i", v[:-1], v[1:])))
    if radius >= 1.0:
        # a tangent arc turns by at most step / radius per slot (plus chord slack)
        assert turn[np.isfinite(turn)].max() <= speed / radius * 1.1 + 1e-6


def test_entry_velocity_prior():
    sc = from_dict(dict(MINIMAL, agents=[{"id": 1, "waypoints": [[0, 0], [5, 0]], "speed": 0.5}]))
    pri = sc.priors_for((0.5, 0.0))
    assert pri.velocity_mean == (0.5, 0.0)
    sc2 = from_dict(dict(MINIMAL, priors={"velocity_mean": "zero"}))
    assert sc2.priors_for((0.5, 0.0)).velocity_mean == (0.0, 0.0)


def test_per_agent_bias_overrides():
    sc = from_dict(dict(MINIMAL, anchors=[[1, 1], [2, 2]], biases={"alpha": 0.2, "omega": 3.0},
                        agents=[{"id": 1, "waypoints": [[0, 0]]}, {"id": 2, "waypoints": [[0, 0]], "alpha": -0.1,
                                                                       "omega": [1, 2]}]))
    a1, a2 = sc.agents
    assert sc.agent_alpha(a1) == 0.2 and sc.agent_omega(a1) == {1: 3.0, 2: 3.0}
    assert sc.agent_alpha(a2) == -0.1 and sc.agent_omega(a2) == {1: 1.0, 2: 2.0}
    assert math.isclose(sc.slam_params().sigma_aoa, math.radians(1.0))

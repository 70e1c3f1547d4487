import csv
import io
import json

import pytest

from radioslam import crowdsource
from radioslam.harness import (
    SLOT_COLUMNS, SUMMARY_COLUMNS, MonteCarloResult, agent_traces, export, run_monte_carlo, slot_csv, summary_csv,
)
from radioslam.metrics import ospa
from radioslam.scenario import from_dict
from radioslam.slam import DegenerateUpdateError

from test_crowdsource import TINY


@pytest.fixture(scope="module")
def result():
    return run_monte_carlo(from_dict(dict(TINY, crowdsourcing={"enabled": True, "convergence_window": 1,
                                                               "convergence_tol": 10.0})), runs=2)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_golden_columns(result):
    assert slot_csv(result).splitlines()[0] == (
        "method,run,slot,agent,x_true,y_true,x_est,y_est,mae,obe,cbe,mospa,detected")
    assert summary_csv(result).splitlines()[0] == (
        "method,agent,runs,failed,max_mae,mospa,final_mae,final_mospa,final_obe,final_cbe")


def test_empty_results_are_header_only():
    empty = MonteCarloResult(from_dict(TINY))
    assert slot_csv(empty) == ",".join(SLOT_COLUMNS) + "\n"
    assert summary_csv(empty) == ",".join(SUMMARY_COLUMNS) + "\n"


def test_slot_rows_cover_every_active_slot(result):
    r = rows(slot_csv(result))
    # 2 methods x 2 runs x (6 + 3) agent-slots
    assert len(r) == 2 * 2 * 9
    assert {x["method"] for x in r} == {"proposed", "baseline"}


def test_mospa_column_matches_recomputation(result):
    sc = result.scenario
    table = rows(slot_csv(result))
    for method, runs in result.runs.items():
        for run in runs:
            for aid, log in run.agents.items():
                for i, n in enumerate(log.slots):
                    want = ospa([(d[1], d[2]) for d in log.detected[i]], [(v[2], v[3]) for v in log.visible[i]],
                                sc.metrics.mospa_cutoff, sc.metrics.mospa_order)
                    row = next(x for x in table if x["method"] == method and int(x["run"]) == run.run
                               and int(x["agent"]) == aid and int(x["slot"]) == n)
                    assert float(row["mospa"]) == pytest.approx(want, abs=1e-6)


def test_summary_matches_traces(result):
    summ = rows(summary_csv(result))
    row = next(x for x in summ if x["method"] == "proposed" and x["agent"] == "1")
    t = agent_traces(result.runs["proposed"], 1, result.scenario.horizon)
    assert float(row["max_mae"]) == pytest.approx(t.mae()[1], abs=1e-6)
    assert int(row["runs"]) == 2 and int(row["failed"]) == 0


def test_baseline_pins_biases(result):
    for run in result.runs["baseline"]:
        assert all(a == 0.0 for a in run.agents[1].alpha_hat)


def test_same_seed_is_byte_identical(result):
    again = run_monte_carlo(result.scenario, runs=2)
    assert slot_csv(again) == slot_csv(result)
    assert summary_csv(again) == summary_csv(result)


def test_export_writes_files(result, tmp_path):
    written = export(result, tmp_path)
    assert (tmp_path / "slots.csv").read_text() == slot_csv(result)
    orf_files = sorted(p.name for p in written if p.parent.name == "orf")
    want = sorted(f"{m}_run{r.run:03d}.jsonl" for m, runs in result.runs.items() for r in runs if r.orf_log)
    assert orf_files == want and want
    events = [json.loads(x) for x in (tmp_path / "orf" / want[0]).read_text().splitlines()]
    assert [e["event"] for e in events] == list(range(len(events)))
    for e in events:
        assert set(e) == {"event", "slot", "agent", "entries"}
        for entry in e["entries"]:
            assert set(entry) == {"anchor", "x", "y", "reliability", "upload_slot"}


def test_export_to_unwritable_location(result, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        export(result, blocker / "sub")


def test_failed_runs_are_counted_and_excluded(monkeypatch):
    real = crowdsource.SlamAgent.step

    def flaky(self, batch, rng, slot):
        if slot == 3:
            raise DegenerateUpdateError("all particle weights vanished")
        return real(self, batch, rng, slot)

    monkeypatch.setattr(crowdsource.SlamAgent, "step", flaky)
    res = run_monte_carlo(from_dict(TINY), methods=("proposed",), runs=1, agent_ids=[1])
    assert res.failures("proposed") == 1
    summ = rows(summary_csv(res))
    assert summ[0]["failed"] == "1" and summ[0]["max_mae"] == "nan"
    assert rows(slot_csv(res)) != [] and all(int(r["slot"]) < 3 for r in rows(slot_csv(res)))


def test_unknown_method():
    with pytest.raises(ValueError):
        run_monte_carlo(from_dict(TINY), methods=("magic",))

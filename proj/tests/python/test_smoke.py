import json
import os
from pathlib import Path

import pytest

import vigil

FIXTURES = Path(os.environ.get("VIGIL_FIXTURE_DIR", Path(__file__).resolve().parents[1] / "fixtures"))


def fixture(name):
    return json.loads((FIXTURES / name).read_text())


def frame(weights_and_labels, p=0.9, q=0.9):
    return {
        "frame_index": 0,
        "timestamp_ms": 0,
        "individuals": [
            {"id": f"z{i}", "bbox": [0.1, 0.1, 0.2, 0.2], "p": p, "behavior": b, "q": q}
            for i, b in enumerate(weights_and_labels)
        ],
    }


def test_score_frame_is_mean_weight_of_confident_individuals():
    s = vigil.score_frame(frame(["head_up", "grazing"]))
    assert s["score"] == pytest.approx(0.5)
    assert s["n_included"] == 2
    assert vigil.score_frame(frame(["head_up"], p=0.2))["score"] is None


def test_levels_follow_threshold_bands():
    assert vigil.instantaneous_level(0.1, 0.3) == "GREEN"
    assert vigil.instantaneous_level(0.15, 0.3) == "YELLOW"
    assert vigil.instantaneous_level(0.3, 0.3) == "RED"


def test_generate_round_trips_through_text(tmp_path):
    trace = vigil.Trace.generate({"seed": 7, "phases": [{"duration_ms": 1000, "vigilant_fraction": 0.5}]})
    assert len(trace) == 30
    path = tmp_path / "t.ndjson"
    trace.write(str(path))
    assert vigil.Trace.load(str(path)) == trace
    assert vigil.Trace.parse(trace.dumps()) == trace
    assert vigil.validate(str(path)) == []
    assert trace.frame(0)["frame_index"] == 0
    with pytest.raises(IndexError):
        trace.frame(30)


def test_corrupt_trace_raises_trace_error(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text('{"schema_version": 1}\n{"frame_index": "x"}\n')
    with pytest.raises(vigil.TraceError):
        vigil.validate(str(path))
    assert issubclass(vigil.TraceError, ValueError)


def test_four_mission_mean_warning_window():
    missions = [(f"m{i}", vigil.Trace.generate(fixture(f"warning_mission{i}.phases.json"))) for i in range(1, 5)]
    report = vigil.compare(missions)
    assert report["mean_warning_window_s"] == pytest.approx(51.0, abs=0.5)
    assert "| Mean |" in vigil.compare(missions, format="markdown")
    assert vigil.compare(missions, format="csv").startswith("label,")


def test_intervention_reduces_adverse_time():
    trace = vigil.Trace.generate(fixture("method_hitl.phases.json"))
    raw = vigil.metrics(trace)
    treated = vigil.metrics(trace, intervention={"response_latency_ms": 0})
    assert raw["adverse_behavior_ms"] == pytest.approx(14000, abs=1000)
    assert treated["adverse_behavior_ms"] < raw["adverse_behavior_ms"]
    result = vigil.replay(trace, theta=0.4)
    assert len(result["samples"]) == len(trace)
    assert result["config"]["theta_S"] == 0.4


def test_bad_arguments_raise_value_error():
    trace = vigil.Trace.generate({"phases": [{"duration_ms": 100}]})
    with pytest.raises(ValueError):
        vigil.replay(trace, theta=0.05)
    with pytest.raises(ValueError):
        vigil.metrics(trace, intervention="sometimes")
    with pytest.raises(ValueError):
        vigil.Trace.generate({"phases": "none"})

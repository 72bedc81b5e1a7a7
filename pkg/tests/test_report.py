import json
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempstream.analyzer import PourbaixParams, fit_mle, posterior_summary, sample_posterior, synthetic_dataset
from tempstream.report import NUMBER_RE, ReportError, RunLog, load_logs, render_report
from tempstream.schedule import Schedule, extract_schedule

from conftest import DATA

CLOCK = "2026-01-01T00:00:00Z"


@pytest.fixture(scope="module")
def fitted():
    d = synthetic_dataset(PourbaixParams(7.68, 10.92, -30.7, -450.0, 3.0), 30, seed=1)
    fit = fit_mle(d)
    return fit, posterior_summary(sample_posterior(d, N=5000, seed=0))


@pytest.fixture(scope="module")
def logs():
    return load_logs((DATA / "logs.json").read_text())


def json_numbers(obj, out=None):
    out = set() if out is None else out
    if isinstance(obj, bool):
        return out
    if isinstance(obj, (int, float)):
        out.add(float(obj))
    elif isinstance(obj, dict):
        for v in obj.values():
            json_numbers(v, out)
    elif isinstance(obj, list):
        for v in obj:
            json_numbers(v, out)
    elif isinstance(obj, str):
        out.update(float(x) for x in NUMBER_RE.findall(obj))
    return out


def unsourced_numbers(report, clock=CLOCK):
    text = report.markdown.replace(clock, "")
    sidecar = json.loads(report.sidecar_text())
    sidecar.pop("generated", None)
    known = json_numbers(sidecar)
    return [x for x in NUMBER_RE.findall(text) if float(x) not in known]


def test_empty_report():
    rep = render_report(Schedule(), None, [], CLOCK)
    assert "No runs recorded." in rep.markdown
    assert "No scheduled actions." in rep.markdown
    assert unsourced_numbers(rep) == []


def test_full_report(electrochem_plans, fitted, logs):
    fit, post = fitted
    plan = electrochem_plans["parallel"]
    rep = render_report(extract_schedule(plan), fit, logs, CLOCK, posterior=post,
                        plan_info={"total_cost": plan.cost, "mode": plan.mode})
    md = rep.markdown
    headings = re.findall(r"^### Run (\d+)$", md, flags=re.M)
    assert headings == ["1", "2", "3", "4", "5", "6"]
    section = md[md.index("## Parameter Estimates"):md.index("## Schedule")]
    table = [line for line in section.splitlines() if line.startswith("| ")]
    assert len(table) == 1 + 5  # header plus one row per parameter
    assert md.index("## Summary") < md.index("## Per-Run Logs") < md.index("## Parameter Estimates") \
        < md.index("## Schedule")
    assert "Caveat:" in md
    assert unsourced_numbers(rep) == []
    sidecar = json.loads(rep.sidecar_text())
    assert sidecar["summary"]["anomalous_runs"] == [4]
    assert sidecar["schedule"]["makespan_s"] == plan.makespan


def test_report_is_deterministic(electrochem_plans, fitted, logs):
    fit, post = fitted
    sched = extract_schedule(electrochem_plans["parallel"])
    a = render_report(sched, fit, logs, CLOCK, posterior=post)
    b = render_report(sched, fit, list(reversed(logs)), CLOCK, posterior=post)
    assert a.markdown == b.markdown and a.sidecar_text() == b.sidecar_text()


def test_duplicate_runs_rejected(logs):
    with pytest.raises(ReportError, match="unique"):
        render_report(Schedule(), None, [logs[0], logs[0]], CLOCK)
    with pytest.raises(ReportError):
        load_logs(json.dumps([logs[0].to_json(), logs[0].to_json()]))


def test_logs_roundtrip(logs):
    again = load_logs(json.dumps({"runs": [l.to_json() for l in logs]}))
    assert again == logs


measurement = st.floats(-1000, 1000, allow_nan=False).map(lambda x: round(x, 4))


@st.composite
def run_logs(draw):
    n = draw(st.integers(0, 6))
    out = []
    for i in range(1, n + 1):
        note = draw(st.sampled_from(["", "drift of 0.4 pH units", "repeat 2 of 3", "clean"]))
        out.append(RunLog(i, {"target_pH": draw(measurement)},
                          {"pH": draw(measurement), "redox_mV": draw(measurement)},
                          draw(st.booleans()), note))
    return out


@settings(max_examples=60, deadline=None)
@given(run_logs())
def test_every_number_has_a_source(generated):
    rep = render_report(Schedule(), None, generated, CLOCK)
    assert unsourced_numbers(rep) == []

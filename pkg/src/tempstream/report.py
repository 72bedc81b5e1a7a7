"""Markdown experiment report with a JSON sidecar holding every number shown."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .analyzer import PARAM_NAMES, FitResult
from .schedule import Schedule

PARAM_LABELS = {
    "pKa1": ("pKa1", "pH"),
    "pKa2": ("pKa2", "pH"),
    "k": ("k (half the low-pH slope)", "mV/pH"),
    "E_inf": ("E_inf (high-pH plateau)", "mV"),
    "sigma_eV": ("sigma_eV (noise)", "mV"),
}
INTERVAL_PERCENT = 90
DIGITS = 3
NUMBER_RE = re.compile(r"(?<![\w.])-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?(?![\w.])")


class ReportError(Exception):
    pass


@dataclass(frozen=True)
class RunLog:
    run_index: int
    requested: Mapping[str, float] = field(default_factory=dict)
    measured: Mapping[str, float] = field(default_factory=dict)
    anomaly: bool = False
    note: str = ""

    @classmethod
    def from_json(cls, d: Mapping) -> "RunLog":
        return cls(int(d["run_index"]), dict(d.get("requested", {})), dict(d.get("measured", {})),
                   bool(d.get("anomaly", False)), str(d.get("note", "")))

    def to_json(self) -> dict:
        return {"run_index": self.run_index, "requested": {k: _r(v) for k, v in self.requested.items()},
                "measured": {k: _r(v) for k, v in self.measured.items()}, "anomaly": self.anomaly,
                "note": self.note, "note_values": numbers_in(self.note)}


def load_logs(text: str) -> list[RunLog]:
    data = json.loads(text)
    if isinstance(data, Mapping):
        data = data.get("runs", [])
    logs = [RunLog.from_json(d) for d in data]
    indices = [l.run_index for l in logs]
    if len(set(indices)) != len(indices):
        raise ReportError("run_index values must be unique")
    return sorted(logs, key=lambda l: l.run_index)


def _r(x):
    """The rounded value used both in the markdown and in the sidecar."""
    if isinstance(x, bool) or x is None:
        return x
    if isinstance(x, int):
        return x
    v = round(float(x), DIGITS)
    return int(v) if v.is_integer() and abs(v) < 1e15 else v


@dataclass(frozen=True)
class Report:
    markdown: str
    sidecar: dict

    def sidecar_text(self) -> str:
        return json.dumps(self.sidecar, indent=2) + "\n"


def render_report(sched: Schedule, fit: FitResult | None, logs: Sequence[RunLog], clock: str,
                  title: str = "Electrochemistry experiment", posterior: Mapping | None = None,
                  plan_info: Mapping | None = None, gantt_ref: str = "gantt.svg") -> Report:
    """Render the report; a pure function of its arguments (``clock`` is the injected timestamp)."""
    logs = sorted(logs, key=lambda l: l.run_index)
    indices = [l.run_index for l in logs]
    if len(set(indices)) != len(indices):
        raise ReportError("run_index values must be unique")
    plan_info = dict(plan_info or {})
    anomalies = [l.run_index for l in logs if l.anomaly]

    data: dict = {
        "title": title,
        "generated": clock,
        "summary": {
            "n_runs": len(logs),
            "n_anomalies": len(anomalies),
            "anomalous_runs": anomalies,
            "makespan_s": _r(sched.makespan),
            "n_agents": len(sched.agents),
        },
        "runs": [l.to_json() for l in logs],
        "parameters": None,
        "schedule": {
            "makespan_s": _r(sched.makespan),
            "agents": list(sched.agents),
            "n_intervals": len(sched.intervals),
            "gantt": gantt_ref,
            "intervals": [iv.to_json() for iv in sched.intervals],
        },
    }
    if "total_cost" in plan_info:
        data["summary"]["total_cost"] = _r(plan_info["total_cost"])
        data["schedule"]["total_cost"] = _r(plan_info["total_cost"])
    if "mode" in plan_info:
        data["schedule"]["mode"] = plan_info["mode"]

    out = [f"# {title}", "", f"Generated: {clock}", ""]

    # summary
    s = data["summary"]
    out += ["## Summary", ""]
    out.append(f"- Runs: {s['n_runs']} ({s['n_anomalies']} flagged as anomalous)")
    out.append(f"- Schedule makespan: {s['makespan_s']} s across {s['n_agents']} agents")
    if "total_cost" in s:
        out.append(f"- Planner total cost: {s['total_cost']} s")
    if fit is not None:
        p = fit.params
        s["pKa1"] = _r(p.pKa1)
        s["region1_slope"] = _r(p.region1_slope)
        out.append(f"- Estimated pKa1: {s['pKa1']} with low-pH slope {s['region1_slope']} mV/pH")
        if fit.diagnostics:
            s["diagnostics"] = [_strip_details(n) for n in fit.diagnostics]
            for note in s["diagnostics"]:
                out.append(f"- Fit diagnostic: {note}")
    out.append("")

    # per-run logs
    out += ["## Per-Run Logs", ""]
    if not logs:
        out += ["No runs recorded.", ""]
    for log in logs:
        j = log.to_json()
        out.append(f"### Run {log.run_index}")
        out.append("")
        if j["requested"]:
            out.append("- Requested: " + ", ".join(f"{_key(k)} {v}" for k, v in j["requested"].items()))
        if j["measured"]:
            out.append("- Measured: " + ", ".join(f"{_key(k)} {v}" for k, v in j["measured"].items()))
        out.append("- Anomaly: " + (("yes, " + log.note) if log.anomaly else "none"))
        if log.note and not log.anomaly:
            out.append(f"- Note: {log.note}")
        out.append("")

    # parameters
    out += ["## Parameter Estimates", ""]
    if fit is None:
        out += ["No fit available.", ""]
    else:
        rows = []
        summary = (posterior or {}).get("summary", {})
        header = "| Parameter | Unit | Maximum likelihood |"
        sep = "|---|---|---|"
        if summary:
            header += " Posterior mean | Interval low | Interval high | Marginal peak |"
            sep += "---|---|---|---|"
        out += [header, sep]
        for name in PARAM_NAMES:
            label, unit = PARAM_LABELS[name]
            row = {"name": name, "unit": unit, "mle": _r(getattr(fit.params, name))}
            line = f"| {label} | {unit} | {row['mle']} |"
            if summary:
                ps = summary[name]
                row.update(mean=_r(ps["mean"]), low=_r(ps["low"]), high=_r(ps["high"]),
                           marginal_peak=_r(ps["marginal_peak"]))
                line += f" {row['mean']} | {row['low']} | {row['high']} | {row['marginal_peak']} |"
            rows.append(row)
            out.append(line)
        data["parameters"] = {"rows": rows, "log_likelihood": _r(fit.log_likelihood),
                              "n_points": fit.n_points, "interval_percent": INTERVAL_PERCENT}
        out.append("")
        out.append(f"Log-likelihood at the estimate: {_r(fit.log_likelihood)} over {fit.n_points} points.")
        if summary:
            data["parameters"]["posterior_samples"] = posterior.get("N")
            data["parameters"]["effective_sample_size"] = _r(posterior.get("effective_sample_size", 0))
            out.append(f"Posterior columns come from {posterior.get('N')} importance samples "
                       f"(effective size {data['parameters']['effective_sample_size']}); the interval is the "
                       f"central {INTERVAL_PERCENT} percent.")
        out.append("")
        out.append("Caveat: the maximum-likelihood column is the joint optimum. The peak of each "
                   "marginal posterior histogram can sit elsewhere.")
        out.append("")

    # schedule
    out += ["## Schedule", ""]
    sc = data["schedule"]
    if not sched.intervals:
        out += ["No scheduled actions.", ""]
    else:
        out.append(f"Makespan {sc['makespan_s']} s" + (f" ({sc['mode']} plan)." if "mode" in sc else "."))
        out.append("")
        out.append(f"Gantt chart: [{gantt_ref}]({gantt_ref})")
        out.append("")
        out += ["| Agent | Action | Start (s) | End (s) |", "|---|---|---|---|"]
        for iv in sched.intervals:
            out.append(f"| {iv.agent} | `{iv.action}` | {iv.start} | {iv.end} |")
        out.append("")
    markdown = "\n".join(out).rstrip("\n") + "\n"
    return Report(markdown, data)


def _key(k: str) -> str:
    return k.replace("_", " ")


def numbers_in(text: str) -> list:
    """Numbers embedded in free text, so the sidecar carries every number the markdown shows."""
    return [_r(float(m)) for m in NUMBER_RE.findall(text)]


def _strip_details(note: str) -> str:
    # diagnostics carry statistics in parentheses or brackets; the headline is enough for a report
    return re.sub(r"\s*[(\[][^)\]]*[)\]]", "", note).strip()

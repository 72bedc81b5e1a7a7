"""Per-agent schedules, makespan and Gantt rendering (SVG, ASCII, JSON)."""

from __future__ import annotations

import colorsys
import json
import math
import zlib
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .planner import Plan, plan_total_cost

FORMATS = ("svg", "ascii", "json")


class ScheduleError(Exception):
    pass


@dataclass(frozen=True, order=True)
class Interval:
    start: int
    end: int
    agent: str
    action: str  # the action with its arguments, e.g. "(pick franka beaker1 table_loc)"
    joint: bool = False

    def __post_init__(self):
        if self.end <= self.start:
            raise ScheduleError(f"interval {self.action} on {self.agent} has end {self.end} <= start {self.start}")

    def overlaps(self, other: "Interval") -> bool:
        return self.start < other.end and other.start < self.end

    def to_json(self) -> dict:
        return {"agent": self.agent, "action": self.action, "start": self.start, "end": self.end,
                "joint": self.joint}


@dataclass(frozen=True)
class Schedule:
    intervals: tuple[Interval, ...] = ()
    agents: tuple[str, ...] = ()

    @property
    def makespan(self) -> int:
        return makespan(self)

    def rows(self) -> dict[str, list[Interval]]:
        out = {a: [] for a in self.agents}
        for iv in self.intervals:
            out.setdefault(iv.agent, []).append(iv)
        return out

    def overlapping_pairs(self) -> list[tuple[Interval, Interval]]:
        bad = []
        for row in self.rows().values():
            row = sorted(row)
            for i, a in enumerate(row):
                for b in row[i + 1:]:
                    if b.start >= a.end:
                        break
                    bad.append((a, b))
        return bad

    def to_json(self) -> dict:
        return {
            "agents": list(self.agents),
            "intervals": [iv.to_json() for iv in self.intervals],
            "makespan": self.makespan,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def from_json(cls, d) -> "Schedule":
        ivs = tuple(Interval(int(x["start"]), int(x["end"]), x["agent"], x["action"], bool(x.get("joint", False)))
                    for x in d["intervals"])
        return cls(ivs, tuple(d["agents"]))

    @classmethod
    def loads(cls, text: str) -> "Schedule":
        return cls.from_json(json.loads(text))


def extract_schedule(plan: Plan) -> Schedule:
    """One interval per (action, agent); start/end steps are paired first-in first-out."""
    open_steps: dict[tuple, list] = {}
    executed = []
    for i, step in enumerate(plan.steps, start=1):
        key = (step.name, step.args)
        if step.phase == "start":
            open_steps.setdefault(key, []).append(step)
        elif step.phase == "end":
            pending = open_steps.get(key)
            if not pending:
                raise ScheduleError(f"step {i}: end of {step} without a matching start")
            started = pending.pop(0)
            if started.t_start != step.t_start or started.duration != step.duration:
                raise ScheduleError(f"step {i}: end of {step} disagrees with its start on timing")
            executed.append(started)
        else:
            executed.append(step)
    leftover = [s for steps in open_steps.values() for s in steps]
    if leftover:
        raise ScheduleError(f"start of {leftover[0]} is never ended")

    agents: list[str] = []
    intervals = []
    for step in executed:
        label = "(" + " ".join((step.name,) + step.args) + ")"
        who = step.agents or ("(none)",)
        for ag in who:
            if ag not in agents:
                agents.append(ag)
            intervals.append(Interval(step.t_start, step.t_start + step.duration, ag, label, len(who) > 1))
    intervals.sort(key=lambda iv: (iv.start, agents.index(iv.agent), iv.end, iv.action))
    return Schedule(tuple(intervals), tuple(agents))


def total_cost(plan: Plan) -> int:
    return plan_total_cost(plan)


def makespan(sched: Schedule) -> int:
    return max((iv.end for iv in sched.intervals), default=0)


def agent_color(agent: str) -> str:
    """Stable colour per agent name (hue from a CRC32 of the name)."""
    h = zlib.crc32(agent.encode("utf-8"))
    hue = h % 360
    return _hsl_to_hex(hue, 0.55, 0.6)


def _hsl_to_hex(h: float, s: float, l: float) -> str:
    r, g, b = colorsys.hls_to_rgb(h / 360.0, l, s)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


def render_gantt(sched: Schedule, fmt: str = "svg") -> bytes:
    if fmt == "svg":
        return _render_svg(sched).encode("utf-8")
    if fmt == "ascii":
        return _render_ascii(sched).encode("utf-8")
    if fmt == "json":
        return sched.dumps().encode("utf-8")
    raise ScheduleError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")


def _render_ascii(sched: Schedule, cell: int | None = None) -> str:
    span = makespan(sched)
    header = f"Gantt chart: {len(sched.agents)} agent(s), makespan {span} s"
    if not sched.intervals:
        return header + "\n"
    if cell is None:
        cell = _gcd_step(sched)
    width = max(len(a) for a in sched.agents)
    cols = span // cell
    lines = [header, " " * width + " |" + "".join(_tick(i * cell, cell) for i in range(cols))]
    legend: dict[str, str] = {}
    symbols = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
    for iv in sorted(sched.intervals):
        if iv.action not in legend:
            legend[iv.action] = symbols[len(legend) % len(symbols)]
    rows = sched.rows()
    for agent in sched.agents:
        cells = ["."] * cols
        for iv in rows.get(agent, ()):
            for c in range(iv.start // cell, iv.end // cell):
                cells[c] = legend[iv.action]
        lines.append(agent.ljust(width) + " |" + "".join(cells))
    lines.append("")
    for action, sym in legend.items():
        lines.append(f"  {sym} = {action}")
    return "\n".join(lines) + "\n"


def _tick(t: int, cell: int) -> str:
    return "|" if t % (cell * 5) == 0 else " "


def _gcd_step(sched: Schedule) -> int:
    g = 0
    for iv in sched.intervals:
        g = math.gcd(g, math.gcd(iv.start, iv.end))
    return g or 1


def _render_svg(sched: Schedule) -> str:
    row_h, bar_h, left, top, px_per_s = 36, 24, 140, 30, 0.6
    span = max(makespan(sched), 1)
    width = left + int(span * px_per_s) + 40
    height = top + row_h * max(len(sched.agents), 1) + 50
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        "<defs>",
        '<pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">'
        '<line x1="0" y1="0" x2="0" y2="6" stroke="#000" stroke-width="1.5" stroke-opacity="0.45"/></pattern>',
        "</defs>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    rows = sched.rows()
    for r, agent in enumerate(sched.agents):
        y = top + r * row_h
        out.append(f'<text x="{left - 8}" y="{y + row_h // 2 + 4}" text-anchor="end">{escape(agent)}</text>')
        out.append(f'<line x1="{left}" y1="{y + row_h}" x2="{width - 20}" y2="{y + row_h}" stroke="#dddddd"/>')
        for iv in rows.get(agent, ()):
            x = left + iv.start * px_per_s
            w = (iv.end - iv.start) * px_per_s
            by = y + (row_h - bar_h) // 2
            # joint actions take the colour of their first agent so stacked boxes match
            color = agent_color(_lead_agent(sched, iv))
            out.append(f'<g><title>{escape(iv.action)} [{iv.start}, {iv.end}] s</title>')
            out.append(f'<rect x="{x:.1f}" y="{by}" width="{w:.1f}" height="{bar_h}" fill="{color}" stroke="#333333"/>')
            if iv.joint:
                out.append(f'<rect x="{x:.1f}" y="{by}" width="{w:.1f}" height="{bar_h}" fill="url(#hatch)"/>')
            out.append("</g>")
    axis_y = top + row_h * max(len(sched.agents), 1)
    out.append(f'<line x1="{left}" y1="{axis_y}" x2="{left + span * px_per_s:.1f}" y2="{axis_y}" stroke="#000000"/>')
    step = _axis_step(span)
    for t in range(0, span + 1, step):
        x = left + t * px_per_s
        out.append(f'<line x1="{x:.1f}" y1="{axis_y}" x2="{x:.1f}" y2="{axis_y + 5}" stroke="#000000"/>')
        out.append(f'<text x="{x:.1f}" y="{axis_y + 18}" text-anchor="middle">{t}</text>')
    out.append(f'<text x="{left + span * px_per_s / 2:.1f}" y="{axis_y + 36}" text-anchor="middle">time (s)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _lead_agent(sched: Schedule, iv: Interval) -> str:
    if not iv.joint:
        return iv.agent
    for other in sched.intervals:
        if other.action == iv.action and other.start == iv.start:
            return other.agent
    return iv.agent


def _axis_step(span: int) -> int:
    for step in (60, 120, 300, 600, 1200, 3600):
        if span / step <= 25:
            return step
    return 3600 * max(1, span // (3600 * 25))

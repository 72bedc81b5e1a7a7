"""Weighted A* over a compiled ground task with delete-relaxation heuristics."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

from .model import CompiledTask, GroundAction, GroundTask, State, bits

INF = math.inf


class SearchLimitExceeded(Exception):
    """The node budget ran out before the search finished (not the same as "no plan")."""

    def __init__(self, expanded: int):
        super().__init__(f"search node limit exceeded after {expanded} expansions")
        self.expanded = expanded


@dataclass(frozen=True)
class SearchConfig:
    weight: float = 2.0
    node_limit: int = 2_000_000
    tie_break: str = "h-fifo"
    heuristic: str = "add"

    def __post_init__(self):
        if not self.weight >= 1:
            raise ValueError(f"weight must be >= 1, got {self.weight}")
        if self.node_limit <= 0:
            raise ValueError("node_limit must be positive")
        if self.tie_break != "h-fifo":
            raise ValueError(f"unknown tie-break policy {self.tie_break!r}")
        if self.heuristic not in ("add", "max", "blind"):
            raise ValueError(f"unknown heuristic {self.heuristic!r}")


@dataclass
class PlanPrefix:
    steps: list[GroundAction]
    g: float
    state: State
    expanded: int = field(default=0, compare=False)


class _Relaxation:
    """Counter-based relaxed exploration shared by h_add and h_max.

    Conditional effects are relaxed into separate unary-precondition operators
    whose precondition is the action precondition plus the effect condition.
    Negative literals are ignored.
    """

    def __init__(self, ct: CompiledTask):
        self.ct = ct
        n = len(ct.atoms)
        ops_pre: list[list[int]] = []
        ops_add: list[list[int]] = []
        ops_cost: list[float] = []
        for k in range(len(ct.actions)):
            pre = list(bits(ct.pre_pos[k]))
            ops_pre.append(pre)
            ops_add.append(list(bits(ct.add[k])))
            ops_cost.append(ct.cost[k])
            for cpos, _cneg, cadd, _cdel, ccost in ct.conds[k]:
                if cadd:
                    ops_pre.append(sorted(set(pre) | set(bits(cpos))))
                    ops_add.append(list(bits(cadd)))
                    ops_cost.append(ct.cost[k] + ccost)
        self.pre = ops_pre
        self.add = ops_add
        self.cost = ops_cost
        self.watchers: list[list[int]] = [[] for _ in range(n)]
        for o, pre in enumerate(ops_pre):
            for i in pre:
                self.watchers[i].append(o)
        self.free_ops = [o for o, pre in enumerate(ops_pre) if not pre]
        self.goal = list(bits(ct.goal_pos))

    def evaluate(self, state: int, combine: str) -> float:
        ct = self.ct
        if not ct.goal_possible:
            return INF
        if ct.is_goal(state):
            return 0.0
        n = len(ct.atoms)
        dist = [INF] * n
        heap: list[tuple[float, int]] = []
        for i in bits(state):
            dist[i] = 0.0
            heap.append((0.0, i))
        heapq.heapify(heap)
        remaining = [len(p) for p in self.pre]
        acc = [0.0] * len(self.pre)
        additive = combine == "add"

        def fire(o):
            c = self.cost[o] + acc[o]
            for j in self.add[o]:
                if c < dist[j]:
                    dist[j] = c
                    heapq.heappush(heap, (c, j))

        for o in self.free_ops:
            fire(o)
        goal_left = set(self.goal)
        done = [False] * n
        while heap:
            d, i = heapq.heappop(heap)
            if done[i]:
                continue
            done[i] = True
            goal_left.discard(i)
            if not goal_left:
                break
            for o in self.watchers[i]:
                if additive:
                    acc[o] += d
                elif d > acc[o]:
                    acc[o] = d
                remaining[o] -= 1
                if remaining[o] == 0:
                    fire(o)
        total = 0.0
        for i in self.goal:
            if dist[i] == INF:
                return INF
            total = total + dist[i] if additive else max(total, dist[i])
        return total


def _relaxation(task: GroundTask | CompiledTask) -> _Relaxation:
    ct = task if isinstance(task, CompiledTask) else task.compiled
    rel = getattr(ct, "_relaxation", None)
    if rel is None:
        rel = _Relaxation(ct)
        ct._relaxation = rel
    return rel


def h_add(task: GroundTask, s: State | int) -> float:
    rel = _relaxation(task)
    state = s if isinstance(s, int) else rel.ct.from_state(s)
    return rel.evaluate(state, "add")


def h_max(task: GroundTask, s: State | int) -> float:
    rel = _relaxation(task)
    state = s if isinstance(s, int) else rel.ct.from_state(s)
    return rel.evaluate(state, "max")


def weighted_astar(task: GroundTask, cfg: SearchConfig | None = None) -> PlanPrefix | None:
    """Best-first search on f = g + w*h; ties prefer smaller h, then insertion order.

    Closed states are reopened when reached again more cheaply.  Returns None
    when the reachable state space holds no goal state.
    """
    cfg = cfg or SearchConfig()
    ct = task.compiled
    rel = _relaxation(ct)
    combine = cfg.heuristic

    def heuristic(state):
        if combine == "blind":
            return 0.0 if ct.is_goal(state) else (0.0 if ct.goal_possible else INF)
        return rel.evaluate(state, combine)

    start = ct.init
    h0 = heuristic(start)
    if h0 == INF:
        return None
    counter = itertools.count()
    best_g: dict[int, float] = {start: 0.0}
    parent: dict[int, tuple[int, int] | None] = {start: None}
    h_cache: dict[int, float] = {start: h0}
    frontier = [(cfg.weight * h0, h0, next(counter), 0.0, start)]
    expanded = 0
    while frontier:
        _f, h, _n, g, state = heapq.heappop(frontier)
        if g > best_g[state]:
            continue
        if ct.is_goal(state):
            return PlanPrefix(_trace(ct, parent, state), g, ct.to_state(state, g), expanded)
        expanded += 1
        if expanded > cfg.node_limit:
            raise SearchLimitExceeded(expanded - 1)
        for k in ct.applicable(state):
            succ, cost = ct.successor(state, k)
            g2 = g + cost
            if g2 >= best_g.get(succ, INF):
                continue
            h2 = h_cache.get(succ)
            if h2 is None:
                h2 = heuristic(succ)
                h_cache[succ] = h2
            if h2 == INF:
                continue
            best_g[succ] = g2
            parent[succ] = (state, k)
            heapq.heappush(frontier, (g2 + cfg.weight * h2, h2, next(counter), g2, succ))
    return None


def _trace(ct: CompiledTask, parent, state) -> list[GroundAction]:
    steps = []
    while parent[state] is not None:
        prev, k = parent[state]
        steps.append(ct.actions[k])
        state = prev
    steps.reverse()
    return steps

"""Independent reference implementations the tests compare the package against.

Nothing here calls the package's grounding, search, scheduling or fitting code;
only its data classes are used to exchange inputs and outputs.
"""

from __future__ import annotations

import heapq
import itertools
import math
from functools import lru_cache

import numpy as np

from tempstream.model import GroundAction, GroundTask, State
from tempstream.pddl import Atom, Literal, parse_domain, parse_problem

# ---------------------------------------------------------------------------
# grounding


def _types_of(dom, typ):
    out = []
    while typ is not None:
        out.append(typ)
        typ = dom.types.get(typ)
    return out


def _holds(atoms, lit):
    if lit.atom.predicate == "=":
        v = lit.atom.args[0] == lit.atom.args[1]
    else:
        v = lit.atom in atoms
    return v != lit.negated


def _effect_parts(eff, binding):
    """Flatten an Effect into [(condition literals, add atoms, delete atoms)]."""
    sub = lambda lits: [l.substitute(binding) for l in lits]
    out = [((), [l.atom for l in sub(eff.literals) if not l.negated], [l.atom for l in sub(eff.literals) if l.negated])]
    for c in eff.conditional:
        for cond, add, dele in _effect_parts(c.effect, binding):
            out.append((tuple(sub(c.condition)) + cond, add, dele))
    return out


def brute_force_ground(dom, prob, extra_certified=(), extra_objects=None):
    """All parameter assignments, then a relaxed-reachability filter.

    Returns (action keys, reachable atoms).
    """
    objects = {tn.name: tn.type for tn in list(dom.constants) + list(prob.objects)}
    objects.update(extra_objects or {})
    members = {}
    for name, typ in objects.items():
        for t in _types_of(dom, typ):
            members.setdefault(t, []).append(name)
    fluent = set()
    for a in dom.actions:
        for cond, add, dele in _effect_parts(a.effect, {}):
            fluent.update(x.predicate for x in add + dele)
    init = set(prob.init) | set(extra_certified)
    static_true = {x for x in init if x.predicate not in fluent}

    candidates = []
    for a in dom.actions:
        pools = [members.get(p.type, []) for p in a.parameters]
        for combo in itertools.product(*pools):
            b = dict(zip((p.name for p in a.parameters), combo))
            pre = [l.substitute(b) for l in a.precondition]
            ok = all(_holds(set(), l) for l in pre if l.atom.predicate == "=")
            ok = ok and all(_holds(static_true, l) for l in pre
                            if l.negated and l.atom.predicate not in fluent and l.atom.predicate != "=")
            if ok:
                candidates.append((a.name, combo, pre, _effect_parts(a.effect, b)))

    reached = set(init)
    changed = True
    while changed:
        changed = False
        for name, combo, pre, parts in candidates:
            if not all(l.atom in reached for l in pre if not l.negated and l.atom.predicate != "="):
                continue
            for cond, add, _ in parts:
                if all(_holds(set(), l) for l in cond if l.atom.predicate == "=") and \
                        all(l.atom in reached for l in cond if not l.negated and l.atom.predicate != "="):
                    for x in add:
                        if x not in reached:
                            reached.add(x)
                            changed = True
    keys = {(name, combo) for name, combo, pre, _ in candidates
            if all(l.atom in reached for l in pre if not l.negated and l.atom.predicate != "=")}
    return keys, reached


# ---------------------------------------------------------------------------
# random tasks


def random_ground_task(rng, max_atoms=10, max_actions=12) -> GroundTask:
    n = int(rng.integers(3, max_atoms + 1))
    atoms = [Atom(f"p{i}") for i in range(n)]
    actions = []
    for j in range(int(rng.integers(1, max_actions + 1))):
        idx = rng.permutation(n)
        n_pos, n_neg = int(rng.integers(0, 3)), int(rng.integers(0, 2))
        pre = [Literal(atoms[i]) for i in idx[:n_pos]] + [Literal(atoms[i], True) for i in idx[n_pos:n_pos + n_neg]]
        idx = rng.permutation(n)
        n_add, n_del = int(rng.integers(1, 3)), int(rng.integers(0, 3))
        add = frozenset(atoms[i] for i in idx[:n_add])
        dele = frozenset(atoms[i] for i in idx[n_add:n_add + n_del])
        cost = int(rng.integers(1, 6))
        actions.append(GroundAction(f"a{j}", (), tuple(pre), add, dele, (), cost, tuple(pre)))
    init = frozenset(a for a in atoms if rng.random() < 0.3)
    goal_idx = rng.permutation(n)[: int(rng.integers(1, 4))]
    goal = tuple(Literal(atoms[i]) for i in goal_idx)
    return GroundTask({}, frozenset(atoms), tuple(actions), State(init, 0), goal)


def dijkstra_cost(task: GroundTask):
    """Optimal plan cost by uniform-cost search over explicit atom sets; None when unsolvable."""
    def goal(s):
        return all(_holds(s, l) for l in task.goal)

    start = frozenset(task.init.atoms)
    dist = {start: 0}
    tie = itertools.count()
    heap = [(0, next(tie), start)]
    while heap:
        g, _, s = heapq.heappop(heap)
        if g > dist[s]:
            continue
        if goal(s):
            return g
        for a in task.actions:
            if all(_holds(s, l) for l in a.precondition):
                t = frozenset((s - a.delete) | a.add)
                if g + a.cost < dist.get(t, math.inf):
                    dist[t] = g + a.cost
                    heapq.heappush(heap, (g + a.cost, next(tie), t))
    return None


REQS = "(:requirements :strips :typing :negative-preconditions :equality :conditional-effects)"


def random_lifted_task(rng):
    """A small random typed domain and problem as PDDL text, parsed by the package parser."""
    preds = {"ready": ["agent"], "has": ["agent", "item"], "clean": ["item"], "near": ["item", "item"],
             "on": ["item"]}
    names = list(preds)

    def lit(params, negate_ok=True):
        p = names[int(rng.integers(len(names)))]
        args = []
        for t in preds[p]:
            pool = [v for v, vt in params if vt == t]
            args.append(pool[int(rng.integers(len(pool)))])
        neg = negate_ok and rng.random() < 0.3
        body = f"({p} {' '.join(args)})"
        return (f"(not {body})" if neg else body), (p, tuple(args))

    actions = []
    for j in range(int(rng.integers(2, 5))):
        params = [("?a", "agent"), ("?x", "item")]
        if rng.random() < 0.5:
            params.append(("?y", "item"))
        pre = [lit(params)[0] for _ in range(int(rng.integers(1, 4)))]
        eff, used = [], set()
        for _ in range(int(rng.integers(1, 4))):
            text, key = lit(params)
            if key not in used:
                used.add(key)
                eff.append(text)
        if rng.random() < 0.4:
            cond, _ = lit(params)
            text, key = lit(params)
            if key not in used:
                eff.append(f"(when {cond} {text})")
        ptext = " ".join(f"{v} - {t}" for v, t in params)
        actions.append(f"(:action act{j} :parameters ({ptext}) :precondition (and {' '.join(pre)}) "
                       f":effect (and {' '.join(eff)}))")
    ptext = " ".join(f"({p} {' '.join(f'?v{i} - {t}' for i, t in enumerate(ts))})" for p, ts in preds.items())
    domain = (f"(define (domain rnd) {REQS} (:types agent item) (:predicates {ptext}) "
              + " ".join(actions) + ")")
    agents = ["r1", "r2"]
    items = ["i1", "i2", "i3"][: int(rng.integers(1, 4))]
    facts = []
    for p, ts in preds.items():
        for combo in itertools.product(*[agents if t == "agent" else items for t in ts]):
            if rng.random() < 0.4:
                facts.append(f"({p} {' '.join(combo)})")
    problem = (f"(define (problem rp) (:domain rnd) (:objects {' '.join(agents)} - agent {' '.join(items)} - item) "
               f"(:init {' '.join(facts)}) (:goal (and)))")
    dom = parse_domain(domain)
    return dom, parse_problem(problem, dom)


# ---------------------------------------------------------------------------
# scheduling


def optimal_makespan(jobs, init_atoms, goal, single_agent=False):
    """Minimum makespan executing every job exactly once.

    ``jobs`` is a list of (GroundAction, duration, agents).  Preconditions are
    checked when a job starts and again when it ends; effects apply at the end.
    Starts happen at event times (time zero or when some job ends), which is
    enough for an optimal schedule of this kind.  Returns None when no order
    of the jobs reaches the goal.
    """
    n = len(jobs)
    goal = tuple(goal)

    def ok(atoms, a):
        return all(_holds(atoms, l) for l in a.precondition)

    def apply_effects(atoms, a):
        add, dele = set(a.add), set(a.delete)
        for c in a.conditional:
            if all(_holds(atoms, l) for l in c.condition):
                add |= c.add
                dele |= c.delete
        return frozenset((atoms - dele) | add)

    @lru_cache(maxsize=None)
    def best(done: frozenset, atoms: frozenset, running: tuple):
        # running: sorted tuple of (remaining time, job index)
        if not running and len(done) == n:
            return 0 if all(_holds(atoms, l) for l in goal) else math.inf
        busy = set()
        for _, j in running:
            busy.update(jobs[j][2])
        started = done | {j for _, j in running}
        result = math.inf
        seen_keys = set()
        for j in range(n):
            if j in started:
                continue
            a, dur, agents = jobs[j]
            key = (a.key, dur)
            if key in seen_keys:
                continue  # identical jobs are interchangeable
            if single_agent and running:
                continue
            if busy & set(agents) or not ok(atoms, a):
                continue
            seen_keys.add(key)
            result = min(result, best(done, atoms, tuple(sorted(running + ((dur, j),)))))
        if running:
            first = running[0][0]
            for i, (rem, j) in enumerate(running):
                if rem != first:
                    break
                a = jobs[j][0]
                if not ok(atoms, a):
                    continue
                rest = tuple((r - first, k) for m, (r, k) in enumerate(running) if m != i)
                result = min(result, first + best(done | {j}, apply_effects(atoms, a), rest))
        return result

    value = best(frozenset(), frozenset(init_atoms), ())
    best.cache_clear()
    return None if value == math.inf else value


# ---------------------------------------------------------------------------
# Pourbaix model


def mean_potential(theta, pH):
    """Piecewise mean written branch by branch."""
    pKa1, pKa2, k, E, _ = theta
    pH = np.asarray(pH, dtype=float)
    plateau = np.full_like(pH, E)
    middle = E + k * (pH - pKa2)
    low = E + k * (pKa1 - pKa2) + 2 * k * (pH - pKa1)
    return np.where(pH >= pKa2, plateau, np.where(pH >= pKa1, middle, low))


def grid_mle(pH, eV, lo=2.0, hi=12.0, step=0.02, refine=2, sigma_floor=1e-6):
    """Dense grid over the breakpoints with the linear parameters solved by least squares."""
    pH, eV = np.asarray(pH, float), np.asarray(eV, float)
    n = len(pH)
    center = None
    for level in range(refine + 1):
        if center is None:
            a1 = np.arange(lo, hi + 1e-12, step)
            a2 = a1
        else:
            w = step * 3
            a1 = np.linspace(center[0] - w, center[0] + w, 61)
            a2 = np.linspace(center[1] - w, center[1] + w, 61)
            step = 2 * w / 60
        P1, P2 = np.meshgrid(a1, a2, indexing="ij")
        keep = P1 <= P2
        p1, p2 = P1[keep], P2[keep]
        # regressor multiplying k in the piecewise mean
        g = np.where(pH[None, :] >= p2[:, None], 0.0,
                     np.where(pH[None, :] >= p1[:, None], pH[None, :] - p2[:, None],
                              (p1 - p2)[:, None] + 2 * (pH[None, :] - p1[:, None])))
        gm = g.mean(axis=1)
        ym = eV.mean()
        sgg = ((g - gm[:, None]) ** 2).sum(axis=1)
        sgy = ((g - gm[:, None]) * (eV - ym)[None, :]).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(sgg > 0, sgy / sgg, 0.0)
        E = ym - k * gm
        rss = ((eV[None, :] - E[:, None] - k[:, None] * g) ** 2).sum(axis=1)
        sigma = np.maximum(np.sqrt(rss / n), sigma_floor)
        ll = -n * np.log(sigma * math.sqrt(2 * math.pi)) - rss / (2 * sigma**2)
        i = int(np.argmax(ll))
        center = (p1[i], p2[i])
        best = (float(p1[i]), float(p2[i]), float(k[i]), float(E[i]), float(sigma[i])), float(ll[i])
    return best


def grid_log_likelihood(theta_rows, pH, eV):
    """Gaussian log-likelihood for many parameter rows at once."""
    theta_rows = np.atleast_2d(theta_rows)
    pH, eV = np.asarray(pH, float), np.asarray(eV, float)
    out = np.zeros(len(theta_rows))
    for r, th in enumerate(theta_rows):
        mu = mean_potential(th, pH)
        s = th[4]
        out[r] = np.sum(-np.log(s * math.sqrt(2 * math.pi)) - 0.5 * ((eV - mu) / s) ** 2)
    return out


def riemann_marginals(pH, eV, bounds, bins=10, sub=2):
    """Posterior marginals under a uniform box prior (with pKa1 <= pKa2) on a midpoint grid.

    ``bounds`` is a (5, 2) array.  Each marginal is returned as ``bins`` masses,
    every bin integrated with ``sub`` midpoints per dimension.
    """
    pH, eV = np.asarray(pH, float), np.asarray(eV, float)
    G = bins * sub
    axes = [lo + (np.arange(G) + 0.5) * (hi - lo) / G for lo, hi in bounds]
    K, E, S = np.meshgrid(axes[2], axes[3], axes[4], indexing="ij")
    k, e, s = K.ravel(), E.ravel(), S.ravel()
    logp = np.full((G, G, G ** 3), -np.inf)
    for i, a1 in enumerate(axes[0]):
        for j, a2 in enumerate(axes[1]):
            if a1 > a2:
                continue
            g = np.where(pH >= a2, 0.0, np.where(pH >= a1, pH - a2, (a1 - a2) + 2 * (pH - a1)))
            resid = eV[None, :] - e[:, None] - k[:, None] * g[None, :]
            logp[i, j] = np.sum(-np.log(s[:, None] * math.sqrt(2 * math.pi)) - 0.5 * (resid / s[:, None]) ** 2,
                                axis=1)
    logp = logp.reshape((G,) * 5)
    w = np.exp(logp - logp.max())
    w /= w.sum()
    out = []
    for n in range(5):
        marg = w.sum(axis=tuple(x for x in range(5) if x != n))
        out.append(marg.reshape(bins, sub).sum(axis=1))
    return out


def prior_mean_line(bounds, pH, grid=400):
    """Prior-predictive mean of the model line (uniform box, pKa1 <= pKa2)."""
    (l1, h1), (l2, h2), (lk, hk), (le, he), _ = bounds
    a1 = l1 + (np.arange(grid) + 0.5) * (h1 - l1) / grid
    a2 = l2 + (np.arange(grid) + 0.5) * (h2 - l2) / grid
    A1, A2 = np.meshgrid(a1, a2, indexing="ij")
    keep = A1 <= A2
    p1, p2 = A1[keep], A2[keep]
    out = []
    for x in np.atleast_1d(pH):
        g = np.where(x >= p2, 0.0, np.where(x >= p1, x - p2, (p1 - p2) + 2 * (x - p1)))
        out.append((le + he) / 2 + (lk + hk) / 2 * g.mean())
    return np.array(out)


# ---------------------------------------------------------------------------
# durative transform


def start_end_projection_mismatches(dom, prob, cfg, rng, walk=6):
    """Run every applicable action as a start/end pair and compare the projected state.

    A random walk through the instantaneous task supplies states.  Returns a
    list of mismatch descriptions (empty when the transform is faithful) and
    the number of pairs checked.
    """
    from tempstream.model import apply as apply_action, ground_task
    from tempstream.streams import FactSet, eval_eager
    from tempstream.temporal import make_durative, timing_name

    base = ground_task(dom, prob)
    dd = make_durative(dom, cfg)
    dprob = dd.problem(prob)
    eager = eval_eager(dd.streams, FactSet(dprob.init, {}, {}), cfg)
    dtask = ground_task(dd.domain, dprob, eager)
    base_preds = {p.name for p in dom.predicates}
    bookkeeping = frozenset(a for a in dtask.init.atoms if a.predicate not in base_preds)

    mismatches, checked = [], 0
    s = base.init
    t0 = timing_name(0)
    for _ in range(walk):
        options = [a for a in base.actions if all(_holds(s.atoms, l) for l in a.precondition)]
        for a in options:
            D = cfg.duration(a.name)
            start = dtask.by_key.get((dd.start_name(a.name), a.args + (t0,)))
            end = dtask.by_key.get((dd.end_name(a.name), a.args + (t0, t0, timing_name(D))))
            if start is None or end is None:
                mismatches.append(f"{a}: start or end not grounded")
                continue
            ds = State(s.atoms | bookkeeping, 0)
            after = apply_action(apply_action(ds, start), end)
            projected = frozenset(x for x in after.atoms if x.predicate in base_preds)
            expected = apply_action(s, a).atoms
            checked += 1
            if projected != expected:
                mismatches.append(f"{a}: {sorted(map(str, projected ^ expected))}")
            if after.total_cost != D:
                mismatches.append(f"{a}: cost {after.total_cost} != {D}")
            restored = frozenset(x for x in after.atoms if x.predicate not in base_preds)
            if restored != bookkeeping - {Atom(dd.names.at_time, (t0,))} | {Atom(dd.names.at_time, (timing_name(D),))}:
                mismatches.append(f"{a}: bookkeeping not restored")
        if not options:
            break
        s = apply_action(s, options[int(rng.integers(len(options)))])
    return mismatches, checked


def random_durative_config(dom, rng, unit=60, t_max_units=40):
    from tempstream.temporal import DurativeConfig

    return DurativeConfig(
        unit_T=unit,
        t_max=unit * t_max_units,
        durations={a.name: int(rng.choice([45, 60, 100, 150])) for a in dom.actions},
        agents={a.name: (a.parameters[0].name,) for a in dom.actions},
    )


def relaxed_estimate(task: GroundTask, atoms, combine):
    """Additive or max delete-relaxation value by plain fixpoint iteration."""
    agg = sum if combine == "add" else (lambda xs: max(xs, default=0))
    cost = {a: 0 for a in atoms}
    changed = True
    while changed:
        changed = False
        for act in task.actions:
            pre = [l.atom for l in act.precondition if not l.negated]
            if not all(p in cost for p in pre):
                continue
            c = agg([cost[p] for p in pre]) + act.cost
            for q in act.add:
                if c < cost.get(q, math.inf):
                    cost[q] = c
                    changed = True
    goal = [l.atom for l in task.goal if not l.negated]
    if not all(g in cost for g in goal):
        return math.inf
    return agg([cost[g] for g in goal])

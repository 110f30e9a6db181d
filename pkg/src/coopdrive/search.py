"""Decoupled-UCT tree search over the macro-action hierarchy.

Each agent keeps independent per-action statistics at every node (macro level
and, per active macro, primitive level); joint primitive actions drive the
transitions. Returns credited to an action are bounded by the termination of
its parent macro-action. The flat baseline is the same engine with the
hierarchy collapsed to primitives under the root.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .actions import (
    MACRO_INDEX,
    MACROS,
    AgentDesire,
    MacroActionKind,
    MacroParams,
    overtake_target,
    primitive_set,
)
from .reward import (
    AgentTraceStep,
    RewardTrace,
    RewardWeights,
    TraceStep,
    cooperative_reward,
    ego_step_reward,
)
from .world import (
    PRIMITIVE_INDEX,
    PRIMITIVES,
    PrimitiveAction,
    WorldParams,
    WorldState,
    advance,
)

_ROOT = MacroActionKind.ROOT
_OVERTAKE = MacroActionKind.OVERTAKE
_MERGE_IN = MacroActionKind.MERGE_IN
_MAKE_ROOM = MacroActionKind.MAKE_ROOM
_TDV = MacroActionKind.TO_DESIRED_VELOCITY

# available-macro tuples by (overtake-ok, merge-ok, tdv-ok); make-room always
# initiates, keeping every combination non-empty
_AVAIL_OF = {
    (ov, mg, td): tuple(
        k
        for k, ok in (
            (_OVERTAKE, ov),
            (_MERGE_IN, mg),
            (_MAKE_ROOM, True),
            (_TDV, td),
        )
        if ok
    )
    for ov in (False, True)
    for mg in (False, True)
    for td in (False, True)
}

# primitive candidates per macro, in stable selection order
_PRIMS_OF = {
    kind: tuple(a for a in PRIMITIVES if a in primitive_set(kind))
    for kind in MACROS
}
_PRIMS_OF[_ROOT] = PRIMITIVES

# feasibility-filtered candidates, precomputed over every (macro, can-brake,
# can-go-left, can-go-right) combination; _KEYS_OF holds the matching
# (macro, primitive) statistic keys
_CAND_OF: dict[tuple, tuple] = {}
_KEYS_OF: dict[tuple, tuple] = {}
for _ck, _prims in _PRIMS_OF.items():
    for _brk in (False, True):
        for _lft in (False, True):
            for _rgt in (False, True):
                _cands = tuple(
                    a
                    for a in _prims
                    if not (
                        (a is PrimitiveAction.DECELERATE and not _brk)
                        or (a is PrimitiveAction.LANE_LEFT and not _lft)
                        or (a is PrimitiveAction.LANE_RIGHT and not _rgt)
                    )
                )
                _CAND_OF[(_ck, _brk, _lft, _rgt)] = _cands
                _KEYS_OF[(_ck, _brk, _lft, _rgt)] = tuple((_ck, a) for a in _cands)
del _ck, _prims, _brk, _lft, _rgt, _cands


@dataclass(frozen=True, slots=True)
class SearchParams:
    iterations: int = 1000
    max_depth: int = 10
    gamma: float = 0.95
    epsilon: float = 0.1
    c_uct: float = 2.0
    final_rule: str = "visits"      # "visits" | "reward"
    mode: str = "polling"           # "polling" | "hierarchical"
    flat: bool = False
    domain_knowledge: bool = False
    seed: int = 0
    search_substep: float = 0.5     # in-tree collision sampling resolution

    def __post_init__(self):
        if self.iterations < 1 or self.max_depth < 1:
            raise ValueError("iterations and max_depth must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.final_rule not in ("visits", "reward"):
            raise ValueError("final_rule must be 'visits' or 'reward'")
        if self.mode not in ("polling", "hierarchical"):
            raise ValueError("mode must be 'polling' or 'hierarchical'")


class AgentStat:
    """Visit count and running-mean return of one per-agent action entry."""

    __slots__ = ("n", "q")

    def __init__(self):
        self.n = 0
        self.q = 0.0

    def update(self, g: float):
        self.n += 1
        self.q += (g - self.q) / self.n

    def __repr__(self):
        return f"AgentStat(n={self.n}, q={self.q:.3f})"


class JointStat:
    """Visit count and per-agent running-mean returns of one joint edge."""

    __slots__ = ("n", "q")

    def __init__(self, n_agents: int):
        self.n = 0
        self.q = [0.0] * n_agents


class SearchNode:
    __slots__ = (
        "world",
        "n_visits",
        "children",
        "macro_stats",
        "prim_stats",
        "joint_stats",
        "terminal",
    )

    def __init__(self, world: WorldState, n_agents: int, terminal: bool = False):
        self.world = world
        self.n_visits = 0
        self.children: dict[tuple, "SearchNode"] = {}
        self.macro_stats: list[dict] = [{} for _ in range(n_agents)]
        self.prim_stats: list[dict] = [{} for _ in range(n_agents)]
        self.joint_stats: dict[tuple, JointStat] = {}
        self.terminal = terminal


def uct_value(q: float, n: int, parent_n: int, c_uct: float) -> float:
    """UCB1 score; unexplored actions rank strictly above explored ones."""
    if n == 0:
        return math.inf
    return q + c_uct * math.sqrt(math.log(max(parent_n, 1)) / n)


def epsilon_greedy_select(values: Sequence[float], epsilon: float, rng: random.Random) -> int:
    """Index of the argmax with probability 1 - eps + eps/|A|, any other index
    with probability eps/|A|. Ties break toward the lowest index."""
    if not values:
        raise ValueError("empty action set")
    if epsilon > 0.0 and rng.random() < epsilon:
        return rng.randrange(len(values))
    best = 0
    best_v = values[0]
    for i in range(1, len(values)):
        if values[i] > best_v:
            best, best_v = i, values[i]
    return best


def marginal_q(joint_stats, agent: int, action) -> Optional[float]:
    """Brute-force marginalization of joint-action statistics onto one
    agent's action: sum(N(s,a) Q(s,a) [a^i = action]) / N(s,a^i).

    Returns None when the action was never visited (caller treats it as
    unexplored). This is the oracle the incrementally maintained per-agent
    tables must agree with.
    """
    num = 0.0
    den = 0
    for joint, n, q in joint_stats:
        if joint[agent] == action and n > 0:
            num += n * q
            den += n
    if den == 0:
        return None
    return num / den


def entry_spans(trace: RewardTrace, agent: int) -> list[tuple[str, int, int]]:
    """Hierarchically bounded reward spans for one agent's tree-phase entries.

    For each in-tree step, in selection order: a ("macro", t, T) span when a
    new macro was selected there (the root never terminates before the
    iteration end), then a ("prim", t, t_end) span where t_end is the step at
    which the active macro terminated (the next step with a fresh macro
    selection), or T if it outlived the iteration. Flat entries span to T.
    """
    steps = trace.steps
    total = len(steps)
    ends = [total] * total
    nxt = total
    for t in range(total - 1, -1, -1):
        ends[t] = nxt
        if steps[t].agents[agent].macro_started:
            nxt = t
    spans: list[tuple[str, int, int]] = []
    for t, st in enumerate(steps):
        if not st.in_tree:
            continue
        rec = st.agents[agent]
        if rec.macro_started:
            spans.append(("macro", t, total))
        t_end = total if rec.macro is None else ends[t]
        spans.append(("prim", t, t_end))
    return spans


def discounted_span_return(rewards: Sequence[float], t0: int, t1: int, gamma: float) -> float:
    """sum_{k=t0}^{t1-1} gamma^(k-t0) rewards[k]."""
    g = 0.0
    w = 1.0
    for k in range(t0, t1):
        g += w * rewards[k]
        w *= gamma
    return g


@dataclass(slots=True)
class IterationRecord:
    steps: list  # (node, ctx_keys, joint) per tree step
    path_nodes: list
    trace: RewardTrace
    protos: list  # per agent: list of (node, level, key) in selection order
    terminal_cause: str


@dataclass(slots=True)
class SearchDiagnostics:
    root_stats: list
    principal_joints: list
    plans: dict
    macros: dict
    domain_knowledge: bool


@dataclass(slots=True)
class SearchResult:
    action: PrimitiveAction
    macro: Optional[MacroActionKind]
    diagnostics: SearchDiagnostics


class _Ctx:
    __slots__ = ("active", "target")

    def __init__(self, active=None, target=None):
        self.active = active
        self.target = target


class DecoupledSearch:
    """One agent's planning tree; models every non-parked vehicle as a
    cooperative participant selecting with its own decoupled statistics."""

    def __init__(
        self,
        world: WorldState,
        desires: Sequence[AgentDesire],
        modeled: Sequence[bool],
        wparams: WorldParams,
        params: SearchParams,
        ego: int,
        weights: RewardWeights = RewardWeights(),
        macro_params: MacroParams = MacroParams(),
        root_macro: Optional[MacroActionKind] = None,
    ):
        self.n = len(world.vehicles)
        if len(desires) != self.n or len(modeled) != self.n:
            raise ValueError("desires and modeled must cover every vehicle")
        self.desires = tuple(desires)
        self.modeled = tuple(modeled)
        self.wparams = wparams
        self.params = params
        self.ego = ego
        self.weights = weights
        self.mp = macro_params
        self.rng = random.Random(params.seed)
        # same value stream as rng.randrange(n) without the wrapper overhead
        self._randbelow = self.rng._randbelow
        self.root = SearchNode(world, self.n)
        self.root_macro = root_macro if not params.flat else None
        self._root_target = None
        if self.root_macro is _OVERTAKE:
            self._root_target = overtake_target(world, ego, desires[ego], macro_params)
            if self._root_target is None:
                self.root_macro = None
        self._lams = tuple(d.cooperation for d in self.desires)
        self._dv = wparams.dv
        self._max_lane = wparams.road.lane_count - 1
        self._des_v = tuple(d.v_des for d in self.desires)
        self._des_l = tuple(d.l_des for d in self.desires)

    # -- selection ---------------------------------------------------------

    def _candidate_prims(self, world: WorldState, agent: int, ckey) -> tuple:
        veh = world.vehicles[agent]
        return _CAND_OF[
            ckey,
            abs(veh.v) >= self._dv,
            veh.lane < self._max_lane,
            veh.lane > 0,
        ]

    def _uct_pick(self, stats: dict, keys: list, parent_n: int):
        eps = self.params.epsilon
        rng = self.rng
        if eps > 0.0 and rng.random() < eps:
            return keys[self._randbelow(len(keys))]
        c = self.params.c_uct
        log_pn = math.log(parent_n) if parent_n > 1 else 0.0
        best = None
        best_v = -math.inf
        for k in keys:
            st = stats.get(k)
            if st is None or st.n == 0:
                return k  # unexplored ranks above everything; first in order
            v = st.q + c * math.sqrt(log_pn / st.n)
            if v > best_v:
                best, best_v = k, v
        return best

    def _refresh_macro(self, node, world, agent, ctx, protos_i):
        """Terminate / select the agent's macro at this decision point.
        Returns True when a new macro was selected.

        The termination and initiation predicates are inlined (semantics
        identical to actions.terminated / actions.available_macros, asserted
        by the regression tests); this runs for every agent at every
        simulated step.
        """
        desire = self.desires[agent]
        mp = self.mp
        me = world.vehicles[agent]
        active = ctx.active
        if active is not None:
            if active is _TDV:
                done = abs(me.v - desire.v_des) <= mp.v_tol
            elif active is _MAKE_ROOM:
                done = self.rng.random() < mp.make_room_beta
            elif active is _MERGE_IN:
                done = me.lane == desire.l_des
            else:  # overtake; target ids are positional inside the search
                other = world.vehicles[ctx.target]
                clearance = me.length + mp.clearance
                done = (
                    me.x > other.x + clearance
                    if me.v >= 0.0
                    else me.x < other.x - clearance
                )
            if not done:
                return False
            ctx.active = None
            ctx.target = None
        avail = _AVAIL_OF[
            me.lane < self._max_lane
            and overtake_target(world, agent, desire, mp) is not None,
            me.lane != desire.l_des,
            abs(me.v - desire.v_des) > mp.v_tol,
        ]
        if node is not None:
            kind = self._uct_pick(node.macro_stats[agent], list(avail), node.n_visits)
            protos_i.append((node, "macro", kind))
        elif (
            self.params.domain_knowledge
            and avail[0] is _OVERTAKE
            and self.rng.random() >= self.params.epsilon
        ):
            # rollout bias: prefer the overtake maneuver whenever it applies
            kind = _OVERTAKE
        else:
            kind = avail[self._randbelow(len(avail))]
        ctx.active = kind
        ctx.target = (
            overtake_target(world, agent, desire, self.mp) if kind is _OVERTAKE else None
        )
        return True

    def _select_tree(self, node, world, ctxs, protos):
        joint = []
        ckeys = []
        started = [False] * self.n
        flat = self.params.flat
        for i in range(self.n):
            if not self.modeled[i]:
                joint.append(PrimitiveAction.DO_NOTHING)
                ckeys.append(None)
                continue
            if flat:
                ckey = _ROOT
            else:
                started[i] = self._refresh_macro(node, world, i, ctxs[i], protos[i])
                ckey = ctxs[i].active
            veh = world.vehicles[i]
            keys = _KEYS_OF[
                ckey,
                abs(veh.v) >= self._dv,
                veh.lane < self._max_lane,
                veh.lane > 0,
            ]
            key = self._uct_pick(node.prim_stats[i], keys, node.n_visits)
            protos[i].append((node, "prim", key))
            joint.append(key[1])
            ckeys.append(ckey)
        return tuple(joint), tuple(ckeys), started

    def _overtake_heuristic(self, world, agent, ctx, cands):
        ego = world.vehicles[agent]
        if ctx.target is None:
            return None
        tgt = world.vehicles[ctx.target]
        forward = ego.v >= 0.0
        ahead = (ego.x - tgt.x) if forward else (tgt.x - ego.x)
        if ahead > ego.length + self.mp.clearance:
            back = (
                PrimitiveAction.LANE_RIGHT
                if ego.lane > self.desires[agent].l_des
                else PrimitiveAction.LANE_LEFT
            )
            if back in cands:
                return back
            return PrimitiveAction.DO_NOTHING
        if ego.lane == tgt.lane:
            for a in (PrimitiveAction.LANE_LEFT, PrimitiveAction.LANE_RIGHT):
                if a in cands:
                    return a
        if PrimitiveAction.ACCELERATE in cands:
            return PrimitiveAction.ACCELERATE
        return PrimitiveAction.DO_NOTHING

    def _select_rollout(self, world, ctxs):
        joint = []
        started = [False] * self.n
        flat = self.params.flat
        rng = self.rng
        for i in range(self.n):
            if not self.modeled[i]:
                joint.append(PrimitiveAction.DO_NOTHING)
                continue
            if flat:
                ckey = _ROOT
            else:
                started[i] = self._refresh_macro(None, world, i, ctxs[i], None)
                ckey = ctxs[i].active
            cands = self._candidate_prims(world, i, ckey)
            a = None
            if (
                self.params.domain_knowledge
                and ckey is _OVERTAKE
                and rng.random() >= self.params.epsilon
            ):
                a = self._overtake_heuristic(world, i, ctxs[i], cands)
            if a is None:
                a = cands[self._randbelow(len(cands))]
            joint.append(a)
        return tuple(joint), started

    # -- iteration ---------------------------------------------------------

    def _push_trace(self, trace, world, nworld, joint, hits, started, in_tree):
        # inlined ego_step_reward (bit-identical arithmetic); this runs once
        # per agent per simulated step and dominates with the transition
        w = self.weights
        gamma = w.gamma
        w_col, w_vs = w.w_collision, w.w_v_step
        w_lc, w_ac = w.w_lanechange, w.w_accel
        w_v, w_lane = w.w_v, w.w_lane
        des_v, des_l = self._des_v, self._des_l
        agents = []
        prev = world.vehicles
        nxt = nworld.vehicles
        flat = self.params.flat
        ctxs = self._iter_ctxs
        lft = PrimitiveAction.LANE_LEFT
        rgt = PrimitiveAction.LANE_RIGHT
        acc = PrimitiveAction.ACCELERATE
        dec = PrimitiveAction.DECELERATE
        for i in range(self.n):
            collided = i in hits
            s, s2, a = prev[i], nxt[i], joint[i]
            v_des, l_des = des_v[i], des_l[i]
            r = w_col if collided else 0.0
            r -= w_vs * abs(s2.v - v_des)
            if a is lft or a is rgt:
                r -= w_lc
            elif a is acc or a is dec:
                r -= w_ac
            r = r + (
                gamma * -(w_v * abs(s2.v - v_des) + w_lane * abs(s2.lane - l_des))
                - -(w_v * abs(s.v - v_des) + w_lane * abs(s.lane - l_des))
            )
            macro = None
            if not flat and self.modeled[i]:
                macro = ctxs[i].active
            agents.append(AgentTraceStep(r, macro, started[i], collided))
        trace.steps.append(TraceStep(agents, in_tree))

    def run_iteration(self) -> IterationRecord:
        params = self.params
        node = self.root
        world = node.world
        ctxs = [
            _Ctx(self.root_macro, self._root_target) if i == self.ego else _Ctx()
            for i in range(self.n)
        ]
        self._iter_ctxs = ctxs
        trace = RewardTrace()
        steps = []
        path_nodes = [node]
        protos = [[] for _ in range(self.n)]
        t = 0
        cause = None
        while True:
            if node.terminal:
                cause = "collision"
                break
            if t >= params.max_depth:
                cause = "depth"
                break
            joint, ckeys, started = self._select_tree(node, world, ctxs, protos)
            nworld, hits = advance(world, joint, self.wparams, params.search_substep)
            self._push_trace(trace, world, nworld, joint, hits, started, True)
            steps.append((node, ckeys, joint))
            t += 1
            child = node.children.get(joint)
            if child is None:
                child = SearchNode(nworld, self.n, terminal=bool(hits))
                node.children[joint] = child
                path_nodes.append(child)
                world = nworld
                if hits:
                    cause = "collision"
                break
            path_nodes.append(child)
            node = child
            world = nworld
            if hits:
                cause = "collision"
                break
        if cause is None:
            while t < params.max_depth:
                joint, started = self._select_rollout(world, ctxs)
                nworld, hits = advance(world, joint, self.wparams, params.search_substep)
                self._push_trace(trace, world, nworld, joint, hits, started, False)
                t += 1
                world = nworld
                if hits:
                    cause = "collision"
                    break
            if cause is None:
                cause = "simulation_end"
        record = IterationRecord(steps, path_nodes, trace, protos, cause)
        return record

    def backpropagate(self, record: IterationRecord):
        """Update every visited statistic with its hierarchically bounded,
        cooperative, discounted return."""
        trace = record.trace
        total = len(trace.steps)
        n = self.n
        gamma = self.params.gamma
        lams = self._lams
        egos = [
            [st.agents[i].ego_reward for st in trace.steps] for i in range(n)
        ]
        sums = [0.0] * total
        for i in range(n):
            ei = egos[i]
            for k in range(total):
                sums[k] += ei[k]
        prim_gs = [None] * n
        for i in range(n):
            if not self.modeled[i]:
                continue
            lam = lams[i]
            ei = egos[i]
            coop = [ei[k] + lam * (sums[k] - ei[k]) for k in range(total)]
            spans = entry_spans(trace, i)
            plist = record.protos[i]
            if len(spans) != len(plist):
                raise RuntimeError("trace/entry bookkeeping mismatch")
            gs = []
            for (level, t0, t1), (nd, plevel, key) in zip(spans, plist):
                if level != plevel:
                    raise RuntimeError("trace/entry ordering mismatch")
                g = discounted_span_return(coop, t0, t1, gamma)
                table = nd.macro_stats[i] if level == "macro" else nd.prim_stats[i]
                st = table.get(key)
                if st is None:
                    st = table[key] = AgentStat()
                st.update(g)
                if level == "prim":
                    gs.append(g)
            prim_gs[i] = gs
        for idx, (nd, ckeys, joint) in enumerate(record.steps):
            js = nd.joint_stats.get((ckeys, joint))
            if js is None:
                js = nd.joint_stats[(ckeys, joint)] = JointStat(n)
            js.n += 1
            m = js.n
            for i in range(n):
                if prim_gs[i] is None:
                    continue
                g = prim_gs[i][idx]
                js.q[i] += (g - js.q[i]) / m
        for nd in record.path_nodes:
            nd.n_visits += 1

    # -- final selection & diagnostics --------------------------------------

    def _macro_table(self, agent: int) -> dict:
        """Macro-level (n, q) at the root, folding in a carried-over macro
        that never re-entered macro selection."""
        table = {
            k: (st.n, st.q) for k, st in self.root.macro_stats[agent].items() if st.n > 0
        }
        carried = self.root_macro if agent == self.ego else None
        if carried is not None:
            n_c = 0
            qw = 0.0
            for (ckey, _a), st in self.root.prim_stats[agent].items():
                if ckey is carried and st.n > 0:
                    n_c += st.n
                    qw += st.n * st.q
            if n_c > 0:
                old_n, old_q = table.get(carried, (0, 0.0))
                tot = old_n + n_c
                table[carried] = (tot, (old_n * old_q + qw) / tot)
        return table

    def _pick_final(self, items, index_of):
        """items: (key, n, q). Applies the final rule with deterministic
        lowest-index tie-breaking."""
        rule = self.params.final_rule
        best = None
        for key, n, q in items:
            if n < 1:
                continue
            score = n if rule == "visits" else q
            if best is None or score > best[0] or (
                score == best[0] and index_of[key] < index_of[best[1]]
            ):
                best = (score, key)
        return best[1] if best else None

    def final_selection(self):
        ego = self.ego
        if self.params.flat:
            items = [
                (a, st.n, st.q)
                for (ck, a), st in self.root.prim_stats[ego].items()
                if ck is _ROOT
            ]
            act = self._pick_final(items, PRIMITIVE_INDEX)
            return act or PrimitiveAction.DO_NOTHING, None
        table = self._macro_table(ego)
        macro = self._pick_final(
            [(k, n, q) for k, (n, q) in table.items()], MACRO_INDEX
        )
        if macro is None:
            return PrimitiveAction.DO_NOTHING, None
        items = [
            (a, st.n, st.q)
            for (ck, a), st in self.root.prim_stats[ego].items()
            if ck is macro
        ]
        act = self._pick_final(items, PRIMITIVE_INDEX)
        return act or PrimitiveAction.DO_NOTHING, macro

    def ranked_root_actions(self) -> list:
        """Ego's visited root actions in final-rule preference order, as
        (primitive, macro-or-None) pairs; the head equals final_selection()."""
        ego = self.ego
        rule = self.params.final_rule

        def order(items, index_of):
            scored = [
                (n if rule == "visits" else q, -index_of[k], k)
                for k, n, q in items
                if n > 0
            ]
            scored.sort(reverse=True)
            return [k for _s, _i, k in scored]

        if self.params.flat:
            items = [
                (a, st.n, st.q)
                for (ck, a), st in self.root.prim_stats[ego].items()
                if ck is _ROOT
            ]
            return [(a, None) for a in order(items, PRIMITIVE_INDEX)]
        table = self._macro_table(ego)
        ranked = []
        seen = set()
        for macro in order([(k, n, q) for k, (n, q) in table.items()], MACRO_INDEX):
            items = [
                (a, st.n, st.q)
                for (ck, a), st in self.root.prim_stats[ego].items()
                if ck is macro
            ]
            for a in order(items, PRIMITIVE_INDEX):
                if a not in seen:
                    seen.add(a)
                    ranked.append((a, macro))
        return ranked

    def principal_joints(self) -> list:
        """Greedy max-visit descent through the joint edges."""
        node = self.root
        joints = []
        while node.children:
            agg: dict[tuple, int] = {}
            for (_ck, joint), js in node.joint_stats.items():
                agg[joint] = agg.get(joint, 0) + js.n
            if not agg:
                break
            best = max(
                agg.items(),
                key=lambda kv: (kv[1], tuple(-PRIMITIVE_INDEX[a] for a in kv[0])),
            )[0]
            child = node.children.get(best)
            if child is None:
                break
            joints.append(best)
            node = child
        return joints

    def diagnostics(self) -> SearchDiagnostics:
        root_stats = []
        for i in range(self.n):
            if not self.modeled[i]:
                continue
            for k, (n, q) in sorted(
                self._macro_table(i).items(), key=lambda kv: MACRO_INDEX[kv[0]]
            ):
                root_stats.append((i, "macro", "root", k.value, n, q))
            for (ck, a), st in self.root.prim_stats[i].items():
                if st.n > 0:
                    root_stats.append(
                        (i, "prim", ck.value if ck else "", a.symbol, st.n, st.q)
                    )
        joints = self.principal_joints()
        plans = {
            i: " ".join(j[i].symbol for j in joints)
            for i in range(self.n)
            if self.modeled[i]
        }
        macros = {}
        if not self.params.flat:
            for i in range(self.n):
                if not self.modeled[i]:
                    continue
                table = self._macro_table(i)
                best = self._pick_final([(k, n, q) for k, (n, q) in table.items()], MACRO_INDEX)
                macros[i] = best.value if best else ""
        return SearchDiagnostics(
            root_stats, joints, plans, macros, self.params.domain_knowledge
        )

    def run(self) -> SearchResult:
        for _ in range(self.params.iterations):
            record = self.run_iteration()
            self.backpropagate(record)
        action, macro = self.final_selection()
        return SearchResult(action, macro, self.diagnostics())


def run_search(
    world: WorldState,
    desires: Sequence[AgentDesire],
    modeled: Sequence[bool],
    wparams: WorldParams,
    params: SearchParams,
    ego: int,
    weights: RewardWeights = RewardWeights(),
    macro_params: MacroParams = MacroParams(),
    root_macro: Optional[MacroActionKind] = None,
) -> SearchResult:
    search = DecoupledSearch(
        world, desires, modeled, wparams, params, ego, weights, macro_params, root_macro
    )
    return search.run()


def plan_return(
    world: WorldState,
    joints: Sequence[tuple],
    desires: Sequence[AgentDesire],
    wparams: WorldParams,
    weights: RewardWeights,
    ego: int,
    gamma: float = 1.0,
    substep: float = 0.5,
) -> float:
    """Cumulated cooperative reward of replaying a plan from `world`;
    gamma=1 gives the undiscounted evaluation metric."""
    total = 0.0
    w = 1.0
    cur = world
    lam = desires[ego].cooperation
    n = len(world.vehicles)
    for joint in joints:
        nxt, hits = advance(cur, joint, wparams, substep)
        egos = [
            ego_step_reward(
                cur.vehicles[i], nxt.vehicles[i], joint[i], i in hits, desires[i], weights
            )
            for i in range(n)
        ]
        total += w * cooperative_reward(ego, egos, lam)
        w *= gamma
        cur = nxt
        if hits:
            break
    return total

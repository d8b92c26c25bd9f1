"""Intended trace semantics, composed execution, and the realizability check.

The oracle enumerates, by brute force, every trace the choreography allows
under the *enforced* semantics:

* within one sub-collaboration, starting-role events come first, then the
  remaining participants, then the terminating roles that did not also
  start;
* strong sequencing orders every terminating-role event of the left side
  before every starting-role event of the right side, on top of each
  role's own order;
* weak sequencing keeps only the per-role order;
* a choice contributes the union of its branches, loops unroll up to a
  bound, parallel composition interleaves freely.

The system side executes the derived machines jointly: one enabled action
per step, a reliable unordered message pool, and choice pseudostates of
passive roles resolved to whatever branch the decider took.  Complete runs
(where every machine reached its final state) yield traces of domain events
only; coordination messages stay hidden.  Realizability compares the two
trace sets exactly and also reports deadlocks and send/receive mismatches.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

from .derivation import derive_all, ensure_derivable, flatten
from .errors import InvalidModelError, TooLargeError
from .model import (
    Choice,
    ChoreographyTerm,
    CoordMessage,
    DomainAction,
    Epsilon,
    MsgKind,
    Parallel,
    ReceiveAction,
    ROOT_PATH,
    Role,
    SendAction,
    StateKind,
    StateMachine,
    StrongLoop,
    StrongSeq,
    SubCollab,
    Violation,
    WeakLoop,
    WeakSeq,
    child_path,
    iter_actions,
    iter_term,
    term_label,
    validate_machine,
    validate_term,
)
from .rolesets import RoleSets, role_sets, strong_seq_sets, weak_seq_sets

Event = tuple[str, Role]  # (collaboration, role)
Trace = tuple[Event, ...]

DEFAULT_CAP = 10**6


def render_trace(trace: Trace) -> str:
    return " ".join(f"{collab}.{role}" for collab, role in trace)


class _Budget:
    def __init__(self, cap: int, what: str):
        self.cap = cap
        self.what = what
        self.used = 0

    def charge(self, amount: int = 1) -> None:
        self.used += amount
        if self.used > self.cap:
            raise TooLargeError(self.cap, self.what)


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

def _leaf_traces(leaf: SubCollab) -> set[Trace]:
    starters = sorted(leaf.sr)
    middle = sorted(leaf.pr - leaf.sr - leaf.tr)
    closers = sorted(leaf.tr - leaf.sr)
    out: set[Trace] = set()
    for p1 in itertools.permutations(starters):
        for p2 in itertools.permutations(middle):
            for p3 in itertools.permutations(closers):
                out.add(tuple((leaf.name, r) for r in p1 + p2 + p3))
    return out


def _merge(
    ta: Trace,
    tb: Trace,
    per_role: bool,
    tr1: frozenset[Role] | None,
    sr2: frozenset[Role] | None,
    budget: _Budget,
) -> set[Trace]:
    """All shuffles of ta and tb that respect per-role order and the barrier."""
    n = len(ta)
    roles_left: list[frozenset[Role]] = [frozenset()] * (n + 1)
    barrier_left = [False] * (n + 1)
    for i in range(n - 1, -1, -1):
        roles_left[i] = roles_left[i + 1] | {ta[i][1]}
        barrier_left[i] = barrier_left[i + 1] or (tr1 is not None and ta[i][1] in tr1)

    memo: dict[tuple[int, int], set[Trace]] = {}

    def go(i: int, j: int) -> set[Trace]:
        key = (i, j)
        if key in memo:
            return memo[key]
        if i == n and j == len(tb):
            return {()}
        out: set[Trace] = set()
        if i < n:
            head = ta[i]
            out.update((head,) + suffix for suffix in go(i + 1, j))
        if j < len(tb):
            head = tb[j]
            allowed = not (per_role and head[1] in roles_left[i])
            if allowed and sr2 is not None and head[1] in sr2 and barrier_left[i]:
                allowed = False
            if allowed:
                out.update((head,) + suffix for suffix in go(i, j + 1))
        budget.charge(len(out))
        memo[key] = out
        return out

    return go(0, 0)


def _combine(
    first: set[Trace],
    second: set[Trace],
    per_role: bool,
    barrier: tuple[frozenset[Role], frozenset[Role]] | None,
    budget: _Budget,
) -> set[Trace]:
    tr1, sr2 = barrier if barrier is not None else (None, None)
    out: set[Trace] = set()
    for ta in first:
        for tb in second:
            out |= _merge(ta, tb, per_role, tr1, sr2, budget)
    return out


def _term_traces(
    term: ChoreographyTerm,
    path: str,
    sets: dict[str, RoleSets],
    loop_bound: int,
    budget: _Budget,
) -> set[Trace]:
    if isinstance(term, Epsilon):
        return {()}
    if isinstance(term, SubCollab):
        traces = _leaf_traces(term)
        budget.charge(len(traces))
        return traces
    if isinstance(term, (StrongSeq, WeakSeq)):
        left = _term_traces(term.left, child_path(path, "left"), sets, loop_bound, budget)
        right = _term_traces(term.right, child_path(path, "right"), sets, loop_bound, budget)
        barrier = None
        if isinstance(term, StrongSeq):
            barrier = (sets[child_path(path, "left")].tr, sets[child_path(path, "right")].sr)
        return _combine(left, right, True, barrier, budget)
    if isinstance(term, Choice):
        left = _term_traces(term.left, child_path(path, "left"), sets, loop_bound, budget)
        right = _term_traces(term.right, child_path(path, "right"), sets, loop_bound, budget)
        return left | right
    if isinstance(term, Parallel):
        left = _term_traces(term.left, child_path(path, "left"), sets, loop_bound, budget)
        right = _term_traces(term.right, child_path(path, "right"), sets, loop_bound, budget)
        return _combine(left, right, False, None, budget)
    if isinstance(term, (StrongLoop, WeakLoop)):
        strong = isinstance(term, StrongLoop)
        body = _term_traces(term.body, child_path(path, "body"), sets, loop_bound, budget)
        body_sets = sets[child_path(path, "body")]
        rest = _term_traces(term.exit, child_path(path, "exit"), sets, loop_bound, budget)
        rest_sets = sets[child_path(path, "exit")]
        total = set(rest)
        for _ in range(loop_bound):
            barrier = (body_sets.tr, rest_sets.sr) if strong else None
            rest = _combine(body, rest, True, barrier, budget)
            rest_sets = (
                strong_seq_sets(body_sets, rest_sets)
                if strong
                else weak_seq_sets(body_sets, rest_sets)
            )
            total |= rest
        return total
    raise TypeError(f"not a choreography term: {term!r}")


def oracle_traces(
    term: ChoreographyTerm, loop_bound: int = 1, cap: int = DEFAULT_CAP
) -> frozenset[Trace]:
    """Every intended trace of the choreography, loops unrolled up to the bound."""
    violations = validate_term(term)
    if violations:
        raise InvalidModelError(violations)
    budget = _Budget(cap, "oracle trace enumeration")
    return frozenset(_term_traces(term, ROOT_PATH, role_sets(term), loop_bound, budget))


# ---------------------------------------------------------------------------
# Composed execution of the derived machines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _DomainStep:
    collab: str
    role: Role

    def render(self) -> str:
        return f"{self.collab}.{self.role}"


@dataclass(frozen=True)
class _SendStep:
    msg: CoordMessage

    def render(self) -> str:
        return f"!{self.msg.render()}"


@dataclass(frozen=True)
class _ReceiveStep:
    msgs: tuple[CoordMessage, ...]  # one consecutive run; completes in any order

    def render(self) -> str:
        return " ".join(f"?{m.render()}" for m in self.msgs)


@dataclass(frozen=True)
class BlockedAction:
    role: Role
    state: str
    action: str


@dataclass(frozen=True)
class Deadlock:
    """A reachable, non-final configuration with no enabled step."""

    resolution: tuple[tuple[str, int], ...]  # (choice path, taken branch)
    blocked: tuple[BlockedAction, ...]


def _MSG_KEY(m: CoordMessage) -> tuple[str, str, str, str]:
    return (m.kind.value, m.src, m.dst, m.label)


def _compile_steps(actions) -> tuple:
    steps: list = []
    pending: list[CoordMessage] = []
    for action in actions:
        if isinstance(action, ReceiveAction):
            pending.append(action.msg)
            continue
        if pending:
            steps.append(_ReceiveStep(tuple(sorted(pending, key=_MSG_KEY))))
            pending = []
        if isinstance(action, DomainAction):
            steps.append(_DomainStep(action.collab, action.role))
        elif isinstance(action, SendAction):
            steps.append(_SendStep(action.msg))
    if pending:
        steps.append(_ReceiveStep(tuple(sorted(pending, key=_MSG_KEY))))
    return tuple(steps)


class _System:
    """The flattened machines, compiled for joint exhaustive execution."""

    def __init__(self, machines: dict[Role, StateMachine], term: ChoreographyTerm):
        self.roles = sorted(machines)
        self.steps: dict[Role, dict[str, tuple]] = {}
        self.kinds: dict[Role, dict[str, StateKind]] = {}
        self.succ: dict[Role, dict[str, list[str]]] = {}
        self.initials: dict[Role, str] = {}
        self.pseudo_choice: dict[Role, dict[str, str]] = {}

        choice_paths = {
            term_label(node): path
            for path, node in iter_term(term)
            if isinstance(node, Choice)
        }
        self.choice_paths = sorted(choice_paths.values())

        for role, machine in machines.items():
            flat = flatten(machine)
            self.steps[role] = {s.id: _compile_steps(s.actions) for s in flat.states}
            self.kinds[role] = {s.id: s.kind for s in flat.states}
            succ: dict[str, list[str]] = {s.id: [] for s in flat.states}
            for t in flat.transitions:
                succ[t.source].append(t.target)
            self.succ[role] = succ
            self.initials[role] = flat.initial
            self.pseudo_choice[role] = {
                s.id: choice_paths[s.name]
                for s in flat.states
                if s.kind is StateKind.CHOICE and s.name in choice_paths
            }

        # enabling order inside one sub-collaboration: which (collab, role)
        # events must be done before a given role may act
        self.need: dict[tuple[str, Role], frozenset[tuple[str, Role]]] = {}
        for _, node in iter_term(term):
            if not isinstance(node, SubCollab):
                continue
            starters = node.sr
            middle = node.pr - node.sr - node.tr
            closers = node.tr - node.sr
            first = frozenset((node.name, r) for r in starters)
            second = first | frozenset((node.name, r) for r in middle)
            for r in starters:
                self.need[(node.name, r)] = frozenset()
            for r in middle:
                self.need[(node.name, r)] = first
            for r in closers:
                self.need[(node.name, r)] = second

    def normalize(self, role: Role, state: str, done_steps: int, resolution) -> tuple[str, int]:
        hops = 0
        while True:
            if done_steps < len(self.steps[role][state]):
                return state, done_steps
            kind = self.kinds[role][state]
            if kind is StateKind.FINAL:
                return state, done_steps
            if kind is StateKind.CHOICE:
                path = self.pseudo_choice[role].get(state)
                if path is None:
                    raise InvalidModelError(
                        [Violation(state, f"choice pseudostate of {role} matches no choice node")]
                    )
                state = self.succ[role][state][resolution[path]]
            else:
                successors = self.succ[role][state]
                if len(successors) != 1:
                    raise InvalidModelError(
                        [Violation(state, f"state of {role} needs exactly one successor")]
                    )
                state = successors[0]
            done_steps = 0
            hops += 1
            if hops > len(self.kinds[role]) + 1:
                raise InvalidModelError([Violation(state, f"machine of {role} cycles")])


def _explore(
    machines: dict[Role, StateMachine],
    term: ChoreographyTerm,
    cap: int,
) -> tuple[frozenset[Trace], tuple[Deadlock, ...]]:
    for role, machine in machines.items():
        violations = validate_machine(machine)
        if violations:
            raise InvalidModelError(violations)

    system = _System(machines, term)
    budget = _Budget(cap, "configuration exploration")
    traces: set[Trace] = set()
    deadlocks: dict[tuple, Deadlock] = {}

    for picks in itertools.product((0, 1), repeat=len(system.choice_paths)):
        resolution = dict(zip(system.choice_paths, picks))
        res_key = tuple(sorted(resolution.items()))
        traces |= _run(system, resolution, res_key, budget, deadlocks)
    return frozenset(traces), tuple(deadlocks.values())


def _run(system, resolution, res_key, budget, deadlocks) -> set[Trace]:
    roles = system.roles
    init_positions = tuple(
        system.normalize(role, system.initials[role], 0, resolution) for role in roles
    )
    init = (init_positions, (), frozenset())
    memo: dict[tuple, frozenset[Trace]] = {}

    def moves(config):
        positions, pool_items, done = config
        pool = Counter(dict(pool_items))
        out = []
        for idx, role in enumerate(roles):
            state, k = positions[idx]
            steps = system.steps[role][state]
            if k >= len(steps):
                continue  # parked on final
            step = steps[k]
            event = None
            new_pool = pool_items
            new_done = done
            if isinstance(step, _DomainStep):
                if not system.need.get((step.collab, step.role), frozenset()) <= done:
                    continue
                event = (step.collab, step.role)
                new_done = done | {event}
            elif isinstance(step, _SendStep):
                next_pool = pool.copy()
                next_pool[_MSG_KEY(step.msg)] += 1
                new_pool = tuple(sorted(next_pool.items()))
            else:
                keys = Counter(_MSG_KEY(m) for m in step.msgs)
                if any(pool[key] < count for key, count in keys.items()):
                    continue
                next_pool = pool - keys
                assert all(v >= 0 for v in next_pool.values())
                new_pool = tuple(sorted(next_pool.items()))
            position = system.normalize(role, state, k + 1, resolution)
            new_positions = positions[:idx] + (position,) + positions[idx + 1:]
            out.append((event, (new_positions, new_pool, new_done)))
        return out

    def all_final(config):
        positions = config[0]
        return all(
            system.kinds[role][state] is StateKind.FINAL
            for role, (state, _) in zip(roles, positions)
        )

    def blocked_info(config):
        positions = config[0]
        blocked = []
        for role, (state, k) in zip(roles, positions):
            steps = system.steps[role][state]
            if k < len(steps):
                blocked.append(BlockedAction(role, state, steps[k].render()))
            elif system.kinds[role][state] is not StateKind.FINAL:
                blocked.append(BlockedAction(role, state, "(structurally stuck)"))
        return tuple(blocked)

    def suffixes(config) -> frozenset[Trace]:
        cached = memo.get(config)
        if cached is not None:
            return cached
        if all_final(config):
            return frozenset({()})
        enabled = moves(config)
        if not enabled:
            deadlocks.setdefault((res_key, config), Deadlock(res_key, blocked_info(config)))
            result = frozenset()
        else:
            out: set[Trace] = set()
            for event, nxt in enabled:
                for suffix in suffixes(nxt):
                    out.add(((event,) + suffix) if event is not None else suffix)
            budget.charge(len(out) + 1)
            result = frozenset(out)
        memo[config] = result
        return result

    return set(suffixes(init))


def system_traces(
    machines: dict[Role, StateMachine],
    term: ChoreographyTerm,
    loop_bound: int = 0,
    cap: int = DEFAULT_CAP,
) -> frozenset[Trace]:
    """Exhaustive joint execution; only complete runs contribute traces."""
    del loop_bound  # derived machines never contain loops
    traces, _ = _explore(machines, term, cap)
    return traces


# ---------------------------------------------------------------------------
# Realizability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckReport:
    equivalent: bool
    missing_traces: tuple[Trace, ...]  # intended but not realized (first 10)
    extra_traces: tuple[Trace, ...]  # realized but not intended (first 10)
    deadlocks: tuple[Deadlock, ...]
    complementarity_ok: bool
    complementarity_problems: tuple[str, ...]
    flowm_sends: int
    choicem_sends: int
    oracle_count: int
    system_count: int
    strict_barrier_diagnostics: tuple[tuple[str, Trace], ...]

    @property
    def ok(self) -> bool:
        return self.equivalent and not self.deadlocks and self.complementarity_ok


def count_coordination(machines: dict[Role, StateMachine]) -> tuple[int, int]:
    """(flowm send count, choicem send count) across all machines."""
    flowm = choicem = 0
    for machine in machines.values():
        for action in iter_actions(machine):
            if isinstance(action, SendAction):
                if action.msg.kind is MsgKind.FLOWM:
                    flowm += 1
                else:
                    choicem += 1
    return flowm, choicem


def check_complementarity(machines: dict[Role, StateMachine]) -> tuple[bool, tuple[str, ...]]:
    """Sends and receives must match one-to-one and sit in the right machines."""
    sends: Counter = Counter()
    receives: Counter = Counter()
    problems: list[str] = []
    for role, machine in machines.items():
        for action in iter_actions(machine):
            if isinstance(action, SendAction):
                sends[_MSG_KEY(action.msg)] += 1
                if action.msg.src != role:
                    problems.append(f"send {action.msg.render()} found in machine {role}")
            elif isinstance(action, ReceiveAction):
                receives[_MSG_KEY(action.msg)] += 1
                if action.msg.dst != role:
                    problems.append(f"receive {action.msg.render()} found in machine {role}")
    for key in sorted(set(sends) | set(receives)):
        if sends[key] != receives[key]:
            kind, src, dst, label = key
            problems.append(
                f"{kind}({src}→{dst},{label}): {sends[key]} sends vs {receives[key]} receives"
            )
    return not problems, tuple(problems)


def _barrier_diagnostics(
    term: ChoreographyTerm,
    sets: dict[str, RoleSets],
    traces: frozenset[Trace],
) -> tuple[tuple[str, Trace], ...]:
    """Strong-sequencing nodes where a non-terminating left-side event can
    still trail a right-side starter event (the enforced-semantics gap)."""
    from .model import leaf_names

    out = []
    for path, node in iter_term(term):
        if not isinstance(node, StrongSeq):
            continue
        left_collabs = leaf_names(node.left)
        right_collabs = leaf_names(node.right)
        tr1 = sets[child_path(path, "left")].tr
        sr2 = sets[child_path(path, "right")].sr
        witness = None
        for trace in sorted(traces):
            started = False
            for collab, role in trace:
                if collab in right_collabs and role in sr2:
                    started = True
                elif started and collab in left_collabs and role not in tr1:
                    witness = trace
                    break
            if witness:
                break
        if witness:
            out.append((path, witness))
    return tuple(out)


def check_machines(
    term: ChoreographyTerm,
    machines: dict[Role, StateMachine],
    loop_bound: int = 0,
    cap: int = DEFAULT_CAP,
) -> CheckReport:
    """Compare the composed machines against the oracle for one term."""
    ensure_derivable(term)
    system, deadlocks = _explore(machines, term, cap)
    oracle = oracle_traces(term, loop_bound, cap)
    missing = tuple(sorted(oracle - system)[:10])
    extra = tuple(sorted(system - oracle)[:10])
    comp_ok, problems = check_complementarity(machines)
    flowm, choicem = count_coordination(machines)
    sets = role_sets(term)
    return CheckReport(
        equivalent=not missing and not extra,
        missing_traces=missing,
        extra_traces=extra,
        deadlocks=deadlocks,
        complementarity_ok=comp_ok,
        complementarity_problems=problems,
        flowm_sends=flowm,
        choicem_sends=choicem,
        oracle_count=len(oracle),
        system_count=len(system),
        strict_barrier_diagnostics=_barrier_diagnostics(term, sets, system),
    )


def check_realizability(
    term: ChoreographyTerm, loop_bound: int = 0, cap: int = DEFAULT_CAP
) -> CheckReport:
    """Derive all machines and check that they realize the choreography."""
    ensure_derivable(term)
    violations = validate_term(term)
    if violations:
        raise InvalidModelError(violations)
    machines = derive_all(term, role_sets(term))
    return check_machines(term, machines, loop_bound, cap)

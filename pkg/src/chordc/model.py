"""Core domain types: choreography terms, roles, and derived state machines.

A choreography is a tree of sub-collaborations composed with sequencing,
choice, parallel and loop operators.  Each sub-collaboration declares who
starts it (``sr``), who finishes it (``tr``) and who takes part at all
(``pr``).  Derivation turns such a tree into one state machine per role;
those machines exchange ``flowm``/``choicem`` coordination messages.

Everything in this module is an immutable value.  Validation never raises:
``validate_term`` and ``validate_machine`` return lists of violations so
broken models can still be inspected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Union

Role = str

ROOT_PATH = "/"


def child_path(path: str, segment: str) -> str:
    """Extend a term-node path by one child segment."""
    return path + segment if path.endswith("/") else f"{path}/{segment}"


@dataclass(frozen=True)
class Violation:
    """One broken invariant, anchored at a node path."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


# ---------------------------------------------------------------------------
# Choreography terms
# ---------------------------------------------------------------------------

def _frozen(values) -> frozenset:
    return values if isinstance(values, frozenset) else frozenset(values)


@dataclass(frozen=True)
class SubCollab:
    """A leaf collaboration: one joint activity over a set of roles."""

    name: str
    sr: frozenset[Role]
    tr: frozenset[Role]
    pr: frozenset[Role]

    def __post_init__(self):
        object.__setattr__(self, "sr", _frozen(self.sr))
        object.__setattr__(self, "tr", _frozen(self.tr))
        object.__setattr__(self, "pr", _frozen(self.pr))


@dataclass(frozen=True)
class StrongSeq:
    """Left completes fully before right starts."""

    left: "ChoreographyTerm"
    right: "ChoreographyTerm"
    name: str | None = None


@dataclass(frozen=True)
class WeakSeq:
    """Per-role ordering only; no cross-role barrier."""

    left: "ChoreographyTerm"
    right: "ChoreographyTerm"
    name: str | None = None


@dataclass(frozen=True)
class Choice:
    """Exclusive alternative; both branches must share a single starting role."""

    left: "ChoreographyTerm"
    right: "ChoreographyTerm"
    name: str | None = None


@dataclass(frozen=True)
class Parallel:
    """Both components run independently (no derivation rules yet)."""

    left: "ChoreographyTerm"
    right: "ChoreographyTerm"
    name: str | None = None


@dataclass(frozen=True)
class StrongLoop:
    """Repeat body with a strong junction, then run exit."""

    body: "ChoreographyTerm"
    exit: "ChoreographyTerm"
    name: str | None = None


@dataclass(frozen=True)
class WeakLoop:
    """Repeat body with a weak junction, then run exit."""

    body: "ChoreographyTerm"
    exit: "ChoreographyTerm"
    name: str | None = None


@dataclass(frozen=True)
class Epsilon:
    """The empty collaboration; involves no roles."""


ChoreographyTerm = Union[
    SubCollab, StrongSeq, WeakSeq, Choice, Parallel, StrongLoop, WeakLoop, Epsilon
]

#: document/serialization kind tags, also used to synthesize composite labels
TERM_KINDS = {
    SubCollab: "subcollab",
    StrongSeq: "strong_seq",
    WeakSeq: "weak_seq",
    Choice: "choice",
    Parallel: "parallel",
    StrongLoop: "strong_loop",
    WeakLoop: "weak_loop",
    Epsilon: "epsilon",
}


def term_children(term: ChoreographyTerm) -> tuple[tuple[str, ChoreographyTerm], ...]:
    """The (segment, child) pairs of a term node, left to right."""
    if isinstance(term, (StrongSeq, WeakSeq, Choice, Parallel)):
        return (("left", term.left), ("right", term.right))
    if isinstance(term, (StrongLoop, WeakLoop)):
        return (("body", term.body), ("exit", term.exit))
    return ()


def iter_term(term: ChoreographyTerm, path: str = ROOT_PATH) -> Iterator[tuple[str, ChoreographyTerm]]:
    """Preorder walk yielding (path, node)."""
    yield path, term
    for segment, child in term_children(term):
        yield from iter_term(child, child_path(path, segment))


def term_label(term: ChoreographyTerm) -> str:
    """Stable human-meaningful label for a term node.

    Leaves use their collaboration name; composites fall back to a
    structural label when the model gave them no name.  Labels name the
    composite states and coordination messages produced by derivation, so
    they must agree across all derived machines.
    """
    if isinstance(term, SubCollab):
        return term.name
    if isinstance(term, Epsilon):
        return "epsilon"
    if term.name:
        return term.name
    kind = TERM_KINDS[type(term)]
    children = ",".join(term_label(child) for _, child in term_children(term))
    return f"{kind}({children})"


def leaf_names(term: ChoreographyTerm) -> frozenset[str]:
    """Names of all sub-collaboration leaves under a term."""
    return frozenset(node.name for _, node in iter_term(term) if isinstance(node, SubCollab))


# ---------------------------------------------------------------------------
# State machines
# ---------------------------------------------------------------------------

class StateKind(str, Enum):
    INITIAL = "initial"
    FINAL = "final"
    SIMPLE = "simple"
    COMPOSITE = "composite"
    CHOICE = "choice"
    JUNCTION = "junction"


class MsgKind(str, Enum):
    FLOWM = "flowm"
    CHOICEM = "choicem"


@dataclass(frozen=True)
class CoordMessage:
    """A coordination message: kind, sender, receiver, owning state label."""

    kind: MsgKind
    src: Role
    dst: Role
    label: str

    def render(self) -> str:
        return f"{self.kind.value.capitalize()}({self.src}→{self.dst},{self.label})"


@dataclass(frozen=True)
class DomainAction:
    """The role's own activity within one sub-collaboration."""

    collab: str
    role: Role

    def render(self) -> str:
        return f"{self.collab}.{self.role}"


@dataclass(frozen=True)
class SendAction:
    msg: CoordMessage

    def render(self) -> str:
        return f"!{self.msg.render()}"


@dataclass(frozen=True)
class ReceiveAction:
    msg: CoordMessage

    def render(self) -> str:
        return f"?{self.msg.render()}"


Action = Union[DomainAction, SendAction, ReceiveAction]


@dataclass(frozen=True)
class Transition:
    id: str
    source: str
    target: str
    label: str | None = None


@dataclass(frozen=True)
class State:
    """One state; composites carry a nested machine fragment in ``children``."""

    id: str
    name: str
    kind: StateKind
    actions: tuple[Action, ...] = ()
    children: "StateMachine | None" = None

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))


@dataclass(frozen=True)
class StateMachine:
    """The derived behavior of a single role."""

    role: Role
    states: tuple[State, ...]
    transitions: tuple[Transition, ...]
    initial: str

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "transitions", tuple(self.transitions))

    def state_by_id(self, state_id: str) -> State:
        for state in self.states:
            if state.id == state_id:
                return state
        raise KeyError(state_id)


def iter_states(sm: StateMachine) -> Iterator[State]:
    """All states of a machine, recursing into composite children."""
    for state in sm.states:
        yield state
        if state.children is not None:
            yield from iter_states(state.children)


def iter_actions(sm: StateMachine) -> Iterator[Action]:
    for state in iter_states(sm):
        yield from state.actions


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_term(term: ChoreographyTerm) -> list[Violation]:
    """Check all term invariants; returns every violation, empty if valid.

    Local-choice violations are computed by the role-set layer but are
    surfaced here as well, so one call reports everything.
    """
    out: list[Violation] = []
    seen_names: dict[str, str] = {}
    for path, node in iter_term(term):
        name = getattr(node, "name", None)
        if name is not None:
            if not name:
                out.append(Violation(path, "name empty"))
            elif name in seen_names:
                out.append(Violation(path, f"duplicate name: {name}"))
            else:
                seen_names[name] = path
        if not isinstance(node, SubCollab):
            continue
        for label, group in (("sr", node.sr), ("tr", node.tr), ("pr", node.pr)):
            if not group:
                out.append(Violation(path, f"{label} empty"))
            if any(not r for r in group):
                out.append(Violation(path, f"{label} contains an empty role id"))
        if not node.sr <= node.pr:
            out.append(Violation(path, "sr ⊄ pr"))
        if not node.tr <= node.pr:
            out.append(Violation(path, "tr ⊄ pr"))

    from .rolesets import check_local_choice  # late import; rolesets depends on this module

    out.extend(check_local_choice(term))
    return out


def _validate_level(
    states: tuple[State, ...],
    transitions: tuple[Transition, ...],
    initial_id: str,
    where: str,
    out: list[Violation],
    seen_ids: set[str],
) -> None:
    by_id: dict[str, State] = {}
    for state in states:
        if state.id in seen_ids:
            out.append(Violation(where, f"duplicate state id: {state.id}"))
        seen_ids.add(state.id)
        by_id[state.id] = state

    initials = [s for s in states if s.kind is StateKind.INITIAL]
    finals = [s for s in states if s.kind is StateKind.FINAL]
    if len(initials) > 1:
        out.append(Violation(where, "multiple initial"))
    elif not initials:
        out.append(Violation(where, "no initial state"))
    if not finals:
        out.append(Violation(where, "no final state"))
    if initials and initials[0].id != initial_id:
        out.append(Violation(where, f"initial field {initial_id!r} does not name the initial state"))

    incoming: dict[str, int] = {s.id: 0 for s in states}
    outgoing: dict[str, int] = {s.id: 0 for s in states}
    adjacency: dict[str, list[str]] = {s.id: [] for s in states}
    for t in transitions:
        src, tgt = by_id.get(t.source), by_id.get(t.target)
        if src is None:
            out.append(Violation(where, f"dangling transition source: {t.id}→{t.source}"))
        if tgt is None:
            out.append(Violation(where, f"dangling transition target: {t.id}→{t.target}"))
        if src is None or tgt is None:
            continue
        outgoing[t.source] += 1
        incoming[t.target] += 1
        adjacency[t.source].append(t.target)
        if src.kind is StateKind.FINAL:
            out.append(Violation(where, f"outgoing transition from final state: {t.id}"))
        if tgt.kind is StateKind.INITIAL:
            out.append(Violation(where, f"transition into initial state: {t.id}"))

    if initials:
        reached = {initials[0].id}
        frontier = [initials[0].id]
        while frontier:
            for nxt in adjacency[frontier.pop()]:
                if nxt not in reached:
                    reached.add(nxt)
                    frontier.append(nxt)
        for state in states:
            if state.id not in reached and state.kind is not StateKind.INITIAL:
                out.append(Violation(where, f"unreachable: {state.id}"))

    for state in states:
        if state.kind is StateKind.CHOICE and outgoing[state.id] < 2:
            out.append(Violation(where, f"choice pseudostate {state.id} needs ≥2 outgoing"))
        if state.kind is StateKind.JUNCTION and incoming[state.id] < 2:
            out.append(Violation(where, f"junction {state.id} needs ≥2 incoming"))
        if state.actions and state.kind is not StateKind.SIMPLE:
            out.append(Violation(where, f"actions on non-simple state: {state.id}"))
        if (state.children is not None) != (state.kind is StateKind.COMPOSITE):
            out.append(Violation(where, f"children present iff composite violated: {state.id}"))
        for action in state.actions:
            if isinstance(action, (SendAction, ReceiveAction)) and action.msg.src == action.msg.dst:
                out.append(Violation(where, f"self-message in {state.id}: {action.render()}"))
        if state.children is not None:
            _validate_level(
                state.children.states,
                state.children.transitions,
                state.children.initial,
                f"{where}/{state.id}",
                out,
                seen_ids,
            )


def validate_machine(sm: StateMachine) -> list[Violation]:
    """Check all machine invariants, recursively through composite states."""
    out: list[Violation] = []
    _validate_level(sm.states, sm.transitions, sm.initial, sm.role or "machine", out, set())
    return out

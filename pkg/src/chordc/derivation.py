"""Derive one state machine per role from a choreography term.

Recursive descent over the term builds, for the requested role, a chain of
fragments:

* a participating leaf becomes a composite state holding a single simple
  state whose action list is ``[receives..., own activity, sends...]``;
* a non-participating leaf contributes nothing (adjacent fragments connect
  directly);
* sequencing joins fragments with a transition; strong sequencing also
  installs the barrier messages: every terminating role of the left side
  sends ``flowm`` to every starting role of the right side (never to
  itself), and the starters receive the complementary set before acting;
* a choice becomes a choice pseudostate and junction around one branch
  fragment per side.  The deciding role appends ``choicem`` sends to each
  branch, addressed to the roles of the other branch that would otherwise
  be left waiting; those roles get a branch composite holding exactly the
  matching receive.

When a barrier or choice-notification has to attach to a fragment whose
boundary is a pseudostate or junction (a composite child), the actions land
on a dedicated simple state next to it, so every coordination action is
generated exactly once per rule application.

Parallel composition and loops have no derivation rules and are refused.

State ids are ``S1, S2, ...`` and transition ids ``T1, T2, ...`` in creation
order (structural preorder, left child first; attachment states as their
rule applies), which makes the output byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import InvalidModelError, UnsupportedConstructError
from .model import (
    Action,
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
    State,
    StateKind,
    StateMachine,
    StrongLoop,
    StrongSeq,
    SubCollab,
    Transition,
    Violation,
    WeakLoop,
    WeakSeq,
    child_path,
    iter_term,
    term_label,
    validate_machine,
    validate_term,
)
from .rolesets import RoleSets, role_sets


def ensure_derivable(term: ChoreographyTerm) -> None:
    """Refuse constructs the derivation has no rules for."""
    for path, node in iter_term(term):
        if isinstance(node, Parallel):
            raise UnsupportedConstructError("Parallel", path)
        if isinstance(node, (StrongLoop, WeakLoop)):
            raise UnsupportedConstructError("Loop", path)


@dataclass
class _BComposite:
    initial: "_BNode"
    simple: "_BNode"
    final: "_BNode"
    transitions: list[Transition]


@dataclass
class _BNode:
    id: str
    name: str
    kind: StateKind
    actions: list[Action] = field(default_factory=list)
    inner: _BComposite | None = None

    def attach_point(self) -> list[Action] | None:
        if self.kind is StateKind.COMPOSITE:
            return self.inner.simple.actions
        if self.kind is StateKind.SIMPLE:
            return self.actions
        return None


@dataclass
class _Frag:
    """A partial machine with one entry and one exit; may be empty."""

    nodes: list[_BNode] = field(default_factory=list)
    transitions: list[Transition] = field(default_factory=list)
    entry: _BNode | None = None
    exit: _BNode | None = None

    @property
    def empty(self) -> bool:
        return self.entry is None


@dataclass
class DerivationContext:
    """Naming counters and inputs for deriving one role's machine."""

    term: ChoreographyTerm
    sets: dict[str, RoleSets]
    role: Role
    i: int = 0
    j: int = 0

    def _sid(self) -> str:
        self.i += 1
        return f"S{self.i}"

    def transition(self, source: str, target: str, label: str | None = None) -> Transition:
        self.j += 1
        return Transition(f"T{self.j}", source, target, label)

    def state(self, kind: StateKind, name: str | None = None) -> _BNode:
        sid = self._sid()
        return _BNode(sid, name if name is not None else sid, kind)

    def simple(self, actions: list[Action]) -> _BNode:
        node = self.state(StateKind.SIMPLE)
        node.actions = list(actions)
        return node

    def composite(self, name: str, actions: list[Action]) -> _BNode:
        comp = self.state(StateKind.COMPOSITE, name)
        initial = self.state(StateKind.INITIAL, "initial")
        simple = self.simple(actions)
        final = self.state(StateKind.FINAL, "final")
        comp.inner = _BComposite(
            initial,
            simple,
            final,
            [self.transition(initial.id, simple.id), self.transition(simple.id, final.id)],
        )
        return comp

    # -- fragment algebra ----------------------------------------------------

    def single(self, node: _BNode) -> _Frag:
        return _Frag([node], [], node, node)

    def join(self, first: _Frag, second: _Frag) -> _Frag:
        if first.empty:
            return second
        if second.empty:
            return first
        link = self.transition(first.exit.id, second.entry.id)
        return _Frag(
            first.nodes + second.nodes,
            first.transitions + second.transitions + [link],
            first.entry,
            second.exit,
        )

    def append_actions(self, frag: _Frag, actions: list[Action]) -> _Frag:
        if frag.empty:
            return self.single(self.simple(actions))
        point = frag.exit.attach_point()
        if point is not None:
            point.extend(actions)
            return frag
        tail = self.simple(actions)
        frag.transitions.append(self.transition(frag.exit.id, tail.id))
        frag.nodes.append(tail)
        frag.exit = tail
        return frag

    def prepend_actions(self, frag: _Frag, actions: list[Action]) -> _Frag:
        if frag.empty:
            return self.single(self.simple(actions))
        point = frag.entry.attach_point()
        if point is not None:
            point[0:0] = actions
            return frag
        head = self.simple(actions)
        frag.transitions.append(self.transition(head.id, frag.entry.id))
        frag.nodes.insert(0, head)
        frag.entry = head
        return frag


def _build(ctx: DerivationContext, term: ChoreographyTerm, path: str) -> _Frag:
    role = ctx.role

    if isinstance(term, Epsilon):
        return _Frag()

    if isinstance(term, SubCollab):
        if role not in term.pr:
            return _Frag()
        return ctx.single(ctx.composite(term.name, [DomainAction(term.name, role)]))

    if isinstance(term, (StrongSeq, WeakSeq)):
        left_path = child_path(path, "left")
        right_path = child_path(path, "right")
        first = _build(ctx, term.left, left_path)
        second = _build(ctx, term.right, right_path)
        if isinstance(term, StrongSeq):
            tr1 = ctx.sets[left_path].tr
            sr2 = ctx.sets[right_path].sr
            label = term_label(term.right)
            if role in tr1:
                sends = [
                    SendAction(CoordMessage(MsgKind.FLOWM, role, dst, label))
                    for dst in sorted(sr2 - {role})
                ]
                if sends:
                    first = ctx.append_actions(first, sends)
            if role in sr2:
                receives = [
                    ReceiveAction(CoordMessage(MsgKind.FLOWM, src, role, label))
                    for src in sorted(tr1 - {role})
                ]
                if receives:
                    second = ctx.prepend_actions(second, receives)
        return ctx.join(first, second)

    if isinstance(term, Choice):
        left_path = child_path(path, "left")
        right_path = child_path(path, "right")
        pr_left = ctx.sets[left_path].pr
        pr_right = ctx.sets[right_path].pr
        if role not in (pr_left | pr_right):
            return _Frag()
        deciders = ctx.sets[left_path].sr | ctx.sets[right_path].sr
        if len(deciders) != 1:
            raise InvalidModelError(
                [Violation(path, f"LocalChoiceViolation: starting roles {sorted(deciders)}")]
            )
        decider = next(iter(deciders))
        label = term_label(term)
        pseudo = ctx.state(StateKind.CHOICE, label)

        branches: list[tuple[str, _Frag]] = []
        sides = (
            (term.left, left_path, pr_left, pr_right),
            (term.right, right_path, pr_right, pr_left),
        )
        for child, cpath, own_pr, other_pr in sides:
            branch_label = term_label(child)
            if role in own_pr:
                branch = _build(ctx, child, cpath)
            elif role == decider:
                branch = _Frag()  # deciding for an empty branch: only the sends below
            else:
                receive = ReceiveAction(CoordMessage(MsgKind.CHOICEM, decider, role, branch_label))
                branch = ctx.single(ctx.composite(branch_label, [receive]))
            if role == decider:
                sends = [
                    SendAction(CoordMessage(MsgKind.CHOICEM, decider, dst, branch_label))
                    for dst in sorted(other_pr - own_pr - {role})
                ]
                if sends:
                    branch = ctx.append_actions(branch, sends)
            branches.append((branch_label, branch))

        junction = ctx.state(StateKind.JUNCTION, label)
        nodes = [pseudo]
        transitions: list[Transition] = []
        for branch_label, branch in branches:
            if branch.empty:
                transitions.append(ctx.transition(pseudo.id, junction.id, branch_label))
                continue
            transitions.append(ctx.transition(pseudo.id, branch.entry.id, branch_label))
            nodes.extend(branch.nodes)
            transitions.extend(branch.transitions)
            transitions.append(ctx.transition(branch.exit.id, junction.id))
        nodes.append(junction)
        return _Frag(nodes, transitions, pseudo, junction)

    if isinstance(term, Parallel):
        raise UnsupportedConstructError("Parallel", path)
    if isinstance(term, (StrongLoop, WeakLoop)):
        raise UnsupportedConstructError("Loop", path)
    raise TypeError(f"not a choreography term: {term!r}")


def _freeze(node: _BNode, role: Role) -> State:
    if node.kind is StateKind.COMPOSITE:
        inner = node.inner
        children = StateMachine(
            role=role,
            states=tuple(_freeze(n, role) for n in (inner.initial, inner.simple, inner.final)),
            transitions=tuple(inner.transitions),
            initial=inner.initial.id,
        )
        return State(node.id, node.name, node.kind, (), children)
    return State(node.id, node.name, node.kind, tuple(node.actions))


def derive_role(term: ChoreographyTerm, sets: dict[str, RoleSets], role: Role) -> StateMachine:
    """Derive the state machine of one role.

    Requires a valid, locally-deterministic term without parallel/loop
    nodes.  A role that participates nowhere gets the trivial machine.
    """
    ensure_derivable(term)
    violations = validate_term(term)
    if violations:
        raise InvalidModelError(violations)

    ctx = DerivationContext(term=term, sets=sets, role=role)
    initial = ctx.state(StateKind.INITIAL, "initial")
    frag = _build(ctx, term, ROOT_PATH)
    final = ctx.state(StateKind.FINAL, "final")

    if frag.empty:
        transitions = [ctx.transition(initial.id, final.id)]
        states = [initial, final]
    else:
        transitions = frag.transitions + [
            ctx.transition(initial.id, frag.entry.id),
            ctx.transition(frag.exit.id, final.id),
        ]
        states = [initial, *frag.nodes, final]
    transitions.sort(key=lambda t: int(t.id[1:]))

    return StateMachine(
        role=role,
        states=tuple(_freeze(n, role) for n in states),
        transitions=tuple(transitions),
        initial=initial.id,
    )


def derive_all(
    term: ChoreographyTerm,
    sets: dict[str, RoleSets],
    roles=None,
) -> dict[Role, StateMachine]:
    """One machine per role; defaults to the participating roles of the root."""
    if roles is None:
        roles = sets[ROOT_PATH].pr
    return {role: derive_role(term, sets, role) for role in sorted(set(roles))}


# ---------------------------------------------------------------------------
# Machine transforms
# ---------------------------------------------------------------------------

def flatten(sm: StateMachine) -> StateMachine:
    """Inline composite states; observable behavior is unchanged.

    A composite's inner initial/final are elided by retargeting the
    surrounding transitions, so the result still satisfies every machine
    invariant.
    """
    violations = validate_machine(sm)
    if violations:
        raise InvalidModelError(violations)
    states, transitions = _flatten_level(list(sm.states), list(sm.transitions))
    return StateMachine(sm.role, tuple(states), tuple(transitions), sm.initial)


def _flatten_level(
    states: list[State], transitions: list[Transition]
) -> tuple[list[State], list[Transition]]:
    out: list[State] = []
    for state in states:
        if state.kind is not StateKind.COMPOSITE:
            out.append(state)
            continue
        inner_states, inner_trans = _flatten_level(
            list(state.children.states), list(state.children.transitions)
        )
        inner_initial = next(s for s in inner_states if s.kind is StateKind.INITIAL)
        initial_outs = [t for t in inner_trans if t.source == inner_initial.id]
        if len(initial_outs) != 1:
            raise InvalidModelError(
                [Violation(state.id, "composite initial needs exactly one outgoing transition")]
            )
        first_inner = initial_outs[0].target
        final_ids = {s.id for s in inner_states if s.kind is StateKind.FINAL}
        if first_inner in final_ids:  # empty composite: splice straight through
            outer_outs = [t for t in transitions if t.source == state.id]
            if len(outer_outs) != 1:
                raise InvalidModelError(
                    [Violation(state.id, "composite needs exactly one outgoing transition to flatten")]
                )
            successor = outer_outs[0].target
            transitions = [
                replace(t, target=successor) if t.target == state.id else t
                for t in transitions
                if t is not outer_outs[0]
            ]
            continue
        final_ins = [t for t in inner_trans if t.target in final_ids]
        kept_inner = [
            t for t in inner_trans if t.source != inner_initial.id and t.target not in final_ids
        ]
        outer_outs = [t for t in transitions if t.source == state.id]
        if len(outer_outs) > 1 or (final_ins and not outer_outs):
            raise InvalidModelError(
                [Violation(state.id, "composite needs exactly one outgoing transition to flatten")]
            )
        transitions = [
            replace(t, target=first_inner) if t.target == state.id else t
            for t in transitions
            if not outer_outs or t is not outer_outs[0]
        ]
        if outer_outs:
            successor = outer_outs[0].target
            transitions.extend(replace(t, target=successor) for t in final_ins)
        transitions.extend(kept_inner)
        out.extend(
            s for s in inner_states if s.kind not in (StateKind.INITIAL, StateKind.FINAL)
        )
    return out, transitions


def drop_sends(sm: StateMachine, kind: MsgKind) -> StateMachine:
    """Remove all send actions of one message kind (fault injection)."""

    def fix(state: State) -> State:
        actions = tuple(
            a for a in state.actions if not (isinstance(a, SendAction) and a.msg.kind is kind)
        )
        children = drop_sends(state.children, kind) if state.children is not None else None
        return replace(state, actions=actions, children=children)

    return replace(sm, states=tuple(fix(s) for s in sm.states))

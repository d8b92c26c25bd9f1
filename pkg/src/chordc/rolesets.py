"""Starting/terminating/participating role sets for every term node.

The composition rules mirror the per-operator table of the source method:
each operator combines the (SR, TR, PR) triples of its children.  The
local-choice constraint (both alternatives of a choice, and both sides of a
loop, must share a single starting role) is checked separately so that role
sets remain available for diagnosing invalid models.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    Choice,
    ChoreographyTerm,
    Epsilon,
    Parallel,
    ROOT_PATH,
    Role,
    StrongLoop,
    StrongSeq,
    SubCollab,
    Violation,
    WeakLoop,
    WeakSeq,
    child_path,
    iter_term,
    term_children,
)

EMPTY: frozenset[Role] = frozenset()


@dataclass(frozen=True)
class RoleSets:
    """(SR, TR, PR) of one term node."""

    sr: frozenset[Role]
    tr: frozenset[Role]
    pr: frozenset[Role]


def strong_seq_sets(a: RoleSets, b: RoleSets) -> RoleSets:
    return RoleSets(a.sr, b.tr, a.pr | b.pr)


def weak_seq_sets(a: RoleSets, b: RoleSets) -> RoleSets:
    return RoleSets(a.sr | (b.sr - a.pr), b.tr | (a.tr - b.pr), a.pr | b.pr)


def node_sets(term: ChoreographyTerm, child_sets: tuple[RoleSets, ...]) -> RoleSets:
    """Combine child triples for one node, per the composition table."""
    if isinstance(term, SubCollab):
        return RoleSets(term.sr, term.tr, term.pr)
    if isinstance(term, Epsilon):
        return RoleSets(EMPTY, EMPTY, EMPTY)
    a, b = child_sets
    if isinstance(term, StrongSeq):
        return strong_seq_sets(a, b)
    if isinstance(term, WeakSeq):
        return weak_seq_sets(a, b)
    if isinstance(term, (Choice, Parallel)):
        return RoleSets(a.sr | b.sr, a.tr | b.tr, a.pr | b.pr)
    if isinstance(term, StrongLoop):
        # the table's terminating entry degenerates to SR(body) when the body
        # is the empty collaboration; see loop_warnings
        tr = a.sr if isinstance(term.body, Epsilon) else b.tr
        return RoleSets(a.sr | b.sr, tr, a.pr | b.pr)
    if isinstance(term, WeakLoop):
        return RoleSets(a.sr | b.sr, b.tr | (a.tr - b.pr), a.pr | b.pr)
    raise TypeError(f"not a choreography term: {term!r}")


def role_sets(term: ChoreographyTerm) -> dict[str, RoleSets]:
    """Bottom-up evaluation; returns the triple for every node path."""
    out: dict[str, RoleSets] = {}

    def go(node: ChoreographyTerm, path: str) -> RoleSets:
        children = tuple(
            go(child, child_path(path, seg)) for seg, child in term_children(node)
        )
        sets = node_sets(node, children)
        out[path] = sets
        return sets

    go(term, ROOT_PATH)
    return out


def check_local_choice(term: ChoreographyTerm) -> list[Violation]:
    """Every choice/loop must have exactly one starting role across its sides.

    Epsilon sides are ignored; they contribute no starting role.
    """
    sets = role_sets(term)
    out: list[Violation] = []
    for path, node in iter_term(term):
        if not isinstance(node, (Choice, StrongLoop, WeakLoop)):
            continue
        union: frozenset[Role] = frozenset()
        effective = False
        for seg, child in term_children(node):
            if isinstance(child, Epsilon):
                continue
            effective = True
            union |= sets[child_path(path, seg)].sr
        if effective and len(union) != 1:
            roles = ", ".join(sorted(union))
            out.append(Violation(path, f"LocalChoiceViolation: starting roles {{{roles}}}"))
    return out


def decider(term: Choice, sets: dict[str, RoleSets], path: str) -> Role:
    """The unique starting role of a locally-valid choice."""
    union = sets[child_path(path, "left")].sr | sets[child_path(path, "right")].sr
    if len(union) != 1:
        raise ValueError(f"choice at {path} has no unique decider: {sorted(union)}")
    return next(iter(union))


def loop_warnings(term: ChoreographyTerm) -> list[str]:
    """Degenerate cases worth flagging but not rejecting."""
    out = []
    for path, node in iter_term(term):
        if isinstance(node, StrongLoop) and isinstance(node.body, Epsilon):
            out.append(
                f"{path}: strong loop with empty body has an empty terminating set"
            )
    return out

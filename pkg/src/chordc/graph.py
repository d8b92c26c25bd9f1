"""Activity-graph form of the requirements model, and structure recovery.

Models may arrive as node/edge activity graphs (initial/final nodes,
collaboration nodes, decision/merge and fork/join pairs, optional nested
graphs).  ``recover_term`` reduces such a graph to a composition tree by
repeatedly rewriting recognized regions:

* series:   ``A -> B`` between two reduced fragments becomes a sequence,
  strong or weak per the connecting edge;
* choice:   a decision whose branches reconverge on a matching merge;
* loop:     ``merge -> decision`` with one branch closing back on the merge
  (the back-edge picks strong vs weak) and one forward exit branch;
* parallel: a fork/join pair.

N-ary decisions and forks right-associate into nested binary terms.  Chains
right-associate as well, matching the nesting produced by nested graphs.
Anything irreducible is rejected as unstructured rather than guessed at.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .errors import UnstructuredError
from .model import (
    Choice,
    ChoreographyTerm,
    Epsilon,
    Parallel,
    StrongLoop,
    StrongSeq,
    SubCollab,
    Violation,
    WeakLoop,
    WeakSeq,
    validate_term,
)


class NodeKind(str, Enum):
    INITIAL = "initial"
    FINAL = "final"
    COLLAB = "collab"
    DECISION = "decision"
    MERGE = "merge"
    FORK = "fork"
    JOIN = "join"


class SeqMode(str, Enum):
    STRONG = "strong"
    WEAK = "weak"


@dataclass(frozen=True)
class ActivityNode:
    id: str
    kind: NodeKind
    collab: SubCollab | None = None
    subgraph: "ActivityGraph | None" = None


@dataclass(frozen=True)
class ActivityEdge:
    id: str
    source: str
    target: str
    seq: SeqMode = SeqMode.STRONG


@dataclass(frozen=True)
class ActivityGraph:
    name: str
    nodes: tuple[ActivityNode, ...]
    edges: tuple[ActivityEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))


_DEGREES = {
    # kind: (in_exact, in_min, out_exact, out_min)
    NodeKind.INITIAL: (0, None, 1, None),
    NodeKind.FINAL: (1, None, 0, None),
    NodeKind.COLLAB: (1, None, 1, None),
    NodeKind.DECISION: (1, None, None, 2),
    NodeKind.MERGE: (None, 2, 1, None),
    NodeKind.FORK: (1, None, None, 2),
    NodeKind.JOIN: (None, 2, 1, None),
}


def validate_graph(g: ActivityGraph, prefix: str = "") -> list[Violation]:
    """Check all graph invariants; nested graphs are validated recursively."""
    out: list[Violation] = []
    where = prefix + (g.name or "graph")

    ids: set[str] = set()
    for node in g.nodes:
        if node.id in ids:
            out.append(Violation(where, f"duplicate node id: {node.id}"))
        ids.add(node.id)
    edge_ids: set[str] = set()
    for edge in g.edges:
        if edge.id in edge_ids:
            out.append(Violation(where, f"duplicate edge id: {edge.id}"))
        edge_ids.add(edge.id)

    indeg = {n.id: 0 for n in g.nodes}
    outdeg = {n.id: 0 for n in g.nodes}
    neighbors: dict[str, set[str]] = {n.id: set() for n in g.nodes}
    for edge in g.edges:
        if edge.source not in indeg or edge.target not in indeg:
            out.append(Violation(where, f"edge {edge.id} references a missing node"))
            continue
        outdeg[edge.source] += 1
        indeg[edge.target] += 1
        neighbors[edge.source].add(edge.target)
        neighbors[edge.target].add(edge.source)

    initials = [n for n in g.nodes if n.kind is NodeKind.INITIAL]
    finals = [n for n in g.nodes if n.kind is NodeKind.FINAL]
    if len(initials) != 1:
        out.append(Violation(where, f"expected exactly one initial node, found {len(initials)}"))
    if len(finals) != 1:
        out.append(Violation(where, f"expected exactly one final node, found {len(finals)}"))

    for node in g.nodes:
        in_exact, in_min, out_exact, out_min = _DEGREES[node.kind]
        i, o = indeg[node.id], outdeg[node.id]
        if in_exact is not None and i != in_exact:
            out.append(Violation(f"{where}/{node.id}", f"{node.kind.value} needs {in_exact} incoming, has {i}"))
        if in_min is not None and i < in_min:
            out.append(Violation(f"{where}/{node.id}", f"{node.kind.value} needs ≥{in_min} incoming, has {i}"))
        if out_exact is not None and o != out_exact:
            out.append(Violation(f"{where}/{node.id}", f"{node.kind.value} needs {out_exact} outgoing, has {o}"))
        if out_min is not None and o < out_min:
            out.append(Violation(f"{where}/{node.id}", f"{node.kind.value} needs ≥{out_min} outgoing, has {o}"))

        if node.kind is NodeKind.COLLAB:
            if (node.collab is None) == (node.subgraph is None):
                out.append(Violation(f"{where}/{node.id}", "collab node needs exactly one of leaf/subgraph payload"))
            if node.collab is not None:
                for v in validate_term(node.collab):
                    out.append(Violation(f"{where}/{node.id}", v.message))
            if node.subgraph is not None:
                out.extend(validate_graph(node.subgraph, prefix=f"{where}/{node.id}:"))
        elif node.collab is not None or node.subgraph is not None:
            out.append(Violation(f"{where}/{node.id}", "payload on a non-collab node"))

    if g.nodes and initials:
        seen = {initials[0].id}
        frontier = [initials[0].id]
        while frontier:
            for nxt in neighbors.get(frontier.pop(), ()):  # undirected reach
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        for node in g.nodes:
            if node.id not in seen:
                out.append(Violation(f"{where}/{node.id}", "disconnected node"))

    return out


# ---------------------------------------------------------------------------
# Structure recovery
# ---------------------------------------------------------------------------

_FRAG = "frag"


@dataclass(eq=False)  # identity semantics: parallel edges with equal fields stay distinct
class _Edge:
    source: str
    target: str
    seq: SeqMode


class _Reducer:
    def __init__(self, g: ActivityGraph):
        self.order = [n.id for n in g.nodes]
        self.kinds: dict[str, str] = {}
        self.terms: dict[str, ChoreographyTerm] = {}
        self.edges: list[_Edge] = [_Edge(e.source, e.target, e.seq) for e in g.edges]
        for node in g.nodes:
            if node.kind is NodeKind.COLLAB:
                self.kinds[node.id] = _FRAG
                if node.collab is not None:
                    self.terms[node.id] = node.collab
                else:
                    inner = recover_term(node.subgraph)
                    if not isinstance(inner, (SubCollab, Epsilon)):
                        inner = replace(inner, name=node.subgraph.name)
                    self.terms[node.id] = inner
            else:
                self.kinds[node.id] = node.kind.value

    def outs(self, node: str) -> list[_Edge]:
        return [e for e in self.edges if e.source == node]

    def ins(self, node: str) -> list[_Edge]:
        return [e for e in self.edges if e.target == node]

    def drop(self, nodes: set[str], edges: list[_Edge]) -> None:
        for n in nodes:
            self.kinds.pop(n)
            self.terms.pop(n, None)
            self.order.remove(n)
        self.edges = [e for e in self.edges if e not in edges]

    def is_frag(self, node: str) -> bool:
        return self.kinds.get(node) == _FRAG

    # -- branch shapes ------------------------------------------------------

    def _branch(self, edge: _Edge) -> tuple[ChoreographyTerm | None, str | None, list] | None:
        """A branch is either a direct hop to a closer node (empty branch) or
        a single 1-in/1-out fragment.  Returns (term, closer id, inner edges)."""
        target = edge.target
        if self.kinds.get(target) in (NodeKind.MERGE.value, NodeKind.JOIN.value):
            return Epsilon(), target, [edge]
        if self.is_frag(target) and len(self.ins(target)) == 1:
            outs = self.outs(target)
            if len(outs) == 1:
                return self.terms[target], outs[0].target, [edge, outs[0]]
        return None

    def try_choice_like(self, node: str, opening: str, closing: str, make) -> bool:
        if self.kinds.get(node) != opening or len(self.ins(node)) != 1:
            return False
        branches = []
        for edge in self.outs(node):
            shape = self._branch(edge)
            if shape is None:
                return False
            branches.append(shape)
        closers = {b[1] for b in branches}
        if len(closers) != 1:
            return False
        closer = closers.pop()
        if self.kinds.get(closer) != closing:
            return False
        if len(self.ins(closer)) != len(branches) or len(self.outs(closer)) != 1:
            return False

        term = branches[-1][0]
        for shape in reversed(branches[:-1]):
            term = make(shape[0], term)
        removed_nodes = {closer} | {
            e.target for b in branches for e in b[2][:1] if self.is_frag(e.target)
        }
        removed_edges = [e for b in branches for e in b[2]]
        closer_out = self.outs(closer)[0]
        closer_out.source = node  # the decision/fork id now carries the fragment
        self.drop(removed_nodes, removed_edges)
        self.kinds[node] = _FRAG
        self.terms[node] = term
        return True

    def try_loop(self, node: str) -> bool:
        if self.kinds.get(node) != NodeKind.DECISION.value:
            return False
        preds = self.ins(node)
        if len(preds) != 1:
            return False
        merge = preds[0].source
        if self.kinds.get(merge) != NodeKind.MERGE.value:
            return False
        if len(self.outs(merge)) != 1 or len(self.ins(merge)) != 2:
            return False
        outs = self.outs(node)
        if len(outs) != 2:
            return False

        def back_shape(edge: _Edge):
            if edge.target == merge:
                return Epsilon(), edge.seq, [edge], set()
            if self.is_frag(edge.target) and len(self.ins(edge.target)) == 1:
                closing = self.outs(edge.target)
                if len(closing) == 1 and closing[0].target == merge:
                    return self.terms[edge.target], closing[0].seq, [edge, closing[0]], {edge.target}
            return None

        for back_edge, fwd_edge in ((outs[0], outs[1]), (outs[1], outs[0])):
            back = back_shape(back_edge)
            if back is None:
                continue
            target = fwd_edge.target
            if not (self.is_frag(target) and len(self.ins(target)) == 1):
                continue
            body, mode, back_edges, body_nodes = back
            make = StrongLoop if mode is SeqMode.STRONG else WeakLoop
            term = make(body, self.terms[target])
            entry = next(e for e in self.ins(merge) if e not in back_edges)
            entry.target = target  # the exit fragment id carries the loop
            self.drop({merge, node} | body_nodes, back_edges + [preds[0], fwd_edge])
            self.terms[target] = term
            return True
        return False

    def try_series(self) -> bool:
        def link(edge: _Edge) -> bool:
            return (
                self.is_frag(edge.source)
                and self.is_frag(edge.target)
                and len(self.outs(edge.source)) == 1
                and len(self.ins(edge.target)) == 1
            )

        for head in list(self.order):
            if not self.is_frag(head):
                continue
            ins = self.ins(head)
            if len(ins) == 1 and link(ins[0]):
                continue  # not a chain head
            chain = [head]
            links: list[_Edge] = []
            while True:
                outs = self.outs(chain[-1])
                if len(outs) == 1 and link(outs[0]):
                    links.append(outs[0])
                    chain.append(outs[0].target)
                else:
                    break
            if len(chain) < 2:
                continue
            term = self.terms[chain[-1]]
            for node, edge in zip(reversed(chain[:-1]), reversed(links)):
                make = StrongSeq if edge.seq is SeqMode.STRONG else WeakSeq
                term = make(self.terms[node], term)
            tail_outs = self.outs(chain[-1])
            if tail_outs:
                tail_outs[0].source = head
            self.drop(set(chain[1:]), links)
            self.terms[head] = term
            return True
        return False

    def reduce(self) -> ChoreographyTerm:
        changed = True
        while changed:
            changed = False
            for node in list(self.order):
                if node not in self.kinds:
                    continue
                if self.try_loop(node):
                    changed = True
                elif self.try_choice_like(
                    node, NodeKind.DECISION.value, NodeKind.MERGE.value, Choice
                ):
                    changed = True
                elif self.try_choice_like(
                    node, NodeKind.FORK.value, NodeKind.JOIN.value, Parallel
                ):
                    changed = True
            if self.try_series():
                changed = True

        leftovers = [
            n for n in self.order
            if self.kinds[n] not in (NodeKind.INITIAL.value, NodeKind.FINAL.value, _FRAG)
        ]
        frags = [n for n in self.order if self.is_frag(n)]
        if leftovers or len(frags) > 1:
            raise UnstructuredError(leftovers + frags if leftovers else frags)
        if not frags:
            return Epsilon()
        return self.terms[frags[0]]


def recover_term(g: ActivityGraph) -> ChoreographyTerm:
    """Reduce a validated activity graph to a choreography term."""
    return _Reducer(g).reduce()


# ---------------------------------------------------------------------------
# Canonical rendering (term -> graph), the inverse of recovery on its image
# ---------------------------------------------------------------------------

class _GraphBuilder:
    def __init__(self):
        self.nodes: list[ActivityNode] = []
        self.edges: list[ActivityEdge] = []
        self._n = 0
        self._e = 0

    def node(self, kind: NodeKind, **payload) -> str:
        self._n += 1
        node_id = f"n{self._n}"
        self.nodes.append(ActivityNode(node_id, kind, **payload))
        return node_id

    def edge(self, source: str, target: str, seq: SeqMode = SeqMode.STRONG) -> None:
        self._e += 1
        self.edges.append(ActivityEdge(f"e{self._e}", source, target, seq))


def _render(term: ChoreographyTerm, b: _GraphBuilder, top: bool) -> tuple[str, str]:
    if isinstance(term, SubCollab):
        n = b.node(NodeKind.COLLAB, collab=term)
        return n, n
    if not top and getattr(term, "name", None):
        n = b.node(NodeKind.COLLAB, subgraph=render_graph(term, term.name))
        return n, n
    if isinstance(term, (StrongSeq, WeakSeq)):
        mode = SeqMode.STRONG if isinstance(term, StrongSeq) else SeqMode.WEAK
        entry, mid = _render(term.left, b, top=False)
        start, end = _render(term.right, b, top=False)
        b.edge(mid, start, mode)
        return entry, end
    if isinstance(term, (Choice, Parallel)):
        opening = NodeKind.DECISION if isinstance(term, Choice) else NodeKind.FORK
        closing = NodeKind.MERGE if isinstance(term, Choice) else NodeKind.JOIN
        d = b.node(opening)
        m = b.node(closing)
        for branch in (term.left, term.right):
            if isinstance(branch, Epsilon):
                b.edge(d, m)
            else:
                entry, end = _render(branch, b, top=False)
                b.edge(d, entry)
                b.edge(end, m)
        return d, m
    if isinstance(term, (StrongLoop, WeakLoop)):
        mode = SeqMode.STRONG if isinstance(term, StrongLoop) else SeqMode.WEAK
        m = b.node(NodeKind.MERGE)
        d = b.node(NodeKind.DECISION)
        b.edge(m, d)
        if isinstance(term.body, Epsilon):
            b.edge(d, m, mode)
        else:
            entry, end = _render(term.body, b, top=False)
            b.edge(d, entry)
            b.edge(end, m, mode)
        if isinstance(term.exit, Epsilon):
            raise ValueError("loop exit cannot be the empty collaboration in graph form")
        entry, end = _render(term.exit, b, top=False)
        b.edge(d, entry)
        return m, end
    raise ValueError(f"cannot render {term!r} as a graph component")


def render_graph(term: ChoreographyTerm, name: str = "model") -> ActivityGraph:
    """Render a term as its canonical activity graph.

    Named composites become nested graphs so names survive a round-trip.
    Epsilon is only representable as a choice/loop branch or as the whole
    (empty) model.
    """
    b = _GraphBuilder()
    initial = b.node(NodeKind.INITIAL)
    if isinstance(term, Epsilon):
        final = b.node(NodeKind.FINAL)
        b.edge(initial, final)
    else:
        entry, end = _render(term, b, top=True)
        final = b.node(NodeKind.FINAL)
        b.edge(initial, entry)
        b.edge(end, final)
    return ActivityGraph(name, tuple(b.nodes), tuple(b.edges))

"""On-disk JSON formats for models and machines, plus DOT emission.

A model document declares its roles and carries exactly one body: a ``term``
(nested composition) or a ``graph`` (activity nodes and edges).  A machine
document is the serialized form of one derived state machine.  Parsing is
strict: unknown keys are rejected, every role reference must be declared,
and errors carry a path into the document.  Emission is deterministic, so
equal values serialize byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ModelSyntaxError, SchemaError, UnknownRoleError
from .graph import ActivityEdge, ActivityGraph, ActivityNode, NodeKind, SeqMode
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
    SendAction,
    State,
    StateKind,
    StateMachine,
    StrongLoop,
    StrongSeq,
    SubCollab,
    Transition,
    WeakLoop,
    WeakSeq,
    validate_machine,
)

FORMAT_VERSION = "1"


@dataclass(frozen=True)
class ModelDocument:
    format_version: str
    roles: tuple[str, ...]
    term: ChoreographyTerm | None = None
    graph: ActivityGraph | None = None

    @property
    def body(self):
        return self.term if self.term is not None else self.graph


def _load(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(exc.msg, exc.lineno, exc.colno) from exc


def _expect_obj(value, path: str, required: set[str], optional: set[str] = frozenset()) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(path, f"expected an object, got {type(value).__name__}")
    missing = required - value.keys()
    if missing:
        raise SchemaError(path, f"missing keys: {', '.join(sorted(missing))}")
    unknown = value.keys() - required - optional
    if unknown:
        raise SchemaError(path, f"unknown keys: {', '.join(sorted(unknown))}")
    return value


def _expect_str(value, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(path, "expected a non-empty string")
    return value


def _role_list(value, path: str, declared: frozenset[str]) -> frozenset[str]:
    if not isinstance(value, list):
        raise SchemaError(path, "expected a list of roles")
    for i, role in enumerate(value):
        _expect_str(role, f"{path}[{i}]")
        if role not in declared:
            raise UnknownRoleError(f"{path}[{i}]", role)
    return frozenset(value)


# ---------------------------------------------------------------------------
# Term form
# ---------------------------------------------------------------------------

_BINARY = {"strong_seq": StrongSeq, "weak_seq": WeakSeq, "choice": Choice, "parallel": Parallel}
_LOOPS = {"strong_loop": StrongLoop, "weak_loop": WeakLoop}


def _parse_term(value, path: str, declared: frozenset[str]) -> ChoreographyTerm:
    if not isinstance(value, dict):
        raise SchemaError(path, f"expected an object, got {type(value).__name__}")
    kind = _expect_str(value.get("kind"), f"{path}.kind")
    if kind == "subcollab":
        obj = _expect_obj(value, path, {"kind", "name", "sr", "tr", "pr"})
        return SubCollab(
            _expect_str(obj["name"], f"{path}.name"),
            _role_list(obj["sr"], f"{path}.sr", declared),
            _role_list(obj["tr"], f"{path}.tr", declared),
            _role_list(obj["pr"], f"{path}.pr", declared),
        )
    if kind == "epsilon":
        _expect_obj(value, path, {"kind"})
        return Epsilon()
    if kind in _BINARY:
        obj = _expect_obj(value, path, {"kind", "left", "right"}, {"name"})
        return _BINARY[kind](
            _parse_term(obj["left"], f"{path}.left", declared),
            _parse_term(obj["right"], f"{path}.right", declared),
            name=_expect_str(obj["name"], f"{path}.name") if "name" in obj else None,
        )
    if kind in _LOOPS:
        obj = _expect_obj(value, path, {"kind", "body", "exit"}, {"name"})
        return _LOOPS[kind](
            _parse_term(obj["body"], f"{path}.body", declared),
            _parse_term(obj["exit"], f"{path}.exit", declared),
            name=_expect_str(obj["name"], f"{path}.name") if "name" in obj else None,
        )
    raise SchemaError(f"{path}.kind", f"unknown term kind: {kind!r}")


def _term_obj(term: ChoreographyTerm) -> dict:
    if isinstance(term, SubCollab):
        return {
            "kind": "subcollab",
            "name": term.name,
            "sr": sorted(term.sr),
            "tr": sorted(term.tr),
            "pr": sorted(term.pr),
        }
    if isinstance(term, Epsilon):
        return {"kind": "epsilon"}
    kind = next(k for k, cls in {**_BINARY, **_LOOPS}.items() if isinstance(term, cls))
    out: dict = {"kind": kind}
    if term.name:
        out["name"] = term.name
    if isinstance(term, (StrongLoop, WeakLoop)):
        out["body"] = _term_obj(term.body)
        out["exit"] = _term_obj(term.exit)
    else:
        out["left"] = _term_obj(term.left)
        out["right"] = _term_obj(term.right)
    return out


# ---------------------------------------------------------------------------
# Graph form
# ---------------------------------------------------------------------------

def _parse_graph(value, path: str, declared: frozenset[str], name: str) -> ActivityGraph:
    obj = _expect_obj(value, path, {"nodes", "edges"}, {"name"})
    if "name" in obj:
        name = _expect_str(obj["name"], f"{path}.name")
    if not isinstance(obj["nodes"], list) or not isinstance(obj["edges"], list):
        raise SchemaError(path, "nodes and edges must be lists")

    nodes = []
    for i, raw in enumerate(obj["nodes"]):
        npath = f"{path}.nodes[{i}]"
        node = _expect_obj(raw, npath, {"id", "kind"}, {"name", "sr", "tr", "pr", "graph"})
        node_id = _expect_str(node["id"], f"{npath}.id")
        kind_str = _expect_str(node["kind"], f"{npath}.kind")
        try:
            kind = NodeKind(kind_str)
        except ValueError:
            raise SchemaError(f"{npath}.kind", f"unknown node kind: {kind_str!r}") from None
        collab = subgraph = None
        if kind is NodeKind.COLLAB:
            if "graph" in node:
                _expect_obj(raw, npath, {"id", "kind", "graph"})
                subgraph = _parse_graph(node["graph"], f"{npath}.graph", declared, node_id)
            else:
                _expect_obj(raw, npath, {"id", "kind", "name", "sr", "tr", "pr"})
                collab = SubCollab(
                    _expect_str(node["name"], f"{npath}.name"),
                    _role_list(node["sr"], f"{npath}.sr", declared),
                    _role_list(node["tr"], f"{npath}.tr", declared),
                    _role_list(node["pr"], f"{npath}.pr", declared),
                )
        else:
            _expect_obj(raw, npath, {"id", "kind"})
        nodes.append(ActivityNode(node_id, kind, collab, subgraph))

    edges = []
    for i, raw in enumerate(obj["edges"]):
        epath = f"{path}.edges[{i}]"
        edge = _expect_obj(raw, epath, {"id", "source", "target"}, {"seq"})
        seq = SeqMode.STRONG
        if "seq" in edge:
            seq_str = _expect_str(edge["seq"], f"{epath}.seq")
            try:
                seq = SeqMode(seq_str)
            except ValueError:
                raise SchemaError(f"{epath}.seq", f"unknown sequencing mode: {seq_str!r}") from None
        edges.append(
            ActivityEdge(
                _expect_str(edge["id"], f"{epath}.id"),
                _expect_str(edge["source"], f"{epath}.source"),
                _expect_str(edge["target"], f"{epath}.target"),
                seq,
            )
        )
    return ActivityGraph(name, tuple(nodes), tuple(edges))


def _graph_obj(g: ActivityGraph, top: bool) -> dict:
    out: dict = {}
    if g.name:
        out["name"] = g.name
    nodes = []
    for node in g.nodes:
        item: dict = {"id": node.id, "kind": node.kind.value}
        if node.collab is not None:
            item.update(
                name=node.collab.name,
                sr=sorted(node.collab.sr),
                tr=sorted(node.collab.tr),
                pr=sorted(node.collab.pr),
            )
        if node.subgraph is not None:
            item["graph"] = _graph_obj(node.subgraph, top=False)
        nodes.append(item)
    out["nodes"] = nodes
    out["edges"] = [
        {"id": e.id, "source": e.source, "target": e.target, "seq": e.seq.value}
        for e in g.edges
    ]
    return out


# ---------------------------------------------------------------------------
# Model documents
# ---------------------------------------------------------------------------

def parse_model(text: str) -> ModelDocument:
    """Parse and structurally check a model document."""
    data = _load(text)
    obj = _expect_obj(data, "$", {"format_version", "roles"}, {"term", "graph"})
    version = _expect_str(obj["format_version"], "$.format_version")
    if version != FORMAT_VERSION:
        raise SchemaError("$.format_version", f"unsupported format version: {version!r}")
    if not isinstance(obj["roles"], list) or not obj["roles"]:
        raise SchemaError("$.roles", "expected a non-empty list of role ids")
    roles: list[str] = []
    for i, role in enumerate(obj["roles"]):
        _expect_str(role, f"$.roles[{i}]")
        if role in roles:
            raise SchemaError(f"$.roles[{i}]", f"duplicate role id: {role!r}")
        roles.append(role)
    declared = frozenset(roles)

    has_term = "term" in obj
    has_graph = "graph" in obj
    if has_term == has_graph:
        raise SchemaError("$", "exactly one of 'term' or 'graph' is required")
    if has_term:
        return ModelDocument(version, tuple(roles), term=_parse_term(obj["term"], "$.term", declared))
    graph = _parse_graph(obj["graph"], "$.graph", declared, "model")
    return ModelDocument(version, tuple(roles), graph=graph)


def emit_model(doc: ModelDocument) -> str:
    """Serialize a model document; inverse of parse_model."""
    out: dict = {"format_version": doc.format_version, "roles": list(doc.roles)}
    if doc.term is not None:
        out["term"] = _term_obj(doc.term)
    else:
        out["graph"] = _graph_obj(doc.graph, top=True)
    return json.dumps(out, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Machine documents
# ---------------------------------------------------------------------------

def _action_obj(action: Action) -> dict:
    if isinstance(action, DomainAction):
        return {"op": "domain", "collab": action.collab, "role": action.role}
    op = "send" if isinstance(action, SendAction) else "receive"
    msg = action.msg
    return {
        "op": op,
        "msg": {"kind": msg.kind.value, "src": msg.src, "dst": msg.dst, "label": msg.label},
    }


def _state_obj(state: State) -> dict:
    out: dict = {"id": state.id, "name": state.name, "kind": state.kind.value}
    if state.actions:
        out["actions"] = [_action_obj(a) for a in state.actions]
    if state.children is not None:
        out["children"] = {
            "initial": state.children.initial,
            "states": [_state_obj(s) for s in state.children.states],
            "transitions": [_transition_obj(t) for t in state.children.transitions],
        }
    return out


def _transition_obj(t: Transition) -> dict:
    out: dict = {"id": t.id, "source": t.source, "target": t.target}
    if t.label is not None:
        out["label"] = t.label
    return out


def emit_fsm_json(sm: StateMachine) -> str:
    """Serialize one machine; equal machines serialize byte-identically."""
    out = {
        "format_version": FORMAT_VERSION,
        "role": sm.role,
        "initial": sm.initial,
        "states": [_state_obj(s) for s in sm.states],
        "transitions": [_transition_obj(t) for t in sm.transitions],
    }
    return json.dumps(out, indent=2, ensure_ascii=False) + "\n"


def _parse_action(value, path: str) -> Action:
    obj = _expect_obj(value, path, {"op"}, {"collab", "role", "msg"})
    op = _expect_str(obj["op"], f"{path}.op")
    if op == "domain":
        obj = _expect_obj(value, path, {"op", "collab", "role"})
        return DomainAction(_expect_str(obj["collab"], f"{path}.collab"), _expect_str(obj["role"], f"{path}.role"))
    if op in ("send", "receive"):
        obj = _expect_obj(value, path, {"op", "msg"})
        raw = _expect_obj(obj["msg"], f"{path}.msg", {"kind", "src", "dst", "label"})
        kind_str = _expect_str(raw["kind"], f"{path}.msg.kind")
        try:
            kind = MsgKind(kind_str)
        except ValueError:
            raise SchemaError(f"{path}.msg.kind", f"unknown message kind: {kind_str!r}") from None
        msg = CoordMessage(
            kind,
            _expect_str(raw["src"], f"{path}.msg.src"),
            _expect_str(raw["dst"], f"{path}.msg.dst"),
            _expect_str(raw["label"], f"{path}.msg.label"),
        )
        return SendAction(msg) if op == "send" else ReceiveAction(msg)
    raise SchemaError(f"{path}.op", f"unknown action op: {op!r}")


def _parse_state(value, path: str, role: str) -> State:
    obj = _expect_obj(value, path, {"id", "kind", "name"}, {"actions", "children"})
    kind_str = _expect_str(obj["kind"], f"{path}.kind")
    try:
        kind = StateKind(kind_str)
    except ValueError:
        raise SchemaError(f"{path}.kind", f"unknown state kind: {kind_str!r}") from None
    actions: tuple[Action, ...] = ()
    if "actions" in obj:
        if not isinstance(obj["actions"], list):
            raise SchemaError(f"{path}.actions", "expected a list")
        actions = tuple(
            _parse_action(a, f"{path}.actions[{i}]") for i, a in enumerate(obj["actions"])
        )
    children = None
    if "children" in obj:
        children = _parse_fragment(obj["children"], f"{path}.children", role)
    return State(
        _expect_str(obj["id"], f"{path}.id"),
        _expect_str(obj["name"], f"{path}.name"),
        kind,
        actions,
        children,
    )


def _parse_transition(value, path: str) -> Transition:
    obj = _expect_obj(value, path, {"id", "source", "target"}, {"label"})
    label = None
    if "label" in obj:
        label = _expect_str(obj["label"], f"{path}.label")
    return Transition(
        _expect_str(obj["id"], f"{path}.id"),
        _expect_str(obj["source"], f"{path}.source"),
        _expect_str(obj["target"], f"{path}.target"),
        label,
    )


def _parse_fragment(value, path: str, role: str) -> StateMachine:
    obj = _expect_obj(value, path, {"initial", "states", "transitions"})
    if not isinstance(obj["states"], list) or not isinstance(obj["transitions"], list):
        raise SchemaError(path, "states and transitions must be lists")
    return StateMachine(
        role=role,
        states=tuple(_parse_state(s, f"{path}.states[{i}]", role) for i, s in enumerate(obj["states"])),
        transitions=tuple(
            _parse_transition(t, f"{path}.transitions[{i}]") for i, t in enumerate(obj["transitions"])
        ),
        initial=_expect_str(obj["initial"], f"{path}.initial"),
    )


def parse_fsm_json(text: str) -> StateMachine:
    """Parse a machine document; rejects anything validate_machine would flag."""
    data = _load(text)
    obj = _expect_obj(data, "$", {"format_version", "role", "initial", "states", "transitions"})
    version = _expect_str(obj["format_version"], "$.format_version")
    if version != FORMAT_VERSION:
        raise SchemaError("$.format_version", f"unsupported format version: {version!r}")
    role = _expect_str(obj["role"], "$.role")
    machine = _parse_fragment(
        {"initial": obj["initial"], "states": obj["states"], "transitions": obj["transitions"]},
        "$",
        role,
    )
    violations = validate_machine(machine)
    if violations:
        first = violations[0]
        raise SchemaError(first.path, f"{first.message} (+{len(violations) - 1} more)" if len(violations) > 1 else first.message)
    return machine


# ---------------------------------------------------------------------------
# DOT
# ---------------------------------------------------------------------------

def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


_SHAPES = {
    StateKind.INITIAL: '[shape=point, label=""]',
    StateKind.FINAL: '[shape=doublecircle, label="", width=0.15]',
    StateKind.JUNCTION: '[shape=circle, label="", width=0.18, fixedsize=true]',
}


def _dot_states(states, lines: list[str], indent: str) -> None:
    for state in states:
        if state.kind is StateKind.COMPOSITE:
            lines.append(f'{indent}subgraph "cluster_{_dot_escape(state.id)}" {{')
            lines.append(f'{indent}  label="{_dot_escape(state.name)}";')
            _dot_states(state.children.states, lines, indent + "  ")
            for t in state.children.transitions:
                lines.append(f'{indent}  "{_dot_escape(t.source)}" -> "{_dot_escape(t.target)}";')
            lines.append(f"{indent}}}")
        elif state.kind is StateKind.CHOICE:
            lines.append(f'{indent}"{_dot_escape(state.id)}" [shape=diamond, label="{_dot_escape(state.name)}"];')
        elif state.kind in _SHAPES:
            lines.append(f'{indent}"{_dot_escape(state.id)}" {_SHAPES[state.kind]};')
        else:
            label = "\\n".join(_dot_escape(a.render()) for a in state.actions) or _dot_escape(state.name)
            lines.append(f'{indent}"{_dot_escape(state.id)}" [shape=box, label="{label}"];')


def _entry_exit(state: State) -> tuple[str, str, bool]:
    """Where edges should anchor; composites route via their inner boundary."""
    if state.kind is not StateKind.COMPOSITE:
        return state.id, state.id, False
    inner = state.children
    initial = inner.initial
    final = next(s.id for s in inner.states if s.kind is StateKind.FINAL)
    return initial, final, True


def emit_dot(sm: StateMachine) -> str:
    """Render a machine as a DOT digraph; composites become clusters."""
    lines = [f'digraph "{_dot_escape(sm.role)}" {{', "  rankdir=TB;", "  compound=true;"]
    _dot_states(sm.states, lines, "  ")
    anchors = {s.id: _entry_exit(s) for s in sm.states}
    for t in sm.transitions:
        src_entry, src_exit, src_comp = anchors[t.source]
        dst_entry, dst_exit, dst_comp = anchors[t.target]
        attrs = []
        if t.label is not None:
            attrs.append(f'label="{_dot_escape(t.label)}"')
        if src_comp:
            attrs.append(f'ltail="cluster_{_dot_escape(t.source)}"')
        if dst_comp:
            attrs.append(f'lhead="cluster_{_dot_escape(t.target)}"')
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f'  "{_dot_escape(src_exit)}" -> "{_dot_escape(dst_entry)}"{suffix};')
    lines.append("}")
    return "\n".join(lines) + "\n"

"""chordc: choreography-to-state-machine compiler with a realizability checker."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    Action,
    Choice,
    ChoreographyTerm,
    CoordMessage,
    DomainAction,
    Epsilon,
    MsgKind,
    Parallel,
    ReceiveAction,
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
    validate_machine,
    validate_term,
)

"""KQML performative semantics, conversation policies and a small agent simulator."""

from .wire import KqmlMessage, Opaque, parse_message, serialize_message
from .attitudes import (
    AgentState, And, Bel, CanProc, Int, Know, Not, Or, Proc, SendMsg, Want,
    holds, well_formed,
)
from .semantics import (
    builtin_descriptors, check_receive, check_send, apply_receive, apply_send,
    completion_met,
)
from .policy import Terminal, accepts, builtin_grammar, demultiplex, expected_next, start_state, step
from .sim import Bus, run_scenario

__all__ = [
    "KqmlMessage", "Opaque", "parse_message", "serialize_message",
    "AgentState", "And", "Bel", "CanProc", "Int", "Know", "Not", "Or", "Proc", "SendMsg",
    "Want", "holds", "well_formed",
    "builtin_descriptors", "check_receive", "check_send", "apply_receive", "apply_send",
    "completion_met",
    "Terminal", "accepts", "builtin_grammar", "demultiplex", "expected_next", "start_state",
    "step", "Bus", "run_scenario",
]

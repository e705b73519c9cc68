"""Mental-state expressions and per-agent stores.

An expression describes an agent's state: a belief about a content-language
proposition (``BEL``), knowledge/desire/intention over another state
description (``KNOW``, ``WANT``, ``INT``), or an action (``PROC``,
``SENDMSG``).  ``CANPROC`` records a capability.  ``and``/``or``/``not``
combine expressions at the top level only.

Evaluation is negation as failure against an :class:`AgentState`: ``BEL`` is
delegated to a pluggable content prover, the other attitudes are looked up in
the agent's attitude store and actions in its action log.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union

from .wire import KqmlMessage, KqmlSyntaxError, parse_message, serialize_message


@dataclass(frozen=True)
class Var:
    """Template variable; closed by :func:`kqmlsem.semantics.instantiate`."""

    name: str

    def __str__(self) -> str:
        return self.name


AgentRef = Union[str, Var]
MessageRef = Union[KqmlMessage, Var]


class StateExpr:
    """Base class for all expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return format_expr(self)


@dataclass(frozen=True, repr=False)
class Bel(StateExpr):
    agent: AgentRef
    proposition: Union[str, Var]


@dataclass(frozen=True, repr=False)
class Know(StateExpr):
    agent: AgentRef
    arg: object


@dataclass(frozen=True, repr=False)
class Want(StateExpr):
    agent: AgentRef
    arg: object


@dataclass(frozen=True, repr=False)
class Int(StateExpr):
    agent: AgentRef
    arg: object


@dataclass(frozen=True, repr=False)
class Proc(StateExpr):
    agent: AgentRef
    message: MessageRef


@dataclass(frozen=True, repr=False)
class SendMsg(StateExpr):
    agent: AgentRef
    to: AgentRef
    message: MessageRef


@dataclass(frozen=True, repr=False)
class CanProc(StateExpr):
    agent: AgentRef
    message: MessageRef


@dataclass(frozen=True, repr=False)
class And(StateExpr):
    exprs: tuple


@dataclass(frozen=True, repr=False)
class Or(StateExpr):
    exprs: tuple


@dataclass(frozen=True, repr=False)
class Not(StateExpr):
    arg: object


for _cls in (Bel, Know, Want, Int, Proc, SendMsg, CanProc, And, Or, Not):
    _cls.__repr__ = StateExpr.__str__

ATTITUDES = (Know, Want, Int)
ACTIONS = (Proc, SendMsg)


def conj(*exprs) -> StateExpr:
    """Flattening conjunction; a single conjunct is returned unchanged."""
    flat = []
    for e in exprs:
        flat.extend(e.exprs if isinstance(e, And) else (e,))
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def conjuncts(e) -> tuple:
    if e is None:
        return ()
    return e.exprs if isinstance(e, And) else (e,)


# --------------------------------------------------------------------------
# well-formedness


def _agent_ok(a) -> bool:
    return isinstance(a, Var) or (isinstance(a, str) and bool(a) and not re.search(r"[\s()]", a))


def _msg_ok(m) -> bool:
    return isinstance(m, (KqmlMessage, Var))


def _know_arg_ok(e) -> bool:
    # A state description: an attitude, a past action, or a (negated) belief.
    if isinstance(e, Not):
        return isinstance(e.arg, Bel) and well_formed(e.arg)
    return isinstance(e, (Bel, Know, Want, Int, Proc, SendMsg, CanProc)) and well_formed(e)


def _want_arg_ok(e) -> bool:
    return isinstance(e, (Know, Proc, SendMsg)) and well_formed(e)


def well_formed(e) -> bool:
    """Check the nesting discipline; total on arbitrary input."""
    if isinstance(e, Bel):
        p = e.proposition
        return _agent_ok(e.agent) and (isinstance(p, Var) or (isinstance(p, str) and bool(p)))
    if isinstance(e, Know):
        return _agent_ok(e.agent) and _know_arg_ok(e.arg)
    if isinstance(e, (Want, Int)):
        return _agent_ok(e.agent) and _want_arg_ok(e.arg)
    if isinstance(e, (Proc, CanProc)):
        return _agent_ok(e.agent) and _msg_ok(e.message)
    if isinstance(e, SendMsg):
        return _agent_ok(e.agent) and _agent_ok(e.to) and _msg_ok(e.message)
    if isinstance(e, (And, Or)):
        return len(e.exprs) > 0 and all(well_formed(x) for x in e.exprs)
    if isinstance(e, Not):
        return well_formed(e.arg)
    return False


# --------------------------------------------------------------------------
# matching


def message_subsumes(template: Optional[KqmlMessage], msg: Optional[KqmlMessage]) -> bool:
    """True if every field set in ``template`` agrees with ``msg``.

    Blank fields of the template are wildcards, so an advertised message
    template covers the concrete message that later arrives.
    """
    if template is None:
        return True
    if msg is None or template.performative != msg.performative:
        return False
    for attr in ("sender", "receiver", "in_reply_to", "reply_with",
                 "language", "ontology", "from_", "to_"):
        t = getattr(template, attr)
        if t is not None and t != getattr(msg, attr):
            return False
    tc, mc = template.content, msg.content
    if tc is None:
        return True
    if isinstance(tc, KqmlMessage):
        return isinstance(mc, KqmlMessage) and message_subsumes(tc, mc)
    return tc == mc


def expr_matches(stored, query) -> bool:
    """Structural equality, except that message leaves match when either one
    subsumes the other (blank fields act as wildcards on both sides)."""
    if isinstance(stored, KqmlMessage) or isinstance(query, KqmlMessage):
        return (isinstance(stored, KqmlMessage) and isinstance(query, KqmlMessage)
                and (message_subsumes(stored, query) or message_subsumes(query, stored)))
    if type(stored) is not type(query):
        return False
    if isinstance(stored, (And, Or)):
        return len(stored.exprs) == len(query.exprs) and all(
            expr_matches(a, b) for a, b in zip(stored.exprs, query.exprs))
    if isinstance(stored, StateExpr):
        return all(expr_matches(getattr(stored, f), getattr(query, f))
                   for f in stored.__dataclass_fields__)
    return stored == query


def walk(e) -> Iterator:
    """Yield every node (expressions, agent names, messages) under ``e``."""
    yield e
    if isinstance(e, (And, Or)):
        for x in e.exprs:
            yield from walk(x)
    elif isinstance(e, StateExpr):
        for f in e.__dataclass_fields__:
            yield from walk(getattr(e, f))
    elif isinstance(e, KqmlMessage):
        if isinstance(e.content, KqmlMessage):
            yield from walk(e.content)


def mentions_agent(e, name: str) -> bool:
    """True if ``name`` occurs as an agent argument or a message party field."""
    for node in walk(e):
        if isinstance(node, (Bel, Know, Want, Int, Proc, CanProc)) and node.agent == name:
            return True
        if isinstance(node, SendMsg) and name in (node.agent, node.to):
            return True
        if isinstance(node, KqmlMessage) and name in (
                node.sender, node.receiver, node.from_, node.to_):
            return True
    return False


# --------------------------------------------------------------------------
# stores

ContentProver = Callable[[str, frozenset], bool]


def exact_match_prover(proposition: str, belief_base: frozenset) -> bool:
    return proposition in belief_base


class NotSelfBelief(ValueError):
    pass


class ProverFailure(RuntimeError):
    pass


# Provenance tag for expressions not asserted by any particular exchange.
INITIAL = ""


@dataclass
class AgentState:
    name: str
    belief_base: set = field(default_factory=set)
    attitude_store: set = field(default_factory=set)
    action_log: list = field(default_factory=list)
    facilitator: bool = False
    # expression -> tags of the exchanges that asserted it
    provenance: dict = field(default_factory=dict)

    def copy(self) -> "AgentState":
        return copy.deepcopy(self)

    def knowledge(self) -> tuple:
        """Comparable snapshot of beliefs and attitudes (actions excluded)."""
        return (frozenset(self.belief_base), frozenset(self.attitude_store))


def holds(state: AgentState, e, prover: ContentProver = exact_match_prover) -> bool:
    """Evaluate ``e`` against ``state`` with negation as failure.

    ``BEL`` about another agent is never provable from this agent's own
    base; such facts are only available as ``KNOW(self, BEL(other, P))``.
    """
    if isinstance(e, Bel):
        if e.agent != state.name:
            return False
        try:
            return bool(prover(e.proposition, frozenset(state.belief_base)))
        except Exception as exc:  # prover bugs are not "unprovable"
            raise ProverFailure(str(exc)) from exc
    if isinstance(e, (Know, Want, Int, CanProc)):
        return e in state.attitude_store or any(
            expr_matches(s, e) for s in state.attitude_store if type(s) is type(e))
    if isinstance(e, ACTIONS):
        return any(expr_matches(a, e) for a in state.action_log if type(a) is type(e))
    if isinstance(e, And):
        return all(holds(state, x, prover) for x in e.exprs)
    if isinstance(e, Or):
        return any(holds(state, x, prover) for x in e.exprs)
    if isinstance(e, Not):
        return not holds(state, e.arg, prover)
    raise TypeError(f"not an expression: {e!r}")


def assert_expr(state: AgentState, e, tag: str = INITIAL) -> None:
    """Add ``e`` to the appropriate part of ``state``; idempotent."""
    if isinstance(e, And):
        for x in e.exprs:
            assert_expr(state, x, tag)
        return
    if not well_formed(e):
        raise ValueError(f"ill-formed expression: {e}")
    if isinstance(e, Bel):
        if e.agent != state.name:
            raise NotSelfBelief(f"{state.name} cannot hold {e} in its own base")
        state.belief_base.add(e.proposition)
        return
    if isinstance(e, ACTIONS):
        if e not in state.action_log:
            state.action_log.append(e)
        return
    if isinstance(e, (Know, Want, Int, CanProc)):
        state.attitude_store.add(e)
        state.provenance.setdefault(e, set()).add(tag)
        return
    raise ValueError(f"cannot assert {type(e).__name__}: {e}")


def retract_expr(state: AgentState, e, tag: Optional[str] = None) -> None:
    """Remove ``e``.  With ``tag``, only that exchange's support is withdrawn
    and the expression survives while other exchanges still support it.
    Actions that already happened are never removed from the log.
    """
    if isinstance(e, And):
        for x in e.exprs:
            retract_expr(state, x, tag)
        return
    if isinstance(e, Bel):
        if e.agent == state.name:
            state.belief_base.discard(e.proposition)
        return
    if isinstance(e, ACTIONS):
        return
    if e not in state.attitude_store:
        return
    tags = state.provenance.get(e, set())
    if tag is not None:
        tags.discard(tag)
        if tags:
            return
    state.attitude_store.discard(e)
    state.provenance.pop(e, None)


# --------------------------------------------------------------------------
# text form

def _fmt_arg(x) -> str:
    if isinstance(x, KqmlMessage):
        return serialize_message(x)
    if isinstance(x, StateExpr):
        return format_expr(x)
    return str(x)


def format_expr(e) -> str:
    if isinstance(e, StateExpr) and type(e).__str__ is not StateExpr.__str__:
        return str(e)
    if isinstance(e, Bel):
        p = e.proposition
        prop = str(p) if isinstance(p, Var) else '"' + p.replace("\\", "\\\\").replace('"', '\\"') + '"'
        return f"BEL({e.agent},{prop})"
    if isinstance(e, (And, Or)):
        name = "and" if isinstance(e, And) else "or"
        return f"{name}(" + ",".join(format_expr(x) for x in e.exprs) + ")"
    if isinstance(e, Not):
        return f"not({_fmt_arg(e.arg)})"
    if isinstance(e, StateExpr):
        name = {Know: "KNOW", Want: "WANT", Int: "INT", Proc: "PROC",
                SendMsg: "SENDMSG", CanProc: "CANPROC"}[type(e)]
        args = [getattr(e, f) for f in e.__dataclass_fields__]
        return f"{name}(" + ",".join(_fmt_arg(a) for a in args) + ")"
    return _fmt_arg(e)


def dump_state(state: AgentState) -> str:
    """Deterministic multi-line rendering of a store, for golden tests."""
    lines = [f"agent {state.name}" + (" facilitator" if state.facilitator else "")]
    lines += [f"  bel {p}" for p in sorted(state.belief_base)]
    lines += [f"  hold {s}" for s in sorted(format_expr(e) for e in state.attitude_store)]
    lines += [f"  did {format_expr(a)}" for a in state.action_log]
    return "\n".join(lines) + "\n"


class ExprSyntaxError(ValueError):
    pass


_OPS = {"BEL": Bel, "KNOW": Know, "WANT": Want, "INT": Int, "PROC": Proc,
        "SENDMSG": SendMsg, "CANPROC": CanProc, "AND": And, "OR": Or, "NOT": Not}


def parse_expr(text: str):
    """Parse the notation produced by :func:`format_expr`."""
    expr, i = _parse_expr(text, _skip(text, 0))
    if _skip(text, i) != len(text):
        raise ExprSyntaxError(f"trailing text at {i}: {text[i:]!r}")
    return expr


def _skip(text, i):
    while i < len(text) and text[i].isspace():
        i += 1
    return i


def _parse_expr(text, i):
    m = re.compile(r"[A-Za-z]+").match(text, i)
    if not m or m.group().upper() not in _OPS or text[m.end():m.end() + 1] != "(":
        raise ExprSyntaxError(f"expected an operator at {i}")
    op = _OPS[m.group().upper()]
    i = m.end() + 1
    args = []
    while True:
        i = _skip(text, i)
        arg, i = _parse_arg(text, i, op, len(args))
        args.append(arg)
        i = _skip(text, i)
        if i < len(text) and text[i] == ",":
            i += 1
            continue
        if i < len(text) and text[i] == ")":
            i += 1
            break
        raise ExprSyntaxError(f"expected ',' or ')' at {i}")
    kinds = _ARG_KINDS.get(op)
    if kinds is not None:
        if len(args) != len(kinds):
            raise ExprSyntaxError(f"wrong arity for {op.__name__}")
        for a, k in zip(args, kinds):
            if not isinstance(a, k) or (k is str and isinstance(a, StateExpr)):
                raise ExprSyntaxError(f"bad argument {a!r} for {op.__name__}")
        return op(*args), i
    if not all(isinstance(a, StateExpr) for a in args):
        raise ExprSyntaxError(f"{op.__name__} takes expressions")
    return op(tuple(args)), i


_ARG_KINDS = {
    Bel: (str, str), Know: (str, StateExpr), Want: (str, StateExpr), Int: (str, StateExpr),
    Proc: (str, KqmlMessage), SendMsg: (str, str, KqmlMessage), CanProc: (str, KqmlMessage),
    Not: (StateExpr,),
}


def _parse_arg(text, i, op, index):
    if i >= len(text):
        raise ExprSyntaxError("unexpected end of input")
    if text[i] == '"':
        from .wire import _read_quoted
        s, j = _read_quoted(text, i)
        return s, j
    if text[i] == "(":
        depth, j, in_str = 0, i, False
        while j < len(text):
            ch = text[j]
            if in_str:
                if ch == "\\":
                    j += 1
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
                if depth == 0:
                    try:
                        return parse_message(text[i:j + 1], require_content=False), j + 1
                    except KqmlSyntaxError as exc:
                        raise ExprSyntaxError(f"bad message at {i}: {exc}") from exc
            j += 1
        raise ExprSyntaxError("unbalanced message")
    m = re.compile(r"[^\s(),\"]+").match(text, i)
    if not m:
        raise ExprSyntaxError(f"bad argument at {i}")
    if text[m.end():m.end() + 1] == "(" and m.group().upper() in _OPS:
        return _parse_expr(text, i)
    return m.group(), m.end()

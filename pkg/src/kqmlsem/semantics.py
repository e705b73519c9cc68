"""Performative semantics: six-part descriptors, send/receive gates, state updates.

Each descriptor pairs a performative with templates over the variables

    A  sender            B  receiver          X  content proposition
    M  the message the templates talk about (the message itself, the
       embedded message, or the message being replied to)
    D  third agent (anonymous from the requester's side of broker-one)
    S, S'  existential state: one of a fixed list of candidate templates

Checking a precondition succeeds if some choice of the existential variables
makes every conjunct hold.  Applying a message asserts its postconditions,
each tagged with the exchange that produced it so that a later ``sorry`` can
withdraw exactly that exchange's contribution.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .attitudes import (
    INITIAL, ACTIONS, AgentState, And, Bel, CanProc, ContentProver, Int, Know,
    Not, Or, Proc, SendMsg, StateExpr, Var, Want, conj, conjuncts,
    exact_match_prover, format_expr, holds, assert_expr, retract_expr,
    well_formed,
)
from .wire import KqmlMessage, Opaque

A, B, X, M, D = Var("A"), Var("B"), Var("X"), Var("M"), Var("D")
S, S2 = Var("S"), Var("S'")
FWD = Var("forward(B,A,-,A,M')")


@dataclass(frozen=True, repr=False)
class PostOf(StateExpr):
    """Marker for "the postcondition of message ``message`` for one party".

    ``party`` is ``"sender"`` or ``"receiver"`` of that message.  It only
    appears under ``not(...)`` in ``sorry``/``error`` templates and is
    expanded during instantiation.
    """

    message: object
    party: str

    def __str__(self) -> str:
        return f"Post_{self.message}({'A' if self.party == 'receiver' else 'B'})"

    __repr__ = __str__


class UnknownReplyTarget(LookupError):
    pass


@dataclass(frozen=True)
class SemanticDescriptor:
    performative: str
    description: str
    meaning: object
    pre_sender: object = None
    pre_receiver: object = None
    post_sender: object = None
    post_receiver: object = None
    completion: object = None
    comment: str = ""
    responder_kinds: frozenset = frozenset()
    # existential variable -> candidate templates, tried in order
    choices: tuple = ()
    # where M comes from: "self", "embedded" or "reply-target"
    message_source: str = "self"
    requires_facilitator: bool = False
    # requester/third-agent view of a brokered exchange
    relay: Optional["SemanticDescriptor"] = None
    signature: str = "A,B,X"

    @property
    def starter_allowed(self) -> bool:
        """A performative cannot open a conversation if its sender
        precondition must have been established by earlier communication:
        knowledge about another agent, or having processed a prior message."""
        for c in conjuncts(self.pre_sender):
            if isinstance(c, Know) and _mentions_other_agent(c.arg):
                return False
            if isinstance(c, ACTIONS) and self.message_source == "reply-target":
                return False
        return True


def _mentions_other_agent(e) -> bool:
    return any(isinstance(n, (Bel, Know, Want, Int, Proc, SendMsg, CanProc)) and n.agent != A
               for n in _nodes(e))


def _nodes(e):
    yield e
    if isinstance(e, (And, Or)):
        for x in e.exprs:
            yield from _nodes(x)
    elif isinstance(e, Not):
        yield from _nodes(e.arg)
    elif isinstance(e, (Know, Want, Int)):
        yield from _nodes(e.arg)


# --------------------------------------------------------------------------
# descriptor table

_ASK_CHOICES = ((S, (Bel(B, X), Not(Bel(B, X)))), (S2, (Bel(B, X), Not(Bel(B, X)))))
# A reply to ask-if is about the replying agent's belief, i.e. the tell sender.
_TELL_CHOICES = ((S, (Bel(A, X), Not(Bel(A, X)))),)
_RELAY_CHOICES = ((S, (Bel(D, X), Not(Bel(D, X)))), (S2, (Bel(D, X), Not(Bel(D, X)))))


def _sorry_like(name: str, extra: str = "") -> SemanticDescriptor:
    return SemanticDescriptor(
        performative=name,
        description=("A states to B that although it processed the message M identified "
                     "by :in-reply-to, it has no (further) response to provide." + extra),
        meaning=Proc(A, M),
        pre_sender=Proc(A, M),
        pre_receiver=SendMsg(B, A, M),
        post_sender=conj(Know(A, Know(B, Proc(A, M))), Not(PostOf(M, "receiver"))),
        post_receiver=conj(Know(B, Proc(A, M)), Not(PostOf(M, "sender"))),
        completion=Know(B, Proc(A, M)),
        comment=("The postconditions of M are not to be inferred as a result of this "
                 "exchange; copies established by earlier exchanges are kept."),
        message_source="reply-target",
        signature="A,B,Id",
    )


def builtin_descriptors(enable_proactive: bool = False) -> dict:
    """Descriptor table keyed by performative name."""
    table = {}
    table["advertise"] = SemanticDescriptor(
        performative="advertise",
        description=("A states to B that A can and will process the message M from B, "
                     "if it receives one."),
        meaning=Int(A, Proc(A, M)),
        pre_sender=Int(A, Proc(A, M)),
        pre_receiver=None,
        post_sender=Know(A, Know(B, Int(A, Proc(A, M)))),
        post_receiver=Know(B, Int(A, Proc(A, M))),
        completion=Know(B, Int(A, Proc(A, M))),
        comment="Commissive: M is the embedded message performative(B,A,X).",
        responder_kinds=frozenset({"ask-if", "sorry", "error"}),
        message_source="embedded",
        signature="A,B,M",
    )
    table["ask-if"] = SemanticDescriptor(
        performative="ask-if",
        description="A wants to know what B believes regarding the truth of X.",
        meaning=Want(A, Know(A, S)),
        pre_sender=conj(Want(A, Know(A, S)), Know(A, Int(B, Proc(B, M)))),
        pre_receiver=Int(B, Proc(B, M)),
        post_sender=Int(A, Know(A, S)),
        post_receiver=Know(B, Want(A, Know(A, S))),
        completion=Know(A, S2),
        comment="S and S' range over BEL(B,X) and not(BEL(B,X)); needs a prior advertise.",
        responder_kinds=frozenset({"tell", "sorry", "error"}),
        choices=_ASK_CHOICES,
    )
    table["tell"] = SemanticDescriptor(
        performative="tell",
        description="A states to B that A believes the content to be true.",
        meaning=Bel(A, X),
        pre_sender=conj(Bel(A, X), Know(A, Want(B, Know(B, S)))),
        pre_receiver=Int(B, Know(B, S)),
        post_sender=Know(A, Know(B, Bel(A, X))),
        post_receiver=Know(B, Bel(A, X)),
        completion=Know(B, Bel(A, X)),
        comment="S ranges over BEL(A,X) and not(BEL(A,X)), the state B asked about.",
        responder_kinds=frozenset({"sorry", "error"}),
        choices=_TELL_CHOICES,
    )
    table["sorry"] = _sorry_like("sorry")
    table["error"] = _sorry_like("error", " The optional :content carries a free-text reason.")
    relay = SemanticDescriptor(
        performative="broker-one",
        description="A wants to know what some other agent believes regarding X.",
        meaning=Want(A, Know(A, S)),
        pre_sender=Want(A, Know(A, S)),
        post_sender=Int(A, Know(A, S)),
        completion=Know(A, S2),
        comment="D stays anonymous to A; D's own state is untouched by this view.",
        choices=_RELAY_CHOICES,
    )
    table["broker-one"] = SemanticDescriptor(
        performative="broker-one",
        description=("A wants B (a facilitator) to send the embedded directive to some agent "
                     "that can process it and forward that agent's response back to A."),
        meaning=Want(A, SendMsg(B, D, M)),
        pre_sender=Want(A, SendMsg(B, D, M)),
        pre_receiver=None,
        post_sender=Know(A, SendMsg(B, D, M)),
        post_receiver=SendMsg(B, D, M),
        completion=SendMsg(B, A, FWD),
        comment=("M is performative(B,D,X) with D able to process it. B must be a "
                 "facilitator. The requester only ever sees D as an anonymous agent."),
        responder_kinds=frozenset({"forward", "sorry", "error"}),
        choices=_RELAY_CHOICES,
        requires_facilitator=True,
        relay=relay,
        signature="A,B,performative(A,-,X)",
    )
    table["forward"] = SemanticDescriptor(
        performative="forward",
        description=("A passes to B a message whose originator is :from and whose final "
                     "destination is :to."),
        meaning=Proc(A, M),
        pre_sender=Proc(A, M),
        comment="Delivery only: M is the request being answered; no attitudes are asserted.",
        message_source="reply-target",
        signature="A,B,from,to,M'",
    )
    if enable_proactive:
        tell = table["tell"]
        table["proactive-tell"] = SemanticDescriptor(
            performative="proactive-tell",
            description="A states to B, unsolicited, that A believes the content to be true.",
            meaning=tell.meaning, pre_sender=Bel(A, X), pre_receiver=None,
            post_sender=tell.post_sender, post_receiver=tell.post_receiver,
            completion=tell.completion,
            comment="tell without the requirement of a prior request.",
            responder_kinds=frozenset({"sorry", "error"}),
        )
        ask = table["ask-if"]
        table["proactive-ask-if"] = SemanticDescriptor(
            performative="proactive-ask-if",
            description="A asks B directly what B believes regarding the truth of X.",
            meaning=ask.meaning, pre_sender=Want(A, Know(A, S)), pre_receiver=None,
            post_sender=ask.post_sender, post_receiver=ask.post_receiver,
            completion=ask.completion,
            comment="ask-if without the requirement of a prior advertise.",
            responder_kinds=ask.responder_kinds, choices=_ASK_CHOICES,
        )
    return table


DEFAULT_TABLE = builtin_descriptors(enable_proactive=True)


# --------------------------------------------------------------------------
# instantiation


def anonymous_agent(broker_msg: KqmlMessage) -> str:
    """Stand-in name for the brokered agent on the requester's side."""
    return "?" + (broker_msg.reply_with or "D")


def exchange_key(msg: KqmlMessage) -> str:
    """Provenance tag for assertions caused by ``msg``."""
    if msg.reply_with:
        return f"{msg.sender}/{msg.reply_with}"
    from .wire import serialize_message
    return serialize_message(msg)


def find_reply_target(state: AgentState, msg: KqmlMessage, role: str) -> KqmlMessage:
    """The logged message that ``msg`` answers, seen from ``state``.

    The role tells which side ``state`` is on for ``msg``: a sender looks for
    a message it processed, a receiver for one it sent.
    """
    rid = msg.in_reply_to
    if rid is not None:
        for entry in reversed(state.action_log):
            if role == "sender" and isinstance(entry, Proc) and isinstance(entry.message, KqmlMessage):
                m = entry.message
                if m.reply_with == rid and m.sender == msg.receiver:
                    return m
            if role == "receiver" and isinstance(entry, SendMsg) and isinstance(entry.message, KqmlMessage):
                m = entry.message
                if m.reply_with == rid and entry.to == msg.sender:
                    return m
    raise UnknownReplyTarget(f"{msg.performative} in reply to {rid!r}: no such message at {state.name}")


def _content_prop(msg: Optional[KqmlMessage]) -> Optional[str]:
    if msg is None:
        return None
    if isinstance(msg.content, Opaque):
        return msg.content.text
    if isinstance(msg.content, KqmlMessage):
        return _content_prop(msg.content)
    return None


def bindings_for(desc: SemanticDescriptor, msg: KqmlMessage,
                 state: Optional[AgentState] = None, role: str = "sender") -> dict:
    b = {"A": msg.sender, "B": msg.receiver, "X": _content_prop(msg)}
    if desc.message_source == "self":
        b["M"] = msg
    elif desc.message_source == "embedded":
        b["M"] = msg.nested
    else:
        if state is None:
            raise UnknownReplyTarget("reply target lookup needs an agent state")
        b["M"] = find_reply_target(state, msg, role)
    if desc.performative == "broker-one":
        anon = anonymous_agent(msg)
        inner = msg.nested
        b["D"] = anon
        b["M"] = KqmlMessage(inner.performative if inner else "ask-if", sender=msg.receiver,
                             receiver=anon, content=inner.content if inner else None)
        b["forward(B,A,-,A,M')"] = KqmlMessage("forward", sender=msg.receiver,
                                               receiver=msg.sender, to_=msg.sender,
                                               in_reply_to=msg.reply_with)
    return b


def substitute(template, bindings: Mapping):
    """Replace variables; :class:`PostOf` markers are left for :func:`expand`."""
    if isinstance(template, Var):
        if template.name not in bindings:
            return template
        return bindings[template.name]
    if isinstance(template, (And, Or)):
        return type(template)(tuple(substitute(x, bindings) for x in template.exprs))
    if isinstance(template, StateExpr):
        vals = {f: substitute(getattr(template, f), bindings)
                for f in template.__dataclass_fields__}
        return type(template)(**vals)
    return template


def free_vars(e) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (And, Or)):
        return set().union(*(free_vars(x) for x in e.exprs))
    if isinstance(e, StateExpr):
        return set().union(*(free_vars(getattr(e, f)) for f in e.__dataclass_fields__))
    return set()


def _choice_vars(desc: SemanticDescriptor, template) -> list:
    present = free_vars(template)
    return [(v.name, cands) for v, cands in desc.choices if v.name in present]


def closures(desc: SemanticDescriptor, template, bindings: Mapping,
             table: Mapping = DEFAULT_TABLE, fixed: Optional[Mapping] = None):
    """Yield ``(choice, expr)`` for every way of closing ``template``.

    ``choice`` maps existential variable names to the picked candidate.
    """
    if template is None:
        yield {}, None
        return
    fixed = dict(fixed or {})
    cvars = [(n, c) for n, c in _choice_vars(desc, template) if n not in fixed]
    picks = [[substitute(c, bindings) for c in cands] for _, cands in cvars]
    for combo in itertools.product(*picks):
        choice = dict(fixed)
        choice.update({n: v for (n, _), v in zip(cvars, combo)})
        expr = substitute(template, {**bindings, **choice})
        yield choice, expand(expr, table)


def instantiate(desc: SemanticDescriptor, template, bindings: Mapping,
                table: Mapping = DEFAULT_TABLE, choice: Optional[Mapping] = None):
    """Close ``template`` with the first (or the given) existential choice."""
    for _, expr in closures(desc, template, bindings, table, choice):
        return expr
    return None


def post_for(msg: KqmlMessage, party: str, table: Mapping = DEFAULT_TABLE):
    """Every postcondition ``msg`` can assert for one party, all choices included."""
    desc = table[msg.performative]
    b = bindings_for(desc, msg) if desc.message_source != "reply-target" else None
    if b is None:
        return None
    out = []
    for d in (desc, desc.relay):
        if d is None:
            continue
        template = d.post_sender if party == "sender" else d.post_receiver
        for _, e in closures(d, template, b, table):
            if e is not None:
                out.extend(c for c in conjuncts(e) if c not in out)
    return conj(*out) if out else None


def expand(e, table: Mapping = DEFAULT_TABLE):
    if isinstance(e, PostOf):
        if not isinstance(e.message, KqmlMessage):
            return e
        return post_for(e.message, e.party, table)
    if isinstance(e, Not):
        inner = expand(e.arg, table)
        return Not(inner) if inner is not None else None
    if isinstance(e, (And, Or)):
        parts = [x for x in (expand(x, table) for x in e.exprs) if x is not None]
        return type(e)(tuple(parts)) if parts else None
    return e


# --------------------------------------------------------------------------
# checking


@dataclass(frozen=True)
class Violation:
    condition: str  # "pre_sender" or "pre_receiver"
    expr: object
    message: KqmlMessage
    reason: str = ""

    def __str__(self) -> str:
        what = format_expr(self.expr) if self.expr is not None else self.reason
        return f"{self.condition} unmet for {self.message.performative}: {what}"


def _check(desc, template, state, msg, condition, bindings, table, prover):
    """Return (choice, None) on success or (None, Violation)."""
    first_unmet = None
    for choice, expr in closures(desc, template, bindings, table):
        if expr is None:
            return choice, None
        unmet = [c for c in conjuncts(expr) if not holds(state, c, prover)]
        if not unmet:
            return choice, None
        if first_unmet is None:
            first_unmet = unmet[0] if len(unmet) == 1 else conj(*unmet)
    return None, Violation(condition, first_unmet, msg)


def _lookup(table, msg):
    try:
        return table[msg.performative]
    except KeyError:
        raise KeyError(f"no descriptor for {msg.performative!r}") from None


def check_send(state: AgentState, msg: KqmlMessage, table: Mapping = DEFAULT_TABLE,
               prover: ContentProver = exact_match_prover) -> Optional[Violation]:
    """``None`` if ``state`` may send ``msg``, else the unmet precondition."""
    desc = _lookup(table, msg)
    try:
        b = bindings_for(desc, msg, state, "sender")
    except UnknownReplyTarget as exc:
        return Violation("pre_sender", None, msg, str(exc))
    _, v = _check(desc, desc.pre_sender, state, msg, "pre_sender", b, table, prover)
    if v is None and desc.relay is not None:
        _, v = _check(desc.relay, desc.relay.pre_sender, state, msg, "pre_sender", b, table, prover)
    return v


def check_receive(state: AgentState, msg: KqmlMessage, table: Mapping = DEFAULT_TABLE,
                  prover: ContentProver = exact_match_prover) -> Optional[Violation]:
    desc = _lookup(table, msg)
    if desc.requires_facilitator and not state.facilitator:
        return Violation("pre_receiver", None, msg, f"{state.name} is not a facilitator")
    try:
        b = bindings_for(desc, msg, state, "receiver")
    except UnknownReplyTarget as exc:
        return Violation("pre_receiver", None, msg, str(exc))
    _, v = _check(desc, desc.pre_receiver, state, msg, "pre_receiver", b, table, prover)
    return v


def motivating_conjuncts(state: AgentState, msg: KqmlMessage, table: Mapping = DEFAULT_TABLE,
                         include_beliefs: bool = False) -> list:
    """Sender preconditions about the sender's own desires and intentions.

    These are the attitudes an agent adopts by deciding to send; anything
    that has to come from earlier communication is excluded.
    """
    desc = _lookup(table, msg)
    try:
        b = bindings_for(desc, msg, state, "sender")
    except UnknownReplyTarget:
        return []
    out = []
    for d in (desc, desc.relay):
        if d is None:
            continue
        expr = instantiate(d, d.pre_sender, b, table)
        for c in conjuncts(expr):
            own = getattr(c, "agent", None) == state.name
            if own and (isinstance(c, (Want, Int)) or (include_beliefs and isinstance(c, Bel))):
                out.append(c)
    return out


# --------------------------------------------------------------------------
# applying


def _apply_post(state, desc, template, b, choice, tag, table, suppress_tag):
    expr = instantiate(desc, template, b, table, choice)
    for c in conjuncts(expr):
        if isinstance(c, Not):
            for target in conjuncts(c.arg):
                retract_expr(state, target, suppress_tag)
        elif isinstance(c, ACTIONS):
            continue  # actions enter the log only when they happen
        else:
            assert_expr(state, c, tag)


def apply_send(state: AgentState, msg: KqmlMessage, table: Mapping = DEFAULT_TABLE,
               prover: ContentProver = exact_match_prover) -> None:
    """Update the sender's store after ``msg`` went out."""
    desc = _lookup(table, msg)
    b = bindings_for(desc, msg, state, "sender")
    tag = exchange_key(msg)
    suppress = exchange_key(b["M"]) if desc.message_source == "reply-target" else None
    for d in (desc, desc.relay):
        if d is None:
            continue
        choice, _ = _check(d, d.pre_sender, state, msg, "pre_sender", b, table, prover)
        _apply_post(state, d, d.post_sender, b, choice, tag, table, suppress)
    assert_expr(state, SendMsg(state.name, msg.receiver, msg))


def apply_receive(state: AgentState, msg: KqmlMessage, table: Mapping = DEFAULT_TABLE,
                  prover: ContentProver = exact_match_prover) -> None:
    """Update the receiver's store after processing ``msg``."""
    desc = _lookup(table, msg)
    b = bindings_for(desc, msg, state, "receiver")
    tag = exchange_key(msg)
    suppress = exchange_key(b["M"]) if desc.message_source == "reply-target" else None
    assert_expr(state, Proc(state.name, msg))
    _apply_post(state, desc, desc.post_receiver, b, None, tag, table, suppress)
    if msg.performative in ("tell", "proactive-tell"):
        _settle_question(state, msg.sender, b["X"])
    elif msg.performative == "forward":
        _receive_relayed(state, msg, b["M"], table)


def _settle_question(state: AgentState, about: str, prop: Optional[str]) -> None:
    # Once the answer is known the intention to learn it is fulfilled.
    if prop is None:
        return
    for s in (Bel(about, prop), Not(Bel(about, prop))):
        retract_expr(state, Int(state.name, Know(state.name, s)))


def _receive_relayed(state: AgentState, fwd: KqmlMessage, request: KqmlMessage, table) -> None:
    """Requester's view of a forwarded answer to its broker-one."""
    inner = fwd.nested
    if request.performative != "broker-one" or inner is None or request.sender != state.name:
        return
    anon = anonymous_agent(request)
    prop = _content_prop(inner)
    if inner.performative == "tell" and prop is not None:
        assert_expr(state, Know(state.name, Bel(anon, prop)), exchange_key(request))
        _settle_question(state, anon, prop)


# --------------------------------------------------------------------------
# completion


def _agent_of(e):
    e = e.arg if isinstance(e, Not) else e
    return getattr(e, "agent", None)


def completion_holds(states: Mapping, msg: KqmlMessage, table: Mapping = DEFAULT_TABLE,
                     prover: ContentProver = exact_match_prover) -> bool:
    desc = _lookup(table, msg)
    try:
        b = bindings_for(desc, msg, states.get(msg.sender), "sender")
    except UnknownReplyTarget:
        return False
    for d in (desc, desc.relay):
        if d is None or d.completion is None:
            continue
        ok = False
        for _, expr in closures(d, d.completion, b, table):
            if all(c is not None and _agent_of(c) in states and
                   holds(states[_agent_of(c)], c, prover) for c in conjuncts(expr)):
                ok = True
                break
        if not ok:
            return False
    return True


def completion_met(states: Mapping, conversation, table: Mapping = DEFAULT_TABLE,
                   prover: ContentProver = exact_match_prover) -> bool:
    """True if every message of the conversation has reached its completion.

    A conversation ending in an unanswered directive therefore is not
    complete, while one ending after ``advertise`` or ``tell`` is.
    ``states`` maps agent names to stores; absent agents never satisfy
    anything.
    """
    return all(completion_holds(states, m, table, prover) for m in conversation)


# --------------------------------------------------------------------------
# reports


def _fmt(t) -> str:
    return "NONE" if t is None else format_expr(t)


def describe(desc: SemanticDescriptor) -> str:
    lines = [
        f"{desc.performative}({desc.signature})",
        f"  1. {desc.description}",
        f"  2. {_fmt(desc.meaning)}",
        f"  3. Pre(A): {_fmt(desc.pre_sender)}",
        f"     Pre(B): {'B is a facilitator' if desc.requires_facilitator else _fmt(desc.pre_receiver)}",
        f"  4. Post(A): {_fmt(desc.post_sender)}",
        f"     Post(B): {_fmt(desc.post_receiver)}",
        f"  5. Completion: {_fmt(desc.completion)}",
        f"  6. {desc.comment}",
    ]
    if desc.relay is not None:
        r = desc.relay
        lines += [
            "  requester and brokered agent:",
            f"     Pre(A): {_fmt(r.pre_sender)}",
            f"     Post(A): {_fmt(r.post_sender)}",
            f"     Completion: {_fmt(r.completion)}",
        ]
    return "\n".join(lines) + "\n"


def descriptor_report(table: Mapping = DEFAULT_TABLE) -> str:
    return "\n".join(describe(table[name]) for name in sorted(table))

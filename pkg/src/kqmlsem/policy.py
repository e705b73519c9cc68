"""Conversation policies as a definite clause grammar over message terminals.

A terminal is a message seen from one agent: performative, sender, receiver,
in-reply-to, reply-with, a direction bit (1 incoming, 0 outgoing) and the
content, which is itself a terminal when a message is embedded.  Language and
ontology are not part of terminals.

Rules are plain data (:class:`Rule`) interpreted by a small engine.  The
engine runs breadth-first: a :class:`ConversationState` holds every live
parse (a *branch*: remaining goals plus variable bindings), and
:func:`step` advances all of them over one terminal.  A sequence is accepted
while at least one branch survives, so every prefix of a conversation is a
conversation.

Guards (``member``, the direction flip, the sub-conversation ``last`` lookup)
are attached to rules as goals.  Pure guards are posted as constraints as
soon as their rule is entered and re-checked after every binding, so a
starter restriction written after the nonterminal it restricts still rejects
the very first message.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Protocol, Union

from .wire import KqmlMessage, Opaque, OUTGOING, INCOMING

STARTERS = ("advertise", "broker-one")
PROACTIVE_STARTERS = ("proactive-ask-if", "proactive-tell")


# --------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class V:
    """Grammar variable.  ``_`` is anonymous: every occurrence is distinct."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Terminal:
    performative: object
    sender: object
    receiver: object
    in_reply_to: object
    reply_with: object
    io: object
    content: object = None

    FIELDS = ("performative", "sender", "receiver", "in_reply_to", "reply_with", "io", "content")

    def values(self) -> tuple:
        return tuple(getattr(self, f) for f in self.FIELDS)

    @classmethod
    def from_message(cls, msg: KqmlMessage, io: int, strip_forward: bool = True) -> "Terminal":
        """Build the terminal for ``msg`` seen with direction ``io``.

        Embedded messages get the opposite direction, since they describe
        the expected follow-up.  An incoming ``forward`` is replaced by the
        message it carries, which is what the receiving side's policy
        expects to see.
        """
        if strip_forward and io == 1 and msg.performative == "forward" and msg.nested is not None:
            return replace(cls.from_message(msg.nested, 0, strip_forward=False), io=1)
        if isinstance(msg.content, KqmlMessage):
            content = cls.from_message(msg.content, 1 - io, strip_forward=False)
        elif isinstance(msg.content, Opaque):
            content = msg.content.text
        else:
            content = None
        return cls(msg.performative, msg.sender, msg.receiver, msg.in_reply_to,
                   msg.reply_with, io, content)

    def __str__(self) -> str:
        return "[" + ",".join(_fmt_term(v) for v in self.values()) + "]"


def _fmt_term(v) -> str:
    if v is None:
        return "[]"
    if isinstance(v, V):
        return "_" if v.name.startswith("_") else "?" + v.name.split("#")[0]
    return str(v)


# --------------------------------------------------------------------------
# goals and rules


@dataclass(frozen=True)
class NT:
    name: str
    args: tuple

    def __str__(self) -> str:
        return f"{self.name}(" + ",".join(_fmt_src(a) for a in self.args) + ")"


@dataclass(frozen=True)
class T:
    pattern: Terminal

    def __str__(self) -> str:
        return "[" + _fmt_src(self.pattern) + "]"


@dataclass(frozen=True)
class Member:
    var: object
    values: tuple

    def __str__(self) -> str:
        return "{member(" + _fmt_src(self.var) + ",[" + ",".join(self.values) + "])}"


@dataclass(frozen=True)
class Flip:
    out: object
    inp: object

    def __str__(self) -> str:
        return "{" + f"{_fmt_src(self.out)} is abs(1-{_fmt_src(self.inp)})" + "}"


@dataclass(frozen=True)
class Last:
    """Tail of the sub-conversation opened on behalf of a broker request.

    The sub-conversation is the one containing an outgoing message whose
    reply-with starts with ``<broker reply-with>.``; its last message must be
    the incoming reply to that message.  ``pattern`` is unified with it.
    """

    link: object
    pattern: Terminal

    def __str__(self) -> str:
        return "{last(" + _fmt_src(self.link) + "," + _fmt_src(self.pattern) + ")}"


@dataclass(frozen=True)
class Emit:
    """Obligation to send a message, picked up by the simulator."""

    pattern: Terminal

    def __str__(self) -> str:
        return "{assert(send_MSG(" + _fmt_src(self.pattern) + "))}"


Goal = Union[NT, T, Member, Flip, Last, Emit]
GUARDS = (Member, Flip)


@dataclass(frozen=True)
class Rule:
    head: str
    params: tuple
    body: tuple = ()

    def __str__(self) -> str:
        head = f"{self.head}(" + ",".join(_fmt_src(p) for p in self.params) + ")"
        body = ", ".join(str(g) for g in self.body) if self.body else "[]"
        return f"{head} --> {body}"


def _fmt_src(v) -> str:
    if isinstance(v, V):
        return v.name
    if isinstance(v, Terminal):
        return "[" + ",".join(_fmt_src(x) for x in v.values()) + "]"
    if v is None:
        return "[]"
    return str(v)


# --------------------------------------------------------------------------
# the conversation policies


def builtin_grammar(enable_proactive: bool = False) -> tuple:
    """Rules for advertise, ask-if, tell, sorry/error and broker-one."""
    (CC, P, P1, S, R, IR, Rw, IO, OI, C, C1, Rw1, Rw2, RwA, RwB, Brk, _) = (
        V(n) for n in "CC P P1 S R IR Rw IO OI C C1 Rw1 Rw2 Rw_adv Rw_brk Brk _".split())
    starters = STARTERS + (PROACTIVE_STARTERS if enable_proactive else ())
    rules = [
        Rule("S", (CC,), (NT("s", (CC, P, S, R, IR, Rw, IO, C)), Member(P, starters))),
        # ask-if, tell
        Rule("s", (CC, "ask-if", S, R, IR, Rw, IO, C),
             (T(Terminal("ask-if", S, R, IR, Rw, IO, C)),)),
        Rule("s", (CC, "ask-if", S, R, IR, Rw, IO, C),
             (T(Terminal("ask-if", S, R, IR, Rw, IO, C)), Flip(OI, IO),
              NT("r", (CC, "ask-if", S, R, _, Rw, OI, C)))),
        Rule("r", (CC, "ask-if", R, S, _, IR, IO, C),
             (T(Terminal("tell", S, R, IR, Rw, IO, C)),)),
        Rule("r", (CC, "ask-if", R, S, _, IR, IO, C),
             (NT("problem", (CC, R, S, IR, _, IO)),)),
        # sorry, error
        Rule("problem", (CC, R, S, IR, Rw, IO),
             (T(Terminal("sorry", S, R, IR, Rw, IO, None)),)),
        Rule("problem", (CC, R, S, IR, Rw, IO),
             (T(Terminal("error", S, R, IR, Rw, IO, _)),)),
        # advertise
        Rule("s", (CC, "advertise", S, R, _, Rw, IO, _),
             (Flip(OI, IO),
              T(Terminal("advertise", S, R, _, Rw, IO, Terminal(P1, R, S, Rw, _, OI, C1))),
              Member(P1, ("ask-if",)),
              NT("c_adv", (CC, P1, S, R, Rw, _, OI, C1)))),
        Rule("c_adv", (CC, P, R, S, RwA, _, IO, C), (NT("s", (CC, P, S, R, RwA, _, IO, C)),)),
        Rule("c_adv", (CC, P, R, S, RwA, _, IO, C), (NT("problem", (CC, R, S, RwA, _, IO)),)),
        Rule("c_adv", (CC, P, R, S, RwA, _, IO, C), ()),
        # broker-one
        Rule("s", (CC, "broker-one", S, R, IR, Rw, IO, C),
             (Flip(OI, IO),
              T(Terminal("broker-one", S, R, IR, Rw, IO, Terminal(P1, _, _, _, Rw1, _, C1))),
              Member(P1, ("ask-if",)),
              NT("c_brk_one", (CC, P1, S, R, Rw, Rw1, OI, C1)))),
        # requester's side: the answer arrives unwrapped from its forward
        Rule("c_brk_one", (CC, P, R, S, RwB, Rw, 1, C), ()),
        Rule("c_brk_one", (CC, P, R, S, RwB, Rw, 1, C), (NT("problem", (CC, R, S, RwB, _, 1)),)),
        Rule("c_brk_one", (CC, P, R, S, RwB, Rw, 1, C), (NT("r", (CC, P, R, Brk, _, Rw, 1, C)),)),
        # facilitator's side
        Rule("c_brk_one", (CC, P, R, S, RwB, Rw, 0, C), ()),
        Rule("c_brk_one", (CC, P, R, S, RwB, Rw, 0, C), (NT("problem", (CC, R, S, RwB, _, 0)),)),
        Rule("c_brk_one", (CC, P, R, S, RwB, Rw, 0, C),
             (NT("c_brk_one1", (CC, P, S, R, Brk, RwB, Rw, 0, C)),)),
        Rule("c_brk_one1", (CC, P, S, R, Brk, RwB, Rw, IO, C), ()),
        Rule("c_brk_one1", (CC, P, S, R, Brk, RwB, Rw, IO, C),
             (Flip(OI, IO),
              Last(RwB, Terminal(P1, Brk, S, _, Rw1, OI, C1)),
              Emit(Terminal("forward", S, R, RwB, Rw2, IO, Terminal(P1, None, R, Rw, Rw1, OI, C1))),
              T(Terminal("forward", S, R, RwB, Rw2, IO, Terminal(P1, None, R, Rw, Rw1, OI, C1))))),
    ]
    if enable_proactive:
        rules += [
            Rule("s", (CC, "proactive-ask-if", S, R, IR, Rw, IO, C),
                 (T(Terminal("proactive-ask-if", S, R, IR, Rw, IO, C)),)),
            Rule("s", (CC, "proactive-ask-if", S, R, IR, Rw, IO, C),
                 (T(Terminal("proactive-ask-if", S, R, IR, Rw, IO, C)), Flip(OI, IO),
                  NT("r", (CC, "ask-if", S, R, _, Rw, OI, C)))),
            Rule("s", (CC, "proactive-tell", S, R, IR, Rw, IO, C),
                 (T(Terminal("proactive-tell", S, R, IR, Rw, IO, C)),)),
            Rule("s", (CC, "proactive-tell", S, R, IR, Rw, IO, C),
                 (T(Terminal("proactive-tell", S, R, IR, Rw, IO, C)), Flip(OI, IO),
                  NT("problem", (CC, S, R, Rw, _, OI)))),
        ]
    return tuple(rules)


def rules_for(rules: Iterable[Rule], head: str) -> list:
    return [r for r in rules if r.head == head]


# --------------------------------------------------------------------------
# unification

_fresh = itertools.count()


def _rename(term, suffix: str, memo: dict):
    if isinstance(term, V):
        if term.name == "_":
            return V(f"_#{next(_fresh)}")
        if term.name not in memo:
            memo[term.name] = V(f"{term.name}#{suffix}")
        return memo[term.name]
    if isinstance(term, Terminal):
        return Terminal(*(_rename(x, suffix, memo) for x in term.values()))
    if isinstance(term, tuple):
        return tuple(_rename(x, suffix, memo) for x in term)
    if isinstance(term, NT):
        return NT(term.name, _rename(term.args, suffix, memo))
    if isinstance(term, T):
        return T(_rename(term.pattern, suffix, memo))
    if isinstance(term, Member):
        return Member(_rename(term.var, suffix, memo), term.values)
    if isinstance(term, Flip):
        return Flip(_rename(term.out, suffix, memo), _rename(term.inp, suffix, memo))
    if isinstance(term, Last):
        return Last(_rename(term.link, suffix, memo), _rename(term.pattern, suffix, memo))
    if isinstance(term, Emit):
        return Emit(_rename(term.pattern, suffix, memo))
    return term


def deref(term, b: Mapping):
    while isinstance(term, V) and term.name in b:
        term = b[term.name]
    return term


def resolve(term, b: Mapping):
    """Substitute bindings all the way down."""
    term = deref(term, b)
    if isinstance(term, Terminal):
        return Terminal(*(resolve(x, b) for x in term.values()))
    return term


def unify(x, y, b: dict) -> Optional[dict]:
    """Extend bindings ``b`` (copied) so that ``x`` and ``y`` are equal."""
    b = dict(b)
    stack = [(x, y)]
    while stack:
        p, q = stack.pop()
        p, q = deref(p, b), deref(q, b)
        if isinstance(p, V) and isinstance(q, V) and p.name == q.name:
            continue
        if isinstance(p, V):
            b[p.name] = q
        elif isinstance(q, V):
            b[q.name] = p
        elif isinstance(p, Terminal) and isinstance(q, Terminal):
            stack.extend(zip(p.values(), q.values()))
        elif isinstance(p, Terminal) or isinstance(q, Terminal):
            return None
        elif p != q:
            return None
    return b


def _propagate(constraints: tuple, b: dict) -> Optional[dict]:
    changed = True
    while changed:
        changed = False
        for c in constraints:
            if isinstance(c, Member):
                v = deref(c.var, b)
                if not isinstance(v, V) and v not in c.values:
                    return None
            elif isinstance(c, Flip):
                out, inp = deref(c.out, b), deref(c.inp, b)
                if isinstance(inp, V) and isinstance(out, V):
                    continue
                if isinstance(out, V):
                    if inp not in (0, 1):
                        return None
                    b = dict(b)
                    b[out.name] = 1 - inp
                    changed = True
                elif isinstance(inp, V):
                    if out not in (0, 1):
                        return None
                    b = dict(b)
                    b[inp.name] = 1 - out
                    changed = True
                elif out not in (0, 1) or inp != 1 - out:
                    return None
    return b


# --------------------------------------------------------------------------
# engine


class PolicyContext(Protocol):
    def last_reply(self, prefix: str) -> Optional[tuple]:
        """``(opening, last)`` terminals of the sub-conversation whose
        outgoing message has a reply-with starting with ``prefix``."""


class _NoContext:
    def last_reply(self, prefix: str):
        return None


NO_CONTEXT = _NoContext()


@dataclass(frozen=True)
class Obligation:
    """A message the grammar requires the owner to send next."""

    conversation: str
    terminal: Terminal


@dataclass(frozen=True)
class Branch:
    goals: tuple
    bindings: Mapping
    constraints: tuple = ()
    obligations: tuple = ()


@dataclass(frozen=True)
class ConversationState:
    conversation: str
    prefix: tuple = ()
    frontier: tuple = ()
    status: str = "open"

    @property
    def is_open(self) -> bool:
        return self.status == "open"


_MAX_DEPTH = 64


def _ready(br: Branch, rules, ctx, depth: int = 0):
    """Expand ``br`` until its first goal is a terminal or it is exhausted."""
    if depth > _MAX_DEPTH:
        return
    if not br.goals:
        yield br
        return
    g, rest = br.goals[0], br.goals[1:]
    if isinstance(g, T):
        yield br
    elif isinstance(g, NT):
        for i, rule in enumerate(rules_for(rules, g.name)):
            memo: dict = {}
            suffix = str(next(_fresh))
            params = _rename(rule.params, suffix, memo)
            body = _rename(rule.body, suffix, memo)
            if len(params) != len(g.args):
                continue
            b = _unify_tuple(params, g.args, br.bindings)
            if b is None:
                continue
            guards = tuple(x for x in body if isinstance(x, GUARDS))
            seq = tuple(x for x in body if not isinstance(x, GUARDS))
            cons = br.constraints + guards
            b = _propagate(cons, b)
            if b is None:
                continue
            yield from _ready(Branch(seq + rest, b, cons, br.obligations), rules, ctx, depth + 1)
    elif isinstance(g, GUARDS):
        cons = br.constraints + (g,)
        b = _propagate(cons, dict(br.bindings))
        if b is not None:
            yield from _ready(Branch(rest, b, cons, br.obligations), rules, ctx, depth + 1)
    elif isinstance(g, Last):
        link = deref(g.link, br.bindings)
        if isinstance(link, V) or link is None:
            return
        found = ctx.last_reply(f"{link}.")
        if found is None:
            return
        opening, last = found
        if last.io != 1 or last.in_reply_to != opening.reply_with or last.sender != opening.receiver:
            return
        b = unify(g.pattern, last, br.bindings)
        b = _propagate(br.constraints, b) if b is not None else None
        if b is not None:
            yield from _ready(Branch(rest, b, br.constraints, br.obligations), rules, ctx, depth + 1)
    elif isinstance(g, Emit):
        ob = resolve(g.pattern, br.bindings)
        yield from _ready(Branch(rest, br.bindings, br.constraints, br.obligations + (ob,)),
                          rules, ctx, depth + 1)


def _unify_tuple(xs, ys, b):
    for x, y in zip(xs, ys):
        b = unify(x, y, b)
        if b is None:
            return None
    return b


def start_state(conversation: str = "CC") -> ConversationState:
    return ConversationState(conversation, (), (Branch((NT("S", (conversation,)),), {}),))


def step(cs: ConversationState, t: Terminal, rules, ctx: PolicyContext = NO_CONTEXT) -> ConversationState:
    """Advance every live branch over ``t``; reject if none survives."""
    if not cs.is_open:
        raise ValueError("step on a rejected conversation")
    survivors = []
    for br in cs.frontier:
        for rb in _ready(br, rules, ctx):
            if not rb.goals:
                continue
            b = unify(rb.goals[0].pattern, t, rb.bindings)
            if b is None:
                continue
            b = _propagate(rb.constraints, b)
            if b is None:
                continue
            survivors.append(Branch(rb.goals[1:], b, rb.constraints, ()))
    if not survivors:
        return replace(cs, status="rejected")
    return replace(cs, prefix=cs.prefix + (t,), frontier=tuple(survivors))


def accepts(terminals: Iterable[Terminal], rules, ctx: PolicyContext = NO_CONTEXT) -> bool:
    cs = start_state()
    for t in terminals:
        cs = step(cs, t, rules, ctx)
        if not cs.is_open:
            return False
    return True


@dataclass(frozen=True)
class Expectation:
    """One possible next terminal; unbound fields are variables.

    ``constraints`` are the guards still pending on those variables, so
    :meth:`matches` is exact where printing the template alone is not.
    """

    template: Terminal
    bindings: Mapping = field(default_factory=dict, compare=False)
    constraints: tuple = field(default=(), compare=False)
    raw: Terminal = field(default=None, compare=False)

    def matches(self, t: Terminal) -> bool:
        b = unify(self.raw, t, self.bindings)
        return b is not None and _propagate(self.constraints, b) is not None

    @property
    def performative(self):
        p = self.template.performative
        return None if isinstance(p, V) else p

    def __str__(self) -> str:
        return str(self.template)


def _live(cs: ConversationState, rules, ctx):
    if not cs.is_open:
        raise ValueError("conversation was rejected; nothing is expected")
    for br in cs.frontier:
        yield from _ready(br, rules, ctx)


def expected_next(cs: ConversationState, rules, ctx: PolicyContext = NO_CONTEXT) -> list:
    """Distinct templates of what may follow, in grammar order."""
    out, seen = [], set()
    for rb in _live(cs, rules, ctx):
        if not rb.goals:
            continue
        raw = rb.goals[0].pattern
        tmpl = resolve(raw, rb.bindings)
        key = str(tmpl)
        if key in seen:
            continue
        seen.add(key)
        out.append(Expectation(tmpl, rb.bindings, rb.constraints, raw))
    return out


def may_rest(cs: ConversationState, rules, ctx: PolicyContext = NO_CONTEXT) -> bool:
    """True if the grammar allows the conversation to stop here."""
    return any(not rb.goals for rb in _live(cs, rules, ctx))


def obligations(cs: ConversationState, rules, ctx: PolicyContext = NO_CONTEXT) -> list:
    out = []
    for rb in _live(cs, rules, ctx):
        for ob in rb.obligations:
            item = Obligation(cs.conversation, ob)
            if item not in out:
                out.append(item)
    return out


def expected_summary(expectations: Iterable[Expectation]) -> str:
    names = []
    for e in expectations:
        name = e.performative or "?"
        if name not in names:
            names.append(name)
    return "{" + ", ".join(names) + "}"


# --------------------------------------------------------------------------
# demultiplexing


class AmbiguousLinkage(UserWarning):
    pass


def io_of(direction) -> int:
    if direction in (OUTGOING, 0, "out"):
        return 0
    if direction in (INCOMING, 1, "in"):
        return 1
    raise ValueError(f"bad direction {direction!r}")


class Demultiplexer:
    """Assign messages to conversations by :in-reply-to linkage.

    Reply ids are unique per sending agent, so a message replying to ``id``
    links to the conversation where its *receiver* used ``:reply-with id``.
    """

    def __init__(self):
        self.conversations: dict = {}
        self._ids: dict = {}
        self._order: dict = {}

    def _new_id(self, msg: KqmlMessage) -> str:
        base = msg.reply_with or f"#{len(self.conversations) + 1}"
        cid, n = base, 1
        while cid in self.conversations:
            n += 1
            cid = f"{base}#{n}"
        return cid

    def route(self, msg: KqmlMessage) -> str:
        cid = None
        if msg.in_reply_to is not None:
            cands = self._ids.get((msg.receiver, msg.in_reply_to), [])
            if len(cands) > 1:
                warnings.warn(AmbiguousLinkage(
                    f"{msg.performative} in reply to {msg.in_reply_to} matches "
                    f"{', '.join(cands)}; using {cands[-1]}"), stacklevel=2)
            if cands:
                cid = cands[-1]
        if cid is None:
            cid = self._new_id(msg)
            self.conversations[cid] = []
        self.conversations[cid].append(msg)
        if msg.reply_with is not None:
            lst = self._ids.setdefault((msg.sender, msg.reply_with), [])
            if cid not in lst:
                lst.append(cid)
        return cid


def demultiplex(stream: Iterable) -> dict:
    """Map conversation id to its terminals for ``(direction, message)`` pairs."""
    dm = Demultiplexer()
    out: dict = {}
    for direction, msg in stream:
        cid = dm.route(msg)
        out.setdefault(cid, []).append(Terminal.from_message(msg, io_of(direction)))
    return out

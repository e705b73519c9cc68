"""In-process multi-agent harness.

A :class:`Bus` delivers messages between registered agents, one at a time,
until nothing is in flight.  Every agent has a :class:`Monitor` that steps
each message crossing its boundary through the conversation policy and the
semantic gates.  Agents answer with small table-driven handlers; a
:class:`Facilitator` additionally keeps an advertisement registry and
fulfils ``broker-one`` requests.

Scenario scripts drive a run (see :func:`parse_script`).
"""

from __future__ import annotations

import itertools
import os
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

from . import policy
from .attitudes import (
    AgentState, Bel, CanProc, ExprSyntaxError, assert_expr, dump_state, format_expr,
    holds, message_subsumes, parse_expr,
)
from .policy import Demultiplexer, Terminal, V
from .semantics import (
    Violation, apply_receive, apply_send, builtin_descriptors, check_receive,
    check_send, completion_met, motivating_conjuncts, UnknownReplyTarget,
)
from .wire import (
    INCOMING, OUTGOING, KqmlMessage, KqmlSyntaxError, Opaque, parse_message,
    serialize_message,
)

ID_SEED_ENV = "KQMLSEM_ID_SEED"
STRICT, LENIENT = "strict", "lenient"


class DuplicateName(ValueError):
    pass


class UnknownAgent(LookupError):
    pass


class NoCandidateAgent(LookupError):
    pass


class ScriptError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class StrictHalt(RuntimeError):
    """A strict run stopped at a policy rejection or semantic violation."""

    def __init__(self, verdict: "Verdict"):
        super().__init__(str(verdict))
        self.verdict = verdict

    @property
    def violation(self) -> Optional[Violation]:
        return self.verdict.violation


class IdMinter:
    """Fresh reply ids that never contain agent names."""

    def __init__(self, seed: Optional[int] = None, prefix: str = "k"):
        if seed is None:
            seed = int(os.environ.get(ID_SEED_ENV, "0"))
        self._counter = itertools.count(seed + 1)
        self.prefix = prefix

    def __call__(self) -> str:
        return f"{self.prefix}{next(self._counter)}"


# --------------------------------------------------------------------------
# monitor


@dataclass(frozen=True)
class Verdict:
    agent: str
    direction: str
    conversation: str
    message: KqmlMessage
    verdict: str  # "ok", "reject" or "warn"
    policy_ok: bool = True
    expected: tuple = ()  # what the policy would have accepted instead
    violation: Optional[Violation] = None
    notes: tuple = ()

    def line(self) -> str:
        s = f"{self.agent} {self.direction} {self.conversation} {self.verdict} {self.message.performative}"
        if not self.policy_ok:
            s += " expected " + policy.expected_summary(self.expected)
        if self.violation is not None:
            s += f" : {self.violation}"
        for n in self.notes:
            s += f" : {n}"
        return s


class Monitor:
    """Per-agent guard over incoming and outgoing messages.

    The policy verdict and the semantic check are computed independently.
    In strict mode either failure makes :meth:`observe` report ``reject``;
    in lenient mode both are downgraded to ``warn``.  Rejected messages do
    not extend their conversation's accepted prefix.
    """

    def __init__(self, owner: AgentState, mode: str = STRICT, enable_proactive: bool = False,
                 table: Optional[Mapping] = None, rules: Optional[tuple] = None,
                 check_semantics: bool = True):
        self.owner = owner
        self.mode = mode
        self.table = table if table is not None else builtin_descriptors(enable_proactive)
        self.rules = rules if rules is not None else policy.builtin_grammar(enable_proactive)
        self.check_semantics = check_semantics
        self.demux = Demultiplexer()
        self.states: dict = {}
        self.terminals: dict = {}  # conversation -> stepped terminals (accepted or not)
        self._ctx: dict = {}  # conversation -> (language, ontology) first seen
        self.stepped = 0

    # context protocol for the policy engine
    def last_reply(self, prefix: str):
        for cid, cs in self.states.items():
            opening = next((t for t in cs.prefix if t.io == 0 and isinstance(t.reply_with, str)
                            and t.reply_with.startswith(prefix)), None)
            if opening is not None:
                return opening, cs.prefix[-1]
        return None

    def observe(self, direction: str, msg: KqmlMessage) -> Verdict:
        io = policy.io_of(direction)
        cid = self.demux.route(msg)
        cs = self.states.get(cid) or policy.start_state(cid)
        t = Terminal.from_message(msg, io)
        self.terminals.setdefault(cid, []).append(t)
        self.stepped += 1
        notes = list(self._constancy(cid, msg))
        nxt = policy.step(cs, t, self.rules, self)
        expected = ()
        if nxt.is_open:
            self.states[cid] = nxt
        else:
            expected = tuple(policy.expected_next(cs, self.rules, self))
            self.states[cid] = cs
        violation = None
        if self.check_semantics and msg.performative in self.table:
            if io == 0:
                violation = check_send(self.owner, msg, self.table)
            else:
                violation = check_receive(self.owner, msg, self.table)
        bad = (not nxt.is_open) or violation is not None
        if bad:
            verdict = "reject" if self.mode == STRICT else "warn"
        else:
            verdict = "warn" if notes else "ok"
        return Verdict(self.owner.name, direction, cid, msg, verdict,
                       nxt.is_open, expected, violation, tuple(notes))

    def _constancy(self, cid: str, msg: KqmlMessage):
        seen = self._ctx.get(cid)
        cur = (msg.language, msg.ontology)
        if seen is None:
            self._ctx[cid] = cur
            return
        for name, a, b in (("language", seen[0], cur[0]), ("ontology", seen[1], cur[1])):
            if a is not None and b is not None and a != b:
                yield f"{name} changed from {a} to {b}"

    def obligations(self, cid: str) -> list:
        cs = self.states.get(cid)
        if cs is None:
            return []
        return policy.obligations(cs, self.rules, self)

    def conversation_of(self, msg: KqmlMessage) -> Optional[str]:
        for cid, msgs in self.demux.conversations.items():
            if msg in msgs:
                return cid
        return None


# --------------------------------------------------------------------------
# agents


def _reply(msg: KqmlMessage, performative: str, rw: str, content=None) -> KqmlMessage:
    return KqmlMessage(performative, sender=msg.receiver, receiver=msg.sender,
                       in_reply_to=msg.reply_with, reply_with=rw,
                       language=msg.language, ontology=msg.ontology, content=content)


def answer_ask_if(agent: "Agent", msg: KqmlMessage) -> list:
    """Tell if the content is in the agent's base, otherwise sorry."""
    prop = msg.content_text
    if prop is not None and holds(agent.state, Bel(agent.name, prop)):
        return [_reply(msg, "tell", agent.bus.mint(), msg.content)]
    return [_reply(msg, "sorry", agent.bus.mint())]


DEFAULT_HANDLERS = {
    "ask-if": answer_ask_if,
    "proactive-ask-if": answer_ask_if,
}

Handler = Callable[["Agent", KqmlMessage], list]


class Agent:
    def __init__(self, bus: "Bus", name: str, facilitator: bool = False,
                 handlers: Optional[Mapping[str, Handler]] = None):
        self.bus = bus
        self.name = name
        self.state = AgentState(name, facilitator=facilitator)
        self.handlers = dict(DEFAULT_HANDLERS if handlers is None else handlers)
        self.monitor = Monitor(self.state, bus.mode, table=bus.table, rules=bus.rules)
        self.log: list = []  # (direction, message) as seen at this agent

    def on_receive(self, msg: KqmlMessage) -> list:
        h = self.handlers.get(msg.performative)
        return h(self, msg) if h else []


class Facilitator(Agent):
    def __init__(self, bus: "Bus", name: str, handlers: Optional[Mapping[str, Handler]] = None):
        super().__init__(bus, name, facilitator=True, handlers=handlers)
        self.registry: dict = {}  # advertiser -> [(advertise reply-with, template)]
        self.pending: dict = {}  # sub request reply-with -> broker-one message
        self._sub = itertools.count(1)

    def on_receive(self, msg: KqmlMessage) -> list:
        if msg.performative == "advertise" and msg.nested is not None:
            self.registry.setdefault(msg.sender, []).append((msg.reply_with, msg.nested))
            assert_expr(self.state, CanProc(msg.sender, msg.nested), f"{msg.sender}/{msg.reply_with}")
            return []
        if msg.performative == "broker-one":
            return facilitator_on_broker_one(self, msg)
        if msg.in_reply_to in self.pending:
            return self._relay(msg)
        return super().on_receive(msg)

    def candidates(self, request: KqmlMessage) -> list:
        """Advertisers able to process ``request``, in registration order."""
        out = []
        for name in self.bus.order:
            if name == self.name:
                continue
            for adv_rw, template in self.registry.get(name, []):
                concrete = request.evolve(receiver=name, in_reply_to=adv_rw)
                if holds(self.state, CanProc(name, concrete)):
                    out.append((name, adv_rw))
                    break
        return out

    def _relay(self, msg: KqmlMessage) -> list:
        broker = self.pending.pop(msg.in_reply_to)
        if msg.performative in ("sorry", "error"):
            return [_reply(broker, "sorry", self.bus.mint())]
        cid = self.monitor.conversation_of(broker)
        for ob in self.monitor.obligations(cid):
            if ob.terminal.performative == "forward":
                return [message_from_terminal(ob.terminal, self.bus.mint, to_=broker.sender)]
        return [_reply(broker, "sorry", self.bus.mint())]


def facilitator_on_broker_one(f: Facilitator, msg: KqmlMessage) -> list:
    """Open a sub-conversation with one capable agent, or answer sorry."""
    inner = msg.nested
    if inner is None or inner.performative != "ask-if":
        return [_reply(msg, "sorry", f.bus.mint())]
    request = KqmlMessage(inner.performative, sender=f.name, language=inner.language,
                          ontology=inner.ontology, content=inner.content)
    found = f.candidates(request)
    if not found:
        return [_reply(msg, "sorry", f.bus.mint())]
    d, adv_rw = found[0]
    rw = f"{msg.reply_with}.{next(f._sub)}"
    f.pending[rw] = msg
    return [request.evolve(receiver=d, in_reply_to=adv_rw, reply_with=rw)]


def message_from_terminal(t: Terminal, mint: Callable[[], str], **extra) -> KqmlMessage:
    """Build the message an obligation asks for; unbound reply ids are minted."""

    def val(x):
        return None if isinstance(x, V) else x

    content = t.content
    if isinstance(content, Terminal):
        content = message_from_terminal(content, lambda: None)
    elif isinstance(content, str):
        content = Opaque(content)
    else:
        content = None
    rw = val(t.reply_with)
    if rw is None and isinstance(t.reply_with, V):
        rw = mint()
    return KqmlMessage(val(t.performative), sender=val(t.sender), receiver=val(t.receiver),
                       in_reply_to=val(t.in_reply_to), reply_with=rw, content=content, **extra)


# --------------------------------------------------------------------------
# bus


@dataclass(frozen=True)
class Delivery:
    sender: str
    receiver: str
    message: KqmlMessage


class Bus:
    """Synchronous delivery loop; global FIFO, hence FIFO per pair."""

    def __init__(self, mode: str = STRICT, enable_proactive: bool = False,
                 seed: Optional[int] = None):
        self.mode = mode
        self.table = builtin_descriptors(enable_proactive)
        self.rules = policy.builtin_grammar(enable_proactive)
        self.agents: dict = {}
        self.order: list = []
        self.queue: deque = deque()
        self.log: list = []
        self.verdicts: list = []
        self.mint = IdMinter(seed)

    def register_agent(self, name: str, is_facilitator: bool = False,
                       handlers: Optional[Mapping[str, Handler]] = None) -> Agent:
        if name in self.agents:
            raise DuplicateName(name)
        cls = Facilitator if is_facilitator else Agent
        agent = cls(self, name, handlers=handlers)
        self.agents[name] = agent
        self.order.append(name)
        return agent

    def agent(self, name: str) -> Agent:
        try:
            return self.agents[name]
        except KeyError:
            raise UnknownAgent(name) from None

    def _judge(self, v: Verdict) -> None:
        self.verdicts.append(v)
        if v.verdict == "reject":
            raise StrictHalt(v)

    def send(self, msg: KqmlMessage) -> None:
        """Sender side: adopt motives, gate, log, queue."""
        a = self.agent(msg.sender)
        self.agent(msg.receiver)
        if msg.performative in self.table:
            for c in motivating_conjuncts(a.state, msg, self.table):
                assert_expr(a.state, c)
        self._judge(a.monitor.observe(OUTGOING, msg))
        self._apply(apply_send, a, msg)
        a.log.append((OUTGOING, msg))
        self.queue.append(msg)

    def _apply(self, fn, agent: Agent, msg: KqmlMessage) -> None:
        if msg.performative not in self.table:
            return
        try:
            fn(agent.state, msg, self.table)
        except UnknownReplyTarget as exc:
            if self.mode == STRICT:
                raise
            warnings.warn(str(exc))

    def run(self) -> None:
        while self.queue:
            msg = self.queue.popleft()
            b = self.agent(msg.receiver)
            self.log.append(Delivery(msg.sender, msg.receiver, msg))
            self._judge(b.monitor.observe(INCOMING, msg))
            self._apply(apply_receive, b, msg)
            b.log.append((INCOMING, msg))
            for out in b.on_receive(msg):
                self.send(out)

    def states(self) -> dict:
        return {n: a.state for n, a in self.agents.items()}

    def conversations(self) -> dict:
        """Bus-wide grouping of delivered messages by reply linkage."""
        dm = Demultiplexer()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", policy.AmbiguousLinkage)
            for d in self.log:
                dm.route(d.message)
        return dm.conversations


# --------------------------------------------------------------------------
# scripts


@dataclass(frozen=True)
class Action:
    lineno: int
    kind: str
    args: tuple


ACTION_KINDS = ("agent", "facilitator", "believe", "init", "send", "expect",
                "assert-holds", "assert-not-holds", "assert-completion",
                "assert-no-completion")


def parse_script(text: str) -> list:
    """Parse a line-oriented scenario.

    One action per line; ``#`` starts a comment line::

        agent A
        agent B silent          # registers B without automatic replies
        facilitator F
        believe B spouse(adam,eve)
        init A KNOW(A,BEL(B,"p"))
        send (advertise :sender B :receiver A :reply-with a1 :content (...))
        expect (tell :sender B :receiver A)
        assert-holds A KNOW(A,BEL(B,"spouse(adam,eve)"))
        assert-completion q1
    """
    actions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        kind, _, rest = line.partition(" ")
        rest = rest.strip()
        if kind not in ACTION_KINDS:
            raise ScriptError(lineno, f"unknown action {kind!r}")
        try:
            actions.append(Action(lineno, kind, _args(kind, rest)))
        except (KqmlSyntaxError, ExprSyntaxError, ValueError) as exc:
            if isinstance(exc, ScriptError):
                raise
            raise ScriptError(lineno, str(exc)) from exc
    return actions


def _args(kind: str, rest: str) -> tuple:
    if kind in ("agent", "facilitator"):
        parts = rest.split()
        if not parts or len(parts) > 2 or (len(parts) == 2 and parts[1] != "silent"):
            raise ValueError(f"usage: {kind} NAME [silent]")
        return (parts[0], len(parts) == 2)
    if kind == "send":
        return (parse_message(rest),)
    if kind == "expect":
        return (parse_message(rest, require_content=False),)
    if kind in ("assert-completion", "assert-no-completion"):
        if not rest or len(rest.split()) != 1:
            raise ValueError(f"usage: {kind} CONVERSATION")
        return (rest,)
    name, _, body = rest.partition(" ")
    if not name or not body.strip():
        raise ValueError(f"usage: {kind} AGENT ...")
    if kind == "believe":
        return (name, body.strip())
    return (name, parse_expr(body.strip()))


@dataclass
class RunReport:
    mode: str
    deliveries: list = field(default_factory=list)
    states: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    checks: list = field(default_factory=list)  # (lineno, description, passed)
    completions: dict = field(default_factory=dict)
    halted: Optional[StrictHalt] = None

    @property
    def passed(self) -> bool:
        return self.halted is None and all(ok for _, _, ok in self.checks)

    def transcript(self, agent: Optional[str] = None) -> str:
        lines = []
        for d in self.deliveries:
            if agent is None:
                lines.append(f"> {serialize_message(d.message)}")
            elif d.sender == agent:
                lines.append(f"> {serialize_message(d.message)}")
            elif d.receiver == agent:
                lines.append(f"< {serialize_message(d.message)}")
        return "".join(line + "\n" for line in lines)

    def to_text(self) -> str:
        out = [f"mode {self.mode}", "deliveries"]
        out += [f"  {d.sender} -> {d.receiver} {serialize_message(d.message)}" for d in self.deliveries]
        out.append("verdicts")
        out += [f"  {v.line()}" for v in self.verdicts]
        out.append("checks")
        out += [f"  line {n} {'pass' if ok else 'FAIL'} {desc}" for n, desc, ok in self.checks]
        out.append("completion")
        out += [f"  {cid} {'met' if ok else 'unmet'}" for cid, ok in sorted(self.completions.items())]
        if self.halted is not None:
            out.append(f"halted {self.halted.verdict.line()}")
        out.append("states")
        out += ["  " + line for name in sorted(self.states)
                for line in dump_state(self.states[name]).splitlines()]
        return "\n".join(out) + "\n"


def run_scenario(script, mode: str = STRICT, enable_proactive: bool = False,
                 seed: Optional[int] = None, bus: Optional[Bus] = None) -> RunReport:
    """Execute a script (text or parsed actions) and report.

    Strict runs stop at the first rejected message; the report then carries
    the halt and the rest of the script is not executed.
    """
    actions = parse_script(script) if isinstance(script, str) else list(script)
    bus = bus or Bus(mode, enable_proactive, seed)
    report = RunReport(mode)
    try:
        for act in actions:
            _perform(bus, act, report)
    except StrictHalt as halt:
        report.halted = halt
    except UnknownAgent as exc:
        raise ScriptError(act.lineno, f"unknown agent {exc}") from exc
    except UnknownReplyTarget as exc:
        raise ScriptError(act.lineno, str(exc)) from exc
    report.deliveries = list(bus.log)
    report.states = {n: s.copy() for n, s in bus.states().items()}
    report.verdicts = list(bus.verdicts)
    report.completions = {cid: completion_met(bus.states(), msgs, bus.table)
                          for cid, msgs in bus.conversations().items()}
    return report


def _perform(bus: Bus, act: Action, report: RunReport) -> None:
    k, a = act.kind, act.args
    if k in ("agent", "facilitator"):
        try:
            bus.register_agent(a[0], k == "facilitator",
                               handlers={} if a[1] else None)
        except DuplicateName as exc:
            raise ScriptError(act.lineno, f"duplicate agent {exc}") from exc
    elif k == "believe":
        bus.agent(a[0]).state.belief_base.add(a[1])
    elif k == "init":
        assert_expr(bus.agent(a[0]).state, a[1])
    elif k == "send":
        bus.send(a[0])
        bus.run()
    elif k == "expect":
        ok = any(message_subsumes(a[0], d.message) for d in bus.log)
        report.checks.append((act.lineno, f"expect {serialize_message(a[0])}", ok))
    elif k in ("assert-holds", "assert-not-holds"):
        val = holds(bus.agent(a[0]).state, a[1])
        want = k == "assert-holds"
        report.checks.append((act.lineno, f"{k} {a[0]} {format_expr(a[1])}", val == want))
    else:
        convs = bus.conversations()
        if a[0] not in convs:
            report.checks.append((act.lineno, f"{k} {a[0]} (no such conversation)", False))
            return
        val = completion_met(bus.states(), convs[a[0]], bus.table)
        report.checks.append((act.lineno, f"{k} {a[0]}", val == (k == "assert-completion")))


def load_bundled(name: str) -> str:
    """Text of a scenario shipped with the package."""
    from importlib.resources import files
    return files("kqmlsem.scenarios").joinpath(name).read_text(encoding="utf-8")

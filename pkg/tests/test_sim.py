import pytest

from kqmlsem.attitudes import Bel, Int, Know, Want, holds, mentions_agent
from kqmlsem.policy import Terminal, V
from kqmlsem.sim import (
    ID_SEED_ENV, LENIENT, Bus, DuplicateName, IdMinter, ScriptError, StrictHalt, UnknownAgent,
    load_bundled, message_from_terminal, parse_script, run_scenario,
)
from kqmlsem.wire import parse_message

X = "spouse(adam,eve)"
ADV_DF = ('send (advertise :sender D :receiver F :reply-with d1 :content '
          '(ask-if :sender F :receiver D :in-reply-to d1 :content "spouse(adam,eve)"))')
ADV_EF = ADV_DF.replace("sender D", "sender E").replace("receiver D", "receiver E") \
    .replace("d1", "e1")
BROKER = ('send (broker-one :sender A :receiver F :reply-with b1 :content '
          '(ask-if :reply-with q1 :content "spouse(adam,eve)"))')
ADV_BA = ('send (advertise :sender B :receiver A :reply-with a1 :content '
          '(ask-if :sender A :receiver B :in-reply-to a1 :content "spouse(adam,eve)"))')
ASK_AB = 'send (ask-if :sender A :receiver B :in-reply-to a1 :reply-with q1 :content "spouse(adam,eve)")'


def script(*lines):
    return "\n".join(lines) + "\n"


def perfs(report):
    return [(d.sender, d.receiver, d.message.performative) for d in report.deliveries]


def test_register_and_lookup():
    bus = Bus()
    bus.register_agent("A")
    with pytest.raises(DuplicateName):
        bus.register_agent("A")
    with pytest.raises(UnknownAgent):
        bus.agent("Z")


def test_ask_tell_scenario_passes():
    report = run_scenario(load_bundled("ask_tell.scn"))
    assert report.passed, report.to_text()
    assert [p for _, _, p in perfs(report)] == ["advertise", "ask-if", "tell"]
    assert report.completions == {"a1": True}


def test_unknown_belief_gives_sorry_and_no_completion():
    report = run_scenario(script("agent A", "agent B", ADV_BA, ASK_AB, "assert-no-completion a1"))
    assert report.passed, report.to_text()
    assert perfs(report)[-1] == ("B", "A", "sorry")
    b, a = report.states["B"], report.states["A"]
    assert not holds(b, Know("B", Want("A", Know("A", Bel("B", X)))))
    assert not holds(a, Int("A", Know("A", Bel("B", X))))


def test_silent_agent_leaves_question_open():
    report = run_scenario(script("agent A", "agent B silent", "believe B " + X, ADV_BA, ASK_AB,
                                 "assert-completion a1"))
    assert not report.passed
    assert report.checks[-1][2] is False
    assert report.completions == {"a1": False}


def test_every_message_is_checked_at_both_ends():
    bus = Bus()
    run_scenario(load_bundled("brokered_ask.scn"), bus=bus)
    assert sum(a.monitor.stepped for a in bus.agents.values()) == 2 * len(bus.log)
    for d in bus.log:
        sides = [(v.agent, v.direction) for v in bus.verdicts if v.message is d.message]
        assert sides == [(d.sender, ">"), (d.receiver, "<")]
    assert all(v.verdict == "ok" for v in bus.verdicts)


def test_brokering_picks_the_earliest_advertiser():
    head = ("agent A", "facilitator F", "agent D", "agent E", "believe D " + X, "believe E " + X)
    first = run_scenario(script(*head, ADV_DF, ADV_EF, BROKER))
    assert ("F", "D", "ask-if") in perfs(first) and ("F", "E", "ask-if") not in perfs(first)
    assert first.to_text() == run_scenario(script(*head, ADV_DF, ADV_EF, BROKER)).to_text()
    # registration order, not advertisement order, decides
    swapped = run_scenario(script(*head, ADV_EF, ADV_DF, BROKER))
    assert ("F", "D", "ask-if") in perfs(swapped)
    other = run_scenario(script("agent A", "facilitator F", "agent E", "agent D",
                                "believe D " + X, "believe E " + X, ADV_DF, ADV_EF, BROKER))
    assert ("F", "E", "ask-if") in perfs(other)


def test_sub_request_ids_extend_the_broker_id():
    report = run_scenario(load_bundled("brokered_ask.scn"))
    sub = [d.message for d in report.deliveries if d.sender == "F" and d.receiver == "D"]
    assert [m.reply_with for m in sub] == ["b1.1"]


def test_empty_registry_answers_sorry():
    report = run_scenario(script("agent A", "facilitator F", BROKER, "assert-no-completion b1"))
    assert report.passed, report.to_text()
    assert perfs(report) == [("A", "F", "broker-one"), ("F", "A", "sorry")]
    assert report.deliveries[-1].message.in_reply_to == "b1"


def test_advertiser_sorry_is_relayed_without_its_name():
    report = run_scenario(script("agent A", "facilitator F", "agent D", ADV_DF, BROKER))
    assert report.passed, report.to_text()
    assert [p for _, _, p in perfs(report)] == ["advertise", "broker-one", "ask-if", "sorry", "sorry"]
    last = report.deliveries[-1].message
    assert (last.sender, last.receiver, last.in_reply_to) == ("F", "A", "b1")
    a = report.states["A"]
    assert not any(mentions_agent(e, "D") for e in a.attitude_store | set(a.action_log))


def test_broker_one_to_a_plain_agent():
    s = script("agent A", "agent B", BROKER.replace("receiver F", "receiver B"))
    strict = run_scenario(s)
    assert strict.halted is not None
    assert "facilitator" in strict.halted.violation.reason
    assert strict.halted.verdict.direction == "<"
    lenient = run_scenario(s, mode=LENIENT)
    assert lenient.halted is None
    assert [v.verdict for v in lenient.verdicts] == ["ok", "warn"]


def test_ask_without_advertise():
    s = script("agent A", "agent B", "believe B " + X, ASK_AB.replace(":in-reply-to a1 ", ""))
    strict = run_scenario(s)
    assert strict.halted is not None and not strict.halted.verdict.policy_ok
    assert strict.deliveries == []
    lenient = run_scenario(s, mode=LENIENT)
    assert [p for _, _, p in perfs(lenient)] == ["ask-if", "tell"]
    assert all(v.verdict == "warn" for v in lenient.verdicts)


def test_strict_halt_is_raised_by_the_bus():
    bus = Bus()
    bus.register_agent("A")
    bus.register_agent("B")
    with pytest.raises(StrictHalt) as info:
        bus.send(parse_message('(tell :sender A :receiver B :content "p")'))
    assert info.value.verdict.expected
    assert bus.queue == type(bus.queue)()


def test_language_change_is_flagged():
    s = script("agent A", "agent B", "believe B " + X,
               ADV_BA.replace(":reply-with a1", ":reply-with a1 :language kif"),
               ASK_AB.replace(":reply-with q1", ":reply-with q1 :language prolog"))
    report = run_scenario(s)
    assert report.halted is None
    notes = [n for v in report.verdicts for n in v.notes]
    assert notes and all("language changed from kif to prolog" == n for n in notes)


def test_proactive_tell_needs_the_switch():
    s = script("agent A", "agent B", "believe A " + X,
               'send (proactive-tell :sender A :receiver B :reply-with p1 :content "spouse(adam,eve)")')
    assert run_scenario(s).halted is not None
    on = run_scenario(s, enable_proactive=True)
    assert on.passed and holds(on.states["B"], Know("B", Bel("A", X)))


def test_minted_ids_follow_the_seed(monkeypatch):
    s = script("agent A", "agent B", "believe B " + X, ADV_BA, ASK_AB)
    assert run_scenario(s, seed=100).deliveries[-1].message.reply_with == "k101"
    monkeypatch.setenv(ID_SEED_ENV, "7")
    assert run_scenario(s).deliveries[-1].message.reply_with == "k8"
    assert [IdMinter(0)() for _ in range(2)] == ["k1", "k1"]


def test_message_from_terminal():
    t = Terminal("forward", "F", "A", "b1", V("Rw2"), 0,
                 Terminal("tell", None, "A", "q1", "k1", 1, X))
    m = message_from_terminal(t, IdMinter(4), to_="A")
    assert str(m) == ('(forward :sender F :receiver A :to A :in-reply-to b1 :reply-with k5 '
                      ':content (tell :receiver A :in-reply-to q1 :reply-with k1 '
                      ':content "spouse(adam,eve)"))')


@pytest.mark.parametrize("text, lineno", [
    ("agent A\nfly A\n", 2),
    ("agent A\nsend (tell :sender A\n", 2),
    ("agent\n", 1),
    ("agent A loud\n", 1),
    ("agent A\nbelieve A\n", 2),
    ("agent A\ninit A KNOW(A\n", 2),
    ("assert-completion\n", 1),
])
def test_script_syntax_errors(text, lineno):
    with pytest.raises(ScriptError) as info:
        parse_script(text)
    assert info.value.lineno == lineno


def test_script_runtime_errors():
    with pytest.raises(ScriptError) as info:
        run_scenario("agent A\nagent A\n")
    assert info.value.lineno == 2
    with pytest.raises(ScriptError) as info:
        run_scenario('agent A\n\nsend (tell :sender A :receiver Q :content "p")\n')
    assert info.value.lineno == 3


def test_unknown_conversation_fails_the_check():
    report = run_scenario("agent A\nassert-completion nope\n")
    assert not report.passed
    assert "no such conversation" in report.checks[0][1]

"""What a sorry takes back.

B advertises, A asks about a fact B does not hold, B answers sorry.  The
attitudes that the question created are listed before and after the
refusal; the advertisement's attitudes survive it.

    python3 demos/sorry_retracts.py
"""

from kqmlsem.attitudes import AgentState, assert_expr, format_expr
from kqmlsem.semantics import apply_receive, apply_send, motivating_conjuncts
from kqmlsem.wire import parse_message

ADVERTISE = parse_message(
    '(advertise :sender B :receiver A :reply-with a1 :content '
    '(ask-if :sender A :receiver B :in-reply-to a1 :content "spouse(adam,eve)"))')
ASK = parse_message(
    '(ask-if :sender A :receiver B :in-reply-to a1 :reply-with q1 :content "spouse(adam,eve)")')
SORRY = parse_message("(sorry :sender B :receiver A :in-reply-to q1)")


def deliver(states, msg):
    sender, receiver = states[msg.sender], states[msg.receiver]
    for c in motivating_conjuncts(sender, msg):
        assert_expr(sender, c)
    apply_send(sender, msg)
    apply_receive(receiver, msg)


def show(title, states):
    print(title)
    for name, s in states.items():
        for e in sorted(s.attitude_store, key=format_expr):
            print(f"  {name}: {format_expr(e)}")


def main() -> None:
    states = {"A": AgentState("A"), "B": AgentState("B")}
    deliver(states, ADVERTISE)
    deliver(states, ASK)
    show("after the question", states)
    deliver(states, SORRY)
    show("after the sorry", states)


if __name__ == "__main__":
    main()

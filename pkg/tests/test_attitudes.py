import itertools

import pytest
from hypothesis import given, settings, strategies as st

from kqmlsem.attitudes import (
    AgentState, And, Bel, CanProc, ExprSyntaxError, Int, Know, Not, NotSelfBelief, Or, Proc,
    ProverFailure, SendMsg, Want, assert_expr, dump_state, format_expr, holds, mentions_agent,
    parse_expr, retract_expr, well_formed,
)
from kqmlsem.wire import KqmlMessage, Opaque

from strategies import AGENTS, MSG_POOL, PROPS, agent_states, attitude_exprs, exprs

P = "foo(a,b)"


def test_nesting_examples():
    assert well_formed(Know("A", Bel("B", P)))
    assert not well_formed(Know("A", P))  # a raw proposition is not a state
    assert not well_formed(Want("A", Bel("B", "p")))
    assert well_formed(Want("A", Know("A", Bel("B", "p"))))
    assert well_formed(Int("A", Proc("A", MSG_POOL[0])))
    assert not well_formed(Know("A", And((Bel("A", "p"), Bel("A", "q")))))
    assert not well_formed(Want("A", Or((Proc("A", MSG_POOL[0]), Proc("B", MSG_POOL[0])))))
    assert not well_formed(Bel("A", Know("A", Bel("A", "p"))))
    assert not well_formed(Bel("A", ""))
    assert well_formed(Know("A", Not(Bel("B", "p"))))
    assert not well_formed(Know("A", Not(Know("B", Bel("B", "p")))))
    assert well_formed(And((Bel("A", "p"), Not(Know("A", Bel("B", "q"))))))


# --------------------------------------------------------------------------
# independent nesting oracle over every constructor/argument combination


def _oracle_well_formed(e) -> bool:
    kinds = {Bel: "bel", Know: "know", Want: "want", Int: "int", Proc: "act", SendMsg: "act",
             CanProc: "canproc", And: "and", Or: "or", Not: "not"}
    k = kinds.get(type(e))
    if k == "bel":
        return isinstance(e.proposition, str) and e.proposition != ""
    if k in ("act", "canproc"):
        return isinstance(e.message, KqmlMessage)
    if k == "not":
        return _oracle_well_formed(e.arg)
    if k in ("and", "or"):
        return all(_oracle_well_formed(x) for x in e.exprs)
    allowed = {"know": {"bel", "know", "want", "int", "act", "canproc", "notbel"},
               "want": {"know", "act"}, "int": {"know", "act"}}[k]
    a = e.arg
    ak = kinds.get(type(a))
    if ak == "not" and isinstance(a.arg, Bel):
        ak = "notbel"
    return ak in allowed and _oracle_well_formed(a)


def _candidates():
    m = MSG_POOL[0]
    leaves = [Bel("A", "p"), Proc("A", m), SendMsg("A", "B", m), CanProc("B", m),
              Not(Bel("B", "p")), Not(Proc("A", m)), And((Bel("A", "p"), Bel("A", "q"))),
              Or((Proc("A", m), Proc("B", m)))]
    level1 = [c("A", x) for c in (Know, Want, Int) for x in leaves]
    level2 = [c("B", x) for c in (Know, Want, Int) for x in level1 + leaves]
    return leaves + level1 + level2 + [Not(x) for x in level1]


def test_well_formed_agrees_with_rule_table():
    cands = _candidates()
    assert len(cands) == 152
    assert [well_formed(e) for e in cands] == [_oracle_well_formed(e) for e in cands]
    assert any(well_formed(e) for e in cands) and not all(well_formed(e) for e in cands)


def test_holds_examples():
    b = AgentState("B", {"spouse(adam,eve)"})
    assert holds(b, Bel("B", "spouse(adam,eve)"))
    assert not holds(b, Bel("B", "spouse(cain,eve)"))
    assert not holds(b, Bel("A", "spouse(adam,eve)"))  # never about another agent
    fresh = AgentState("A")
    for e in (Bel("A", "p"), Know("A", Bel("B", "p")), Proc("A", MSG_POOL[0])):
        assert holds(fresh, Not(e))


def test_prover_is_pluggable_and_failures_are_distinct():
    s = AgentState("A", {"p", "p->q"})

    def modus_ponens(prop, base):
        return prop in base or any(f"{x}->{prop}" in base and x in base for x in base)

    assert holds(s, Bel("A", "q"), modus_ponens)
    assert not holds(s, Bel("A", "q"))

    def broken(prop, base):
        raise RuntimeError("prover crashed")

    with pytest.raises(ProverFailure):
        holds(s, Bel("A", "q"), broken)


# --------------------------------------------------------------------------
# brute-force model checker


def _all_atoms():
    bels = [Bel(a, p) for a in AGENTS for p in PROPS]
    acts = [Proc(a, m) for a in AGENTS for m in MSG_POOL] + \
           [SendMsg(a, b, m) for a in AGENTS for b in AGENTS for m in MSG_POOL]
    k1_args = bels + acts + [Not(b) for b in bels]
    know1 = [Know(a, x) for a in AGENTS for x in k1_args]
    wi1 = [c(a, x) for c in (Want, Int) for a in AGENTS for x in acts + know1]
    depth1 = know1 + wi1
    know2 = [Know(a, x) for a in AGENTS for x in depth1]
    return bels + acts + depth1 + know2


ATOMS = _all_atoms()


def _model_check(state, e) -> bool:
    true_bels = {Bel(state.name, p) for p in state.belief_base}
    held = set(state.attitude_store)
    done = set(state.action_log)
    if isinstance(e, Not):
        return not _model_check(state, e.arg)
    if isinstance(e, And):
        return all(_model_check(state, x) for x in e.exprs)
    if isinstance(e, Or):
        return any(_model_check(state, x) for x in e.exprs)
    return e in true_bels or e in held or e in done


def test_depth_two_enumeration_is_complete_and_well_formed():
    assert len(ATOMS) == len(set(ATOMS)) == 882
    assert all(well_formed(e) for e in ATOMS)


@settings(max_examples=60, deadline=None)
@given(agent_states(name="A"))
def test_holds_matches_model_checker_on_every_atom(state):
    for e in ATOMS:
        assert holds(state, e) == _model_check(state, e)


@settings(max_examples=300, deadline=None)
@given(agent_states(name="B"), exprs(2))
def test_holds_matches_model_checker_on_formulas(state, e):
    assert holds(state, e) == _model_check(state, e)


def _not_free(e) -> bool:
    # negation inside a stored attitude is part of an atom, not evaluation
    if isinstance(e, Not):
        return False
    if isinstance(e, (And, Or)):
        return all(_not_free(x) for x in e.exprs)
    return True


@settings(max_examples=300, deadline=None)
@given(agent_states(), exprs(2), st.lists(attitude_exprs(2), max_size=4))
def test_holds_is_monotone_for_not_free_expressions(state, e, extra):
    if not _not_free(e) or not holds(state, e):
        return
    for x in extra:
        state.attitude_store.add(x)
    assert holds(state, e)


# --------------------------------------------------------------------------
# updates


def test_assert_then_read_and_set_semantics():
    s = AgentState("A")
    e = Know("B", Bel("A", "p"))
    assert_expr(s, e)
    assert holds(s, e)
    assert_expr(s, e)
    retract_expr(s, e)
    assert not holds(s, e)


def test_bel_about_another_agent_cannot_be_stored():
    with pytest.raises(NotSelfBelief):
        assert_expr(AgentState("A"), Bel("B", "p"))
    s = AgentState("A")
    assert_expr(s, Bel("A", "p"))
    assert s.belief_base == {"p"}


def test_ill_formed_and_non_storable_expressions_are_refused():
    s = AgentState("A")
    with pytest.raises(ValueError):
        assert_expr(s, Want("A", Bel("A", "p")))
    with pytest.raises(ValueError):
        assert_expr(s, Not(Bel("A", "p")))
    with pytest.raises(ValueError):
        assert_expr(s, Or((Bel("A", "p"), Bel("A", "q"))))


def test_actions_are_logged_once_and_never_retracted():
    s = AgentState("A")
    act = Proc("A", MSG_POOL[0])
    assert_expr(s, act)
    assert_expr(s, act)
    retract_expr(s, act)
    assert s.action_log == [act]


def test_tagged_retraction_keeps_other_support():
    s = AgentState("A")
    e = Know("A", Bel("B", "p"))
    assert_expr(s, e, "x/1")
    assert_expr(s, e, "y/2")
    retract_expr(s, e, "x/1")
    assert holds(s, e)
    retract_expr(s, e, "y/2")
    assert not holds(s, e)


ops = st.lists(st.tuples(st.sampled_from(["assert", "retract"]),
                         st.sampled_from(ATOMS[:40] + ATOMS[-40:]),
                         st.sampled_from([None, "t1", "t2"])), max_size=25)


@settings(max_examples=300, deadline=None)
@given(ops)
def test_assert_retract_trace_matches_reference_sets(trace):
    s = AgentState("A")
    support: dict = {}  # reference: expression -> set of tags
    beliefs, log = set(), []
    for op, e, tag in trace:
        if isinstance(e, Bel) and e.agent != "A":
            continue
        if op == "assert":
            assert_expr(s, e, tag or "")
            if isinstance(e, Bel):
                beliefs.add(e.proposition)
            elif isinstance(e, (Proc, SendMsg)):
                if e not in log:
                    log.append(e)
            else:
                support.setdefault(e, set()).add(tag or "")
        else:
            retract_expr(s, e, tag)
            if isinstance(e, Bel):
                beliefs.discard(e.proposition)
            elif e in support:
                if tag is None:
                    del support[e]
                else:
                    support[e].discard(tag)
                    if not support[e]:
                        del support[e]
    assert s.attitude_store == set(support)
    assert s.belief_base == beliefs
    assert s.action_log == log


# --------------------------------------------------------------------------
# text forms


def test_format_and_parse_round_trip():
    m = KqmlMessage("ask-if", sender="A", receiver="B", content=Opaque('p "q"'))
    for e in (Know("A", Bel("B", 'p "q"')), Want("A", Know("A", Not(Bel("B", "p")))),
              SendMsg("A", "B", m), And((Int("A", Proc("A", m)), Not(Bel("A", "x"))))):
        assert parse_expr(format_expr(e)) == e
    assert format_expr(Know("A", Bel("B", "p"))) == 'KNOW(A,BEL(B,"p"))'


@settings(max_examples=200, deadline=None)
@given(exprs(2))
def test_parse_expr_inverts_format(e):
    assert parse_expr(format_expr(e)) == e


@pytest.mark.parametrize("text", ["KNOW(A", "FOO(A,B)", 'BEL(A,"p") x', "KNOW(A,BEL(B,(tell)))",
                                  'PROC(A,"x")', "KNOW(A,(tell :sender))", "NOT(A)"])
def test_parse_expr_errors(text):
    with pytest.raises(ExprSyntaxError):
        parse_expr(text)


def test_dump_state_is_deterministic():
    s = AgentState("A", {"q", "p"})
    for e in (Know("A", Bel("B", "z")), Know("A", Bel("B", "a"))):
        assert_expr(s, e)
    assert_expr(s, Proc("A", MSG_POOL[1]))
    assert dump_state(s) == (
        "agent A\n  bel p\n  bel q\n"
        '  hold KNOW(A,BEL(B,"a"))\n  hold KNOW(A,BEL(B,"z"))\n'
        '  did PROC(A,(tell :sender B :receiver A :content "q"))\n')
    assert dump_state(s.copy()) == dump_state(s)


def test_mentions_agent_looks_inside_messages():
    m = KqmlMessage("tell", receiver="A", content=Opaque("p"))
    assert not mentions_agent(Know("A", Proc("A", m)), "D")
    assert mentions_agent(Know("A", Proc("A", m.evolve(sender="D"))), "D")
    assert mentions_agent(Know("A", SendMsg("F", "D", m)), "D")

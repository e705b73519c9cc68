import pytest
from hypothesis import given, settings, strategies as st

from kqmlsem.wire import (
    DuplicateKeyword, KqmlMessage, KqmlSyntaxError, MalformedMessage, MissingContent, Opaque,
    TranscriptError, UnbalancedParens, UnknownPerformative, parse_message, read_transcript,
    serialize_message, write_transcript,
)

from strategies import messages

ADV = ('(advertise :sender B :receiver A :reply-with a1 :content '
       '(ask-if :sender A :receiver B :in-reply-to a1 :content "spouse(adam,eve)"))')


def test_sorry_without_content():
    m = parse_message("(sorry :sender A :receiver B :in-reply-to id1)")
    assert m == KqmlMessage("sorry", sender="A", receiver="B", in_reply_to="id1")
    assert m.content is None


def test_nested_content_is_a_message_and_round_trips_exactly():
    m = parse_message(ADV)
    assert m.nested == KqmlMessage("ask-if", sender="A", receiver="B", in_reply_to="a1",
                                   content=Opaque("spouse(adam,eve)"))
    assert serialize_message(m) == ADV


def test_minimal_message_has_no_empty_slots():
    m = KqmlMessage("tell", sender="A", receiver="B", content=Opaque("p"))
    assert serialize_message(m) == '(tell :sender A :receiver B :content "p")'


def test_canonical_keyword_order():
    m = parse_message('(forward :content "p" :to C :from A :reply-with r :in-reply-to q '
                      ':receiver B :sender F :ontology o :language l)')
    assert serialize_message(m) == ('(forward :sender F :receiver B :from A :to C :in-reply-to q '
                                    ':reply-with r :language l :ontology o :content "p")')


def test_whitespace_and_case_are_not_significant():
    m = parse_message('  (ASK-IF\n\t:Sender A   :receiver B :CONTENT "p" )  ')
    assert m == KqmlMessage("ask-if", sender="A", receiver="B", content=Opaque("p"))


def test_unknown_keywords_are_kept_in_order():
    m = parse_message('(tell :sender A :x-b 2 :content "p" :x-a "two words")')
    assert m.extras == ((":x-b", "2"), (":x-a", "two words"))
    assert parse_message(serialize_message(m)) == m


def test_list_content_that_is_not_a_message_stays_verbatim():
    m = parse_message("(tell :sender A :content (spouse adam  (eve)))")
    assert m.content == Opaque("(spouse adam  (eve))")


def test_quoting_escapes():
    m = KqmlMessage("tell", content=Opaque('say "hi" \\ bye'))
    text = serialize_message(m)
    assert text == r'(tell :content "say \"hi\" \\ bye")'
    assert parse_message(text) == m


@pytest.mark.parametrize("legacy", ["''p(a)''", "' 'p(a)' '"])
def test_doubled_single_quotes_accepted(legacy):
    m = parse_message(f"(tell :sender A :content {legacy})")
    assert m.content == Opaque("p(a)")
    assert serialize_message(m) == '(tell :sender A :content "p(a)")'


@pytest.mark.parametrize("text, error", [
    ('(tell :sender A :content "p"', UnbalancedParens),
    ('(tell :sender A :content "p"))', UnbalancedParens),
    ('(tell :content "p)', UnbalancedParens),
    ('(inform :sender A :content "p")', UnknownPerformative),
    ('(tell :sender A :sender B :content "p")', DuplicateKeyword),
    ('(tell :sender A :content "p" :CONTENT "q")', DuplicateKeyword),
    ("(tell :sender A)", MissingContent),
    ("(ask-if :sender A :receiver B)", MissingContent),
    ("(tell :sender)", MalformedMessage),
    ('(tell sender A :content "p")', MalformedMessage),
    ("tell", MalformedMessage),
    ("", MalformedMessage),
])
def test_rejections(text, error):
    with pytest.raises(error) as info:
        parse_message(text)
    assert info.value.kind == error.kind


def test_error_positions_point_into_the_text():
    text = '(tell :sender A :sender B :content "p")'
    with pytest.raises(DuplicateKeyword) as info:
        parse_message(text)
    assert text[info.value.position:].startswith(":sender B")


def test_proactive_names_can_be_disabled():
    with pytest.raises(UnknownPerformative):
        parse_message('(proactive-tell :sender A :content "p")',
                      performatives=("tell",))


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet='() :"\'abc-\\', max_size=30))
def test_every_rejection_has_exactly_one_kind(text):
    try:
        parse_message(text)
    except KqmlSyntaxError as exc:
        kinds = {"unbalanced-parens", "unknown-performative", "duplicate-keyword",
                 "missing-content", "malformed"}
        assert exc.kind in kinds
        assert sum(isinstance(exc, c) for c in (UnbalancedParens, UnknownPerformative,
                                                DuplicateKeyword, MissingContent,
                                                MalformedMessage)) == 1


@settings(max_examples=200, deadline=None)
@given(messages())
def test_serialized_form_is_a_fixed_point(m):
    text = serialize_message(m)
    assert serialize_message(parse_message(text)) == text


def test_transcript_round_trip_and_comments():
    text = "# a comment\n\n> " + ADV + '\n< (tell :sender B :receiver A :content "p")\n'
    entries = list(read_transcript(text))
    assert [(e.lineno, e.direction, e.message.performative) for e in entries] == [
        (3, ">", "advertise"), (4, "<", "tell")]
    again = write_transcript((e.direction, e.message) for e in entries)
    assert [e.message for e in read_transcript(again)] == [e.message for e in entries]


def test_transcript_errors_carry_line_numbers():
    with pytest.raises(TranscriptError) as info:
        list(read_transcript('> (tell :content "p")\n> (tell :content "p"\n'))
    assert info.value.lineno == 2
    assert isinstance(info.value.cause, UnbalancedParens)
    with pytest.raises(TranscriptError) as info:
        list(read_transcript('(tell :content "p")\n'))
    assert info.value.lineno == 1


@pytest.mark.parametrize("value", ["0\n", "a b", "", "x)", "'q"])
def test_values_that_are_not_bare_tokens_get_quoted(value):
    m = KqmlMessage("tell", content=Opaque("p"), extras=((":x-note", value),))
    assert parse_message(serialize_message(m)) == m

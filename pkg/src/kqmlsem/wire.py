"""KQML message codec.

Messages are S-expressions headed by a performative name followed by
``:keyword value`` pairs::

    (ask-if :sender A :receiver B :reply-with id1 :content "spouse(adam,eve)")

The ``:content`` value is either opaque text in some content language or a
nested KQML message. Opaque content is written between double quotes with
backslash escapes; the doubled single quotes used in older KQML documents
(``''spouse(adam,eve)''``) are accepted on input and normalized on output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Union

BASE_PERFORMATIVES = (
    "advertise",
    "ask-if",
    "tell",
    "sorry",
    "error",
    "broker-one",
    "forward",
)
PROACTIVE_PERFORMATIVES = ("proactive-tell", "proactive-ask-if")
PERFORMATIVES = BASE_PERFORMATIVES + PROACTIVE_PERFORMATIVES

# Performatives that may carry a nested message as content.
EMBEDDING_PERFORMATIVES = frozenset({"advertise", "broker-one", "forward"})
# Performatives that can be sent without content.
CONTENT_OPTIONAL = frozenset({"sorry", "error"})

# (keyword, attribute) in canonical serialization order.
RESERVED_KEYWORDS = (
    (":sender", "sender"),
    (":receiver", "receiver"),
    (":from", "from_"),
    (":to", "to_"),
    (":in-reply-to", "in_reply_to"),
    (":reply-with", "reply_with"),
    (":language", "language"),
    (":ontology", "ontology"),
)
_KEYWORD_ATTR = dict(RESERVED_KEYWORDS)

_TOKEN_RE = re.compile(r'[^\s()"\'][^\s()"]*')


class KqmlSyntaxError(ValueError):
    """Base class for codec errors. ``position`` is an offset into the text."""

    kind = "syntax"

    def __init__(self, message: str, position: Optional[int] = None):
        super().__init__(message)
        self.position = position


class UnbalancedParens(KqmlSyntaxError):
    kind = "unbalanced-parens"


class UnknownPerformative(KqmlSyntaxError):
    kind = "unknown-performative"


class DuplicateKeyword(KqmlSyntaxError):
    kind = "duplicate-keyword"


class MissingContent(KqmlSyntaxError):
    kind = "missing-content"


class MalformedMessage(KqmlSyntaxError):
    """Well-bracketed text that is not a message (bad keyword/value layout)."""

    kind = "malformed"


@dataclass(frozen=True)
class Opaque:
    """Content-language expression, kept verbatim."""

    text: str

    def __str__(self) -> str:
        return self.text


Content = Union[Opaque, "KqmlMessage", None]


@dataclass(frozen=True)
class KqmlMessage:
    performative: str
    sender: Optional[str] = None
    receiver: Optional[str] = None
    in_reply_to: Optional[str] = None
    reply_with: Optional[str] = None
    language: Optional[str] = None
    ontology: Optional[str] = None
    from_: Optional[str] = None
    to_: Optional[str] = None
    content: Content = None
    # Unrecognized ``(keyword, value)`` pairs, in source order.
    extras: tuple[tuple[str, str], ...] = field(default=())

    @property
    def nested(self) -> Optional["KqmlMessage"]:
        return self.content if isinstance(self.content, KqmlMessage) else None

    @property
    def content_text(self) -> Optional[str]:
        return self.content.text if isinstance(self.content, Opaque) else None

    def evolve(self, **changes) -> "KqmlMessage":
        return replace(self, **changes)

    def __str__(self) -> str:
        return serialize_message(self)


def is_token(value: str) -> bool:
    return bool(value) and _TOKEN_RE.fullmatch(value) is not None


# --------------------------------------------------------------------------
# reader


@dataclass
class _Atom:
    text: str
    start: int


@dataclass
class _Str:
    text: str
    start: int


@dataclass
class _List:
    items: list
    start: int
    end: int  # exclusive


def _read_quoted(text: str, i: int) -> tuple[str, int]:
    # text[i] == '"'
    out = []
    i += 1
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
            continue
        if ch == '"':
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise UnbalancedParens("unterminated string", i)


_SQ_OPEN = re.compile(r"' ?'")


def _read_single_quoted(text: str, i: int) -> tuple[str, int]:
    # Either ''...'' or ' '...' ' (as typeset in old KQML documents).
    m = _SQ_OPEN.match(text, i)
    if not m:
        raise MalformedMessage("stray single quote", i)
    start = m.end()
    close = _SQ_OPEN.search(text, start)
    if close is None:
        raise UnbalancedParens("unterminated quoted content", i)
    return text[start:close.start()].strip(), close.end()


def _read(text: str, i: int):
    """Read one datum starting at ``i`` (whitespace already skipped)."""
    ch = text[i]
    if ch == "(":
        start = i
        items = []
        i += 1
        while True:
            i = _skip_ws(text, i)
            if i >= len(text):
                raise UnbalancedParens("missing ')'", start)
            if text[i] == ")":
                return _List(items, start, i + 1), i + 1
            item, i = _read(text, i)
            items.append(item)
    if ch == ")":
        raise UnbalancedParens("unexpected ')'", i)
    if ch == '"':
        s, j = _read_quoted(text, i)
        return _Str(s, i), j
    if ch == "'":
        s, j = _read_single_quoted(text, i)
        return _Str(s, i), j
    j = i
    while j < len(text) and not text[j].isspace() and text[j] not in '()"':
        j += 1
    return _Atom(text[i:j], i), j


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i].isspace():
        i += 1
    return i


def _check_balance(text: str) -> None:
    depth = 0
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == '"':
            _, i = _read_quoted(text, i)
            continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise UnbalancedParens("unexpected ')'", i)
        i += 1
    if depth:
        raise UnbalancedParens("missing ')'", len(text))


# --------------------------------------------------------------------------
# parse


def parse_message(text: str, *, performatives: Iterable[str] = PERFORMATIVES,
                  require_content: bool = True) -> KqmlMessage:
    """Parse one message. Raises a :class:`KqmlSyntaxError` subclass.

    ``require_content=False`` admits partial messages used as match templates.
    """
    known = frozenset(performatives)
    _check_balance(text)
    i = _skip_ws(text, 0)
    if i >= len(text):
        raise MalformedMessage("empty input", 0)
    datum, j = _read(text, i)
    if _skip_ws(text, j) != len(text):
        raise MalformedMessage("trailing text after message", j)
    if not isinstance(datum, _List):
        raise MalformedMessage("a message must be a parenthesized list", i)
    return _build(datum, text, known, top=require_content)


def _build(lst: _List, text: str, known: frozenset, top: bool) -> KqmlMessage:
    if not lst.items or not isinstance(lst.items[0], _Atom):
        raise MalformedMessage("message must start with a performative name", lst.start)
    head = lst.items[0].text.lower()
    if head not in known:
        raise UnknownPerformative(f"unknown performative {head!r}", lst.items[0].start)
    fields: dict = {}
    extras = []
    seen = set()
    rest = lst.items[1:]
    if len(rest) % 2:
        raise MalformedMessage("keyword without value", rest[-1].start)
    for key, value in zip(rest[::2], rest[1::2]):
        if not isinstance(key, _Atom) or not key.text.startswith(":"):
            raise MalformedMessage("expected a :keyword", key.start)
        kw = key.text.lower()
        if kw in seen:
            raise DuplicateKeyword(f"duplicate keyword {kw}", key.start)
        seen.add(kw)
        if kw == ":content":
            fields["content"] = _content(value, text, known)
        elif kw in _KEYWORD_ATTR:
            if not isinstance(value, _Atom):
                raise MalformedMessage(f"{kw} takes a bare token", value.start)
            fields[_KEYWORD_ATTR[kw]] = value.text
        else:
            extras.append((kw, _raw_value(value, text)))
    if "content" not in fields and head not in CONTENT_OPTIONAL and top:
        raise MissingContent(f"{head} requires :content", lst.start)
    return KqmlMessage(head, extras=tuple(extras), **fields)


def _content(value, text: str, known: frozenset) -> Content:
    if isinstance(value, _List):
        items = value.items
        if items and isinstance(items[0], _Atom) and items[0].text.lower() in known:
            return _build(value, text, known, top=False)
        return Opaque(text[value.start:value.end])
    return Opaque(value.text)


def _raw_value(value, text: str) -> str:
    if isinstance(value, _List):
        return text[value.start:value.end]
    return value.text


# --------------------------------------------------------------------------
# serialize


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_message(msg: KqmlMessage) -> str:
    """Canonical single-line form: fixed keyword order, absent keywords omitted."""
    parts = [msg.performative]
    for kw, attr in RESERVED_KEYWORDS:
        value = getattr(msg, attr)
        if value is not None:
            parts += [kw, value]
    if isinstance(msg.content, KqmlMessage):
        parts += [":content", serialize_message(msg.content)]
    elif isinstance(msg.content, Opaque):
        parts += [":content", _quote(msg.content.text)]
    for kw, value in msg.extras:
        parts += [kw, value if is_token(value) else _quote(value)]
    return "(" + " ".join(parts) + ")"


# --------------------------------------------------------------------------
# transcripts

OUTGOING = ">"
INCOMING = "<"


class TranscriptError(ValueError):
    def __init__(self, lineno: int, cause: Exception):
        super().__init__(f"line {lineno}: {cause}")
        self.lineno = lineno
        self.cause = cause


@dataclass(frozen=True)
class TranscriptEntry:
    lineno: int
    direction: str  # OUTGOING or INCOMING
    message: KqmlMessage


def read_transcript(text: str) -> Iterator[TranscriptEntry]:
    """Yield transcript entries; blank lines and ``#`` comments are skipped."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        marker, _, body = stripped.partition(" ")
        if marker not in (OUTGOING, INCOMING):
            raise TranscriptError(lineno, MalformedMessage("line must start with '>' or '<'"))
        try:
            msg = parse_message(body)
        except KqmlSyntaxError as exc:
            raise TranscriptError(lineno, exc) from exc
        yield TranscriptEntry(lineno, marker, msg)


def write_transcript(entries: Iterable[tuple[str, KqmlMessage]]) -> str:
    return "".join(f"{d} {serialize_message(m)}\n" for d, m in entries)

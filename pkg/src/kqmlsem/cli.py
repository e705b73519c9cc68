"""Command line: ``kqmlsem lint | run | explain``.

Exit codes::

    0  clean
    1  unreadable input (parse failure, bad script, unknown name)
    2  a message rejected by the conversation policy
    3  a semantic precondition violation (strict mode only)
    4  a failed scenario assertion
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import dataclass, field
from typing import Optional

from . import policy
from .attitudes import AgentState, assert_expr
from .semantics import (
    apply_receive, apply_send, builtin_descriptors, describe, motivating_conjuncts,
    UnknownReplyTarget,
)
from .sim import (
    ID_SEED_ENV, LENIENT, STRICT, Monitor, ScriptError, load_bundled, run_scenario,
)
from .wire import OUTGOING, TranscriptError, read_transcript

EXIT_OK, EXIT_PARSE, EXIT_REJECT, EXIT_VIOLATION, EXIT_ASSERTION = 0, 1, 2, 3, 4


class UnknownName(LookupError):
    pass


@dataclass(frozen=True)
class CliConfig:
    command: str
    target: str
    mode: str = STRICT
    enable_proactive: bool = False
    fmt: str = "text"
    facilitator: bool = False


# --------------------------------------------------------------------------
# lint


@dataclass(frozen=True)
class LintRecord:
    lineno: int
    direction: str
    conversation: str
    verdict: str
    performative: str
    expected: str = ""
    detail: str = ""

    def text(self) -> str:
        s = f"line {self.lineno} {self.conversation} {self.verdict} {self.direction} {self.performative}"
        if self.expected:
            s += f" expected {self.expected}"
        if self.detail:
            s += f" : {self.detail}"
        return s

    def fields(self) -> str:
        return "\t".join((str(self.lineno), self.direction, self.conversation, self.verdict,
                          self.performative, self.expected, self.detail))


@dataclass
class LintReport:
    owner: Optional[str] = None
    records: list = field(default_factory=list)
    parse_error: Optional[TranscriptError] = None
    rejections: int = 0
    violations: int = 0

    def exit_code(self, mode: str) -> int:
        if self.parse_error is not None:
            return EXIT_PARSE
        if self.rejections:
            return EXIT_REJECT
        if self.violations and mode == STRICT:
            return EXIT_VIOLATION
        return EXIT_OK

    def render(self, fmt: str = "text") -> str:
        lines = [r.text() if fmt == "text" else r.fields() for r in self.records]
        if self.parse_error is not None:
            e = self.parse_error
            lines.append(f"line {e.lineno} parse-error {e.cause.kind if hasattr(e.cause, 'kind') else 'syntax'}: {e.cause}"
                         if fmt == "text" else f"{e.lineno}\t-\t-\tparse-error\t-\t\t{e.cause}")
        return "".join(line + "\n" for line in lines)


def _owner(entries) -> Optional[str]:
    for e in entries:
        return e.message.sender if e.direction == OUTGOING else e.message.receiver
    return None


def lint_transcript(text: str, mode: str = STRICT, enable_proactive: bool = False,
                    facilitator: bool = False) -> LintReport:
    """Check a one-agent transcript against the policy and the owner's semantics.

    The owner is the sender of the first outgoing line (or receiver of the
    first incoming one).  Before each outgoing message the owner adopts its
    own desires, intentions and beliefs that the message presupposes, so
    only preconditions about earlier communication can fail.  A transcript
    cannot show whether its owner is a facilitator; pass ``facilitator``.
    """
    report = LintReport()
    entries = []
    try:
        for entry in read_transcript(text):
            entries.append(entry)
    except TranscriptError as exc:
        report.parse_error = exc
    report.owner = _owner(entries)
    if report.owner is None:
        return report
    table = builtin_descriptors(enable_proactive)
    state = AgentState(report.owner, facilitator=facilitator)
    mon = Monitor(state, STRICT, table=table, rules=policy.builtin_grammar(enable_proactive))
    for entry in entries:
        msg = entry.message
        known = msg.performative in table
        if entry.direction == OUTGOING and known:
            for c in motivating_conjuncts(state, msg, table, include_beliefs=True):
                assert_expr(state, c)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", policy.AmbiguousLinkage)
            v = mon.observe(entry.direction, msg)
        notes = list(v.notes) + [str(w.message) for w in caught]
        if not v.policy_ok:
            verdict = "reject"
            report.rejections += 1
        elif v.violation is not None:
            verdict = "reject" if mode == STRICT else "warn"
            report.violations += 1
        else:
            verdict = "warn" if notes else "ok"
        if v.violation is not None:
            notes.insert(0, str(v.violation))
        if known:
            fn = apply_send if entry.direction == OUTGOING else apply_receive
            try:
                fn(state, msg, table)
            except UnknownReplyTarget as exc:
                if v.violation is None:
                    notes.append(str(exc))
        report.records.append(LintRecord(
            entry.lineno, entry.direction, v.conversation, verdict, msg.performative,
            policy.expected_summary(v.expected) if not v.policy_ok else "",
            " ; ".join(notes)))
    return report


# --------------------------------------------------------------------------
# explain


def explain(name: str, enable_proactive: bool = True) -> str:
    """Six-part descriptor for a performative, or the rules for a nonterminal."""
    table = builtin_descriptors(enable_proactive)
    if name in table:
        return describe(table[name])
    rules = policy.rules_for(policy.builtin_grammar(enable_proactive), name)
    if rules:
        return "".join(f"{r}\n" for r in rules)
    raise UnknownName(name)


# --------------------------------------------------------------------------
# driver


def _read(path: str, bundled: bool) -> str:
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    if bundled:
        try:
            return load_bundled(os.path.basename(path))
        except (FileNotFoundError, OSError):
            pass
    raise FileNotFoundError(path)


def cmd_lint(path: str, config: CliConfig, out=None) -> int:
    out = out or sys.stdout
    report = lint_transcript(_read(path, False), config.mode, config.enable_proactive,
                             config.facilitator)
    out.write(report.render(config.fmt))
    return report.exit_code(config.mode)


def cmd_run(path: str, config: CliConfig, out=None) -> int:
    out = out or sys.stdout
    try:
        report = run_scenario(_read(path, True), config.mode, config.enable_proactive)
    except ScriptError as exc:
        out.write(f"script error: {exc}\n")
        return EXIT_PARSE
    if config.fmt == "text":
        out.write(report.to_text())
    else:
        for v in report.verdicts:
            out.write("\t".join((v.agent, v.direction, v.conversation, v.verdict,
                                 v.message.performative)) + "\n")
        for n, desc, ok in report.checks:
            out.write(f"{n}\tcheck\t{'pass' if ok else 'fail'}\t{desc}\n")
    if report.halted is not None:
        v = report.halted.verdict
        return EXIT_REJECT if not v.policy_ok else EXIT_VIOLATION
    if not report.passed:
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_explain(name: str, config: CliConfig, out=None) -> int:
    out = out or sys.stdout
    try:
        out.write(explain(name, True))
    except UnknownName:
        out.write(f"unknown performative or nonterminal: {name}\n")
        return EXIT_PARSE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kqmlsem", description="KQML conversation checker and simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext, arg in (("lint", "check a transcript", "path"),
                                ("run", "run a scenario script", "path"),
                                ("explain", "describe a performative or grammar rule", "name")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument(arg)
        mode = sp.add_mutually_exclusive_group()
        mode.add_argument("--strict", dest="mode", action="store_const", const=STRICT)
        mode.add_argument("--lenient", dest="mode", action="store_const", const=LENIENT)
        sp.add_argument("--proactive", action="store_true",
                        help="enable proactive-tell and proactive-ask-if")
        sp.add_argument("--format", dest="fmt", choices=("text", "lines"), default="text")
        if name == "lint":
            sp.add_argument("--facilitator", action="store_true",
                            help="the transcript's owner acts as a facilitator")
        sp.set_defaults(mode=STRICT, facilitator=False)
    p.epilog = f"scenario reply ids are numbered from ${ID_SEED_ENV} (default 0)"
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    target = getattr(args, "path", None) or getattr(args, "name", None)
    config = CliConfig(args.command, target, args.mode, args.proactive, args.fmt, args.facilitator)
    handler = {"lint": cmd_lint, "run": cmd_run, "explain": cmd_explain}[args.command]
    try:
        return handler(target, config)
    except FileNotFoundError as exc:
        sys.stderr.write(f"no such file: {exc}\n")
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())

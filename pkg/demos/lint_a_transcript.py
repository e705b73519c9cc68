"""Lint two versions of A's side of a conversation.

The first is well formed.  The second asks before anything was advertised
and then answers a question nobody posed; the report says where each
message went wrong and what would have been acceptable instead.

    python3 demos/lint_a_transcript.py
"""

from kqmlsem.cli import lint_transcript

GOOD = """\
< (advertise :sender B :receiver A :reply-with a1 :content (ask-if :sender A :receiver B :in-reply-to a1 :content "spouse(adam,eve)"))
> (ask-if :sender A :receiver B :in-reply-to a1 :reply-with q1 :content "spouse(adam,eve)")
< (tell :sender B :receiver A :in-reply-to q1 :content "spouse(adam,eve)")
"""

BAD = """\
> (ask-if :sender A :receiver B :reply-with q1 :content "spouse(adam,eve)")
> (tell :sender A :receiver B :in-reply-to q9 :content "spouse(adam,eve)")
"""


def main() -> None:
    for title, text in (("well formed", GOOD), ("faulty", BAD)):
        report = lint_transcript(text)
        print(f"{title}: exit code {report.exit_code('strict')}")
        print(report.render(), end="")
        print()


if __name__ == "__main__":
    main()

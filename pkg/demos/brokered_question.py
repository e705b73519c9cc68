"""A asks facilitator F to find someone who can answer a yes/no question.

Prints every delivery as it crosses the bus, then shows what A ended up
knowing.  A learns the answer but never learns that D supplied it.

    python3 demos/brokered_question.py
"""

from kqmlsem.attitudes import dump_state
from kqmlsem.sim import load_bundled, run_scenario


def main() -> None:
    report = run_scenario(load_bundled("brokered_ask.scn"))
    for d in report.deliveries:
        print(f"{d.sender:>2} -> {d.receiver:<2} {d.message}")
    print()
    print(dump_state(report.states["A"]), end="")
    print()
    names = {d.sender for d in report.deliveries if "A" in (d.sender, d.receiver)}
    print("A exchanged messages with:", ", ".join(sorted(names - {"A"})))
    print("all checks passed:", report.passed)


if __name__ == "__main__":
    main()

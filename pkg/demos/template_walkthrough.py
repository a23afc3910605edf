"""What the structured-response parser accepts and why it rejects the rest.

Run: python3 demos/template_walkthrough.py
"""

from perceptrl.template import format_reward, parse_structured, serialize_structured

CASES = [
    ("canonical",
     "<description>a red circle</description><think>radius 5, doubled</think><answer>10</answer>"),
    ("missing think",
     "<description>a red circle</description><answer>10</answer>"),
    ("duplicate description",
     "<description>a</description><description>b</description><think>t</think><answer>10</answer>"),
    ("tags out of order",
     "<think>t</think><description>d</description><answer>10</answer>"),
    ("stray text between tags",
     "<description>d</description> oops <think>t</think><answer>10</answer>"),
    ("whitespace between tags is fine",
     "<description>d</description>\n  <think>t</think>\n  <answer>10</answer>"),
]


def main() -> None:
    for label, text in CASES:
        response, diag = parse_structured(text)
        print(f"--- {label}")
        print(f"    well_formed={diag.well_formed}  format_reward={format_reward(diag)}")
        if diag.order_violations:
            print(f"    order violations: {diag.order_violations}")
        if diag.stray_text_spans:
            print(f"    stray text at: {diag.stray_text_spans}")
        counts = {n: (diag.open_counts[n], diag.close_counts[n]) for n in diag.open_counts}
        print(f"    open/close counts: {counts}")
        if response is not None:
            print(f"    segments: {response.description!r} / {response.think!r} / {response.answer!r}")
            round_trip = serialize_structured(response)
            reparsed, _ = parse_structured(round_trip)
            print(f"    round-trip identical: {reparsed == response}")
    print()
    print("Malformed inputs never raise; they come back as diagnostics so the")
    print("format reward can be 0.0 instead of the engine falling over.")


if __name__ == "__main__":
    main()

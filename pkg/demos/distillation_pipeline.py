"""Distill key information from mock teachers for three toy questions.

Each question gets N candidate trajectories per teacher; the top B by
log-probability are judged, survivors are deduplicated per answer, and the
best one is mined for visual keys, textual keys, and the step where each
key is applied.

Run: python3 demos/distillation_pipeline.py
"""

from perceptrl.pipeline import DistillConfig, DistillItem, ExternalClients, distill

ITEMS = [
    DistillItem("q0", "the circle is marked 3 and 4 . what is 3 + 4 ?", "7"),
    DistillItem("q1", "the square is marked 6 and 2 . what is 6 + 2 ?", "8"),
    # no gold answer: self-consistency voting picks the modal answer class
    DistillItem("q2", "the chord is marked 5 and 5 . what is 5 * 5 ?", None),
]


def main() -> None:
    cfg = DistillConfig()
    clients = ExternalClients.mocks(seed=0)
    records, summary = distill(ITEMS, clients, cfg)

    print(f"summary: {summary.to_dict()}")
    print(f"judge calls stayed within budget: {clients.judge.calls} <= "
          f"{cfg.budget} * {summary.items}")
    print()
    for rec in records:
        print(f"--- {rec.id}: answer={rec.answer!r} key_info_ok={rec.key_info_ok}")
        print(f"    visual keys:  {rec.visual_keys}")
        print(f"    textual keys: {rec.textual_keys}")
        for fact, step in sorted(rec.application_map.items()):
            print(f"    {fact!r} applied at step {step}")
        first_line = rec.trajectory.splitlines()[0]
        print(f"    trajectory starts: {first_line}")
    print()
    print("q2 has no gold answer, so whatever answer class the teachers agree on")
    print("wins the vote; with noisy mock teachers that can be a wrong answer,")
    print("which is exactly the failure mode gold labels exist to prevent.")


if __name__ == "__main__":
    main()

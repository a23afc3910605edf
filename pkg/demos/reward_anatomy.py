"""Anatomy of one composite reward, plus the perception-first schedule.

Scores a single rollout, prints all six components, then shows how the
scheduled weights move correctness to the front as training progresses
and what zeroing one channel does to the total.

Run: python3 demos/reward_anatomy.py
"""

from perceptrl.rewards import (
    RewardConfig,
    RewardWeights,
    schedule_weights,
    score_rollout,
)

ROLLOUT = (
    "<description>a red circle with radius 5 cm next to a blue square</description>"
    "<think>the radius is 5 exactly so i double it to get the diameter</think>"
    "<answer>10</answer>"
)
GOLD = "10"
VISUAL = ["red circle", "blue square"]
TEXTUAL = ["radius", "5"]


def show(label: str, weights: RewardWeights) -> None:
    score = score_rollout(
        ROLLOUT, GOLD, visual_keys=VISUAL, textual_keys=TEXTUAL, weights=weights
    )
    b = score.breakdown
    parts = (
        f"acc={b.r_acc:.2f} fmt={b.r_fmt:.2f} vkey={b.r_vkey:.2f} "
        f"tkey={b.r_tkey:.2f} rep={b.r_rep:.2f} cons={b.r_cons:.2f}"
    )
    print(f"{label:24s} {parts}  total={b.total:.3f}")


def main() -> None:
    config = RewardConfig()
    print("one rollout, three weightings")
    show("unit weights", RewardWeights())
    show("no visual-key channel", RewardWeights().ablated(vkey=True))
    show("accuracy only", RewardWeights(1, 0, 0, 0, 0, 0))

    print()
    print("scheduled weights over a 10-step run (perception first, then accuracy)")
    for step in (0, 2, 5, 7, 10):
        w = schedule_weights(step, 10, config.schedule)
        print(
            f"  step {step:2d}: acc={w.acc:.2f} vkey={w.vkey:.2f} "
            f"tkey={w.tkey:.2f} cons={w.cons:.2f}"
        )
        show(f"  scored at step {step}", w)

    print()
    print("coverage is discretized: partial credit at 40%, full credit at 80%.")
    print("drop one textual key from the think text and tkey falls a whole tier.")


if __name__ == "__main__":
    main()

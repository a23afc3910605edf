"""Start the scoring service in-process and drive it over real HTTP.

Run: python3 demos/service_roundtrip.py
"""

import json
import urllib.request

from perceptrl.config import EngineConfig
from perceptrl.service import RewardService

ROLLOUT = (
    "<description>a red circle with radius 5 cm</description>"
    "<think>the radius is 5 exactly so i double it</think><answer>10</answer>"
)


def get(url: str) -> dict:
    with urllib.request.urlopen(url) as resp:
        return json.loads(resp.read())


def post(url: str, payload: dict) -> dict:
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def main() -> None:
    service = RewardService(EngineConfig(), port=0)  # port 0: pick a free one
    service.start()
    host, port = service.address
    base = f"http://{host}:{port}"
    print(f"service listening on {base}")

    health = get(f"{base}/health")
    print(f"fresh health: served={health['requests_served']} "
          f"config={health['config_hash'][:12]}")

    batch = {
        "items": [
            {"rollout_text": ROLLOUT, "gold_answer": "10",
             "visual_keys": ["circle", "red"], "textual_keys": ["radius", "5"]},
            {"rollout_text": ROLLOUT, "gold_answer": "10",
             "visual_keys": ["circle", "red"], "textual_keys": ["radius", "5"],
             "step": 0, "total_steps": 10},
            {"rollout_text": "<answer>10</answer>", "gold_answer": "10"},
            {"rollout_text": None},
        ]
    }
    body = post(f"{base}/score", batch)
    for result in body["results"]:
        if result["error"] is not None:
            print(f"item {result['index']}: error -> {result['error']}")
        else:
            b = result["breakdown"]
            print(f"item {result['index']}: total={b['total']:.2f} "
                  f"(acc={b['r_acc']:.0f} fmt={b['r_fmt']:.0f}, "
                  f"acc weight {b['weights']['acc']:.2f})")

    health = get(f"{base}/health")
    print(f"after one batch: served={health['requests_served']} "
          f"items={health['items_scored']}")
    service.shutdown()
    print("shut down cleanly; one bad item never poisons its batch, and the")
    print("schedule step travels with each item because the service holds no state.")


if __name__ == "__main__":
    main()

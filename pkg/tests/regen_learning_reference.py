"""Regenerate ``data/learning_reference.json``.

Run from the repository root with ``python tests/regen_learning_reference.py``
whenever the learner or the toy scenario changes on purpose.
"""

import json
import platform
from pathlib import Path

import numpy as np

from saver.harness.scenarios import ToyScenario
from saver.rl.training import TrainConfig, train

EPISODES = 50
SEED = 0
WARMUP = 200


def run():
    sc = ToyScenario()
    f = sc.feeder()
    _, log = train(f, sc.dataset(f), TrainConfig(episodes=EPISODES, seed=SEED, warmup_steps=WARMUP))
    return log.returns()


if __name__ == "__main__":
    ret = run()
    out = {
        "episodes": EPISODES, "seed": SEED, "warmup_steps": WARMUP,
        "first10_mean": float(ret[:10].mean()), "last10_mean": float(ret[-10:].mean()),
        "improvement": float(ret[-10:].mean() - ret[:10].mean()),
        "returns": [float(x) for x in ret],
        "numpy": np.__version__, "python": platform.python_version(),
    }
    path = Path(__file__).with_name("data") / "learning_reference.json"
    path.write_text(json.dumps(out, indent=1) + "\n")
    print(f"improvement {out['improvement']:.4f} written to {path}")

"""Regenerate golden.json: ``python tests/golden/make_golden.py``.

Run once; the test suite compares against the stored values bit for bit.
"""
import json
import os

import numpy as np

from mappohr.mappo import Actor, Critic

HERE = os.path.dirname(os.path.abspath(__file__))


def compute():
    rng = np.random.default_rng(2024)
    actor = Actor(71, 128, "gru", np.random.default_rng(1), np.float64)
    critic = Critic(145, 128, "gru", np.random.default_rng(2), np.float64)
    obs = rng.standard_normal((3, 2, 71))
    cobs = rng.standard_normal((3, 2, 145))
    masks = np.array([[1, 1, 1, 1], [0, 1, 1, 0]], dtype=bool)
    ha, hc = actor.initial_state(2), critic.initial_state(2)
    probs, values = [], []
    for t in range(3):
        p, ha = actor.forward(obs[t], masks, ha)
        v, hc = critic.forward(cobs[t], hc)
        probs.append(p)
        values.append(v)
    return np.stack(probs), np.stack(values)


if __name__ == "__main__":
    probs, values = compute()
    out = {"probs": [float(x).hex() for x in probs.ravel()], "values": [float(x).hex() for x in values.ravel()]}
    with open(os.path.join(HERE, "golden.json"), "w") as fh:
        json.dump(out, fh, indent=1)

"""Smoke test for the tokenflow_py extension.

Build first with `pip install --no-build-isolation -e crates/py`.
"""

import csv
import io
import json
import math

import tokenflow_py as tf


def main():
    g = tf.Graph.cycle(16)
    assert (g.n, g.d) == (16, 2)
    assert g.neighbors(0) == [1, 15]
    assert tf.Graph("torus:4x2").d == 4
    assert tf.Graph.cycle(7).odd_girth() == 7

    s = tf.spectral(g, 2)
    expected = (2 + 2 * math.cos(2 * math.pi / 16)) / 4
    assert abs(s.lambda2 - expected) < 1e-9, s
    steps = s.balancing_steps(256)
    assert steps == math.ceil(16 * math.log(16 * 256) / s.mu)

    sim = tf.Simulation(g, 2, "rotor-router", [256] + [0] * 15)
    flows = sim.step()
    assert flows[0] == [64, 64, 64, 64]
    disc = sim.run(steps - 1)
    assert sum(sim.load) == 256
    assert disc[-1] <= 2 * 2 * 4 * math.sqrt(16)
    report = sim.fairness()
    assert report.delta_observed <= 1 and report.steps == steps

    config = {
        "graph": "cycle:8",
        "d_loops": 2,
        "balancer": "send-round",
        "load": "point:64",
        "steps": "10",
    }
    text, summary = tf.run_config(json.dumps(config))
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 11 and rows[0]["t"] == "0"
    assert sum(summary["final_load"]) == 64
    assert summary["fairness"].delta_observed == 0

    passed, verdict = tf.reproduce("thm5")
    assert passed and verdict.startswith("id,claim")

    try:
        tf.reproduce("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown id accepted")
    try:
        tf.Simulation(tf.Graph.cycle(8), 1, "send-round", [1] * 8)
    except ValueError:
        pass
    else:
        raise AssertionError("infeasible send-round accepted")
    print("smoke test ok")


if __name__ == "__main__":
    main()

"""Smoke test for the Python bindings: run after `pip install -e crates/py`."""

import math

import jumpflow


def main():
    ou = jumpflow.Model("ornstein-uhlenbeck", {"theta": 1.0, "mu": 0.0, "sigma": 1.0})
    assert ou.dims == (1, 1, 1, 0)
    noise = jumpflow.Noise(level=8, large_intensity=1.0)
    sim = jumpflow.Simulator(ou, noise)

    times, states, jumps = sim.path(0.0, [1.0], seed=3, index=0)
    assert times[0] == 0.0 and times[-1] == 1.0 and len(states) == len(times) == len(jumps)

    finals = [x[0] for x in sim.finals(0.0, [1.0], seed=3, count=4000)]
    mean = sum(finals) / len(finals)
    assert abs(mean - math.exp(-1.0)) < 0.06, mean

    report = sim.flow_check(0.0, 0.5, 1.0, [[0.0], [1.0]], scenarios=20, seed=1)
    assert report["statistic"] == 0.0 and report["pass"]

    probe = ou.probe([-2.0], [2.0], samples=200, seed=4)
    assert isinstance(probe, dict)

    drift = jumpflow.Model("controlled-drift", {"sigma": 0.0})
    sim = jumpflow.Simulator(drift, jumpflow.Noise(level=5, large_intensity=1.0))
    linear = {"kind": "linear", "weights": [1.0], "bound": 100.0}
    grid = sim.solve_value({"kind": "zero"}, linear, [[0.0], [1.0]], 2, [-1.0], [3.0], [17], 1, 7)
    assert abs(grid.value_at(0.0, [0.5]) - 1.5) < 1e-12
    # near the top edge both actions clamp to the same value and tie
    assert all(a == 1 for a, x in zip(grid.policy(0), grid.points) if x[0] <= 2.0)
    value, _, best = sim.enumerate_value(0.0, [0.5], {"kind": "zero"}, linear, [[0.0], [1.0]], 2, 1, 0)
    assert value == 1.5 and best == [1, 1, 1, 1]
    residual = sim.dpp_residual(grid, 0.25, [0.0], {"kind": "deterministic", "time": 0.5}, 8, 2)
    assert residual["pass"]

    _, _, distance = jumpflow.dyadic_shift([0.0, 0.3, 1.0], [[0.0], [1.0]], [0.375])
    assert abs(distance - 0.075) < 1e-15

    print("jumpflow", jumpflow.__version__, "python smoke test passed")


if __name__ == "__main__":
    main()

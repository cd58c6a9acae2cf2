"""Smoke test for the pyiotalloc extension.

Build and install first:
    maturin develop --release -m crates/py/Cargo.toml
"""

import math

import pyiotalloc as ia


def main():
    net = ia.NetworkConfig(num_aps=3, num_devices=10, seed=4)
    assert net.num_aps == 3 and net.num_devices == 10
    assert len(net.budgets_mw) == 3

    real = net.realize()
    gains = real.gains()
    assert len(gains) == 3 and all(len(row) == 10 for row in gains)
    assert all(g > 0 for row in gains for g in row)
    assert len(real.device_positions()) == 10

    assert set(ia.strategies()) >= {"DifPaCgApa", "ModifiedBb", "BruteForce"}
    for name in ["DifPaCgApa", "DifPaNearest", "EqualPaNearest", "ModifiedBb"]:
        alloc = real.solve(name, thr=0.5)
        assert len(alloc.association) == 10
        assert all(0 <= k < 3 for k in alloc.association)
        assert math.isclose(alloc.throughput, sum(alloc.rates), rel_tol=1e-12)
        for n in alloc.satisfied:
            assert alloc.rates[n] >= 0.5 - 0.01 - 1e-9
        print(alloc)

    a, b = ia.log_factors(3.0)
    assert math.isclose(a * math.log2(3.0) + b, ia.rate(3.0), rel_tol=1e-12)

    summaries = ia.run_campaign(
        "[network]\nnum_aps = 2\nnum_devices = 6\n",
        realizations=4,
        seed=1,
        strategies=["EqualPaNearest", "ModifiedBb"],
    )
    assert [s.strategy for s in summaries] == ["EqualPaNearest", "ModifiedBb"]
    assert all(s.realizations == 4 and s.failures == 0 for s in summaries)
    print(summaries)

    try:
        ia.NetworkConfig(num_aps=0)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()

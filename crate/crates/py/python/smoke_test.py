"""Smoke test for the dynspanner_py extension.

Build and install first:  maturin develop --release -m crates/py/Cargo.toml
"""

import math

import dynspanner_py as ds


def main():
    cfg = ds.Config.desk(2)
    assert cfg.k == 8 and abs((1 + cfg.eps) ** 2 - 1.5) < 1e-12, cfg
    assert cfg.to_dict()["lambda"] == 8.0

    sp = ds.DynamicSpanner(cfg)
    a = sp.insert([0.0, 0.0])
    b = sp.insert([10.0, 0.0])
    assert a["point"] == 0 and b["point"] == 1
    assert b["light_edge_events"] == 1 and b["converged"]
    assert sp.light_edges() == [(0, 1)] and len(sp) == 2
    assert math.isclose(sp.light_weight(), 10.0)
    assert sp.max_stretch() == 1.0

    sp.insert([5.0, 7.0])
    out = sp.delete(1)
    assert out["kind"] == "delete" and len(sp) == 2
    assert sp.is_clean(), sp.verify()
    assert sp.dump_state().startswith("state v1")

    trace = ds.uniform_trace(40, seed=3)
    assert trace == ds.uniform_trace(40, seed=3)
    big = ds.DynamicSpanner.from_trace(trace, cfg)
    report = big.verify()
    assert report["n"] == 40 and not report["invariant_violations"], report
    assert report["max_degree"] <= cfg.d_max

    churn = ds.churn_trace(20, 30, seed=2, placement="expclusters", log2_span=12.0)
    assert len(ds.DynamicSpanner.from_trace(churn, cfg)) > 2
    assert ds.clustered_trace(10).count("\n+") == 10

    for bad in (lambda: ds.Config(2, 0.5, mode="fast"), lambda: sp.delete(1), lambda: sp.insert([1.0])):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print("smoke test passed:", repr(cfg))


if __name__ == "__main__":
    main()

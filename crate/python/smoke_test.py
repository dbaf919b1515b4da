"""Smoke test for the tickvol extension module.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/tickvol-*.whl
"""

import math
from pathlib import Path

import tickvol

ROOT = Path(__file__).resolve().parent.parent


def main():
    cfg = (ROOT / "configs" / "flat_vol.toml").read_text()
    series = tickvol.simulate(cfg, seed=1)
    again = tickvol.simulate(cfg, seed=1)
    assert series.times == again.times and series.log_prices == again.log_prices
    assert series.horizon == 23400.0 and len(series) > 40000
    print(series)

    est = tickvol.EstimatorConfig.data_defaults(series)
    print(est)
    u0 = 0.5
    tick = tickvol.estimate(series, u0, est, "tick_pavg")
    lam = tickvol.estimate(series, u0, est, "intensity")
    dec = tickvol.estimate(series, u0, est, "decomposed")
    assert abs(math.log(dec) - math.log(tick) - math.log(lam)) < 1e-12
    assert abs(lam - 2.0) < 0.3, lam
    # Tick-time volatility per trade is exp(-18).
    assert 0.5 < tick / math.exp(-18) < 2.0, tick
    print(f"u0={u0}: tick={tick:.4e} intensity={lam:.4f} decomposed={dec:.4e}")

    est.grid = est.interior_grid(20)
    curve = tickvol.estimate_curve(series, est, "clock_pavg")
    assert len(curve) == 20 and all(v is not None for _, v, _ in curve)

    raw = "timestamp,price,condition\n34100,39.00,\n34210,39.41,\n34210,39.42,\n34210,39.40,\n57700,39.5,\n"
    cleaned, report = tickvol.clean(raw)
    assert cleaned.times == [10.0, 34210.33 - 34200.0, 34210.67 - 34200.0]
    assert report["outside_session"] == 2 and cleaned.cleaned

    d = tickvol.optimal_delta(2.0, 1.0, 0.5)
    assert d is not None and d > 0
    assert tickvol.optimal_delta(1.0, 0.0, 0.0) is None
    assert tickvol.decomposition_regime(0, 0.9, 0, 0.2) == "intensity_dominated"
    g2 = tickvol.weight_constants(15)
    print("weight constants (H=15):", g2)

    registry = (ROOT / "scenarios" / "registry.toml").read_text()
    report = tickvol.run_scenario(registry, "intensity_clt", "intensity", replications=200)
    print(f"intensity_clt (200 reps): mean={report['mean']:.4f} ratio={report['ratio']:.3f}")
    assert abs(report["mean"] - 1.3) < 0.05

    try:
        tickvol.estimate(series, 0.5, est, "nope")
    except ValueError as e:
        print("bad estimator name rejected:", e)
    else:
        raise AssertionError("expected ValueError")
    print("smoke test passed")


if __name__ == "__main__":
    main()

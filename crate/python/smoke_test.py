"""Smoke test for the rotspec_py extension module.

Build and install first:  maturin build --release -m crates/py/Cargo.toml
then pip install the wheel from target/wheels/.
"""

import math

import rotspec_py as rs


def main():
    n = rs.planck_occupancy(1.3e12, 300.0)
    expected = 1.0 / math.expm1(6.62607015e-34 * 1.3e12 / (1.380649e-23 * 300.0))
    assert abs(n - expected) < 1e-9 * expected, (n, expected)

    width = rs.doppler_fwhm(0.1)
    assert 160e3 < width < 185e3, width

    pops = rs.thermal_populations(300.0)
    assert abs(sum(pops) - 1.0) < 1e-12

    lines = rs.line_positions(0.0)
    assert any(abs(pos + 6.617e6) < 1.0 for _, pos, _ in lines)

    t = [i / 50 for i in range(1500)]
    y = [20.0 * math.exp(-0.075 * x) + 3.0 for x in t]
    fit = rs.fit_exponential(t, y, (0.0, 29.0))
    assert abs(fit["rate"] - 0.075) < 1e-6, fit

    cfg = rs.Config()
    cfg.master_seed = 11
    again = rs.Config.from_toml(cfg.to_toml())
    assert again.master_seed == 11

    run = rs.simulate("II", "A", 2, config=cfg, workers=2)
    assert len(run["signals"]) == 2
    assert run["summary"]["n_reps"] == 2
    same = rs.simulate("II", "A", 2, config=cfg, workers=1)
    assert same["signals"] == run["signals"]

    try:
        rs.simulate("III", "A", 1)
    except ValueError:
        pass
    else:
        raise AssertionError("bad method accepted")

    points = rs.spectrum("I", ["A'", "detuned500"], 2, config=cfg)
    assert [p["list"] for p in points] == ["A'", "detuned500"]
    print("smoke test passed:", points[0]["signal"], points[1]["signal"])


if __name__ == "__main__":
    main()

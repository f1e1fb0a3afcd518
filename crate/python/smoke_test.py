"""Smoke test for the pyxkte extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/pyxkte-*.whl
"""

import math

import pyxkte


def main():
    data = pyxkte.generate("III", 200, seed=7, design="experimental")
    assert data.n == 200 and data.d == 5 and len(data) == 200
    assert sum(data.a) == 100

    config = pyxkte.TestConfig(permutations=50, known_propensity=0.5)
    results = {}
    for method in ("aipw-xkte", "ipw-xkte", "kte", "baseline-aipw"):
        r = pyxkte.run_test(method, data, config)
        assert 0.0 <= r.p_value <= 1.0
        assert r.reject == (r.p_value <= r.alpha)
        results[method] = r
        print(r)

    r = pyxkte.aipw_xkte(data, config)
    assert r.statistic == results["aipw-xkte"].statistic
    assert abs(r.p_value - (1.0 - pyxkte.std_normal_cdf(r.statistic))) < 1e-12

    again = pyxkte.Dataset(data.x, data.a, data.y)
    assert pyxkte.aipw_xkte(again, config).statistic == r.statistic

    assert abs(pyxkte.std_normal_cdf(0.0) - 0.5) < 1e-15
    assert pyxkte.median_heuristic([[0.0], [1.0], [3.0]]) == 4.0

    flat = pyxkte.Dataset(data.x, data.a, [1.5] * data.n)
    try:
        pyxkte.aipw_xkte(flat)
    except pyxkte.DegenerateError as e:
        print("degenerate:", e)
    else:
        raise AssertionError("expected DegenerateError")

    try:
        pyxkte.TestConfig(alpha=2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    assert math.isfinite(r.statistic)
    print("pyxkte", pyxkte.__version__, "smoke test ok")


if __name__ == "__main__":
    main()

"""Quick end-to-end check of the Python bindings."""

import math

import steinshrink as ss


def main():
    g = ss.NoiseModel.gaussian(5, 1.0)
    js = ss.Estimator.james_stein(5, 3.0)
    r = ss.mc_risk(g, js, 200_000, 1)
    assert r.within(2.0), r

    x = [1.0, -2.0, 0.5, 0.0, 3.0]
    shrunk = js.apply(x)
    norm2 = sum(v * v for v in x)
    assert all(math.isclose(s, (1 - 3.0 / norm2) * v) for s, v in zip(shrunk, x))
    assert math.isclose(js.sure(x, 1.0), 5 - 9.0 / norm2)

    draws = g.sample(4, 7)
    assert len(draws) == 4 and all(len(row) == 5 for row in draws)
    assert draws == g.sample(4, 7)

    st = ss.NoiseModel.student(6, 6.0, 1.5)
    cov = st.cov()
    assert math.isclose(cov[0][0], 2.25) and cov[0][1] == 0.0
    var_t, frob = ss.discrepancy_stats(st, 200_000, 3)
    assert var_t.within(109.35, 4.0), var_t
    assert frob.within(18.225, 4.0), frob

    for model in (g, ss.NoiseModel.laplace(6, 1.0), ss.NoiseModel.sphere(6, 1.0)):
        for tf in ("linear", "coord-quadratic", "sum-projection"):
            assert ss.zb_identity_residual(model, tf, 50_000, 12).within(0.0, 4.0)
            if model.validity_check("kernel")[0]:
                assert ss.stein_identity_residual(model, tf, 50_000, 11).within(0.0, 4.0)

    four = ss.NoiseModel.finite_support([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    ok, reasons = four.validity_check("kernel")
    assert not ok and reasons

    lam, sure = ss.select_lambda([0.1, -0.2, 4.0, 0.05] * 16, 1.0)
    assert 0.0 <= lam <= math.sqrt(2 * math.log(64)) + 1e-12 and math.isfinite(sure)

    assert math.isclose(ss.sphere_crossing(4.0, 9.0), 64.0)
    assert math.isclose(ss.pinsker_limit(1.0, 1.0), 0.5)

    try:
        ss.NoiseModel.gaussian(5, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative variance accepted")

    print("smoke test ok", ss.__version__)


if __name__ == "__main__":
    main()

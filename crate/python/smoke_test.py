"""Smoke test for the pygpemg extension module."""

import math

import pygpemg


def main():
    laplace = pygpemg.Config(initial_subdivision=2, n_levels=4, zeta=0.0, gammas=[0.0, 0.0])
    rep = pygpemg.solve(laplace)
    assert len(rep.levels) == 4
    exact = 2.0 * math.pi ** 2
    errs = [lvl.lambda_ - exact for lvl in rep.levels]
    assert all(e > 0 for e in errs), errs
    assert 3.5 < errs[-2] / errs[-1] < 4.5, errs

    cfg = pygpemg.Config.from_text("zeta = 10\ngammas = 1, 1\ninitial_subdivision = 4\nn_levels = 3\n")
    assert pygpemg.Config.from_text(cfg.to_text()).zeta == 10.0
    t = pygpemg.solve(cfg)
    cfg.method = "baseline"
    b = pygpemg.solve(cfg)
    assert abs(t.final_lambda - b.final_lambda) <= 1e-10 * t.final_lambda
    assert len(t.final_coeffs) == t.levels[-1].n_dofs

    try:
        pygpemg.Config.from_text("num_levels = 3\n")
    except ValueError as e:
        assert "num_levels" in str(e)
    else:
        raise AssertionError("bad key accepted")

    ad = pygpemg.Config(domain="l_shape", initial_subdivision=4, zeta=1.0)
    ad.max_dofs = 1500
    rows = pygpemg.adapt(ad).rows
    assert all(b.n_dofs > a.n_dofs for a, b in zip(rows, rows[1:]))

    sweep = pygpemg.Config.from_text("initial_subdivision = 4\nn_levels = 2\n[bench]\nzeta_values = 1, 10\n")
    assert len(pygpemg.bench(sweep, reps=1)) == 3 * 2 * 2
    print("smoke test ok")


if __name__ == "__main__":
    main()

import math

import numpy as np
import pytest

from cemiso import experiments as ex
from cemiso.experiments import (ExperimentConfig, ExperimentResult, RateUnreachable,
                                array_power_gain, build_ensemble, clopper_pearson,
                                ergodic_rate_curves, exp_max_cdf, exponential_spacings,
                                loglog_slope, mh_ratio_curve, mh_tail_check, min_snr_for_rate,
                                min_snr_search, outage_bounds, outage_upper_bound_analytic)
from cemiso.fading import parse_fading


def small(**kw):
    base = dict(trials=400, n_grid=(2, 4), snr_grid_db=(0.0, 10.0), alpha_grid=8, l_max=2,
                search_trials=100)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    for bad in (dict(trials=0), dict(n_grid=()), dict(n_grid=(4, 2)), dict(snr_grid_db=(1, 1)),
                dict(schemes=("mrt", "zf")), dict(bracket_db=(5, -5)), dict(n_grid=(0,)),
                dict(l_max=0)):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)


def test_result_table_and_csv():
    res = ExperimentResult("demo", ("n", "x", "tag"), provenance={"master_seed": 3})
    res.add(1, 0.1 + 0.2, (0.5, 1.0))
    res.add(2, float("nan"), "a")
    with pytest.raises(ValueError):
        res.add(1)
    text = res.to_csv()
    assert text.splitlines()[:3] == ["# experiment: demo", "# master_seed: 3", "n,x,tag"]
    assert "1,0.3,0.5 1" in text and "2,nan,a" in text
    assert res.column("n") == [1, 2]
    assert res.where(n=2)[0]["tag"] == "a"


def test_ensemble_is_chunk_and_thread_invariant():
    model = parse_fading("rayleigh", 4)
    a = build_ensemble(model, 5, 1200, threads=1)
    b = build_ensemble(model, 5, 1200, threads=3)
    for x, y in ((a.gains, b.gains), (a.inner, b.inner), (a.outer, b.outer)):
        assert np.array_equal(x, y)
    head = build_ensemble(model, 5, 700, threads=2)
    assert np.array_equal(head.gains, a.gains[:700])
    assert np.all(a.inner <= a.outer)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("CE_THREADS", "3")
    assert ex.worker_count() == 3
    assert ex.worker_count(2) == 2
    monkeypatch.setenv("CE_THREADS", "zero")
    with pytest.raises(ValueError):
        ex.worker_count()


def test_mh_ratio_trends():
    res = mh_ratio_curve(ExperimentConfig(trials=500, n_grid=(2, 4, 8, 16)))
    ratio = res.column("mean_m_over_M")
    bound = res.column("mean_linf_over_l1")
    assert all(r < b for r, b in zip(ratio, bound))
    assert all(y < x for x, y in zip(ratio, ratio[1:]))
    dlos = mh_ratio_curve(ExperimentConfig(trials=50, n_grid=(2, 5), fading="dlos:1"))
    assert max(dlos.column("mean_m_over_M")) < 1e-9


def test_rate_curves_orderings():
    cfg = small(n_grid=(4,), snr_grid_db=(-10.0, 0.0, 10.0, 20.0),
                metrics=("atpc", "papc", "epi_lower", "i2_upper", "mi_uniform", "mi_dauip_1",
                         "mi_best_dauip"))
    res = ergodic_rate_curves(cfg)
    for db in cfg.snr_grid_db:
        v = {r["metric"]: r["value"] for r in res.where(snr_db=db)}
        assert v["epi_lower"] <= v["mi_uniform"] + 1e-9
        assert v["mi_uniform"] <= v["i2_upper"] + 1e-9
        assert v["mi_best_dauip"] <= v["i2_upper"] + 1e-9
        assert v["mi_dauip_1"] <= v["mi_best_dauip"] + 1e-9
        assert v["papc"] <= v["atpc"] + 1e-12
    low = {r["metric"]: r["value"] for r in res.where(snr_db=-10.0)}
    assert abs(low["mi_dauip_1"] - low["papc"]) < 0.05


def test_uniform_slope_tracks_atpc():
    cfg = small(n_grid=(4,), snr_grid_db=(30.0, 40.0), metrics=("atpc", "mi_uniform", "mi_dauip_1"))
    res = ergodic_rate_curves(cfg)

    def slope(metric):
        lo, hi = (r["value"] for r in res.where(metric=metric))
        return (hi - lo) / math.log2(10.0)

    assert slope("mi_uniform") == pytest.approx(slope("atpc"), rel=0.1)
    one = ergodic_rate_curves(small(n_grid=(1,), snr_grid_db=(30.0, 40.0),
                                    metrics=("atpc", "mi_dauip_1")))
    lo, hi = (r["value"] for r in one.where(metric="mi_dauip_1"))
    assert (hi - lo) / math.log2(10.0) == pytest.approx(0.5, abs=0.05)


def test_min_snr_search_exact_curve():
    db, rate, evals = min_snr_search(lambda d: d / 10.0, 0.731, (-20, 25), rate_tol=1e-6)
    assert db == pytest.approx(7.31, abs=1e-4)
    assert evals >= 1
    with pytest.raises(RateUnreachable):
        min_snr_search(lambda d: 0.0, 3.0, (-20, 25), iters=10)
    with pytest.raises(RateUnreachable):
        min_snr_search(lambda d: 10.0, 3.0, (-20, 25), iters=10)


def test_min_snr_orderings_and_determinism():
    cfg = small(n_grid=(2, 4), schemes=("mrt", "papc", "ce_uniform", "ce_dauip", "ce_epi"))
    a = min_snr_for_rate(ExperimentConfig(**{**cfg.__dict__, "threads": 1}))
    b = min_snr_for_rate(ExperimentConfig(**{**cfg.__dict__, "threads": 3}))
    assert a.to_csv() == b.to_csv()
    for n in (2, 4):
        v = {r["scheme"]: r["min_snr_db"] for r in a.where(n=n)}
        assert v["mrt"] <= v["papc"] + 0.05
        assert v["papc"] <= v["ce_dauip"] + 0.05
        assert v["ce_uniform"] <= v["ce_epi"] + 0.05
        for r in a.where(n=n):
            assert abs(r["rate"] - 3.0) <= 0.01 or r["evaluations"] >= 40


def test_array_power_gain_structure():
    res = array_power_gain(small(n_grid=(2, 4, 8), schemes=("mrt", "papc")))
    rows = res.where(scheme="mrt")
    assert [r["n"] for r in rows] == [2, 4, 8]
    assert math.isnan(rows[0]["step_db"]) and rows[0]["gain_db"] == 0.0
    assert all(r["step_db"] < 0 for r in rows[1:])
    med = [r["gain_db"] for r in res.where(scheme="mrt_per_channel")]
    assert med == sorted(med)


def test_clopper_pearson():
    assert clopper_pearson(0, 100)[0] == 0.0
    assert clopper_pearson(100, 100)[1] == 1.0
    lo, hi = clopper_pearson(30, 100)
    assert lo < 0.3 < hi


def test_exponential_spacings_are_unit_exponential(rng):
    g = (rng.standard_normal((20000, 6)) + 1j * rng.standard_normal((20000, 6))) / np.sqrt(2)
    y = exponential_spacings(g)
    assert y.shape == (20000, 6) and np.all(y >= 0)
    np.testing.assert_allclose(y.mean(axis=0), 1.0, atol=0.03)
    np.testing.assert_allclose(y.var(axis=0), 1.0, atol=0.08)
    assert abs(np.corrcoef(y[:, 0], y[:, 3])[0, 1]) < 0.03


def test_analytic_outage_slope():
    snr_db = np.linspace(30, 40, 11)
    p = outage_upper_bound_analytic(4, 10 ** (snr_db / 10), 2.0)
    assert loglog_slope(snr_db, p) == pytest.approx(3.0, abs=0.05)


def test_outage_bounds_ordering():
    res = outage_bounds(small(n_grid=(2, 4), snr_grid_db=(0.0, 5.0, 10.0, 15.0), trials=2000,
                              target_rate=2.0))
    for n in (2, 4):
        for db in (0.0, 5.0, 10.0, 15.0):
            b = {r["bound"]: r for r in res.where(n=n, snr_db=db)}
            assert b["lower"]["estimate"] <= b["upper"]["estimate"]
            assert b["upper"]["estimate"] <= b["upper_linf"]["estimate"]
            mc, an = b["spacings_mc"]["estimate"], b["analytic"]["estimate"]
            sigma = math.sqrt(an * (1 - an) / 2000)
            assert abs(mc - an) <= 3 * sigma + 1e-12


def test_mh_tail_and_exponential_maximum():
    res = mh_tail_check(ExperimentConfig(trials=1000, n_grid=(8, 16, 32), c_values=(0.5, 1.0, 50.0)))
    for row in res.where(metric="exp_max_cdf"):
        sigma = math.sqrt(row["reference"] * (1 - row["reference"]) / 1000)
        assert abs(row["estimate"] - row["reference"]) <= 3 * sigma + 1e-3
    assert all(r["estimate"] == 0.0 for r in res.where(metric="tail_prob", c=50.0))
    assert exp_max_cdf(8, 1.0) == pytest.approx((1 - 8 ** (-math.log(8))) ** 8)


def test_provenance_in_csv():
    text = mh_ratio_curve(ExperimentConfig(trials=10, n_grid=(2,), master_seed=77)).to_csv()
    assert "# master_seed: 77" in text and "# version:" in text

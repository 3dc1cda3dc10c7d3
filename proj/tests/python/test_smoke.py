import json
import math

import pytest

import resdiff


def test_builtin_maps_validate():
    for name in ["doubling", "asymmetric", "quadrant", "confined_doubling"]:
        report = resdiff.validate_map(resdiff.builtin_map(name))
        assert report["ok"], report


def test_map_json_round_trip():
    d = resdiff.builtin_map("doubling")
    again = resdiff.load_map_json(d.to_json("doubling"))
    assert again.apply([0.3]) == pytest.approx([0.6])
    with pytest.raises(resdiff.ResdiffError):
        resdiff.load_map_json(json.dumps({"dimension": 1, "cells": [], "extra": 1}))


def test_exact_values():
    d = resdiff.builtin_map("doubling")
    assert resdiff.d_w0(d)["exact"] == ["1/4"]
    assert resdiff.d_w0(resdiff.builtin_map("asymmetric"))["exact"] == ["2/9"]
    assert resdiff.theta_bar(d, 0.1)["exact"] == "4"
    assert resdiff.theta_eps(d, [0.3], 0.1) == 4
    w = resdiff.w_check(d, [0.0], 0.1)
    for k in range(6):
        assert w[(k,)] == pytest.approx(math.comb(5, k) / 32, abs=1e-15)
    assert resdiff.d_w_check(d, 0.1)["exact"] == ["5/4"]


def test_simulation_and_rates():
    d = resdiff.builtin_map("doubling")
    moments = resdiff.simulate(d, 0.1, 1, 2000, seed=3, start=[0.3])
    assert moments[0]["mean"][0] == pytest.approx(0.6, abs=0.02)
    r = resdiff.variance_rate(d, 0.1, [1.0], 60, 4000, seed=3)
    kv = resdiff.kv_rate(d, 0.1, 256, [1.0])
    assert abs(r["rate"] - kv["rate"]) < 5 * r["se"] + 0.02
    assert kv["residual"] < 1e-10
    assert resdiff.mixing_time(d, 0.1, 256) >= 1


def test_sweep_is_deterministic():
    d = resdiff.builtin_map("doubling")
    a = resdiff.residual_sweep(d, [0.2], [1.0], trajectories=1000, n_per_log=10, grid_cells=64, seed=4)
    b = resdiff.residual_sweep(d, [0.2], [1.0], trajectories=1000, n_per_log=10, grid_cells=64, seed=4)
    assert a["rows"] == b["rows"]


def test_minorization_checks():
    d = resdiff.builtin_map("doubling")
    chain = resdiff.bump_chain(d, 0, [1, 0, 1], 0.05, cells_per_unit=512)
    assert chain["beta_emp"] >= chain["beta_theory"]
    one = resdiff.doeblin(d, 0.3, 0.1, "one_step", cells_per_unit=512)
    assert one["min_constant"] > 0 and one["theta"] == 4


def test_oracle():
    spec = resdiff.random_spec(3)
    r = resdiff.dual_rate(spec, [1.0])
    assert r["diff"] < 1e-10
    again = resdiff.PeriodicChainSpec.from_json(spec.to_json())
    assert again.to_json() == spec.to_json()
    eq = resdiff.minorization_bound(resdiff.equality_case_spec(), [1.0], stopping=(2, 0, 2.0))
    assert eq["rate"] == pytest.approx(2.0) and eq["pass"]

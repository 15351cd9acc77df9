import math

import numpy as np
import pytest

import cdlab


def test_segment_distance():
    cube = cdlab.bernoulli_cube(2, 0.5)
    cert = cdlab.convex_distance(cube, [[0, 0], [1, 1]], [0, 1])
    assert cert.certified
    assert cert.lower <= math.sqrt(2) / 2 <= cert.upper
    assert cert.upper == pytest.approx(math.sqrt(2) / 2, abs=1e-7)


def test_point_event_distance():
    cube = cdlab.bernoulli_cube(2, 0.5)
    cert = cdlab.convex_distance(cube, [[0, 0]], [1, 1])
    assert cert.upper == pytest.approx(math.sqrt(2), abs=1e-12)


def test_moment_check_on_cube():
    cube = cdlab.bernoulli_cube(2, 0.5)
    rep = cdlab.moment_check(cube, [[0, 0]])
    assert rep.pass_
    assert rep.expectation == pytest.approx(0.25 * (1 + 2 * math.exp(0.25) + math.exp(0.5)), rel=1e-12)
    assert rep.prob_a * rep.expectation <= 1.0


def test_scalars():
    assert cdlab.base_case_value(1.0) == pytest.approx(1.0, abs=1e-15)
    alpha, g = cdlab.alpha_g(math.exp(-0.25))
    assert alpha == pytest.approx(0.5, abs=1e-12)
    assert g == pytest.approx(math.exp(3 / 16), rel=1e-12)
    assert cdlab.claim_value(1.0) == pytest.approx(0.0, abs=1e-15)


def test_invalid_space_rejected():
    block = cdlab.BlockSpace([[0.0], [2.0]], cdlab.NormTag.L2, [0.5, 0.5])
    with pytest.raises(ValueError):
        cdlab.ProductSpace([block])


def test_split_preserves_norms():
    sub = cdlab.gaussian_subspace(3, 40, 1.0, 1.5, 5)
    split = cdlab.split_atoms(sub, 0.01)
    assert split.basis.shape[0] >= 40
    assert split.mu.max() <= 0.01 + 1e-15
    x = np.array([0.3, -1.2, 0.7])
    assert cdlab.lr_norm(x, split) == pytest.approx(cdlab.lr_norm(x, sub), rel=1e-10)


def test_run_ledger_report():
    rep = cdlab.run("ledger", {"slice_instances": 2, "product_grid": 50}, seed=3)
    assert rep["command"] == "ledger"
    assert rep["summary"]["all_pass"]
    assert rep["config"]["product_grid"] == 50


def test_run_rejects_unknown_parameter():
    with pytest.raises(ValueError):
        cdlab.run("ledger", {"bogus": 1})

import math

import numpy as np
import pytest

from superpose import plfun
from superpose.engine import (Representation, ResidualExpr, StageAbort, StopRule, check_trace,
                              eval_representation, run, unwrap)
from superpose.family import InnerFamily
from superpose.outer import cube_grid
from superpose.plfun import PL1D, PlateauFunction
from superpose.targets import target_by_name, unwrap_value, wrap_unbounded


def identity_family(params):
    ident = PlateauFunction.build([], [], [], plfun.identity(), baseline_name="identity")
    return InnerFamily(params, tuple(ident for _ in range(params.m)))


def test_zero_target(p27):
    rep = run(target_by_name("zero", 2), p27, StopRule(K_max=5, T_max=1))
    assert rep.status == "complete"
    assert len(rep.trace) == 1 and rep.stages == []
    x = np.random.default_rng(0).uniform(-5, 5, size=(100, 2))
    assert np.all(rep(x) == 0)


def test_hand_evaluated_composition(p27):
    g = PL1D([1.6 - 1e-6, 1.6, 1.6 + 1e-6], [0.0, 2.0, 0.0])
    rep = Representation(p27, identity_family(p27), [g], g, [], "zero")
    # X_q(1, 2) = 0.4 * 1 + 0.6 * 2 = 1.6 for every q
    assert eval_representation(rep, [[1.0, 2.0]])[0] == pytest.approx(7 * 2.0)


class TestWrapper:
    def test_zero(self):
        w = wrap_unbounded(target_by_name("zero", 2))
        assert np.all(w(np.ones((3, 2))) == 0)
        assert unwrap_value(0.0) == 0.0

    def test_one(self):
        w = wrap_unbounded(target_by_name("const:1", 2))
        assert w(np.zeros((1, 2)))[0] == pytest.approx(0.5, abs=1e-15)
        assert unwrap_value(0.5) == pytest.approx(1.0, abs=1e-15)

    def test_linear_round_trip(self, rng):
        x = rng.uniform(-100, 100, size=(1000, 2))
        wrapped = (2 / math.pi) * np.arctan(x[:, 0])
        assert np.all(np.abs(wrapped) < 1)
        assert np.max(np.abs(unwrap_value(wrapped) - x[:, 0])) < 1e-12 * 100

    def test_shrink(self):
        w = wrap_unbounded(target_by_name("const:1", 2), shrink=0.99)
        assert w(np.zeros((1, 2)))[0] == pytest.approx(0.495)
        assert unwrap_value(0.495, 0.99) == pytest.approx(1.0)


class TestOneStageRun:
    def test_json_round_trip(self, rep_one_stage):
        text = rep_one_stage.to_json()
        back = Representation.from_json(text)
        assert back.to_json() == text
        assert back.g.equals(rep_one_stage.g)

    def test_telescoping(self, rep_one_stage, gauss):
        pts = cube_grid(1.0, 2, 51)
        X = rep_one_stage.family.X(pts)
        f1 = ResidualExpr(gauss, rep_one_stage.stages, rep_one_stage.family)(pts)
        assert np.allclose(gauss(pts), f1 + rep_one_stage.g(X).sum(axis=1), atol=1e-14)

    def test_trace_inequalities(self, rep_one_stage, p27):
        assert check_trace(rep_one_stage) == []
        rows = rep_one_stage.trace
        assert len(rows) == 2 and rows[0].built and not rows[1].built
        assert rows[1].M[0] < p27.eps1 * rows[0].M[1] + rows[0].eta
        for r in rows:
            assert r.eff_norm <= p27.growth ** r.k
        assert rows[0].h_norm <= p27.eps * rows[0].eff_norm

    def test_error_matches_trace(self, rep_one_stage, gauss):
        pts = cube_grid(1.0, 2, rep_one_stage.resolution)
        err = np.max(np.abs(gauss(pts) - rep_one_stage(pts)))
        assert err == pytest.approx(rep_one_stage.trace[-1].M[0], rel=1e-12)
        assert err < 0.45

    def test_g_is_stage_sum(self, rep_one_stage):
        assert rep_one_stage.g.equals(rep_one_stage.stages[0])

    def test_trace_csv(self, rep_one_stage):
        lines = rep_one_stage.trace_csv().splitlines()
        assert lines[0] == ("k,eta_k,delta_k,M_k0,M_k1,M_k2,h_norm,gamma_min,radius,"
                            "budget_spent")
        assert len(lines) == 3


def test_stop_tolerance(p27, gauss):
    rep = run(gauss, p27, StopRule(tol=0.5, K_max=4, T_max=1))
    assert rep.status == "complete" and len(rep.stages) == 1


def test_abort_keeps_partial_result(p27, gauss):
    with pytest.raises(StageAbort) as e:
        run(gauss, p27, StopRule(K_max=2, T_max=1), max_boxes=1e7)
    rep = e.value.representation
    assert e.value.stage == 1
    assert rep.status == "aborted" and len(rep.stages) == 1
    assert check_trace(rep) == []


def test_normalization(p27):
    rep = run(target_by_name("const:3", 2), p27, StopRule(K_max=1, T_max=1))
    assert rep.scale == 3.0
    pts = cube_grid(1.0, 2, 21)
    err = np.max(np.abs(rep(pts) - 3.0))
    assert err == pytest.approx(3.0 * rep.trace[-1].M[0], rel=1e-12)


def test_heuristic_delta_is_flagged(p27):
    rep = run(target_by_name("zero", 2), p27, StopRule(K_max=1), delta_override=0.01)
    assert rep.heuristic is True


def test_unwrap_flags_out_of_range(p27):
    g = PL1D([1.6 - 1e-6, 1.6, 1.6 + 1e-6], [0.0, 2.0, 0.0])
    rep = Representation(p27, identity_family(p27), [g], g, [], "zero")
    vals, clamped = unwrap(rep, [[1.0, 2.0], [0.0, 0.0]])
    assert clamped.tolist() == [True, False]
    assert vals[1] == 0.0

from math import comb

import numpy as np
import pytest

from nmf_energy.matrices import (ContinuousDomain, IntegerDomain, error_metrics,
                                 generate_case)
from nmf_energy.quartic import (QuarticModel, VariableLayout, build_quartic_model,
                                check_variable_budget, default_sum_target)


def make_instance(n, m, p, seed=0, kind="continuous_planted"):
    domain = ContinuousDomain() if kind.startswith("continuous") else IntegerDomain(8)
    return generate_case(kind, n, m, p, domain, seed=seed)


class TestLayout:
    def test_counts(self):
        lay = VariableLayout(4, 8, 3)
        assert lay.num_entries == 4 * 3 + 3 * 8 == 36
        assert lay.total_vars == 37
        assert lay.slack_index == 36

    def test_bijection_round_trip(self):
        lay = VariableLayout(3, 4, 2)
        seen = set()
        for idx in range(lay.num_entries):
            which, r, c = lay.entry_of(idx)
            back = lay.w_index(r, c) if which == "W" else lay.h_index(r, c)
            assert back == idx
            seen.add((which, r, c))
        assert len(seen) == lay.num_entries
        assert lay.entry_of(lay.slack_index)[0] == "slack"

    def test_encode_decode_round_trip(self):
        lay = VariableLayout(2, 3, 2)
        rng = np.random.default_rng(0)
        W = rng.random((2, 2))
        H = rng.random((2, 3))
        fp = lay.decode(lay.encode(W, H, slack=0.7))
        assert np.array_equal(fp.W, W)
        assert np.array_equal(fp.H, H)

    def test_decode_all_zeros(self):
        lay = VariableLayout(2, 2, 1)
        fp = lay.decode(np.zeros(lay.total_vars))
        assert not fp.W.any() and not fp.H.any()

    def test_decode_reencode_on_non_slack(self):
        lay = VariableLayout(2, 2, 2)
        rng = np.random.default_rng(1)
        x = rng.random(lay.total_vars)
        fp = lay.decode(x)
        back = lay.encode(fp.W, fp.H, slack=x[lay.slack_index])
        assert np.array_equal(back, x)

    def test_length_check(self):
        with pytest.raises(ValueError):
            VariableLayout(2, 2, 1).decode(np.zeros(3))


class TestBuildModel:
    def test_scalar_golden(self):
        # V = [[4]]: energy = w**2 h**2 - 8 w h + 16, zero at w = h = 2
        inst = make_instance(1, 1, 1)
        inst = inst.__class__(V=[[4.0]], n=1, m=1, p=1, domain=inst.domain,
                              case_id="scalar", seed=0)
        model = build_quartic_model(inst)
        assert model.poly.terms == {(0, 1): -8.0, (0, 0, 1, 1): 1.0}
        assert model.poly.offset == 16.0
        assert model.poly.evaluate([2.0, 2.0, 0.0]) == 0.0

    def test_planted_point_is_zero(self):
        # The expanded form cancels sum V**2 against the cross terms, so the
        # planted zero is exact up to double-precision cancellation noise.
        for seed in range(5):
            inst = make_instance(3, 3, 2, seed=seed)
            model = build_quartic_model(inst)
            x = model.layout.encode(inst.planted.W, inst.planted.H)
            tol = 1e-12 * (1.0 + float((inst.V ** 2).sum()))
            assert abs(model.poly.evaluate(x)) <= tol

    def test_defining_identity_200_random(self):
        # energy(x) equals the brute-force recomputed squared Frobenius error
        rng = np.random.default_rng(11)
        for trial in range(200):
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 5))
            p = int(rng.integers(1, 4))
            kind = "continuous_planted" if trial % 2 else "continuous_raw"
            inst = make_instance(n, m, p, seed=trial, kind=kind)
            model = build_quartic_model(inst)
            x = rng.uniform(0.0, model.sum_target, size=model.layout.total_vars)
            fp = model.decode(x)
            eps = error_metrics(inst.V, fp.product())[0]
            tol = 1e-9 * (1.0 + float((inst.V ** 2).sum()))
            assert abs(model.poly.evaluate(x) - eps ** 2) <= tol

    def test_quartic_term_count_combinatorial(self):
        # per cell: p pure squares + C(p, 2) cross terms, no cross-cell merges
        for n, m, p in [(1, 1, 1), (2, 2, 2), (3, 4, 2), (4, 4, 3), (2, 3, 3)]:
            inst = make_instance(n, m, p, seed=n * 31 + m * 7 + p)
            model = build_quartic_model(inst)
            quartic = [k for k in model.poly.terms if len(k) == 4]
            assert len(quartic) == n * m * (p + comb(p, 2))

    def test_slack_in_no_term(self):
        inst = make_instance(3, 2, 2, seed=4)
        model = build_quartic_model(inst)
        assert model.layout.slack_index not in model.poly.variables()

    def test_offset_is_squared_norm(self):
        inst = make_instance(3, 3, 2, seed=5)
        model = build_quartic_model(inst)
        assert model.poly.offset == pytest.approx(float((inst.V ** 2).sum()), rel=1e-15)

    def test_sum_target_override(self):
        inst = make_instance(2, 2, 2, seed=6)
        model = build_quartic_model(inst, sum_target=5.0)
        assert model.sum_target == 5.0


class TestSumTargetRule:
    @pytest.mark.parametrize("n,m,p,expected", [
        (2, 2, 2, 8.0),      # square: 2 n**2
        (4, 4, 4, 32.0),
        (4, 8, 3, 36.0),     # rectangular: p (n + m); 36 entries + slack = 37 vars
    ])
    def test_rule(self, n, m, p, expected):
        inst = make_instance(n, m, p, seed=1)
        assert default_sum_target(inst) == expected


class TestBudget:
    def test_4x4_fits(self):
        model = build_quartic_model(make_instance(4, 4, 4, seed=0))
        check = check_variable_budget(model)
        assert check and model.layout.total_vars == 33

    def test_5x5_violates(self):
        model = build_quartic_model(make_instance(5, 5, 5, seed=0))
        check = check_variable_budget(model)
        assert not check
        assert "51" in check.detail

    def test_4x8_p3_fits(self):
        model = build_quartic_model(make_instance(4, 8, 3, seed=0))
        assert check_variable_budget(model)
        assert model.layout.total_vars == 37


class TestPersistence:
    def test_model_json_round_trip(self, tmp_path):
        inst = make_instance(2, 3, 2, seed=8)
        model = build_quartic_model(inst)
        path = tmp_path / "model.json"
        model.save(path)
        back = QuarticModel.load(path)
        assert back.poly == model.poly
        assert back.layout == model.layout
        assert back.sum_target == model.sum_target
        assert back.instance_ref == model.instance_ref

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmf_energy.polynomial import DegreeError, Poly, compiled_evaluator


def naive_evaluate(poly, x):
    """Independent per-term product oracle."""
    total = poly.offset
    for key, coeff in poly.terms.items():
        term = coeff
        for idx in key:
            term = term * x[idx]
        total += term
    return total


def random_poly(rng, num_vars, num_terms, max_degree):
    terms = {}
    for _ in range(num_terms):
        deg = int(rng.integers(1, max_degree + 1))
        key = tuple(sorted(rng.integers(0, num_vars, size=deg)))
        terms[key] = terms.get(key, 0.0) + float(rng.normal())
    return Poly(num_vars, terms, float(rng.normal()))


class TestEvaluate:
    def test_constant(self):
        p = Poly.constant(3, 7.0)
        for x in ([0, 0, 0], [1, 2, 3], [-1, 5, 0.5]):
            assert p.evaluate(x) == 7.0

    def test_square_term(self):
        # 2 * x0**2 at x0 = 3
        p = Poly(1, {(0, 0): 2.0})
        assert p.evaluate([3.0]) == 18.0

    def test_against_naive_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            p = random_poly(rng, 6, 12, 4)
            x = rng.normal(size=6)
            assert p.evaluate(x) == pytest.approx(naive_evaluate(p, x), rel=1e-12, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            Poly.variable(2, 0).evaluate([1.0])

    def test_compiled_matches_scalar(self):
        rng = np.random.default_rng(5)
        p = random_poly(rng, 5, 10, 4)
        X = rng.normal(size=(7, 5))
        fast = compiled_evaluator(p)(X)
        slow = [p.evaluate(row) for row in X]
        assert np.allclose(fast, slow, rtol=1e-12, atol=1e-12)


class TestCombine:
    def test_additive_identity(self):
        rng = np.random.default_rng(6)
        p = random_poly(rng, 4, 6, 3)
        assert p + Poly.constant(4, 0.0) == p

    def test_difference_of_squares(self):
        x0 = Poly.variable(2, 0)
        x1 = Poly.variable(2, 1)
        product = (x0 + x1).multiply(x0 - x1)
        assert product.terms == {(0, 0): 1.0, (1, 1): -1.0}
        assert product.offset == 0.0

    def test_product_evaluation_homomorphism(self):
        rng = np.random.default_rng(7)
        a = random_poly(rng, 6, 8, 2)
        b = random_poly(rng, 6, 8, 2)
        prod = a.multiply(b)
        for _ in range(50):
            x = rng.normal(size=6)
            assert prod.evaluate(x) == pytest.approx(
                a.evaluate(x) * b.evaluate(x), rel=1e-10, abs=1e-10)

    def test_degree_overflow_raises(self):
        cubic = Poly(2, {(0, 0, 1): 1.0})
        with pytest.raises(DegreeError):
            cubic.multiply(cubic)

    def test_degree_overflow_truncation_optin(self):
        cubic = Poly(2, {(0, 0, 1): 1.0}, offset=2.0)
        out = cubic.multiply(cubic, truncate=True)
        # degree-6 product dropped, cross terms against the offset kept
        assert out.degree() == 3
        assert out.terms == {(0, 0, 1): 4.0}
        assert out.offset == 4.0

    def test_scalar_linearity(self):
        rng = np.random.default_rng(8)
        p = random_poly(rng, 5, 6, 4)
        x = rng.normal(size=5)
        assert (2.5 * p).evaluate(x) == pytest.approx(2.5 * p.evaluate(x), rel=1e-12)

    @given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_add_commutative_associative(self, sa, sb, sc):
        ra, rb, rc = (np.random.default_rng(s) for s in (sa, sb, sc))
        a, b, c = (random_poly(r, 4, 5, 3) for r in (ra, rb, rc))
        assert a + b == b + a  # float addition commutes exactly
        left = (a + b) + c
        right = a + (b + c)
        assert set(left.terms) == set(right.terms)
        for key in left.terms:  # associativity holds to rounding
            assert left.terms[key] == pytest.approx(right.terms[key], rel=1e-12)
        assert left.offset == pytest.approx(right.offset, rel=1e-12)

    def test_zero_coefficients_pruned(self):
        p = Poly(2, {(0,): 1.0}) + Poly(2, {(0,): -1.0})
        assert p.terms == {}

    def test_keys_sorted_and_merged(self):
        p = Poly(3, {(2, 0): 1.0}) + Poly(3, {(0, 2): 2.0})
        assert p.terms == {(0, 2): 3.0}


class TestIdempotentReduce:
    def test_square_collapses(self):
        p = Poly(2, {(1, 1): 3.5})
        assert p.idempotent_reduce().terms == {(1,): 3.5}

    def test_multilinear_fixed_point(self):
        p = Poly(3, {(0, 1): 1.0, (2,): -2.0}, offset=1.0)
        assert p.idempotent_reduce() == p

    def test_preserves_value_on_all_binary_assignments(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            p = random_poly(rng, 6, 10, 5)
            q = p.idempotent_reduce()
            for bits in itertools.product([0.0, 1.0], repeat=6):
                x = np.array(bits)
                assert p.evaluate(x) == pytest.approx(q.evaluate(x), rel=1e-12, abs=1e-12)


class TestConstruction:
    def test_degree_cap(self):
        with pytest.raises(DegreeError):
            Poly(7, {(0, 1, 2, 3, 4, 5): 1.0})

    def test_index_range_checked(self):
        with pytest.raises(ValueError):
            Poly(2, {(2,): 1.0})

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        p = random_poly(rng, 5, 8, 4)
        path = tmp_path / "poly.json"
        p.save(path)
        assert Poly.load(path) == p

    def test_json_shape(self):
        doc = Poly(2, {(0, 1): 2.0}, offset=1.5).to_json()
        assert doc == {"num_vars": 2, "offset": 1.5,
                       "terms": [{"vars": [0, 1], "coeff": 2.0}]}

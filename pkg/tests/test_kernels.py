import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngmkl.kernels import (
    Gaussian,
    Polynomial,
    base_kernel_bank,
    gram,
    gram_bank,
    kernel_eval,
    read_gram,
    spec_from_string,
    write_gram,
)

# exp(-2) at 30 digits (mpmath), frozen.
EXP_MINUS_TWO = 0.135335283236612691893999494972


class TestKernelEval:
    def test_gaussian_self_similarity(self):
        for s in (0.01, 1.0, 100.0):
            assert kernel_eval(Gaussian(s), [1.0, -2.0], [1.0, -2.0]) == 1.0

    def test_linear_dot(self):
        assert kernel_eval(Polynomial(1), [1, 2], [3, 4]) == 11.0

    def test_gaussian_value(self):
        assert kernel_eval(Gaussian(1.0), [0.0], [2.0]) == pytest.approx(EXP_MINUS_TWO, rel=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            kernel_eval(Polynomial(2), [1, 2], [1, 2, 3])

    @pytest.mark.parametrize("bad", [lambda: Polynomial(0), lambda: Polynomial(1.5),
                                     lambda: Gaussian(0.0), lambda: Gaussian(-1.0)])
    def test_invalid_specs(self, bad):
        with pytest.raises(ValueError):
            bad()

    def test_gaussian_increases_with_sigma(self):
        x, y = np.array([0.3, -0.1]), np.array([-0.2, 0.4])
        values = [kernel_eval(s, x, y) for s in base_kernel_bank()[3:]]
        assert all(a < b for a, b in zip(values, values[1:]) if b < 1.0)
        assert np.all(np.diff(values) >= 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 3), st.floats(0.1, 5.0), st.integers(0, 2**32 - 1))
    def test_polynomial_homogeneity(self, degree, a, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=4), rng.normal(size=4)
        k = Polynomial(degree)
        assert kernel_eval(k, a * x, y) == pytest.approx(a ** degree * kernel_eval(k, x, y),
                                                         rel=1e-9, abs=1e-12)


class TestGram:
    def test_single_pair(self):
        r = np.array([[0.5, -1.0]])
        for spec in base_kernel_bank():
            G = gram(spec, r, r)
            assert G.shape == (1, 1)
            assert G[0, 0] == pytest.approx(kernel_eval(spec, r[0], r[0]), rel=1e-12)

    def test_gaussian_self_gram(self):
        X = np.random.default_rng(1).normal(size=(5, 3))
        G = gram(Gaussian(1.0), X, X)
        np.testing.assert_allclose(G, G.T, atol=1e-15)
        np.testing.assert_allclose(np.diag(G), 1.0, atol=1e-12)

    def test_entries_match_pointwise(self):
        rng = np.random.default_rng(2)
        Q, A = rng.uniform(-1, 1, (12, 4)), rng.uniform(-1, 1, (9, 4))
        for spec in base_kernel_bank():
            G = gram(spec, Q, A)
            for _ in range(100):
                i, j = rng.integers(12), rng.integers(9)
                assert G[i, j] == pytest.approx(kernel_eval(spec, Q[i], A[j]), rel=1e-10, abs=1e-14)

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(3)
        Q, A = rng.uniform(-1, 1, (7, 3)), rng.uniform(-1, 1, (5, 3))
        for spec in base_kernel_bank():
            np.testing.assert_allclose(gram(spec, Q, A).T, gram(spec, A, Q), atol=1e-12, rtol=0)

    def test_bank_matches_individual(self):
        rng = np.random.default_rng(4)
        Q, A = rng.uniform(-1, 1, (6, 2)), rng.uniform(-1, 1, (4, 2))
        bank = base_kernel_bank()
        for spec, G in zip(bank, gram_bank(bank, Q, A)):
            np.testing.assert_allclose(G, gram(spec, Q, A), atol=1e-14)

    def test_far_points_do_not_go_negative(self):
        Q = np.array([[1e8, 1e8]])
        G = gram(Gaussian(2.0 ** -6), Q, Q + 1e-9)
        assert 0.0 <= G[0, 0] <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            gram(Gaussian(1.0), np.zeros((2, 3)), np.zeros((2, 4)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 50), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_self_grams_psd(self, n, d, seed):
        X = np.random.default_rng(seed).uniform(-1, 1, (n, d))
        for spec in base_kernel_bank():
            G = gram(spec, X, X)
            lam = np.linalg.eigvalsh(0.5 * (G + G.T)).min()
            assert lam >= -1e-8 * max(1.0, np.abs(G).max())


class TestBank:
    def test_layout(self):
        bank = base_kernel_bank()
        assert len(bank) == 17
        assert bank[:3] == [Polynomial(1), Polynomial(2), Polynomial(3)]
        assert bank[3] == Gaussian(0.015625)
        assert bank[16] == Gaussian(128.0)
        sigmas = [s.sigma for s in bank[3:]]
        assert sigmas == [2.0 ** k for k in range(-6, 8)]

    @pytest.mark.parametrize("spec", base_kernel_bank())
    def test_string_roundtrip(self, spec):
        assert spec_from_string(str(spec)) == spec

    def test_short_forms(self):
        assert spec_from_string("poly:2") == Polynomial(2)
        assert spec_from_string("gauss:0.5") == Gaussian(0.5)
        with pytest.raises(ValueError):
            spec_from_string("linear")


class TestGramCache:
    def test_roundtrip(self, tmp_path):
        X = np.random.default_rng(5).normal(size=(4, 3))
        G = gram(Gaussian(0.5), X, X[:2])
        write_gram(tmp_path / "g.bin", Gaussian(0.5), G)
        spec, back = read_gram(tmp_path / "g.bin")
        assert spec == Gaussian(0.5)
        np.testing.assert_array_equal(back, G)

    def test_header_layout(self, tmp_path):
        write_gram(tmp_path / "g.bin", Polynomial(2), np.ones((1, 2)))
        raw = (tmp_path / "g.bin").read_bytes()
        assert raw[:4] == b"NGKG"
        assert len(raw) == 4 + 4 + 1 + 8 + 8 + 8 + 16

    def test_rejects_garbage(self, tmp_path):
        (tmp_path / "g.bin").write_bytes(b"nope" * 20)
        with pytest.raises(ValueError):
            read_gram(tmp_path / "g.bin")

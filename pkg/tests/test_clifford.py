"""Exact algebra tests for the Clifford layer.

Generator entries are Gaussian integers, so identities that are exact in
the algebra are asserted with array_equal, not approx.
"""

from __future__ import annotations

import numpy as np
import pytest

from crlab.clifford import (
    apply_word,
    generator,
    grade_projection,
    key_operator,
    key_operator_norm,
    parity_indices,
    quartic_form,
    spinor_dim,
)

RNG = np.random.default_rng(0xC0FFEE)


def random_spinor(n: int) -> np.ndarray:
    dim = spinor_dim(n)
    return RNG.normal(size=dim) + 1j * RNG.normal(size=dim)


class TestGeneratorAlgebra:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_anticommutation_exact(self, n):
        dim = spinor_dim(n)
        eye = np.eye(dim, dtype=complex)
        gens = [generator(n, a) for a in range(1, 2 * n + 1)]
        for a, ga in enumerate(gens):
            for b, gb in enumerate(gens):
                target = -2.0 * eye if a == b else np.zeros((dim, dim))
                assert np.array_equal(ga @ gb + gb @ ga, target)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_generators_skew_adjoint_and_unitary(self, n):
        eye = np.eye(spinor_dim(n), dtype=complex)
        for a in range(1, 2 * n + 1):
            g = generator(n, a)
            assert np.array_equal(g.conj().T, -g)
            assert np.array_equal(g.conj().T @ g, eye)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_generators_swap_parity(self, n):
        even = parity_indices(n, "even")
        odd = parity_indices(n, "odd")
        for a in range(1, 2 * n + 1):
            g = generator(n, a)
            assert np.array_equal(g[np.ix_(even, even)], np.zeros((len(even),) * 2))
            assert np.array_equal(g[np.ix_(odd, odd)], np.zeros((len(odd),) * 2))

    def test_index_validation(self):
        with pytest.raises(ValueError):
            generator(2, 5)
        with pytest.raises(ValueError):
            generator(2, 0)
        with pytest.raises(ValueError):
            apply_word((1, 7), np.zeros(4))


class TestWordsAndGrading:
    def test_apply_word_operator_order(self):
        # word (a, b) must act as E_a E_b: rightmost first.
        n = 2
        psi = random_spinor(n)
        direct = generator(n, 1) @ (generator(n, 3) @ psi)
        assert np.allclose(apply_word((1, 3), psi), direct, atol=0, rtol=0)

    def test_empty_word_is_identity(self):
        psi = random_spinor(2)
        assert np.array_equal(apply_word((), psi), psi)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_grade_projection_splits(self, n):
        psi = random_spinor(n)
        even = grade_projection(psi, "even")
        odd = grade_projection(psi, "odd")
        assert np.array_equal(even + odd, psi)
        assert np.array_equal(grade_projection(even, "odd"), np.zeros_like(psi))

    def test_even_words_preserve_parity(self):
        n = 2
        for _ in range(20):
            psi = random_spinor(n)
            even = grade_projection(psi, "even")
            out = apply_word((2, 4), even)
            assert np.array_equal(grade_projection(out, "odd"), np.zeros_like(out))


class TestKeyOperator:
    def test_pair_coupling_rows_n2(self):
        # Basis order for n = 2: scalar, w1, w2, w1^w2.
        k = key_operator(2)
        scalar, w1, w2, w12 = np.eye(4, dtype=complex)
        assert np.array_equal(k @ scalar, np.zeros(4))
        assert np.array_equal(k @ w12, np.zeros(4))
        assert np.array_equal(k @ w1, 2.0 * w2)
        assert np.array_equal(k @ w2, -2.0 * w1)

    def test_norms_n2(self):
        assert key_operator_norm(2, "even") == 0.0
        assert key_operator_norm(2, "odd") == pytest.approx(2.0, abs=1e-12)

    def test_norm_n1(self):
        # K = E_1 E_2 sends the scalar to -i * scalar.
        k = key_operator(1)
        assert np.array_equal(k @ np.array([1.0, 0.0]), np.array([-1j, 0.0]))
        assert key_operator_norm(1, "even") == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("n", [1, 3, 4])
    def test_even_norm_positive_away_from_n2(self, n):
        assert key_operator_norm(n, "even") > 0.5

    def test_key_operator_skew_adjoint(self):
        # K* = sum E_{n+b} E_b = -K since the two factors anticommute.
        for n in (1, 2, 3):
            k = key_operator(n)
            assert np.array_equal(k.conj().T, -k)


class TestQuarticForm:
    def test_even_spinors_give_square_norm(self):
        for _ in range(100):
            psi = grade_projection(random_spinor(2), "even")
            val = quartic_form(psi)
            norm2 = float(np.vdot(psi, psi).real)
            assert val.imag == pytest.approx(0.0, abs=1e-12)
            assert val.real == pytest.approx(norm2, rel=1e-12, abs=1e-12)

    def test_odd_spinors_give_minus_square_norm(self):
        # The same word acts as -id on the odd summand for n = 2.
        for _ in range(20):
            psi = grade_projection(random_spinor(2), "odd")
            val = quartic_form(psi)
            norm2 = float(np.vdot(psi, psi).real)
            assert val.real == pytest.approx(-norm2, rel=1e-12, abs=1e-12)

    def test_commutator_expectation_imaginary(self):
        # <psi, [E_j, E_k] psi> is purely imaginary for skew-adjoint E_a.
        n = 2
        for _ in range(100):
            psi = random_spinor(n)
            j, k = RNG.integers(1, 2 * n + 1, size=2)
            val = np.vdot(psi, apply_word((j, k), psi) - apply_word((k, j), psi))
            assert val.real == pytest.approx(0.0, abs=1e-10)

    def test_full_volume_word_sign(self):
        # E_1 E_2 E_3 E_4 = -E_1 E_3 E_2 E_4 on every spinor (one swap).
        psi = random_spinor(2)
        assert np.array_equal(
            apply_word((1, 2, 3, 4), psi), -apply_word((1, 3, 2, 4), psi)
        )

    def test_quartic_needs_two_pairs(self):
        with pytest.raises(ValueError):
            quartic_form(np.array([1.0, 0.0]))

"""Complex Clifford algebra acting on the exterior algebra of C^n.

Conventions
-----------
* The spinor space for 2n real generators is Lambda^* C^n, dimension 2^n.
  Basis elements are indexed by subsets I of {1, ..., n} encoded as
  bitmasks; component k of a spinor is the coefficient of the wedge
  monomial w^{i_1} ^ ... ^ w^{i_r} with i_1 < ... < i_r the set bits of k.
* eps_j prepends w^j (zero if j already present), iota_j deletes w^j
  (zero if absent); both carry the fermionic sign (-1)^{#{i in I : i < j}}.
  They satisfy eps_j iota_j + iota_j eps_j = id and anticommute across
  different j, so

      E_{2j-1} = eps_j - iota_j,    E_{2j} = i (eps_j + iota_j)

  obey E_a E_b + E_b E_a = -2 delta_ab for a, b in {1, ..., 2n}.
* Every generator entry lies in {0, +-1, +-i}; matrices and short products
  are exact in float arithmetic, so algebraic tests compare exactly.
* The even/odd grading splits the spinor space by the parity of the number
  of wedge factors; each generator swaps the two halves.
* The pair coupling operator is K = sum_b E_b E_{n+b} over b = 1..n; its
  restriction to a parity summand is the object measured by
  key_operator_norm.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

__all__ = [
    "spinor_dim",
    "generator",
    "apply_word",
    "grade_projection",
    "parity_indices",
    "key_operator",
    "key_operator_norm",
    "quartic_form",
]


def spinor_dim(n: int) -> int:
    """Dimension 2^n of the spinor representation on Lambda^* C^n."""
    if n < 1:
        raise ValueError("need n >= 1")
    return 1 << n


def _popcount_below(mask: int, j: int) -> int:
    """Number of set bits of mask strictly below bit j (bits are 0-based)."""
    return bin(mask & ((1 << j) - 1)).count("1")


@lru_cache(maxsize=None)
def _raising(n: int, j: int) -> np.ndarray:
    """Matrix of eps_j (wedge by w^j, 1-based j) on the bitmask basis."""
    dim = spinor_dim(n)
    bit = 1 << (j - 1)
    mat = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        if col & bit:
            continue
        sign = -1.0 if _popcount_below(col, j - 1) % 2 else 1.0
        mat[col | bit, col] = sign
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=None)
def _lowering(n: int, j: int) -> np.ndarray:
    """Matrix of iota_j (delete w^j, 1-based j); adjoint of eps_j."""
    mat = _raising(n, j).conj().T.copy()
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=None)
def _generator_cached(n: int, a: int) -> np.ndarray:
    j = (a + 1) // 2
    if a % 2:
        mat = _raising(n, j) - _lowering(n, j)
    else:
        mat = 1j * (_raising(n, j) + _lowering(n, j))
    mat.setflags(write=False)
    return mat


def generator(n: int, a: int) -> np.ndarray:
    """Generator E_a, a in 1..2n, as a dense 2^n x 2^n complex matrix."""
    if not 1 <= a <= 2 * n:
        raise ValueError(f"generator index {a} outside 1..{2 * n}")
    return _generator_cached(n, a).copy()


def _infer_n(psi: np.ndarray) -> int:
    dim = psi.shape[0]
    n = dim.bit_length() - 1
    if dim != 1 << n:
        raise ValueError(f"spinor length {dim} is not a power of two")
    return n


def apply_word(word: Sequence[int], psi: np.ndarray) -> np.ndarray:
    """Apply E_{word[0]} E_{word[1]} ... E_{word[-1]} to psi.

    The rightmost letter acts first, so the result is the product read in
    the usual operator order.
    """
    psi = np.asarray(psi, dtype=complex)
    n = _infer_n(psi)
    out = psi.copy()
    for a in reversed(list(word)):
        if not 1 <= a <= 2 * n:
            raise ValueError(f"generator index {a} outside 1..{2 * n}")
        out = _generator_cached(n, a) @ out
    return out


def parity_indices(n: int, parity: str) -> np.ndarray:
    """Basis indices of the even or odd summand, in increasing order."""
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    want = 0 if parity == "even" else 1
    dim = spinor_dim(n)
    return np.array([k for k in range(dim) if bin(k).count("1") % 2 == want])


def grade_projection(psi: np.ndarray, parity: str) -> np.ndarray:
    """Project a spinor onto its even or odd wedge-degree part."""
    psi = np.asarray(psi, dtype=complex)
    n = _infer_n(psi)
    out = np.zeros_like(psi)
    idx = parity_indices(n, parity)
    out[idx] = psi[idx]
    return out


@lru_cache(maxsize=None)
def _key_operator_cached(n: int) -> np.ndarray:
    dim = spinor_dim(n)
    mat = np.zeros((dim, dim), dtype=complex)
    for b in range(1, n + 1):
        mat += _generator_cached(n, b) @ _generator_cached(n, n + b)
    mat.setflags(write=False)
    return mat


def key_operator(n: int) -> np.ndarray:
    """Pair coupling operator K = sum_b E_b E_{n+b}, b = 1..n."""
    return _key_operator_cached(n).copy()


def key_operator_norm(n: int, parity: str) -> float:
    """Operator norm of K restricted to the even or odd summand.

    K has even wedge degree, so it preserves both summands and the
    restriction is the square block of K on the parity indices.
    """
    idx = parity_indices(n, parity)
    block = _key_operator_cached(n)[np.ix_(idx, idx)]
    return float(np.linalg.norm(block, 2))


def quartic_form(psi: np.ndarray) -> complex:
    """Quartic spinor invariant <psi, E_1 E_3 E_2 E_4 psi> (needs n >= 2)."""
    psi = np.asarray(psi, dtype=complex)
    n = _infer_n(psi)
    if n < 2:
        raise ValueError("quartic form needs at least four generators")
    return complex(np.vdot(psi, apply_word((1, 3, 2, 4), psi)))

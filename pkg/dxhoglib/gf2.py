"""Dense GF(2) linear algebra on numpy uint8 arrays."""

import numpy as np
from jaxtyping import UInt8


def gf2_rref(matrix: np.ndarray) -> tuple[UInt8[np.ndarray, "k n"], list[int]]:
    """Reduced row echelon form over GF(2).

    Args:
        matrix (np.ndarray): Binary matrix (k x n).

    Returns:
        tuple[np.ndarray, list[int]]: Reduced matrix with zero rows dropped, and its pivot
            columns in increasing order.
    """
    reduced = (np.asarray(matrix, dtype=np.uint8) % 2).copy()
    n_rows, n_cols = reduced.shape

    pivots: list[int] = []
    pivot_row = 0
    for col in range(n_cols):
        if pivot_row == n_rows:
            break
        candidates = np.flatnonzero(reduced[pivot_row:, col])
        if candidates.size == 0:
            continue

        found = pivot_row + int(candidates[0])
        if found != pivot_row:
            reduced[[pivot_row, found]] = reduced[[found, pivot_row]]

        # clear the column above and below the pivot
        rows = np.flatnonzero(reduced[:, col])
        rows = rows[rows != pivot_row]
        reduced[rows] ^= reduced[pivot_row]

        pivots.append(col)
        pivot_row += 1

    return reduced[:pivot_row], pivots


def gf2_rank(matrix: np.ndarray) -> int:
    return len(gf2_rref(matrix)[1])


def gaussian_binomial_2(n: int, k: int) -> int:
    """Number of k-dimensional subspaces of GF(2)^n."""
    if not 0 <= k <= n:
        return 0
    num = 1
    den = 1
    for i in range(k):
        num *= (1 << (n - i)) - 1
        den *= (1 << (i + 1)) - 1
    return num // den


def row_space(matrix: np.ndarray) -> UInt8[np.ndarray, "m n"]:
    """All 2^k vectors spanned by the rows, as a (2^k, n) array ordered by coefficient index.

    Row r of the result is sum_j c_j * matrix[j] where c_j is bit j of r.
    """
    matrix = np.asarray(matrix, dtype=np.uint8)
    k = matrix.shape[0]
    coeffs = (np.arange(1 << k)[:, None] >> np.arange(k)[None, :]) & 1
    return (coeffs.astype(np.int64) @ matrix.astype(np.int64) % 2).astype(np.uint8)

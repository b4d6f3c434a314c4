"""Independent reference computations used to freeze expected values."""

from fractions import Fraction


def left_null_vector(rows) -> list[Fraction]:
    """Exact normalized ``xi`` with ``xi^T L = 0``, ``sum xi = 1`` by Gauss-Jordan elimination."""
    m = len(rows)
    L = [[Fraction(v) for v in r] for r in rows]
    # unknowns xi_0..xi_{m-1}; equations: sum_i xi_i L[i][j] = 0 for each j, plus sum xi = 1
    A = [[L[i][j] for i in range(m)] + [Fraction(0)] for j in range(m)]
    A.append([Fraction(1)] * m + [Fraction(1)])
    row = 0
    for col in range(m):
        piv = next((r for r in range(row, len(A)) if A[r][col] != 0), None)
        if piv is None:
            continue
        A[row], A[piv] = A[piv], A[row]
        p = A[row][col]
        A[row] = [v / p for v in A[row]]
        for r in range(len(A)):
            if r != row and A[r][col] != 0:
                f = A[r][col]
                A[r] = [a - f * b for a, b in zip(A[r], A[row])]
        row += 1
    return [A[i][m] for i in range(m)]


def bisect(f, lo, hi, tol=1e-13):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)

"""Dense linear algebra and precision escalation on gmpy2 mpfr values.

Callers set the working precision (``special.working_precision``) before
building matrices; every routine here computes at the ambient precision.
"""

from __future__ import annotations

from gmpy2 import mpfr

from .errors import PrecisionExhaustedError
from .special import rounded, working_precision


class LUFactors:
    """Row-pivoted LU factors packed in one square array.

    ``rows[i]`` holds the strict lower multipliers in columns < i and the
    upper factor in columns >= i; ``perm[i]`` is the original row placed at
    position i.
    """

    __slots__ = ("rows", "perm", "sign")

    def __init__(self, rows, perm, sign):
        self.rows = rows
        self.perm = perm
        self.sign = sign

    @property
    def n(self):
        return len(self.rows)

    def det(self):
        acc = mpfr(self.sign)
        for i, row in enumerate(self.rows):
            acc *= row[i]
        return acc

    def solve(self, rhs):
        """Solve A x = rhs for the factored A."""
        n = self.n
        rows = self.rows
        y = [rhs[p] for p in self.perm]
        for i in range(1, n):
            row = rows[i]
            s = y[i]
            for j in range(i):
                s -= row[j] * y[j]
            y[i] = s
        x = [mpfr(0)] * n
        for i in range(n - 1, -1, -1):
            row = rows[i]
            s = y[i]
            for j in range(i + 1, n):
                s -= row[j] * x[j]
            x[i] = s / row[i]
        return x


def lu_factor(matrix):
    """Gaussian elimination with partial pivoting.

    Raises ZeroDivisionError when a pivot column is identically zero.
    """
    rows = [list(r) for r in matrix]
    n = len(rows)
    perm = list(range(n))
    sign = 1
    for c in range(n):
        pivot = max(range(c, n), key=lambda r: abs(rows[r][c]))
        if rows[pivot][c] == 0:
            raise ZeroDivisionError("singular matrix")
        if pivot != c:
            rows[c], rows[pivot] = rows[pivot], rows[c]
            perm[c], perm[pivot] = perm[pivot], perm[c]
            sign = -sign
        prow = rows[c]
        pval = prow[c]
        tail = prow[c + 1:]
        for r in range(c + 1, n):
            row = rows[r]
            f = row[c] / pval
            row[c] = f
            if f:
                row[c + 1:] = [a - f * b for a, b in zip(row[c + 1:], tail)]
    return LUFactors(rows, perm, sign)


def det(matrix):
    try:
        return lu_factor(matrix).det()
    except ZeroDivisionError:
        return mpfr(0)


def _agree(a, b, target_digits):
    tol = mpfr(10) ** (-target_digits)
    return abs(a - b) <= tol * max(mpfr(1), abs(b))


def escalate(evaluate, ctx, start_digits=None):
    """Run ``evaluate(digits)`` at growing precision until two runs agree.

    ``evaluate`` returns an mpfr or a sequence of mpfr.  Precision starts at
    ``max(ctx.digits, start_digits)`` and doubles (clamped at
    ``ctx.max_digits``); the result is accepted once consecutive values agree
    to ``ctx.target_digits`` in mixed absolute/relative terms.  Returns
    ``(value, digits)`` where ``digits`` is the higher of the agreeing pair.
    """
    p = max(ctx.digits, start_digits or 0)
    if p > ctx.max_digits:
        raise PrecisionExhaustedError(
            f"estimated precision need of {p} digits exceeds max_digits={ctx.max_digits}",
            max_digits=ctx.max_digits,
        )
    prev = evaluate(p)
    while True:
        if p >= ctx.max_digits:
            raise PrecisionExhaustedError(
                f"no agreement between successive precisions up to max_digits={ctx.max_digits}",
                max_digits=ctx.max_digits,
            )
        q = min(2 * p, ctx.max_digits)
        cur = evaluate(q)
        with working_precision(q):
            if isinstance(cur, (list, tuple)):
                ok = all(_agree(a, b, ctx.target_digits) for a, b in zip(prev, cur))
            else:
                ok = _agree(prev, cur, ctx.target_digits)
        if ok:
            out_digits = max(ctx.digits, ctx.target_digits)
            if isinstance(cur, (list, tuple)):
                return [rounded(v, out_digits) for v in cur], q
            return rounded(cur, out_digits), q
        p, prev = q, cur

"""Hot numeric loops: polynomial evaluation, real-root isolation, Hungarian solve.

Every function here is written in the numba-compatible subset of Python and is
compiled with ``@njit`` unless the pure-Python path is selected (see
``swarmgoal._accel``). Polynomials are float64 arrays of coefficients in
ascending power order.
"""

import numpy as np

from ._accel import njit

_EPS = 2.220446049250313e-16


@njit
def polyval(c, x):
    """Horner evaluation of ``sum(c[k] * x**k)``."""
    acc = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        acc = acc * x + c[k]
    return acc


@njit
def polyval_abs(c, x):
    """``sum(|c[k]| * |x|**k)``; the rounding scale of :func:`polyval`."""
    ax = abs(x)
    acc = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        acc = acc * ax + abs(c[k])
    return acc


@njit
def polyder(c):
    n = c.shape[0]
    if n <= 1:
        return np.zeros(1)
    out = np.empty(n - 1)
    for k in range(1, n):
        out[k - 1] = k * c[k]
    return out


@njit
def trim(c):
    """Drop vanishing leading (highest-power) coefficients."""
    n = c.shape[0]
    while n > 1 and c[n - 1] == 0.0:
        n -= 1
    return c[:n].copy()


@njit
def _bisect(c, a, b, fa):
    # fa and f(b) have opposite signs (or one is zero); shrink until the
    # midpoint no longer splits the bracket in floating point.
    for _ in range(400):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = polyval(c, m)
        if fm == 0.0:
            return m
        if (fm < 0.0) == (fa < 0.0):
            a = m
            fa = fm
        else:
            b = m
    fb = polyval(c, b)
    if abs(fa) <= abs(fb):
        return a
    return b


@njit
def _roots_on_monotone_pieces(c, knots, nknots, out):
    """Roots of ``c`` on ``[knots[0], knots[nknots-1]]`` where ``c`` is
    monotone between consecutive knots. Returns the count written to ``out``."""
    count = 0
    for k in range(nknots):
        x = knots[k]
        fx = polyval(c, x)
        # touching (even-multiplicity) roots sit on a knot
        if abs(fx) <= 64.0 * _EPS * polyval_abs(c, x):
            out[count] = x
            count += 1
    for k in range(nknots - 1):
        a = knots[k]
        b = knots[k + 1]
        if b <= a:
            continue
        fa = polyval(c, a)
        fb = polyval(c, b)
        tol_a = 64.0 * _EPS * polyval_abs(c, a)
        tol_b = 64.0 * _EPS * polyval_abs(c, b)
        if abs(fa) <= tol_a or abs(fb) <= tol_b:
            continue
        if (fa < 0.0) != (fb < 0.0):
            out[count] = _bisect(c, a, b, fa)
            count += 1
    return count


@njit
def _dedupe_sorted(xs, n):
    if n == 0:
        return xs[:0].copy()
    xs = np.sort(xs[:n])
    out = np.empty(n)
    out[0] = xs[0]
    m = 1
    for k in range(1, n):
        if xs[k] - out[m - 1] > 1e-12 * max(1.0, abs(xs[k])):
            out[m] = xs[k]
            m += 1
    return out[:m].copy()


@njit
def real_roots(c, lo, hi):
    """All real roots of polynomial ``c`` inside ``[lo, hi]``, ascending.

    Roots are isolated through the derivative chain: the roots of ``c'`` split
    ``[lo, hi]`` into pieces where ``c`` is monotone, so each piece holds at
    most one root, found by bisection to full floating-point resolution.
    Multiple roots are reported once. The caller guarantees ``c`` is not the
    zero polynomial.
    """
    c = trim(c)
    deg = c.shape[0] - 1
    if deg == 0:
        return np.empty(0)
    # chain[d] holds the d-th derivative, padded with zeros
    chain = np.zeros((deg + 1, deg + 1))
    chain[0, :] = c
    for d in range(1, deg + 1):
        cur = polyder(chain[d - 1, : deg + 2 - d])
        chain[d, : cur.shape[0]] = cur
    # the (deg-1)-th derivative is linear: its root is explicit
    crit = np.empty(deg + 2)
    lin = chain[deg - 1, :2]
    ncrit = 0
    r = -lin[0] / lin[1]
    if lo < r < hi:
        crit[0] = r
        ncrit = 1
    roots = crit[:ncrit].copy()
    knots = np.empty(deg + 2)
    buf = np.empty(2 * deg + 4)
    for d in range(deg - 2, -1, -1):
        knots[0] = lo
        nk = 1
        for k in range(roots.shape[0]):
            if lo < roots[k] < hi:
                knots[nk] = roots[k]
                nk += 1
        knots[nk] = hi
        nk += 1
        poly = chain[d, : deg + 1 - d]
        cnt = _roots_on_monotone_pieces(poly, knots, nk, buf)
        roots = _dedupe_sorted(buf, cnt)
    if deg == 1:
        if lo <= r <= hi:
            out = np.empty(1)
            out[0] = r
            return out
        return np.empty(0)
    return roots


@njit
def hungarian(cost):
    """Minimum-cost assignment of every row to a distinct column.

    ``cost`` is ``n x m`` with ``n <= m``; ``inf`` marks a forbidden pair.
    Shortest-augmenting-path form with row/column potentials. Returns
    ``(col_of_row, u, v, ok)``; ``ok`` is False when no complete assignment
    avoids the forbidden pairs. The potentials satisfy
    ``u[i] + v[j] <= cost[i, j]`` and ``v <= 0`` on exit.
    """
    n, m = cost.shape
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row (1-based) holding column j
    way = np.zeros(m + 1, dtype=np.int64)
    minv = np.empty(m + 1)
    used = np.zeros(m + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = -1
            for j in range(1, m + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            if j1 == -1 or delta == inf:
                return np.full(n, -1, dtype=np.int64), u[1:].copy(), v[1:].copy(), False
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j] != 0:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row, u[1:].copy(), v[1:].copy(), True


@njit
def min_on_interval(c, lo, hi):
    """Minimum of polynomial ``c`` over ``[lo, hi]`` and where it occurs."""
    best_x = lo
    best = polyval(c, lo)
    fh = polyval(c, hi)
    if fh < best:
        best = fh
        best_x = hi
    d = trim(polyder(c))
    if d.shape[0] > 1 or d[0] != 0.0:
        crit = real_roots(d, lo, hi)
        for k in range(crit.shape[0]):
            f = polyval(c, crit[k])
            if f < best:
                best = f
                best_x = crit[k]
    return best, best_x

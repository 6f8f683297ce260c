"""One-dimensional minimisation used by the Chernoff and threshold searches."""
from __future__ import annotations

import math

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def golden_section_min(f, a: float, b: float, tol: float = 1e-9, include_endpoints: bool = True):
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x_min, f(x_min))``.

    The bracket is shrunk until its width is at most ``tol``. With
    ``include_endpoints`` the values at ``a`` and ``b`` are compared as well,
    since the minimum of a degenerate objective may sit on the boundary.
    """
    lo, hi = min(a, b), max(a, b)
    h = hi - lo
    if h <= tol:
        x = 0.5 * (lo + hi)
        return x, f(x)
    n = max(1, int(math.ceil(math.log(tol / h) / math.log(INV_PHI))))
    c = lo + INV_PHI2 * h
    d = lo + INV_PHI * h
    fc, fd = f(c), f(d)
    for _ in range(n):
        if fc < fd:
            hi, d, fd = d, c, fc
            h *= INV_PHI
            c = lo + INV_PHI2 * h
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            h *= INV_PHI
            d = lo + INV_PHI * h
            fd = f(d)
    best = (c, fc) if fc < fd else (d, fd)
    if include_endpoints:
        for x in (a, b):
            fx = f(x)
            if fx < best[1]:
                best = (x, fx)
    return best

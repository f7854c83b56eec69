"""Vectorized scalar search routines."""

import numpy as np

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_min(obj, lo, hi, iters=200, tol=0.0):
    """Golden-section minimization of a unimodal ``obj`` elementwise over [lo, hi].

    ``lo`` and ``hi`` broadcast together; ``obj`` must accept an array of
    that shape. Returns ``(argmin, min)``.
    """
    a, b = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    a, b = a.copy(), b.copy()
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(iters):
        left = fc < fd
        # shrink toward the smaller probe
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - INV_PHI * (b - a), d)
        new_d = np.where(left, c, a + INV_PHI * (b - a))
        fnew = obj(np.where(left, new_c, new_d))
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
        c, d = new_c, new_d
        if tol and np.all(b - a <= tol):
            break
    x = 0.5 * (a + b)
    fx = obj(x)
    # keep whichever of the candidates is best; guards flat plateaus and kinks
    for cand, fcand in ((c, fc), (d, fd)):
        better = fcand < fx
        x = np.where(better, cand, x)
        fx = np.where(better, fcand, fx)
    return x, fx


def bisect_increasing(phi, lo, hi, iters=200):
    """Root of an elementwise increasing ``phi`` bracketed by [lo, hi]."""
    a, b = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    a, b = a.copy(), b.copy()
    for _ in range(iters):
        m = 0.5 * (a + b)
        pos = phi(m) > 0
        b = np.where(pos, m, b)
        a = np.where(pos, a, m)
    return 0.5 * (a + b)


def newton_increasing(fdf, lo, hi, x0=None, iters=60, xtol=1e-15):
    """Root of an elementwise increasing function in [lo, hi] by safeguarded Newton.

    ``fdf(x)`` returns the value and the derivative. Newton steps that leave
    the current bracket fall back to bisection, so the bracket shrinks every
    iteration. ``x0`` is an optional starting point, clipped into the bracket.
    """
    a, b = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    a, b = a.copy(), b.copy()
    x = 0.5 * (a + b) if x0 is None else np.clip(x0, a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(iters):
            fx, dfx = fdf(x)
            pos = fx > 0
            np.copyto(b, x, where=pos)
            np.copyto(a, x, where=~pos)   # fx == 0 pins a = x, and the Newton step below stays at x
            nx = x - fx / dfx
            bad = ~((nx >= a) & (nx <= b))  # also catches NaN from a zero derivative
            if bad.any():
                nx[bad] = 0.5 * (a[bad] + b[bad])
            done = np.abs(nx - x) <= xtol * np.maximum(1.0, np.abs(x))
            x = nx
            if done.all():
                break
    return x

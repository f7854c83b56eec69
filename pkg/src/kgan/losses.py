"""Decreasing classification losses and their Fenchel conjugates.

Conjugates follow the supremum convention ``l*(t) = sup_a (t a - l(a))``, so
that ``l(a) = max_u (u a - l*(u))``. With that convention the logistic and
hinge conjugates live on [-1, 0], exponential on (-inf, 0], least-square on
the whole line.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import expit, logit, xlogy

from .errors import InvalidInputError, UnsupportedOperationError
from .numerics import golden_min, newton_increasing

SEARCH_BOUND = 50.0
GRID_SIZE = 1001


@dataclass(frozen=True)
class LossSpec:
    name: str
    value: Callable
    derivative: Callable
    conjugate_domain: tuple  # closed interval (lo, hi); infinite ends allowed
    convex: bool = True
    strictly_convex: bool = False
    _conjugate: Callable = None
    _conjugate_derivative: Callable = None

    def in_domain(self, t):
        lo, hi = self.conjugate_domain
        t = np.asarray(t, dtype=float)
        return (t >= lo) & (t <= hi)

    def project(self, t):
        """Euclidean projection onto the conjugate domain (coordinate clamping)."""
        lo, hi = self.conjugate_domain
        return np.clip(t, lo, hi)

    def conjugate(self, t):
        return conjugate_closed_form(self, t)

    def conjugate_derivative(self, t):
        if self._conjugate_derivative is None:
            raise UnsupportedOperationError(f"{self.name} loss has no conjugate derivative")
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            out = self._conjugate_derivative(t)
        return np.where(self.in_domain(t), out, np.nan)


# logistic ------------------------------------------------------------------

def _logistic(a):
    return np.logaddexp(0.0, -np.asarray(a, dtype=float))


def _logistic_grad(a):
    return -expit(-np.asarray(a, dtype=float))


def _logistic_conj(t):
    # (-t) log(-t) + (1+t) log(1+t) on [-1, 0], with 0 log 0 = 0
    return xlogy(-t, -t) + xlogy(1.0 + t, 1.0 + t)


def _logistic_conj_grad(t):
    return np.log1p(t) - np.log(-t)


# hinge ---------------------------------------------------------------------

def _hinge(a):
    return np.maximum(0.0, 1.0 - np.asarray(a, dtype=float))


def _hinge_grad(a):
    # subgradient 0 at the kink a = 1
    return np.where(np.asarray(a, dtype=float) < 1.0, -1.0, 0.0)


# exponential ---------------------------------------------------------------

def _exp(a):
    return np.exp(-np.asarray(a, dtype=float))


def _exp_grad(a):
    return -np.exp(-np.asarray(a, dtype=float))


def _exp_conj(t):
    return xlogy(-t, -t) + t


def _exp_conj_grad(t):
    return -np.log(-t)


# least square --------------------------------------------------------------

def _lsq(a):
    return (1.0 - np.asarray(a, dtype=float)) ** 2


def _lsq_grad(a):
    return -2.0 * (1.0 - np.asarray(a, dtype=float))


# zero-one ------------------------------------------------------------------

def _zero_one(a):
    return (np.asarray(a, dtype=float) <= 0.0).astype(float)


def _zero_one_grad(a):
    return np.zeros_like(np.asarray(a, dtype=float))


LOGISTIC = LossSpec("logistic", _logistic, _logistic_grad, (-1.0, 0.0), strictly_convex=True,
                    _conjugate=_logistic_conj, _conjugate_derivative=_logistic_conj_grad)
HINGE = LossSpec("hinge", _hinge, _hinge_grad, (-1.0, 0.0),
                 _conjugate=lambda t: t, _conjugate_derivative=lambda t: np.ones_like(t))
EXPONENTIAL = LossSpec("exponential", _exp, _exp_grad, (-np.inf, 0.0), strictly_convex=True,
                       _conjugate=_exp_conj, _conjugate_derivative=_exp_conj_grad)
LEAST_SQUARE = LossSpec("least-square", _lsq, _lsq_grad, (-np.inf, np.inf), strictly_convex=True,
                        _conjugate=lambda t: t + 0.25 * t * t,
                        _conjugate_derivative=lambda t: 1.0 + 0.5 * t)
ZERO_ONE = LossSpec("zero-one", _zero_one, _zero_one_grad, (np.nan, np.nan), convex=False)

LOSSES = {spec.name: spec for spec in (LOGISTIC, HINGE, EXPONENTIAL, LEAST_SQUARE, ZERO_ONE)}
CONVEX_LOSSES = (LOGISTIC, HINGE, EXPONENTIAL, LEAST_SQUARE)
ALIASES = {"exp": "exponential", "lsq": "least-square", "zeroone": "zero-one",
           "least_square": "least-square", "zero_one": "zero-one"}


def get_loss(name):
    key = ALIASES.get(name, name)
    try:
        return LOSSES[key]
    except KeyError:
        raise InvalidInputError(f"unknown loss {name!r}; choose from "
                                f"logistic, hinge, exp, lsq, zeroone") from None


def eval_loss(spec, a):
    return spec.value(a)


def conjugate_closed_form(spec, t):
    """Closed-form conjugate; ``+inf`` outside the conjugate domain."""
    if spec._conjugate is None:
        raise UnsupportedOperationError(f"{spec.name} loss is not convex; no conjugate is provided")
    t = np.asarray(t, dtype=float)
    inside = spec.in_domain(t)
    safe = np.where(inside, t, spec.project(np.where(np.isfinite(t), t, 0.0)))
    out = np.where(inside, spec._conjugate(safe), np.inf)
    return out if out.ndim else float(out)


class ConjugateEstimate(NamedTuple):
    value: np.ndarray
    argmax: np.ndarray
    at_boundary: np.ndarray  # sup attained at the edge of the search grid


def numeric_conjugate(func, t, search_bound=SEARCH_BOUND, grid_size=GRID_SIZE):
    """``sup_a (t a - func(a))`` over ``[-search_bound, search_bound]``.

    A uniform grid locates the best node; golden-section then refines on the
    two neighbouring cells (the objective is concave when ``func`` is convex).
    """
    if grid_size < 1001:
        raise InvalidInputError(f"grid_size must be >= 1001, got {grid_size}")
    t = np.asarray(t, dtype=float)
    flat = t.reshape(-1, 1)
    grid = np.linspace(-search_bound, search_bound, grid_size)
    fgrid = func(grid)
    obj = flat * grid[None, :] - fgrid[None, :]
    idx = np.argmax(obj, axis=1)
    at_boundary = (idx == 0) | (idx == grid_size - 1)
    h = grid[1] - grid[0]
    lo = np.maximum(grid[idx] - h, -search_bound)
    hi = np.minimum(grid[idx] + h, search_bound)
    tt = flat[:, 0]
    arg, neg = golden_min(lambda a: -(tt * a - func(a)), lo, hi, iters=100)
    value = -neg
    return ConjugateEstimate(value.reshape(t.shape), arg.reshape(t.shape), at_boundary.reshape(t.shape))


def conjugate_numeric(spec, t, search_bound=SEARCH_BOUND, grid_size=GRID_SIZE):
    """Grid-plus-golden-section oracle for the conjugate of ``spec``."""
    return numeric_conjugate(spec.value, t, search_bound, grid_size)


def biconjugate_numeric(spec, a, inner_bound=SEARCH_BOUND, outer_bound=200.0, grid_size=GRID_SIZE):
    """Conjugate of the numeric conjugate, evaluated at each point of ``a``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    inner = lambda t: conjugate_numeric(spec, t, inner_bound, grid_size).value
    return numeric_conjugate(inner, a, outer_bound, grid_size).value


def _finite_domain(spec, bound=SEARCH_BOUND):
    lo, hi = spec.conjugate_domain
    return max(lo, -bound), min(hi, bound)


def conjugate_argmax(spec, a, bound=SEARCH_BOUND):
    """Maximizer over the conjugate domain of ``u a - l*(u)`` by golden section."""
    lo, hi = _finite_domain(spec, bound)
    a = np.asarray(a, dtype=float)
    u, _ = golden_min(lambda u: -(a * u - conjugate_closed_form(spec, u)),
                      np.full(a.shape, lo), np.full(a.shape, hi))
    return u


def check_young(spec, s, t):
    """Young gap ``l(s) + l*(t) - s t``; nonnegative, zero when ``t = l'(s)``."""
    t = np.asarray(t, dtype=float)
    if not np.all(spec.in_domain(t)):
        raise InvalidInputError(f"t outside the conjugate domain {spec.conjugate_domain} of {spec.name}")
    return spec.value(s) + conjugate_closed_form(spec, t) - np.asarray(s) * t


def check_legendre(spec, s):
    """``|(l*)'(l'(s)) - s|`` for strictly convex differentiable losses."""
    if not spec.strictly_convex:
        raise UnsupportedOperationError(f"Legendre identity needs a strictly convex differentiable loss, "
                                        f"not {spec.name}")
    return np.abs(spec.conjugate_derivative(spec.derivative(s)) - np.asarray(s, dtype=float))


def prox_conjugate(spec, y, step, start=None):
    """``argmin_t step * l*(t) + (t - y)**2 / 2`` over the conjugate domain.

    The dual updates in the trainer use this as their projected step, which
    stays well defined where ``l*`` has unbounded slope at the domain edges.
    ``start`` is an optional guess in the domain (e.g. the previous iterate)
    that speeds up the logistic and exponential root finds.
    """
    y = np.asarray(y, dtype=float)
    if spec is HINGE:
        return np.clip(y - step, -1.0, 0.0)
    if spec is LEAST_SQUARE:
        return (y - step) / (1.0 + 0.5 * step)
    if spec is LOGISTIC:
        # t = -sigmoid(r) turns the optimality condition into step*r + sigmoid(r) + y = 0,
        # increasing in r with the root in [(-y - 1)/step, -y/step]
        def fdf(r):
            sig = expit(r)
            return step * r + sig + y, step + sig * (1.0 - sig)
        x0 = None
        if start is not None:
            with np.errstate(divide="ignore"):
                x0 = logit(-np.asarray(start, dtype=float))
        return -expit(newton_increasing(fdf, (-y - 1.0) / step, -y / step, x0))
    if spec is EXPONENTIAL:
        # t = -exp(r): root in r of exp(r) + step*r + y, increasing in r
        hi = -y / step
        with np.errstate(divide="ignore", invalid="ignore"):
            # a positive root r also satisfies exp(r) < -y
            hi = np.where(hi > 0, np.minimum(hi, np.maximum(0.0, np.log(-y))), hi)
        lo = (-y - np.exp(hi)) / step

        def fdf(r):
            e = np.exp(r)
            return e + step * r + y, e + step
        x0 = None
        if start is not None:
            with np.errstate(divide="ignore"):
                x0 = np.log(-np.asarray(start, dtype=float))
        return -np.exp(newton_increasing(fdf, lo, hi, x0))
    raise UnsupportedOperationError(f"no conjugate prox for {spec.name}")

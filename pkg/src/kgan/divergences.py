"""Loss / f-divergence pairs and the general-loss identity.

For a decreasing convex loss ``l`` the Bayes risk of classifying real
(label +1) against generated (label -1) points is

    R = 1/2 * integral of inf_a [l(a) p_d(x) + l(-a) p_g(x)] dx = -1/2 * I_f(P_d || P_g)

with ``f(t) = -inf_a [l(a) t + l(-a)]``. This module evaluates both sides
through separate code paths (pointwise numeric infimum against closed-form
``f``), plus each pair's named divergence from its own defining integral.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .densities import Density, QuadratureGrid, integrate_values, pdf
from .errors import InvalidInputError
from .losses import EXPONENTIAL, HINGE, LEAST_SQUARE, LOGISTIC, ZERO_ONE, get_loss
from .numerics import golden_min

RATIO_MIN, RATIO_MAX = 1e-300, 1e300
BRACKET = 60.0
MAX_BRACKET = 700.0  # exp(700) is still finite
GOLDEN_ITERS = 200
MU_VALUES = (0.0, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class DivergencePair:
    loss: object
    f: Callable
    divergence: str
    optimal_discriminator: Callable  # (p_d, p_g) -> D*(x)

    @property
    def name(self):
        return self.loss.name


def _f_zero_one(t):
    return -np.minimum(1.0, t)


def _f_hinge(t):
    return -2.0 * np.minimum(1.0, t)


def _f_exponential(t):
    return -2.0 * np.sqrt(t)


def _f_least_square(t):
    return -4.0 * t / (t + 1.0)


def _f_logistic(t):
    # -t log((t+1)/t) - log(t+1), continuous at t = 0
    return -(xlogy(t, t + 1.0) - xlogy(t, t)) - np.log1p(t)


def _sign_rule(pd, pg):
    return np.sign(np.asarray(pg) - np.asarray(pd))


PAIRS = {
    "zero-one": DivergencePair(ZERO_ONE, _f_zero_one, "zero-one-tv", _sign_rule),
    "hinge": DivergencePair(HINGE, _f_hinge, "total-variation", _sign_rule),
    "exponential": DivergencePair(EXPONENTIAL, _f_exponential, "hellinger-squared",
                                  lambda pd, pg: 0.5 * np.log(np.asarray(pd) / np.asarray(pg))),
    "least-square": DivergencePair(LEAST_SQUARE, _f_least_square, "triangular",
                                   lambda pd, pg: (np.asarray(pd) - pg) / (np.asarray(pd) + pg)),
    "logistic": DivergencePair(LOGISTIC, _f_logistic, "jensen-shannon",
                               lambda pd, pg: np.log(np.asarray(pd) / np.asarray(pg))),
}


def get_pair(loss):
    name = loss if isinstance(loss, str) else loss.name
    return PAIRS[get_loss(name).name]


def _zero_one_inf(a_weight, b_weight):
    # l is a step function: probing one alpha per region (<0, 0, >0) is exact
    cands = [a_weight * ZERO_ONE.value(a) + b_weight * ZERO_ONE.value(-a) for a in (-1.0, 0.0, 1.0)]
    return np.minimum.reduce(cands)


def pointwise_infimum(loss, a_weight, b_weight, bracket=None):
    """``inf_a [l(a) a_weight + l(-a) b_weight]`` elementwise, by golden section.

    The bracket widens with ``|log(a_weight / b_weight)|`` since the optimal
    margin for the logistic and exponential losses grows like that log.
    """
    a_weight = np.asarray(a_weight, dtype=float)
    b_weight = np.broadcast_to(np.asarray(b_weight, dtype=float), a_weight.shape)
    if loss is ZERO_ONE:
        return _zero_one_inf(a_weight, b_weight)
    if bracket is None:
        tiny = np.finfo(float).tiny
        with np.errstate(divide="ignore"):
            spread = np.abs(np.log(np.maximum(a_weight, tiny)) - np.log(np.maximum(b_weight, tiny)))
        bracket = np.minimum(BRACKET + spread, MAX_BRACKET)
    bracket = np.broadcast_to(bracket, a_weight.shape)

    def obj(a):
        return loss.value(a) * a_weight + loss.value(-a) * b_weight

    _, val = golden_min(obj, -bracket, bracket, iters=GOLDEN_ITERS)
    return val


def f_from_loss(loss, t):
    """``f(t) = -inf_a [l(a) t + l(-a)]`` computed numerically."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidInputError("f is defined for t >= 0")
    out = -pointwise_infimum(loss, t, 1.0)
    return out if out.ndim else float(out)


def _density_values(p_d, p_g, grid):
    if p_d.dim != p_g.dim or p_d.dim != grid.dim:
        raise InvalidInputError(f"dimension mismatch: p_d {p_d.dim}, p_g {p_g.dim}, grid {grid.dim}")
    pts = grid.points()
    return pdf(p_d, pts), pdf(p_g, pts)


def default_grid(p_d, p_g, nodes=None):
    if nodes is None:
        nodes = 2001 if p_d.dim == 1 else 401
    return QuadratureGrid.covering(p_d, p_g, nodes=nodes)


def f_divergence(pair, p_d, p_g, grid=None):
    """``I_f(P_d || P_g) = integral of f(p_d / p_g) p_g`` with the pair's closed-form f."""
    grid = grid or default_grid(p_d, p_g)
    pd, pg = _density_values(p_d, p_g, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.clip(pd / pg, RATIO_MIN, RATIO_MAX)
    ratio = np.where(np.isnan(ratio), 1.0, ratio)  # 0/0 far out in both tails
    return integrate_values(pair.f(ratio) * pg, grid)


def general_loss_infimum(loss, p_d, p_g, grid=None):
    """Bayes risk ``R_l``: half the integral of the pointwise infimum over the margin."""
    grid = grid or default_grid(p_d, p_g)
    pd, pg = _density_values(p_d, p_g, grid)
    return 0.5 * integrate_values(pointwise_infimum(loss, pd, pg), grid)


def total_variation(p_d, p_g, grid=None):
    grid = grid or default_grid(p_d, p_g)
    pd, pg = _density_values(p_d, p_g, grid)
    return 0.5 * integrate_values(np.abs(pd - pg), grid)


def hellinger_squared(p_d, p_g, grid=None):
    """``1 - integral sqrt(p_d p_g)``, i.e. half the squared-difference integral."""
    grid = grid or default_grid(p_d, p_g)
    pd, pg = _density_values(p_d, p_g, grid)
    return 1.0 - integrate_values(np.sqrt(pd * pg), grid)


def triangular(p_d, p_g, grid=None):
    grid = grid or default_grid(p_d, p_g)
    pd, pg = _density_values(p_d, p_g, grid)
    s = pd + pg
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(s > 0, (pd - pg) ** 2 / s, 0.0)
    return integrate_values(vals, grid)


def jensen_shannon(p_d, p_g, grid=None):
    """``1/2 KL(P_d || M) + 1/2 KL(P_g || M)`` with ``M`` the equal mixture, in nats."""
    grid = grid or default_grid(p_d, p_g)
    pd, pg = _density_values(p_d, p_g, grid)
    m = 0.5 * (pd + pg)
    with np.errstate(invalid="ignore", divide="ignore"):
        kl_d = np.where(pd > 0, xlogy(pd, pd) - xlogy(pd, m), 0.0)
        kl_g = np.where(pg > 0, xlogy(pg, pg) - xlogy(pg, m), 0.0)
    return 0.5 * integrate_values(kl_d + kl_g, grid)


DIVERGENCES = {
    "zero-one-tv": total_variation,
    "total-variation": total_variation,
    "hellinger-squared": hellinger_squared,
    "triangular": triangular,
    "jensen-shannon": jensen_shannon,
}


def named_divergence(pair, p_d, p_g, grid=None):
    return DIVERGENCES[pair.divergence](p_d, p_g, grid)


def closed_form_risk(pair, p_d, p_g, grid=None):
    """Bayes risk from the pair's named divergence.

    zero-one: (1 - TV) / 2; hinge: 1 - TV; exponential: 1 - H^2;
    least-square: 1 - T / 2 with T the triangular discrimination;
    logistic: log 2 - JS.
    """
    d = named_divergence(pair, p_d, p_g, grid)
    name = pair.name
    if name == "zero-one":
        return 0.5 * (1.0 - d)
    if name in ("hinge", "exponential"):
        return 1.0 - d
    if name == "least-square":
        return 1.0 - 0.5 * d
    if name == "logistic":
        return np.log(2.0) - d
    raise InvalidInputError(f"no closed-form risk for {name}")


def optimal_discriminator(pair, pd_val, pg_val):
    if np.any(np.asarray(pd_val) <= 0) or np.any(np.asarray(pg_val) <= 0):
        raise InvalidInputError("density values must be positive")
    return pair.optimal_discriminator(pd_val, pg_val)


def pointwise_argmin(loss, t, bracket=BRACKET):
    """Margin minimizing ``l(a) t + l(-a)``, for checking the optimal discriminator."""
    t = np.asarray(t, dtype=float)
    arg, _ = golden_min(lambda a: loss.value(a) * t + loss.value(-a),
                        np.full(t.shape, -bracket), np.full(t.shape, bracket), iters=GOLDEN_ITERS)
    return arg


def verify_pairs(mus=MU_VALUES, nodes=2001):
    """Rows ``(loss, mu, lhs, rhs, abs_diff)`` comparing the numeric Bayes risk
    with the closed-form divergence route on N(0,1) vs N(mu,1)."""
    rows = []
    for name in ("zero-one", "hinge", "exponential", "least-square", "logistic"):
        pair = PAIRS[name]
        for mu in mus:
            p_d, p_g = Density.normal1d(0.0), Density.normal1d(float(mu))
            grid = default_grid(p_d, p_g, nodes)
            lhs = general_loss_infimum(pair.loss, p_d, p_g, grid)
            rhs = closed_form_risk(pair, p_d, p_g, grid)
            rows.append((name, float(mu), lhs, rhs, abs(lhs - rhs)))
    return rows

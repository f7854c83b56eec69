"""Primal max-min and Fenchel-dual max-max training of the kernel generator.

The discriminator is linear in random features, ``D_w(x) = w^T Phi(x)``. For
a frozen generator the primal inner problem is

    g(w) = Omega(w) + mean_i l(D_w(x_i)) + sum_j pi_j l(-D_w(G(z_j)))

and its Fenchel dual over per-point variables ``u_i``, ``v_j`` is

    h(u, v) = -Omega*(s) - mean_i l*(u_i) - sum_j pi_j l*(v_j),
    s = -mean_i u_i Phi(x_i) + sum_j pi_j v_j Phi(G(z_j)),

with ``g(w) >= h(u, v)`` everywhere and primal point ``w = grad Omega*(s)``.
"""

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .errors import (
    BudgetExceededError, DivergedError, InfeasiblePointError, InvalidInputError,
    UnsupportedOperationError,
)
from .generator import backward, draw_noise, flat_gradients, forward
from .losses import EXPONENTIAL, HINGE, LEAST_SQUARE, LOGISTIC, conjugate_closed_form, prox_conjugate
from .rff import feature_parts, features, features_vjp

METRIC_COLUMNS = ("iter", "h", "g_recovered", "gap", "div_estimate", "wall_ms")
BALL_TOL = 1e-12  # relative slack when testing ||w|| <= C


# regularizers --------------------------------------------------------------

@dataclass(frozen=True)
class Regularizer:
    kind: str        # "l2" | "ball"
    strength: float  # lambda for l2, radius C for the ball

    def __post_init__(self):
        if self.kind not in ("l2", "ball"):
            raise InvalidInputError(f"unknown regularizer {self.kind!r}; use 'l2' or 'ball'")
        if not self.strength > 0:
            raise InvalidInputError(f"regularizer strength must be positive, got {self.strength}")

    @classmethod
    def l2(cls, lam):
        return cls("l2", float(lam))

    @classmethod
    def ball(cls, radius):
        return cls("ball", float(radius))

    def value(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "l2":
            return 0.5 * self.strength * float(w @ w)
        n = np.linalg.norm(w)
        if n > self.strength * (1.0 + BALL_TOL):
            raise InfeasiblePointError(f"||w|| = {n:.6g} exceeds the ball radius {self.strength:g}")
        return 0.0

    def gradient(self, w):
        return self.strength * np.asarray(w) if self.kind == "l2" else np.zeros_like(w)

    def project(self, w):
        if self.kind == "l2":
            return w
        n = np.linalg.norm(w)
        return w if n <= self.strength else w * (self.strength / n)

    def conjugate(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "l2":
            return float(s @ s) / (2.0 * self.strength)
        return self.strength * float(np.linalg.norm(s))

    def conjugate_gradient(self, s):
        """``grad Omega*(s)``; for the ball the subgradient 0 is used at ``s = 0``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "l2":
            return s / self.strength
        n = np.linalg.norm(s)
        return np.zeros_like(s) if n == 0 else s * (self.strength / n)


# problem data --------------------------------------------------------------

def _require_convex(loss):
    if not loss.convex:
        raise UnsupportedOperationError(f"{loss.name} loss is not convex; the dual needs a convex loss")


@dataclass
class Problem:
    """Fixed real sample, feature map, loss and regularizer."""
    data: np.ndarray
    fmap: object
    loss: object
    reg: Regularizer
    data_features: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        _require_convex(self.loss)
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if len(self.data) == 0:
            raise InvalidInputError("need at least one real sample")
        self.data_features = features(self.fmap, self.data)

    @property
    def n(self):
        return len(self.data)


def _probs(atoms, probs):
    m = len(atoms)
    return np.full(m, 1.0 / m) if probs is None else np.asarray(probs, dtype=float)


class Generated(NamedTuple):
    y: np.ndarray
    tape: object
    phi: np.ndarray
    parts: tuple     # cached (cos, sin) for the feature VJP


def generate(problem, params, atoms):
    """``(G(z), tape, Phi(G(z)), (cos, sin))`` for a batch of noise rows."""
    y, tape = forward(params, atoms)
    if y.shape[1] != problem.data.shape[1]:
        raise InvalidInputError(f"generator output dimension {y.shape[1]} != data dimension {problem.data.shape[1]}")
    parts = feature_parts(problem.fmap, y)
    return Generated(y, tape, features(problem.fmap, y, parts), parts)


def _pull_back(problem, params, gen, slope, w):
    """Generator gradient of ``sum_j slope_j D_w(G(z_j))``."""
    grads, _ = backward(params, gen.tape, features_vjp(problem.fmap, gen.y, np.outer(slope, w), gen.parts))
    return grads


def check_domain(loss, values, name):
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~loss.in_domain(values))
    if bad.size:
        i = int(bad[0])
        raise InvalidInputError(f"{name}[{i}] = {values[i]!r} lies outside the conjugate domain "
                                f"{list(loss.conjugate_domain)} of the {loss.name} loss")


def _dual_point(phi_x, phi_g, pi, u, v):
    return -(phi_x.T @ u) / len(u) + phi_g.T @ (pi * v)


def _loss_terms(loss, phi_x, phi_g, pi, w):
    return float(np.mean(loss.value(phi_x @ w)) + pi @ loss.value(-(phi_g @ w)))


def _g(problem, phi_g, pi, w):
    return problem.reg.value(w) + _loss_terms(problem.loss, problem.data_features, phi_g, pi, w)


def _h(problem, phi_g, pi, u, v):
    s = _dual_point(problem.data_features, phi_g, pi, u, v)
    loss = problem.loss
    return (-problem.reg.conjugate(s) - float(np.mean(conjugate_closed_form(loss, u)))
            - float(pi @ conjugate_closed_form(loss, v)))


def primal_objective(problem, params, atoms, w, probs=None):
    """``g(w)``; raises for ``w`` outside the ball under the ball regularizer."""
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.fmap.output_dim,):
        raise InvalidInputError(f"w has shape {w.shape}, expected ({problem.fmap.output_dim},)")
    phi_g = generate(problem, params, atoms).phi
    return _g(problem, phi_g, _probs(atoms, probs), w)


def dual_objective(problem, params, atoms, u, v, probs=None):
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != (problem.n,) or v.shape != (len(atoms),):
        raise InvalidInputError(f"u, v have shapes {u.shape}, {v.shape}; expected ({problem.n},), ({len(atoms)},)")
    check_domain(problem.loss, u, "u")
    check_domain(problem.loss, v, "v")
    phi_g = generate(problem, params, atoms).phi
    return _h(problem, phi_g, _probs(atoms, probs), u, v)


def recover_primal(problem, params, atoms, u, v, probs=None):
    """Primal point ``grad Omega*(s)`` attached to dual variables ``(u, v)``.

    For the ball the point is ``C s / ||s||``; at ``s = 0`` every point of the
    ball is optimal, so that case raises.
    """
    phi_g = generate(problem, params, atoms).phi
    s = _dual_point(problem.data_features, phi_g, _probs(atoms, probs), np.asarray(u, float), np.asarray(v, float))
    if problem.reg.kind == "ball" and not np.any(s):
        raise UnsupportedOperationError("primal point is not unique for the ball regularizer at s = 0")
    return problem.reg.conjugate_gradient(s)


def h_gradient_psi(problem, params, atoms, u, v, probs=None):
    """Flat gradient of ``h`` with respect to the generator parameters at fixed ``(u, v)``."""
    pi = _probs(atoms, probs)
    gen = generate(problem, params, atoms)
    w = problem.reg.conjugate_gradient(_dual_point(problem.data_features, gen.phi, pi, u, v))
    return flat_gradients(_pull_back(problem, params, gen, -pi * v, w))


# training ------------------------------------------------------------------

@dataclass
class TrainSettings:
    steps: int = 1000
    step_dual: float = 0.05
    step_psi: float = 0.01
    step_w: float = 0.5
    inner_steps: int = 1
    batch_size: int = 64      # noise rows per step for gaussian noise
    log_interval: int = 100
    timing: bool = False      # wall_ms is left empty unless set, keeping metrics reproducible

    def validate(self):
        for name in ("step_dual", "step_psi", "step_w"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)}")
        if self.steps < 0 or self.inner_steps < 0:
            raise InvalidInputError("steps and inner_steps must be >= 0")
        if self.log_interval < 1 or self.batch_size < 1:
            raise InvalidInputError("log_interval and batch_size must be >= 1")


@dataclass
class DualState:
    u: np.ndarray
    v: np.ndarray
    iteration: int = 0


class TrainResult(NamedTuple):
    params: object
    state: object        # DualState for the dual trainer, w for the primal one
    metrics: list        # dicts keyed by METRIC_COLUMNS


def initial_dual(problem, m):
    """``u = v = l'(0)``: the conjugate argmax at the zero discriminator."""
    d0 = float(problem.loss.derivative(0.0))
    return DualState(np.full(problem.n, d0), np.full(m, d0))


def _noise_rows(noise, rng, settings):
    if noise.kind == "discrete":
        return np.array(noise.atoms), np.array(noise.probs)
    return draw_noise(noise, rng, settings.batch_size), None


def _metric_row(it, problem, phi_g, pi, w, h, start, settings):
    g = _g(problem, phi_g, pi, w)
    loss_part = g - problem.reg.value(w)
    return {"iter": it, "h": h, "g_recovered": g, "gap": g - h,
            "div_estimate": 2.0 * float(problem.loss.value(0.0)) - loss_part,
            "wall_ms": (time.perf_counter() - start) * 1e3 if settings.timing else None}


def _log_due(it, settings):
    return it % settings.log_interval == 0 or it == settings.steps


def train_dual(problem, params, noise, settings, rng, state=None, callback=None):
    """Simultaneous ascent on ``(u, v, psi)`` for ``max_psi max_{u,v} h``.

    ``u`` and ``v`` take proximal steps on the conjugate terms, which keeps
    them inside the conjugate domain. Each step size is per unit of mass,
    so ``step_dual`` does not depend on ``N`` or ``M``. With gaussian noise a
    fresh batch is drawn every step and ``v`` restarts from ``l'(-D(G(z)))``
    under the previous discriminator. ``callback(row, params)`` runs after
    each logged row.
    """
    settings.validate()
    loss, reg = problem.loss, problem.reg
    m = noise.count if noise.kind == "discrete" else settings.batch_size
    state = state or initial_dual(problem, m)
    u, v = state.u.copy(), state.v.copy()
    w = np.zeros(problem.fmap.output_dim)
    metrics, start = [], time.perf_counter()
    phi_x, eta = problem.data_features, settings.step_dual
    for it in range(1, settings.steps + 1):
        atoms, probs = _noise_rows(noise, rng, settings)
        pi = _probs(atoms, probs)
        gen = generate(problem, params, atoms)
        phi_g = gen.phi
        if noise.kind == "gaussian":
            v = np.asarray(loss.derivative(-(phi_g @ w)), dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            w = reg.conjugate_gradient(_dual_point(phi_x, phi_g, pi, u, v))
        if not np.all(np.isfinite(w)):
            raise DivergedError(f"non-finite discriminator at iteration {it}", it)
        grads = _pull_back(problem, params, gen, -pi * v, w)
        u, v = dual_step(problem, phi_g, u, v, w, eta)
        params.ascend(grads, settings.step_psi)
        if _log_due(it, settings):
            phi_g = generate(problem, params, atoms).phi
            w = reg.conjugate_gradient(_dual_point(phi_x, phi_g, pi, u, v))
            h = _h(problem, phi_g, pi, u, v)
            if not np.isfinite(h):
                raise DivergedError(f"non-finite dual objective at iteration {it}", it)
            metrics.append(_metric_row(it, problem, phi_g, pi, w, h, start, settings))
            if callback is not None:
                callback(metrics[-1], params)
    return TrainResult(params, DualState(u, v, state.iteration + settings.steps), metrics)


def train_primal_baseline(problem, params, noise, settings, rng, w=None, callback=None):
    """Alternating baseline: ``inner_steps`` descent steps on ``w``, then one ascent step on ``psi``.

    Logged ``h`` is the dual objective at the conjugate argmax
    ``u = l'(D(x))``, ``v = l'(-D(G(z)))`` of the current ``w``.
    """
    settings.validate()
    loss, reg = problem.loss, problem.reg
    if w is None:
        w = reg.project(0.1 * rng.standard_normal(problem.fmap.output_dim))
    w = np.array(w, dtype=float)
    metrics, start = [], time.perf_counter()
    phi_x = problem.data_features
    for it in range(1, settings.steps + 1):
        atoms, probs = _noise_rows(noise, rng, settings)
        pi = _probs(atoms, probs)
        gen = generate(problem, params, atoms)
        phi_g = gen.phi
        w = inner_descent(problem, phi_g, pi, w, settings.step_w, settings.inner_steps)
        if not np.all(np.isfinite(w)):
            raise DivergedError(f"non-finite discriminator at iteration {it}", it)
        slope = -pi * loss.derivative(-(phi_g @ w))
        grads = _pull_back(problem, params, gen, slope, w)
        params.ascend(grads, settings.step_psi)
        if _log_due(it, settings):
            phi_g = generate(problem, params, atoms).phi
            u, v = loss.derivative(phi_x @ w), loss.derivative(-(phi_g @ w))
            h = _h(problem, phi_g, pi, u, v)
            if not np.isfinite(h):
                raise DivergedError(f"non-finite dual objective at iteration {it}", it)
            metrics.append(_metric_row(it, problem, phi_g, pi, w, h, start, settings))
            if callback is not None:
                callback(metrics[-1], params)
    return TrainResult(params, w, metrics)


def dual_step(problem, phi_g, u, v, w, eta):
    """One proximal ascent step on ``(u, v)`` given ``w = grad Omega*(s(u, v))``.

    Per unit of mass the gradient of the smooth part is ``D(x_i)`` for ``u_i``
    and ``-D(G(z_j))`` for ``v_j``; the prox handles the conjugate terms.
    """
    loss = problem.loss
    u = prox_conjugate(loss, u + eta * (problem.data_features @ w), eta, start=u)
    v = prox_conjugate(loss, v - eta * (phi_g @ w), eta, start=v)
    return u, v


def inner_descent(problem, phi_g, pi, w, step, iters):
    """``iters`` projected gradient steps on ``g`` in ``w``."""
    for _ in range(iters):
        w = problem.reg.project(w - step * primal_gradient(problem, phi_g, pi, w))
    return w


def primal_gradient(problem, phi_g, pi, w):
    loss, phi_x = problem.loss, problem.data_features
    return (problem.reg.gradient(w) + phi_x.T @ loss.derivative(phi_x @ w) / len(phi_x)
            - phi_g.T @ (pi * loss.derivative(-(phi_g @ w))))


# duality gap audit ---------------------------------------------------------

class AuditResult(NamedTuple):
    primal_opt: float
    dual_opt: float
    gap: float
    w: np.ndarray
    u: np.ndarray
    v: np.ndarray


def _second_derivative(loss, a):
    if loss is LOGISTIC:
        return expit(a) * expit(-a)
    if loss is EXPONENTIAL:
        return np.exp(-a)
    if loss is LEAST_SQUARE:
        return np.full_like(a, 2.0)
    raise UnsupportedOperationError(f"{loss.name} loss is not twice differentiable")


def _primal_newton(problem, phi_g, pi, tol, max_iter):
    """Damped Newton on the smooth, strongly convex l2 primal."""
    loss, lam, phi_x = problem.loss, problem.reg.strength, problem.data_features
    a = np.concatenate([np.full(len(phi_x), 1.0 / len(phi_x)), pi])
    phi = np.vstack([phi_x, -phi_g])   # margins D(x_i) and -D(G(z_j)) in one matrix

    def obj(w):
        return 0.5 * lam * w @ w + a @ loss.value(phi @ w)

    w = np.zeros(phi.shape[1])
    f = obj(w)
    for _ in range(max_iter):
        m = phi @ w
        grad = lam * w + phi.T @ (a * loss.derivative(m))
        if np.linalg.norm(grad) <= tol:
            return w, f
        hess = lam * np.eye(len(w)) + phi.T @ (phi * (a * _second_derivative(loss, m))[:, None])
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while t > 1e-12:
            cand = w - t * step
            fc = obj(cand)
            if fc <= f - 1e-4 * t * grad @ step:
                break
            t *= 0.5
        w, f = cand, fc
    raise BudgetExceededError(f"Newton did not reach ||grad|| <= {tol:g} in {max_iter} iterations", best=(w, f))


def _primal_conic(problem, phi_g, pi):
    """Primal optimum through a conic solver, for nonsmooth or constrained cases."""
    import cvxpy as cp
    loss, reg, phi_x = problem.loss, problem.reg, problem.data_features
    w = cp.Variable(phi_x.shape[1])
    margins = [(phi_x @ w, np.full(len(phi_x), 1.0 / len(phi_x))), (-(phi_g @ w), pi)]

    def loss_expr(m):
        if loss is LOGISTIC:
            return cp.logistic(-m)
        if loss is HINGE:
            return cp.pos(1 - m)
        if loss is EXPONENTIAL:
            return cp.exp(-m)
        return cp.square(1 - m)

    obj = sum(weights @ loss_expr(m) for m, weights in margins)
    cons = []
    if reg.kind == "l2":
        obj = obj + 0.5 * reg.strength * cp.sum_squares(w)
    else:
        cons = [cp.norm(w, 2) <= reg.strength]
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-9, tol_gap_rel=1e-9, tol_feas=1e-9, max_iter=500)
    if prob.status != "optimal":
        raise BudgetExceededError(f"conic primal solve ended with status {prob.status}")
    wv = reg.project(np.asarray(w.value))
    return wv, _g(problem, phi_g, pi, wv)


def solve_dual(problem, phi_g, pi, tol=1e-8, max_iter=200_000, state=None):
    """Maximize ``h`` by monotone accelerated proximal ascent with backtracking.

    The metric weights each ``u_i`` by ``1/N`` and each ``v_j`` by ``pi_j``, so
    the step for every coordinate is taken per unit of mass. Stops when the
    gradient mapping has norm at most ``tol`` in that metric.
    """
    loss, reg, phi_x = problem.loss, problem.reg, problem.data_features
    n = len(phi_x)
    a = np.concatenate([np.full(n, 1.0 / n), pi])
    phi = np.vstack([-phi_x, phi_g])          # s = phi^T (a * x) with x = (u, v)

    def smooth(x):
        s = phi.T @ (a * x)
        return -reg.conjugate(s), s

    def value(x):
        return smooth(x)[0] - float(a @ conjugate_closed_form(loss, x))

    x = (np.concatenate([state.u, state.v]) if state is not None
         else np.full(len(a), float(loss.derivative(0.0))))
    y, t_mom = x.copy(), 1.0
    fx = value(x)
    eta = reg.strength if reg.kind == "l2" else 1.0
    for _ in range(max_iter):
        fy, s = smooth(y)
        d = phi @ reg.conjugate_gradient(s)   # per-unit-mass gradient is -d
        while True:
            z = prox_conjugate(loss, y - eta * d, eta)
            fz_s, _ = smooth(z)
            diff = z - y
            if fz_s >= fy - d @ (a * diff) - (a @ diff ** 2) / (2 * eta) - 1e-15 * (1 + abs(fy)):
                break
            eta *= 0.5
        mapping = np.sqrt(a @ diff ** 2) / eta
        fz = fz_s - float(a @ conjugate_closed_form(loss, z))
        x_prev = x
        if fz >= fx:
            x, fx = z, fz
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_mom ** 2))
        y = x + (t_mom / t_next) * (z - x) + ((t_mom - 1) / t_next) * (x - x_prev)
        t_mom = t_next
        eta *= 1.1
        if mapping <= tol:
            return x[:n], x[n:], fx
    raise BudgetExceededError(f"dual ascent did not reach gradient mapping <= {tol:g} in {max_iter} iterations",
                              best=(x[:n], x[n:], fx))


def duality_gap_audit(problem, params, atoms, probs=None, tol=1e-8, max_iter=200_000):
    """Independent primal and dual optima on a frozen generator.

    Smooth losses with the l2 regularizer use Newton's method on the primal;
    the hinge loss and the ball use a conic solver. The dual always uses
    accelerated proximal ascent on ``h``.
    """
    pi = _probs(atoms, probs)
    phi_g = generate(problem, params, atoms).phi
    if problem.reg.kind == "l2" and problem.loss is not HINGE:
        w, p = _primal_newton(problem, phi_g, pi, tol, 200)
    else:
        w, p = _primal_conic(problem, phi_g, pi)
    u, v, d = solve_dual(problem, phi_g, pi, tol, max_iter)
    return AuditResult(p, d, p - d, w, u, v)

"""Random Fourier features for the Gaussian kernel ``exp(-1/2 u^T Sigma u)``.

A map holds the base draws ``e_i ~ N(0, I)`` and ``Sigma^{1/2}``; frequencies
are ``omega_i^T = e_i^T Sigma^{1/2}`` so that ``Sigma = S^T S`` for the stored
``S = Sigma^{1/2}``. Feature layout: all cosines, then all sines.
"""

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError

RANK_RTOL = 1e-10
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FeatureMap:
    sigma_half: np.ndarray   # (d, d)
    base_draws: np.ndarray   # (D, d), rows e_i
    frequencies: np.ndarray  # (D, d), rows omega_i

    @property
    def input_dim(self):
        return self.sigma_half.shape[0]

    @property
    def feature_count(self):
        return self.base_draws.shape[0]

    @property
    def output_dim(self):
        return 2 * self.feature_count

    @classmethod
    def from_draws(cls, sigma_half, base_draws):
        s = np.atleast_2d(np.asarray(sigma_half, dtype=float))
        e = np.atleast_2d(np.asarray(base_draws, dtype=float))
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise InvalidInputError(f"sigma_half must be square, got shape {s.shape}")
        if e.shape[1] != s.shape[0]:
            raise InvalidInputError(f"base draws have dimension {e.shape[1]}, expected {s.shape[0]}")
        s.setflags(write=False)
        e.setflags(write=False)
        freq = e @ s
        freq.setflags(write=False)
        return cls(s, e, freq)


def as_sigma_half(sigma, d):
    """Scalar -> ``sigma * I``; matrices pass through."""
    s = np.asarray(sigma, dtype=float)
    return s * np.eye(d) if s.ndim == 0 else s


def build_feature_map(d, D, sigma_half, rng):
    if d < 1 or D < 1:
        raise InvalidInputError(f"need d >= 1 and D >= 1, got d={d}, D={D}")
    s = as_sigma_half(sigma_half, d)
    if s.shape != (d, d):
        raise InvalidInputError(f"sigma_half must be {d}x{d}, got shape {s.shape}")
    return FeatureMap.from_draws(s, rng.standard_normal((D, d)))


def _points(fmap, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != fmap.input_dim:
        raise InvalidInputError(f"input dimension {pts.shape[-1]} does not match map dimension {fmap.input_dim}")
    return pts, single


def feature_parts(fmap, x):
    """``(cos, sin)`` of the projections ``omega_i^T x``, unscaled, for reuse in a VJP."""
    pts, _ = _points(fmap, x)
    proj = pts @ fmap.frequencies.T
    return np.cos(proj), np.sin(proj)


def features(fmap, x, parts=None):
    """``[cos(omega_i^T x), sin(omega_i^T x)] / sqrt(D)`` for one point or a batch."""
    pts, single = _points(fmap, x)
    c, s = parts if parts is not None else feature_parts(fmap, pts)
    out = np.concatenate([c, s], axis=1) / np.sqrt(fmap.feature_count)
    return out[0] if single else out


def features_vjp(fmap, x, grad_out, parts=None):
    """Pull a gradient w.r.t. the features back to the inputs, row by row."""
    pts, single = _points(fmap, x)
    g = np.atleast_2d(grad_out)
    D = fmap.feature_count
    c, s = parts if parts is not None else feature_parts(fmap, pts)
    coeff = (-s * g[:, :D] + c * g[:, D:]) / np.sqrt(D)
    out = coeff @ fmap.frequencies
    return out[0] if single else out


def exact_kernel(sigma_half, x, x2):
    s = np.atleast_2d(np.asarray(sigma_half, dtype=float))
    u = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    su = u @ s.T
    return np.exp(-0.5 * np.sum(su * su, axis=-1))


def approx_kernel(fmap, x, x2):
    return np.sum(features(fmap, x) * features(fmap, x2), axis=-1)


def approx_error(fmap, x, x2):
    """``(max, mean)`` of ``|approx - exact|`` over paired rows of ``x`` and ``x2``."""
    x, x2 = np.atleast_2d(x), np.atleast_2d(x2)
    if len(x) == 0 or x.shape != x2.shape:
        raise InvalidInputError("need a nonempty, equal-shape set of pairs")
    err = np.abs(approx_kernel(fmap, x, x2) - exact_kernel(fmap.sigma_half, x, x2))
    return float(err.max()), float(err.mean())


def sample_ball(rng, n, d, radius):
    """Uniform draws from the closed ball of the given radius."""
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(n, 1)) ** (1.0 / d)
    return direction * r


@dataclass(frozen=True)
class InjectivityCertificate:
    rank_ok: bool
    norm_product: float
    threshold: float = TWO_PI

    @property
    def certified(self):
        return bool(self.rank_ok and self.norm_product < self.threshold)


def _rank(mat):
    sv = np.linalg.svd(np.atleast_2d(mat), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def certify_injectivity(fmap, diameter):
    """Sufficient condition for the feature map to be one-to-one on a set of the given diameter.

    ``rank_ok`` requires the base draws to span R^d and ``Sigma^{1/2}`` to be
    nonsingular; the norm product uses the Frobenius norm of ``Sigma^{1/2}``.
    """
    if diameter <= 0:
        raise InvalidInputError("diameter must be positive")
    d = fmap.input_dim
    rank_ok = _rank(fmap.base_draws) == d and _rank(fmap.sigma_half) == d
    prod = (np.linalg.norm(fmap.sigma_half, "fro") * diameter
            * np.linalg.norm(fmap.base_draws, axis=1).max())
    return InjectivityCertificate(rank_ok, float(prod))


def feature_distance(fmap, x, x2):
    return np.linalg.norm(features(fmap, x) - features(fmap, x2), axis=-1)


def construct_collision(fmap, diameter=None, kmax=3, tol=1e-9, anchor=None):
    """Find ``x != x'`` with identical features, or return ``None``.

    Looks for a shift ``delta`` with ``omega_i^T delta`` in ``2 pi Z`` for every
    ``i``: first in the null space of the frequency matrix, then on the lattice
    spanned by ``d`` independent frequency rows with integer multipliers up
    to ``kmax``. With ``diameter`` set, only shifts no longer than it count.
    """
    omega = fmap.frequencies
    D, d = omega.shape
    x = np.zeros(d) if anchor is None else np.asarray(anchor, dtype=float)
    limit = np.inf if diameter is None else diameter

    def accept(delta):
        n = np.linalg.norm(delta)
        if n == 0 or n > limit:
            return None
        x2 = x + delta
        if feature_distance(fmap, x, x2) <= tol:
            return x, x2
        return None

    _, sv, vt = np.linalg.svd(omega)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0
    if rank < d:
        delta = vt[rank]
        if diameter is not None:
            delta = delta * (0.5 * diameter)
        found = accept(delta)
        if found:
            return found

    # pick d linearly independent rows greedily
    rows = []
    for i in range(D):
        if _rank(omega[rows + [i]]) == len(rows) + 1:
            rows.append(i)
        if len(rows) == d:
            break
    if len(rows) < d:
        return None
    basis = omega[rows]
    best = None
    for k in itertools.product(range(-kmax, kmax + 1), repeat=d):
        if not any(k):
            continue
        delta = np.linalg.solve(basis, TWO_PI * np.asarray(k, dtype=float))
        phase = omega @ delta / TWO_PI
        if np.max(np.abs(phase - np.round(phase))) > 1e-9:
            continue
        found = accept(delta)
        if found and (best is None or np.linalg.norm(found[1] - found[0]) < np.linalg.norm(best[1] - best[0])):
            best = found
    return best


def approx_kernel_shift(fmap, u):
    """Monte-Carlo kernel ``mean_i cos(omega_i^T u)`` at shifts ``u``; equals the feature inner product."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    return np.cos(u @ fmap.frequencies.T).mean(axis=1)


def doubling_ratio(sigma_half, x, x2, D, rng, repeats=8):
    """Estimated ``meanAbs(2D) / meanAbs(D)`` over ``2 * repeats`` independent maps.

    Each 2D-feature map is the union of two independent D-feature maps, so
    one set of draws serves both sizes. Averaging over maps matters: the
    pairs in one map share its draws, so a single map's meanAbs is noisy.
    """
    x, x2 = np.atleast_2d(x), np.atleast_2d(x2)
    d = x.shape[1]
    s = as_sigma_half(sigma_half, d)
    exact = exact_kernel(s, x, x2)
    approx = np.array([approx_kernel_shift(build_feature_map(d, D, s, rng), x - x2)
                       for _ in range(2 * repeats)])
    small = np.abs(approx - exact).mean()
    large = np.abs(0.5 * (approx[0::2] + approx[1::2]) - exact).mean()
    return float(large / small), float(small), float(large)


class KernelTestResult(NamedTuple):
    max_abs: float
    mean_abs: float
    ratio: float       # meanAbs(2D) / meanAbs(D), averaged over independent maps
    exact: np.ndarray
    approx: np.ndarray


def kernel_test(d=2, D=2048, sigma=1.0, seed=0, pairs=1000, radius=3.0, repeats=8):
    """Kernel approximation error on seeded pairs drawn uniformly from a ball."""
    rng = np.random.default_rng(seed)
    x, x2 = sample_ball(rng, pairs, d, radius), sample_ball(rng, pairs, d, radius)
    fmap = build_feature_map(d, D, sigma, rng)
    exact = exact_kernel(fmap.sigma_half, x, x2)
    approx = approx_kernel_shift(fmap, x - x2)   # same values as the feature inner product, one cosine each
    err = np.abs(approx - exact)
    ratio, _, _ = doubling_ratio(sigma, x, x2, D, rng, repeats)
    return KernelTestResult(float(err.max()), float(err.mean()), ratio, exact, approx)


def min_feature_distance(fmap, rng, radius, pairs=10_000, min_sep=1e-8):
    """Smallest feature distance over random distinct pairs in a ball.

    Half of the pairs are spread over the ball, the other half sit at
    separations between ``min_sep`` and ``1e-3`` to probe near-collisions.
    """
    d = fmap.input_dim
    far = pairs // 2
    x = sample_ball(rng, pairs, d, radius)
    x2 = np.empty_like(x)
    x2[:far] = sample_ball(rng, far, d, radius)
    direction = rng.standard_normal((pairs - far, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    sep = 10.0 ** rng.uniform(np.log10(min_sep), -3.0, size=(pairs - far, 1))
    x2[far:] = x[far:] + sep * direction
    keep = np.linalg.norm(x - x2, axis=1) >= min_sep
    return float(feature_distance(fmap, x[keep], x2[keep]).min())

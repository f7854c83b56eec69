"""Gaussian-mixture densities and tensor-product Simpson quadrature.

These are the ground-truth oracles for every divergence identity in the
package: densities are analytic, integrals are evaluated on a fixed grid.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInputError, NumericError

WEIGHT_TOL = 1e-12
DEFAULT_WIDTH = 10.0  # truncation half-width, in standard deviations
DEFAULT_NODES = 2001


@dataclass(frozen=True)
class Density:
    """Finite Gaussian mixture.

    Parameters
    ----------
    weights : array of shape (K,)
    means : array of shape (K, d)
    covs : array of shape (K, d, d)
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)
    _logdet: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(len(w), -1)
        k, d = mu.shape
        cov = np.asarray(self.covs, dtype=float)
        if cov.ndim == 1 and d == 1:
            cov = cov.reshape(k, 1, 1)
        if cov.shape != (k, d, d) or w.shape != (k,):
            raise InvalidInputError(
                f"inconsistent mixture shapes: weights {w.shape}, means {mu.shape}, covs {cov.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidInputError(f"mixture weights must be nonnegative and sum to 1, got {w.tolist()}")
        if not np.allclose(cov, np.swapaxes(cov, 1, 2), rtol=0, atol=1e-14):
            raise InvalidInputError("covariance matrices must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise InvalidInputError("covariance matrices must be positive definite") from None
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_logdet", logdet)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def kind(self):
        return "gaussian" if len(self.weights) == 1 else "mixture"

    @classmethod
    def gaussian(cls, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(len(mean))
        return cls(np.ones(1), mean[None, :], cov[None, :, :])

    @classmethod
    def normal1d(cls, mean=0.0, var=1.0):
        return cls.gaussian([mean], [[var]])

    @classmethod
    def mixture1d(cls, weights, means, variances):
        means = np.asarray(means, dtype=float)
        return cls(np.asarray(weights, dtype=float), means[:, None],
                   np.asarray(variances, dtype=float)[:, None, None])

    def box(self, width=DEFAULT_WIDTH):
        """Per-axis truncation interval: component means +- width standard deviations."""
        sd = np.sqrt(np.diagonal(self.covs, axis1=1, axis2=2))
        lo = (self.means - width * sd).min(axis=0)
        hi = (self.means + width * sd).max(axis=0)
        return list(zip(lo.tolist(), hi.tolist()))


def _as_points(d, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = x.reshape(1, -1) if single else x
    if d.dim == 1 and x.ndim == 1 and x.size != 1:
        # a flat array of 1D points
        pts, single = x.reshape(-1, 1), False
    if pts.shape[-1] != d.dim:
        raise InvalidInputError(f"point dimension {pts.shape[-1]} does not match density dimension {d.dim}")
    return pts, single


def pdf(d, x):
    """Mixture density at ``x``: a single point (d,) or a batch (n, d)."""
    pts, single = _as_points(d, x)
    out = np.zeros(len(pts))
    for w, mu, chol, logdet in zip(d.weights, d.means, d._chol, d._logdet):
        if w == 0.0:
            continue
        diff = (pts - mu).T
        sol = np.linalg.solve(chol, diff) if d.dim > 1 else diff / chol[0, 0]
        maha = np.sum(sol * sol, axis=0)
        out += w * np.exp(-0.5 * (maha + logdet + d.dim * np.log(2.0 * np.pi)))
    return float(out[0]) if single else out


def sample(d, rng, n):
    """Draw ``n`` points of shape (n, d): pick a component by weight, then a Gaussian draw."""
    if n < 1:
        raise InvalidInputError(f"sample count must be >= 1, got {n}")
    comp = rng.choice(len(d.weights), size=n, p=d.weights)
    eps = rng.standard_normal((n, d.dim))
    return d.means[comp] + np.einsum("nij,nj->ni", d._chol[comp], eps)


@dataclass(frozen=True)
class QuadratureGrid:
    """Composite Simpson grid on a 1D interval or a 2D rectangle."""

    bounds: tuple
    nodes: int = DEFAULT_NODES

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(b) not in (1, 2):
            raise InvalidInputError("quadrature supports dimension 1 or 2")
        if not all(np.isfinite(lo) and np.isfinite(hi) and lo < hi for lo, hi in b):
            raise InvalidInputError(f"quadrature bounds must be finite and ordered, got {b}")
        if self.nodes < 3 or self.nodes % 2 == 0:
            raise InvalidInputError(f"Simpson rule needs an odd node count >= 3, got {self.nodes}")
        object.__setattr__(self, "bounds", b)

    @property
    def dim(self):
        return len(self.bounds)

    @classmethod
    def covering(cls, *densities, nodes=DEFAULT_NODES, width=DEFAULT_WIDTH):
        boxes = [d.box(width) for d in densities]
        dims = {len(b) for b in boxes}
        if len(dims) != 1:
            raise InvalidInputError("densities must share a dimension")
        bounds = [(min(b[i][0] for b in boxes), max(b[i][1] for b in boxes)) for i in range(dims.pop())]
        return cls(tuple(bounds), nodes)

    def axes(self):
        return [np.linspace(lo, hi, self.nodes) for lo, hi in self.bounds]

    def points(self):
        """All grid nodes, shape (nodes**dim, dim)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def weights(self):
        """Tensor-product Simpson weights aligned with :meth:`points`."""
        per_axis = [_simpson_weights(self.nodes, lo, hi) for lo, hi in self.bounds]
        w = per_axis[0]
        for extra in per_axis[1:]:
            w = np.outer(w, extra).ravel()
        return w


def _simpson_weights(n, lo, hi):
    h = (hi - lo) / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def integrate_values(values, grid):
    """Simpson sum of precomputed node values (ordered as ``grid.points()``)."""
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        loc = grid.points()[idx]
        raise NumericError(f"integrand is not finite at node {loc.tolist()}", location=loc)
    return float(np.dot(grid.weights(), values))


def integrate(g, grid):
    """Integrate ``g`` over ``grid``; ``g`` maps an (n, dim) array of nodes to n values."""
    return integrate_values(g(grid.points()), grid)


def cdf1d(d, x):
    """Distribution function of a one-dimensional density."""
    if d.dim != 1:
        raise InvalidInputError(f"cdf1d needs a one-dimensional density, got dimension {d.dim}")
    x = np.asarray(x, dtype=float)
    sd = np.sqrt(d.covs[:, 0, 0])
    return np.sum(d.weights * ndtr((x[..., None] - d.means[:, 0]) / sd), axis=-1)


def histogram_tv(samples, d, bins=64, lo=-6.0, hi=6.0):
    """Total variation between a sample histogram and the exact bin masses of ``d``.

    Samples and mass outside ``[lo, hi]`` are not counted, so both sides may
    sum to slightly less than one.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise InvalidInputError("need at least one sample")
    edges = np.linspace(lo, hi, bins + 1)
    p = np.diff(cdf1d(d, edges))
    q = np.histogram(samples, bins=edges)[0] / samples.size
    return 0.5 * float(np.abs(p - q).sum())

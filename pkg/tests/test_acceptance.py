"""Acceptance suite: one recorded line per criterion, printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import special

from kgan.cli import run_experiment
from kgan.config import parse_config
from kgan.densities import Density, sample
from kgan.divergences import PAIRS, f_divergence, f_from_loss, verify_pairs
from kgan.generator import backward, flat_gradients, forward, init_params
from kgan.losses import (
    CONVEX_LOSSES, EXPONENTIAL, HINGE, LEAST_SQUARE, LOGISTIC, biconjugate_numeric, check_legendre,
    check_young, conjugate_closed_form, conjugate_numeric,
)
from kgan.rff import (
    build_feature_map, certify_injectivity, construct_collision, feature_distance, kernel_test,
    min_feature_distance,
)
from kgan.trainer import (
    Problem, Regularizer, dual_objective, duality_gap_audit, h_gradient_psi, primal_objective,
)

EXAMPLE = Path(__file__).resolve().parents[1] / "configs" / "example.cfg"
SMOOTH_LOSSES = (LOGISTIC, EXPONENTIAL, LEAST_SQUARE)


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def central_diff(fn, vec, h=1e-5):
    out = np.zeros_like(vec)
    for i in range(vec.size):
        e = np.zeros_like(vec)
        e[i] = h
        out[i] = (fn(vec + e) - fn(vec - e)) / (2 * h)
    return out


def domain_grid(loss, n, bound=5.0, inset=0.0):
    lo, hi = loss.conjugate_domain
    return np.linspace(max(lo, -bound) + inset, min(hi, bound) - inset, n)


# 1 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pairs():
    start = time.perf_counter()
    rows = verify_pairs()
    return {(r[0], r[1]): r for r in rows}, time.perf_counter() - start


class TestLossDivergenceIdentity:
    TITLE = "loss/divergence identity"

    def test_all_rows(self, pairs, record):
        rows, _ = pairs
        worst = max(r[4] for r in rows.values())
        assert len(rows) == 20
        assert record(1, self.TITLE, "20 rows |lhs - rhs| <= 1e-4", worst <= 1e-4, f"max {worst:.2e}")

    def test_spot_values(self, pairs, record):
        rows, _ = pairs
        tv = 2.0 * special.ndtr(0.5) - 1.0
        spots = [
            ("logistic mu=0 = log 2", rows["logistic", 0.0][2], math.log(2.0), 1e-6),
            ("hinge mu=1 = 1 - TV", rows["hinge", 1.0][2], 1.0 - tv, 1e-4),
            ("exponential mu=1 = exp(-1/8)", rows["exponential", 1.0][2], math.exp(-0.125), 1e-4),
        ]
        ok = True
        for name, got, want, tol in spots:
            ok &= record(1, self.TITLE, name, abs(got - want) <= tol, f"|diff| {abs(got - want):.1e} tol {tol:g}")
        assert ok

    def test_runtime(self, pairs, record):
        assert record(1, self.TITLE, "runtime < 5 s", pairs[1] < 5.0, f"{pairs[1]:.2f} s")


# 2 ---------------------------------------------------------------------------

class TestFAtOne:
    TITLE = "f(1) = -2 l(0); I_f(P||P) = f(1)"

    @pytest.mark.parametrize("name", [n for n in PAIRS if n != "zero-one"])
    def test_convex_losses(self, name, record):
        pair = PAIRS[name]
        f1 = f_from_loss(pair.loss, 1.0)
        diff = abs(f1 + 2.0 * float(pair.loss.value(0.0)))
        ok = record(2, self.TITLE, f"{name} f(1) + 2 l(0)", diff <= 1e-9, f"|diff| {diff:.1e}")
        P = Density.normal1d(0.3, 1.7)
        gap = abs(f_divergence(pair, P, P) - f1)
        ok &= record(2, self.TITLE, f"{name} I_f(P||P) - f(1)", gap <= 1e-8, f"|diff| {gap:.1e}")
        assert ok

    @pytest.mark.xfail(strict=True, reason="zero-one: inf_a [l(a) + l(-a)] = 1, so f(1) = -1 while -2 l(0) = -2")
    def test_zero_one(self, record):
        pair = PAIRS["zero-one"]
        f1 = f_from_loss(pair.loss, 1.0)
        P = Density.normal1d(0.3, 1.7)
        gap = abs(f_divergence(pair, P, P) - f1)
        record(2, self.TITLE, "zero-one I_f(P||P) - f(1)", gap <= 1e-8, f"|diff| {gap:.1e}")
        diff = abs(f1 + 2.0 * float(pair.loss.value(0.0)))
        assert record(2, self.TITLE, "zero-one f(1) + 2 l(0)", diff <= 1e-9,
                      f"f(1) = {f1:g}, -2 l(0) = {-2 * float(pair.loss.value(0.0)):g}")


# 3 ---------------------------------------------------------------------------

class TestConjugateSuite:
    TITLE = "Fenchel conjugate suite"

    @pytest.mark.parametrize("loss", CONVEX_LOSSES, ids=lambda s: s.name)
    def test_biconjugate(self, loss, record):
        a = np.linspace(-5.0, 5.0, 41)
        err = float(np.max(np.abs(biconjugate_numeric(loss, a) - loss.value(a))))
        assert record(3, self.TITLE, f"{loss.name} biconjugate", err <= 1e-3, f"max {err:.1e}")

    @pytest.mark.parametrize("loss", CONVEX_LOSSES, ids=lambda s: s.name)
    def test_young_grid(self, loss, record):
        s = np.linspace(-5.0, 5.0, 101)
        t = domain_grid(loss, 101)
        gap = check_young(loss, s[:, None], t[None, :])
        worst = float(gap.min())
        assert record(3, self.TITLE, f"{loss.name} Young gap 101x101", worst >= -1e-10, f"min {worst:.1e}")

    @pytest.mark.parametrize("loss", SMOOTH_LOSSES, ids=lambda s: s.name)
    def test_legendre(self, loss, record):
        err = float(np.max(check_legendre(loss, np.linspace(-5.0, 5.0, 101))))
        assert record(3, self.TITLE, f"{loss.name} Legendre", err <= 1e-6, f"max {err:.1e}")

    @pytest.mark.parametrize("loss", CONVEX_LOSSES, ids=lambda s: s.name)
    def test_closed_vs_numeric(self, loss, record):
        t = domain_grid(loss, 41, inset=0.01)
        err = float(np.max(np.abs(conjugate_closed_form(loss, t) - conjugate_numeric(loss, t).value)))
        assert record(3, self.TITLE, f"{loss.name} closed vs numeric", err <= 1e-5, f"max {err:.1e}")


# 4 ---------------------------------------------------------------------------

def test_kernel_approximation(record):
    title = "kernel approximation"
    start = time.perf_counter()
    res = kernel_test(d=2, D=2048, sigma=1.0, seed=0, pairs=1000, radius=3.0)
    elapsed = time.perf_counter() - start
    target = 1.0 / math.sqrt(2.0)
    ok = record(4, title, "meanAbs <= 0.02", res.mean_abs <= 0.02, f"{res.mean_abs:.4f}")
    ok &= record(4, title, "maxAbs <= 0.08", res.max_abs <= 0.08, f"{res.max_abs:.4f}")
    ok &= record(4, title, "doubling ratio 1/sqrt2 +- 30%", abs(res.ratio - target) <= 0.3 * target,
                 f"{res.ratio:.3f}")
    ok &= record(4, title, "runtime < 2 s", elapsed < 2.0, f"{elapsed:.2f} s")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_injectivity(record):
    title = "injectivity"
    rng = np.random.default_rng(0)
    fmap = build_feature_map(2, 16, 0.1, rng)
    cert = certify_injectivity(fmap, 6.0)   # radius-3 ball
    ok = record(5, title, "certificate holds", cert.certified,
                f"norm product {cert.norm_product:.3f} < 2 pi")
    dist = min_feature_distance(fmap, rng, 3.0, pairs=10_000, min_sep=1e-8)
    ok &= record(5, title, "min feature distance > 1e-12 over 1e4 pairs", dist > 1e-12, f"{dist:.2e}")
    loose = build_feature_map(3, 2, 1.0, rng)
    pair = construct_collision(loose)
    coll = float(feature_distance(loose, *pair)) if pair is not None else math.inf
    ok &= record(5, title, "D < d map not certified", not certify_injectivity(loose, 6.0).certified)
    ok &= record(5, title, "collision distance <= 1e-9", coll <= 1e-9, f"{coll:.1e}")
    assert ok


# 6 ---------------------------------------------------------------------------

def duality_instance(loss):
    """N = 64 real points, M = 64 atoms, D = 32, l2 with lambda = 1."""
    rng = np.random.default_rng(0)
    data = sample(Density.mixture1d([0.5, 0.5], [-2.0, 2.0], [0.25, 0.25]), rng, 64)
    fmap = build_feature_map(1, 32, 1.0, rng)
    params = init_params((2, 16, 16, 1), rng)
    return Problem(data, fmap, loss, Regularizer.l2(1.0)), params, rng.standard_normal((64, 2))


@pytest.mark.parametrize("loss", [LOGISTIC, HINGE], ids=lambda s: s.name)
def test_duality(loss, record):
    title = "duality"
    start = time.perf_counter()
    pr, params, atoms = duality_instance(loss)
    rng = np.random.default_rng(1)
    lo, hi = loss.conjugate_domain
    worst = math.inf
    for _ in range(200):
        w = rng.normal(scale=2.0, size=pr.fmap.output_dim)
        u, v = rng.uniform(lo, hi, size=(2, 64))
        worst = min(worst, primal_objective(pr, params, atoms, w) - dual_objective(pr, params, atoms, u, v))
    res = duality_gap_audit(pr, params, atoms)
    # probes near the optimum, where the bound is tight
    for scale in (1e-2, 1e-4, 1e-6):
        for _ in range(20):
            w = res.w + scale * rng.normal(size=res.w.shape)
            u = np.clip(res.u + scale * rng.normal(size=64), lo, hi)
            v = np.clip(res.v + scale * rng.normal(size=64), lo, hi)
            worst = min(worst, primal_objective(pr, params, atoms, w) - dual_objective(pr, params, atoms, u, v))
    elapsed = time.perf_counter() - start
    tol = 1e-5 * (1.0 + abs(res.primal_opt))
    ok = record(6, title, f"{loss.name} weak duality g - h >= -1e-8", worst >= -1e-8, f"min {worst:.2e}")
    ok &= record(6, title, f"{loss.name} converged gap", -1e-8 <= res.gap <= tol,
                 f"gap {res.gap:.1e} tol {tol:.1e}")
    ok &= record(6, title, f"{loss.name} runtime < 30 s", elapsed < 30.0, f"{elapsed:.2f} s")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_generator_gradients(record):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        g = init_params((2, 16, 16, 1), rng)
        g = g.with_flat(g.flat() + 0.1 * rng.normal(size=g.size))
        z, og = rng.normal(size=(4, 2)), rng.normal(size=(4, 1))
        _, tape = forward(g, z)
        grads, _ = backward(g, tape, og)
        fd = central_diff(lambda p: np.sum(og * forward(g.with_flat(p), z)[0]), g.flat())
        worst = max(worst, rel_err(flat_gradients(grads), fd))
    assert record(7, "gradient checks", "generator backward, 50 probes", worst <= 1e-4, f"max rel {worst:.1e}")


def test_dual_objective_gradient(record):
    rng = np.random.default_rng(7)
    data = rng.normal(size=(8, 1))
    fmap = build_feature_map(1, 16, 1.0, rng)
    pr = Problem(data, fmap, LOGISTIC, Regularizer.l2(0.5))
    worst = 0.0
    for _ in range(50):
        params = init_params((2, 6, 6, 1), rng)
        atoms = rng.normal(size=(6, 2))
        u, v = rng.uniform(-1.0, 0.0, size=8), rng.uniform(-1.0, 0.0, size=6)
        grad = h_gradient_psi(pr, params, atoms, u, v)
        fd = central_diff(lambda p: dual_objective(pr, params.with_flat(p), atoms, u, v), params.flat())
        worst = max(worst, rel_err(grad, fd))
    assert record(7, "gradient checks", "grad_psi h, 50 probes", worst <= 1e-4, f"max rel {worst:.1e}")


# 8 ---------------------------------------------------------------------------

def test_end_to_end_smoke(tmp_path, record):
    title = "end-to-end smoke"
    cfg = parse_config(EXAMPLE)
    assert cfg.model.loss == "logistic" and cfg.model.reg == "l2" and cfg.model.hidden == (16, 16)
    assert cfg.noise.dim == 2 and cfg.train.steps == 20000 and len(cfg.data.means) == 2
    start = time.perf_counter()
    dual = run_experiment(cfg, tmp_path / "dual")
    t_dual = time.perf_counter() - start
    primal_cfg = replace(cfg, train=replace(cfg.train, mode="primal"))
    start = time.perf_counter()
    primal = run_experiment(primal_cfg, tmp_path / "primal")
    t_primal = time.perf_counter() - start
    ok = record(8, title, "dual histogram TV <= 0.15", dual.tv <= 0.15, f"TV {dual.tv:.4f}")
    ok &= record(8, title, "primal baseline finite divergence", np.isfinite(primal.final_div),
                 f"div {primal.final_div:.4g}, TV {primal.tv:.4f}")
    ok &= record(8, title, "dual run < 60 s", t_dual < 60.0, f"{t_dual:.1f} s")
    record(8, title, "primal run time (reported)", True, f"{t_primal:.1f} s, total {t_dual + t_primal:.1f} s")
    assert ok

"""Command line runner: ``kgan {train, verify-pairs, kernel-test, duality-gap, report}``.

Exit codes: 0 ok, 1 a check failed, 2 invalid input, 3 numeric failure.
Every file a command writes lives under its output directory.
"""

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .config import ExperimentConfig, dump, parse_config, with_overrides
from .densities import Density, histogram_tv, sample
from .divergences import MU_VALUES, verify_pairs
from .errors import InvalidInputError, KganError
from .generator import NoiseSource, draw_noise, forward, init_params, write_checkpoint
from .losses import get_loss
from .rff import (
    build_feature_map, certify_injectivity, construct_collision, feature_distance, kernel_test,
    min_feature_distance,
)
from .trainer import (
    METRIC_COLUMNS, Problem, Regularizer, TrainSettings, duality_gap_audit, train_dual,
    train_primal_baseline,
)

REPORT_COLUMNS = ("check", "lhs", "rhs", "tolerance", "relation", "pass")
PAIR_COLUMNS = ("loss", "mu", "lhs_general_loss", "rhs_closed_form", "abs_diff")
KERNEL_COLUMNS = ("pairId", "exact", "approx", "absErr")
PAIR_TOL = 1e-4
KERNEL_RADIUS = 3.0
KERNEL_MEAN_TOL, KERNEL_MAX_TOL = 0.02, 0.08
RATIO_TARGET = 1.0 / math.sqrt(2.0)
RATIO_TOL = 0.3 * RATIO_TARGET
STRONG_DUALITY_LOSSES = ("logistic", "hinge", "least-square")


def fmt(value):
    """Shortest round-trip text for floats; empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class OutputDir:
    """Resolves artifact names inside one directory and refuses anything else."""

    def __init__(self, root):
        self.root = Path(root).resolve()

    def path(self, name):
        p = (self.root / name).resolve()
        if p.parent != self.root:
            raise InvalidInputError(f"artifact {name!r} would land outside {self.root}")
        self.root.mkdir(parents=True, exist_ok=True)
        return p


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([fmt(v) for v in row] for row in rows)


def print_table(header, rows, stream=None):
    stream = stream or sys.stdout
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    w.writerows([fmt(v) for v in row] for row in rows)


# experiment ----------------------------------------------------------------

def target_density(cfg):
    d = cfg.data
    if d.kind == "mixture1d":
        return Density.mixture1d(d.weights, d.means, d.covs)
    if d.kind == "gaussian":
        return Density.gaussian(d.means, np.diag(d.covs))
    return None


def load_data(cfg, rng):
    d = cfg.data
    if d.kind == "csv":
        try:
            data = np.loadtxt(d.path, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise InvalidInputError(f"cannot read data file {d.path}: {exc}") from None
        if not np.all(np.isfinite(data)):
            raise InvalidInputError(f"data file {d.path} has non-finite entries")
        return data
    return sample(target_density(cfg), rng, d.n)


class Experiment(NamedTuple):
    problem: Problem
    params: object
    noise: NoiseSource
    settings: TrainSettings
    rng: np.random.Generator
    density: object


def build_experiment(cfg):
    """Draw data, feature map, generator and noise from one seeded stream, in that order."""
    rng = np.random.default_rng(cfg.train.seed)
    data = load_data(cfg, rng)
    dim = data.shape[1]
    m, nz, t = cfg.model, cfg.noise, cfg.train
    fmap = build_feature_map(dim, m.features, m.sigma, rng)
    params = init_params((nz.dim, *m.hidden, dim), rng)
    noise = (NoiseSource.gaussian(nz.dim) if nz.kind == "gaussian"
             else NoiseSource.discrete_from_gaussian(nz.dim, nz.atoms, rng))
    reg = Regularizer.l2(m.reg_strength) if m.reg == "l2" else Regularizer.ball(m.reg_strength)
    problem = Problem(data, fmap, get_loss(m.loss), reg)
    settings = TrainSettings(steps=t.steps, step_dual=t.step_dual, step_psi=t.step_psi, step_w=t.step_w,
                             inner_steps=t.inner_steps, batch_size=nz.batch, log_interval=t.log_interval,
                             timing=t.timing)
    return Experiment(problem, params, noise, settings, rng, target_density(cfg))


def generated_samples(exp, params, n, seed):
    """``n`` generator outputs from a separate noise stream, so evaluation never shifts training draws."""
    z = draw_noise(exp.noise, np.random.default_rng([seed, 1]), n)
    return forward(params, z)[0]


def svg_scatter(real, fake, width=480, height=320):
    """Scatter of real (blue) and generated (orange) points; 1-D data is spread over two bands."""
    def coords(pts, band):
        if pts.shape[1] >= 2:
            return pts[:, 0], pts[:, 1]
        jitter = (np.arange(len(pts)) % 97) / 97.0
        return pts[:, 0], band + 0.3 * jitter

    xr, yr = coords(real, 0.0)
    xf, yf = coords(fake, 0.5) if real.shape[1] < 2 else coords(fake, 0.0)
    allx, ally = np.concatenate([xr, xf]), np.concatenate([yr, yf])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    sx = (width - 20) / max(x1 - x0, 1e-12)
    sy = (height - 20) / max(y1 - y0, 1e-12)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    for xs, ys, color in ((xr, yr, "#1f77b4"), (xf, yf, "#ff7f0e")):
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{10 + (x - x0) * sx:.2f}" cy="{height - 10 - (y - y0) * sy:.2f}" '
                       f'r="1.5" fill="{color}" fill-opacity="0.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


class RunOutcome(NamedTuple):
    result: object
    experiment: Experiment
    tv: float          # histogram TV to the target, NaN without a known density
    final_div: float   # last logged divergence estimate, NaN when nothing was logged


def run_experiment(cfg, out=None):
    """Train per ``cfg`` and write metrics.csv, checkpoint.kgan, samples.csv and snapshot.svg.

    Metrics rows are appended as they are logged, so a diverged run keeps
    everything written before the failure.
    """
    out = OutputDir(out if out is not None else cfg.train.out)
    exp = build_experiment(cfg)
    metrics_path = out.path("metrics.csv")
    real = exp.problem.data
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        fh.flush()

        def log(row, params):
            writer.writerow([fmt(row[c]) for c in METRIC_COLUMNS])
            fh.flush()
            if cfg.train.snapshot:
                fake = generated_samples(exp, params, min(len(real), 1000), cfg.train.seed)
                out.path("snapshot.svg").write_text(svg_scatter(real[:1000], fake))

        if cfg.train.mode == "dual":
            res = train_dual(exp.problem, exp.params, exp.noise, exp.settings, exp.rng, callback=log)
            write_checkpoint(out.path("checkpoint.kgan"), res.params, res.state)
        else:
            res = train_primal_baseline(exp.problem, exp.params, exp.noise, exp.settings, exp.rng, callback=log)
            write_checkpoint(out.path("checkpoint.kgan"), res.params)
    fake = generated_samples(exp, res.params, len(real), cfg.train.seed)
    header = ("label",) + tuple(f"x{i + 1}" for i in range(real.shape[1]))
    rows = [("real", *r) for r in real] + [("generated", *r) for r in fake]
    write_csv(out.path("samples.csv"), header, rows)
    if cfg.train.snapshot:
        out.path("snapshot.svg").write_text(svg_scatter(real[:1000], fake[:1000]))
    tv = float("nan")
    if exp.density is not None and real.shape[1] == 1:
        tv = histogram_tv(generated_samples(exp, res.params, 10_000, cfg.train.seed), exp.density)
    final = res.metrics[-1]["div_estimate"] if res.metrics else float("nan")
    return RunOutcome(res, exp, tv, final)


# report --------------------------------------------------------------------

class Check(NamedTuple):
    check: str
    lhs: float
    rhs: float
    tolerance: float
    relation: str   # "abs_diff": |lhs - rhs| <= tol; "upper": lhs <= rhs; "lower": lhs > rhs

    @property
    def passed(self):
        if not (np.isfinite(self.lhs) and np.isfinite(self.rhs)):
            return False
        if self.relation == "abs_diff":
            return abs(self.lhs - self.rhs) <= self.tolerance
        if self.relation == "upper":
            return self.lhs <= self.rhs
        return self.lhs > self.rhs

    def row(self):
        return (self.check, self.lhs, self.rhs, self.tolerance, self.relation, self.passed)


def pair_checks(tol=PAIR_TOL, mus=MU_VALUES):
    return [Check(f"pair:{loss}:mu={mu:g}", lhs, rhs, tol, "abs_diff")
            for loss, mu, lhs, rhs, _ in verify_pairs(mus)]


def kernel_checks(d=2, D=2048, sigma=1.0, seed=0):
    res = kernel_test(d, D, sigma, seed)
    checks = [
        Check("kernel:mean_abs", res.mean_abs, KERNEL_MEAN_TOL, 0.0, "upper"),
        Check("kernel:max_abs", res.max_abs, KERNEL_MAX_TOL, 0.0, "upper"),
        Check("kernel:doubling_ratio", res.ratio, RATIO_TARGET, RATIO_TOL, "abs_diff"),
    ]
    return checks, res


def injectivity_checks(seed=0):
    """A certified map keeps random pairs apart; an uncertified one with D < d collides."""
    rng = np.random.default_rng([seed, 2])
    certified = build_feature_map(2, 16, 0.1, rng)
    cert = certify_injectivity(certified, 6.0)
    min_dist = min_feature_distance(certified, rng, 3.0)
    loose = build_feature_map(3, 2, 1.0, rng)
    pair = construct_collision(loose)
    coll = float(feature_distance(loose, *pair)) if pair is not None else float("inf")
    return [
        Check("injectivity:norm_product", cert.norm_product if cert.rank_ok else float("inf"),
              cert.threshold, 0.0, "upper"),
        Check("injectivity:min_feature_distance", min_dist, 1e-12, 0.0, "lower"),
        Check("injectivity:collision_distance", coll, 1e-9, 0.0, "upper"),
    ]


def save_report_figures(out, pairs, kernel):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    by_loss = {}
    for c in pairs:
        _, loss, mu = c.check.split(":")
        by_loss.setdefault(loss, []).append((float(mu[3:]), c.lhs, c.rhs))
    for loss, pts in by_loss.items():
        mu, lhs, rhs = np.array(pts).T
        line, = ax.plot(mu, rhs, label=loss)
        ax.plot(mu, lhs, "o", color=line.get_color())
    ax.set_xlabel("mean separation mu")
    ax.set_ylabel("Bayes risk")
    ax.set_title("numeric infimum (dots) vs closed form (lines)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out.path("pairs.png"), dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(kernel.exact, kernel.approx, ".", ms=2, alpha=0.5)
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("exact kernel")
    ax.set_ylabel("random-feature estimate")
    fig.tight_layout()
    fig.savefig(out.path("kernel.png"), dpi=100)
    plt.close(fig)


# commands ------------------------------------------------------------------

def _config(args):
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    return with_overrides(cfg, seed=args.seed, out=args.out)


def cmd_train(args):
    cfg = _config(args)
    if args.mode:
        from dataclasses import replace
        cfg = replace(cfg, train=replace(cfg.train, mode=args.mode))
    outcome = run_experiment(cfg)
    out = OutputDir(cfg.train.out)
    out.path("config.txt").write_text(dump(cfg))
    print(f"mode={cfg.train.mode} steps={cfg.train.steps} final_div_estimate={fmt(outcome.final_div)} "
          f"hist_tv={fmt(outcome.tv)} out={out.root}")
    return 0


def _emit(header, rows, args, name):
    print_table(header, rows)
    if args.out:
        write_csv(OutputDir(args.out).path(name), header, rows)


def cmd_verify_pairs(args):
    rows = verify_pairs()
    _emit(PAIR_COLUMNS, rows, args, "verify_pairs.csv")
    return 0 if all(r[4] <= args.tol for r in rows) else 1


def cmd_kernel_test(args):
    seed = args.seed if args.seed is not None else 0
    checks, res = kernel_checks(args.dim, args.features, args.sigma, seed)
    rows = [(i, e, a, abs(a - e)) for i, (e, a) in enumerate(zip(res.exact, res.approx))]
    _emit(KERNEL_COLUMNS, rows, args, "kernel_test.csv")
    fmap = build_feature_map(args.dim, args.features, args.sigma, np.random.default_rng(seed))
    cert = certify_injectivity(fmap, 2 * KERNEL_RADIUS)
    print(f"# certificate rank_ok={fmt(cert.rank_ok)} norm_product={fmt(cert.norm_product)} "
          f"threshold={fmt(cert.threshold)} certified={fmt(cert.certified)}")
    print(f"# mean_abs={fmt(res.mean_abs)} max_abs={fmt(res.max_abs)} doubling_ratio={fmt(res.ratio)}")
    return 0 if all(c.passed for c in checks) else 1


def cmd_duality_gap(args):
    seed = args.seed if args.seed is not None else 0
    cfg = _config(args)
    rng = np.random.default_rng(seed)
    density = target_density(cfg) or Density.normal1d(0.0)
    data = sample(density, rng, args.n)
    fmap = build_feature_map(data.shape[1], args.features, args.sigma, rng)
    params = init_params((cfg.noise.dim, *cfg.model.hidden, data.shape[1]), rng)
    atoms = rng.standard_normal((args.atoms, cfg.noise.dim))
    reg = Regularizer.l2(args.strength) if args.reg == "l2" else Regularizer.ball(args.strength)
    loss = get_loss(args.loss)
    res = duality_gap_audit(Problem(data, fmap, loss, reg), params, atoms)
    tol = (1e-5 if args.reg == "l2" else 1e-4) * (1 + abs(res.primal_opt))
    asserted = loss.name in STRONG_DUALITY_LOSSES
    ok = res.gap >= -1e-8 and (res.gap <= tol or not asserted)
    header = ("loss", "reg", "primal_opt", "dual_opt", "gap", "tolerance", "asserted", "pass")
    rows = [(loss.name, reg.kind, res.primal_opt, res.dual_opt, res.gap, tol, asserted, ok)]
    print_table(header, rows)
    if args.out:
        write_csv(OutputDir(args.out).path("duality_gap.csv"), header, rows)
    return 0 if ok else 1


def cmd_report(args):
    seed = args.seed if args.seed is not None else 0
    out = OutputDir(args.out or "report")
    pairs = pair_checks(args.tol)
    kchecks, kernel = kernel_checks(seed=seed)
    checks = pairs + kchecks + injectivity_checks(seed)
    rows = [c.row() for c in checks]
    write_csv(out.path("report.csv"), REPORT_COLUMNS, rows)
    save_report_figures(out, pairs, kernel)
    failed = [c.check for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed; report at {out.path('report.csv')}")
    for name in failed:
        print(f"FAIL {name}")
    return 0 if not failed else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    p = argparse.ArgumentParser(prog="kgan", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a generator and write metrics and samples")
    t.add_argument("--mode", choices=("dual", "primal"))
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify-pairs", parents=[common], help="loss/divergence identity on shifted normals")
    v.add_argument("--tol", type=float, default=PAIR_TOL)
    v.set_defaults(func=cmd_verify_pairs)

    k = sub.add_parser("kernel-test", parents=[common], help="random-feature kernel approximation error")
    k.add_argument("--dim", type=int, default=2)
    k.add_argument("--features", type=int, default=2048)
    k.add_argument("--sigma", type=float, default=1.0)
    k.set_defaults(func=cmd_kernel_test)

    g = sub.add_parser("duality-gap", parents=[common], help="primal vs dual optimum with the generator frozen")
    g.add_argument("--loss", default="logistic")
    g.add_argument("--reg", choices=("l2", "ball"), default="l2")
    g.add_argument("--strength", type=float, default=1.0)
    g.add_argument("--n", type=int, default=64)
    g.add_argument("--atoms", type=int, default=64)
    g.add_argument("--features", type=int, default=32)
    g.add_argument("--sigma", type=float, default=1.0)
    g.set_defaults(func=cmd_duality_gap)

    r = sub.add_parser("report", parents=[common], help="all identity and kernel checks, with figures")
    r.add_argument("--tol", type=float, default=PAIR_TOL, help="tolerance for the identity rows")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "seed", "out"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except KganError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

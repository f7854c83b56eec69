"""Experiment configuration: ``key = value`` lines under ``[data] [noise] [model] [train]``.

``#`` starts a comment. Lists are comma separated. Every key has a default
except ``[data] kind``; unknown keys and sections are errors that name the
line. ``dump`` writes every key, and ``parse_text(dump(cfg)) == cfg``.
"""

from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError, InvalidInputError
from .losses import LOSSES, get_loss

DATA_KINDS = ("mixture1d", "gaussian", "csv")
NOISE_KINDS = ("gaussian", "discrete")
MODES = ("dual", "primal")


@dataclass(frozen=True)
class DataConfig:
    kind: str = "mixture1d"
    weights: tuple = (0.5, 0.5)
    means: tuple = (-2.0, 2.0)       # component means (mixture1d) or mean vector (gaussian)
    covs: tuple = (0.25, 0.25)       # component variances (mixture1d) or diagonal covariance
    path: str = ""                   # csv: one sample per row, no header
    n: int = 2000


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "gaussian"
    dim: int = 2
    atoms: int = 512   # discrete: atom count, drawn once from N(0, I)
    batch: int = 128   # gaussian: rows per step


@dataclass(frozen=True)
class ModelConfig:
    loss: str = "logistic"
    reg: str = "l2"
    reg_strength: float = 0.1
    features: int = 64
    sigma: float = 2.0   # Sigma^{1/2} = sigma * I
    hidden: tuple = (16, 16)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "dual"
    seed: int = 0
    steps: int = 20000
    step_dual: float = 0.1
    step_psi: float = 0.05
    step_w: float = 0.5
    inner_steps: int = 1
    log_interval: int = 1000
    snapshot: bool = True
    timing: bool = False
    out: str = "runs/example"


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig)}
REQUIRED = {("data", "kind")}
FLOAT_LISTS = {("data", "weights"), ("data", "means"), ("data", "covs")}
INT_LISTS = {("model", "hidden")}


def _kind(section, key):
    if (section, key) in FLOAT_LISTS:
        return "floats"
    if (section, key) in INT_LISTS:
        return "ints"
    default = getattr(SECTIONS[section](), key)
    return type(default).__name__


def _convert(section, key, text):
    kind = _kind(section, key)
    if kind == "floats":
        return tuple(float(t) for t in text.split(",")) if text else ()
    if kind == "ints":
        return tuple(int(t) for t in text.split(",")) if text else ()
    if kind == "bool":
        if text.lower() not in ("true", "false"):
            raise ValueError(text)
        return text.lower() == "true"
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_text(text, source="<config>"):
    values = {name: {} for name in SECTIONS}
    where = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"{source}: unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected key = value, found {line!r}", lineno)
        key, val = (part.strip() for part in line.split("=", 1))
        if section is None:
            raise ConfigError(f"{source}: key {key!r} appears before any section", lineno, key)
        if key not in {f.name for f in fields(SECTIONS[section]())}:
            raise ConfigError(f"{source}: unknown key {key!r} in [{section}]", lineno, key)
        if key in values[section]:
            raise ConfigError(f"{source}: duplicate key {key!r} in [{section}]", lineno, key)
        try:
            values[section][key] = _convert(section, key, val)
        except ValueError:
            raise ConfigError(f"{source}: cannot parse {key} = {val!r} as {_kind(section, key)}",
                              lineno, key) from None
        where[(section, key)] = lineno
    for section, key in REQUIRED:
        if key not in values[section]:
            raise ConfigError(f"{source}: missing required key {key!r} in [{section}]", key=key)
    cfg = ExperimentConfig(**{name: SECTIONS[name](**values[name]) for name in SECTIONS})
    validate(cfg, where, source)
    return cfg


def parse_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def dump(cfg):
    out = []
    for name in SECTIONS:
        out.append(f"[{name}]")
        section = getattr(cfg, name)
        out.extend(f"{f.name} = {_format(getattr(section, f.name))}" for f in fields(section))
        out.append("")
    return "\n".join(out)


def validate(cfg, where=None, source="<config>"):
    """Check names resolve and ranges hold; errors point at the offending line when known."""
    where = where or {}

    def fail(section, key, message):
        raise ConfigError(f"{source}: {section}.{key}: {message}", where.get((section, key)), key)

    d, nz, m, t = cfg.data, cfg.noise, cfg.model, cfg.train
    if d.kind not in DATA_KINDS:
        fail("data", "kind", f"unknown data kind {d.kind!r}; choose from {', '.join(DATA_KINDS)}")
    if d.kind == "csv" and not d.path:
        fail("data", "path", "csv data needs a path")
    if d.kind == "mixture1d" and not (len(d.weights) == len(d.means) == len(d.covs) >= 1):
        fail("data", "weights", "weights, means and covs need equal, nonzero lengths")
    if d.kind == "gaussian" and (len(d.means) < 1 or len(d.covs) != len(d.means)):
        fail("data", "covs", "gaussian data needs one variance per mean coordinate")
    if any(v <= 0 for v in d.covs):
        fail("data", "covs", "variances must be positive")
    if d.n < 1:
        fail("data", "n", "need at least one sample")
    if nz.kind not in NOISE_KINDS:
        fail("noise", "kind", f"unknown noise kind {nz.kind!r}; choose from {', '.join(NOISE_KINDS)}")
    for key in ("dim", "atoms", "batch"):
        if getattr(nz, key) < 1:
            fail("noise", key, "must be >= 1")
    try:
        loss = get_loss(m.loss)
    except InvalidInputError:
        fail("model", "loss", f"unknown loss {m.loss!r}; choose from {', '.join(LOSSES)}")
    if not loss.convex:
        fail("model", "loss", f"{loss.name} loss is not convex and cannot be trained")
    if m.reg not in ("l2", "ball"):
        fail("model", "reg", f"unknown regularizer {m.reg!r}; use l2 or ball")
    if not m.reg_strength > 0:
        fail("model", "reg_strength", "must be positive")
    if m.features < 1:
        fail("model", "features", "feature count D must be >= 1")
    if not m.sigma > 0:
        fail("model", "sigma", "must be positive")
    if any(h < 1 for h in m.hidden):
        fail("model", "hidden", "layer widths must be >= 1")
    if t.mode not in MODES:
        fail("train", "mode", f"unknown mode {t.mode!r}; use dual or primal")
    if t.steps < 0 or t.inner_steps < 0:
        fail("train", "steps", "iteration counts must be >= 0")
    for key in ("step_dual", "step_psi", "step_w"):
        if not getattr(t, key) > 0:
            fail("train", key, "step size must be positive")
    if t.log_interval < 1:
        fail("train", "log_interval", "must be >= 1")
    if not t.out:
        fail("train", "out", "output directory must be set")
    return cfg


def with_overrides(cfg, seed=None, out=None):
    train = cfg.train
    if seed is not None:
        train = replace(train, seed=int(seed))
    if out is not None:
        train = replace(train, out=str(out))
    return replace(cfg, train=train)

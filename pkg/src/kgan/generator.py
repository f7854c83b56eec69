"""Small feedforward generator with hand-written forward and backward passes.

Layers are affine maps ``h -> W h + b`` with ``W`` of shape ``(out, in)``;
hidden layers apply tanh, the output layer is the identity. Batches are rows.

Checkpoint layout (plain text, one token group per line, floats in shortest
round-trip form)::

    KGANCKPT1
    layers <n0> <n1> ... <nL>
    W <k> <rows> <cols>        # then <rows> lines of <cols> values
    b <k> <len>                # then one line of <len> values
    ...                        # repeated for k = 0 .. L-1
    dual <N> <M> <iteration>   # optional section
    u <N values>               # on the same line
    v <M values>
    end
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError, InvalidStateError

MAGIC = "KGANCKPT1"
DEFAULT_HIDDEN = (16, 16)


class Tape(NamedTuple):
    params_id: int
    version: int
    inputs: list       # input to each layer, rows are samples
    single: bool


class Gradients(NamedTuple):
    weights: list
    biases: list


@dataclass
class GeneratorParams:
    sizes: tuple
    weights: list
    biases: list
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise InvalidInputError(f"need at least input and output sizes >= 1, got {self.sizes}")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise InvalidInputError("one weight matrix and one bias vector per layer")
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        self.biases = [np.array(b, dtype=float) for b in self.biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.sizes[k + 1], self.sizes[k])
            if w.shape != shape or b.shape != (shape[0],):
                raise InvalidInputError(f"layer {k}: weight {w.shape} / bias {b.shape}, expected {shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidInputError(f"layer {k} has non-finite parameters")

    @property
    def noise_dim(self):
        return self.sizes[0]

    @property
    def output_dim(self):
        return self.sizes[-1]

    @property
    def size(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def with_flat(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise InvalidInputError(f"flat vector has shape {vec.shape}, expected ({self.size},)")
        ws, bs, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[pos:pos + w.size].reshape(w.shape))
            pos += w.size
            bs.append(vec[pos:pos + b.size].copy())
            pos += b.size
        return GeneratorParams(self.sizes, ws, bs)

    def ascend(self, grads, step):
        """In-place ``psi += step * grads``; invalidates earlier tapes."""
        for w, b, gw, gb in zip(self.weights, self.biases, grads.weights, grads.biases):
            w += step * gw
            b += step * gb
        self.version += 1

    def copy(self):
        return GeneratorParams(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_params(sizes, rng):
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in sizes)
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return GeneratorParams(sizes, ws, bs)


def default_sizes(noise_dim, out_dim, hidden=DEFAULT_HIDDEN):
    return (noise_dim, *hidden, out_dim)


def forward(g, z):
    """Generator output for one noise vector or a batch of rows, plus the tape."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    h = z[None, :] if single else z
    if h.ndim != 2 or h.shape[1] != g.noise_dim:
        raise InvalidInputError(f"noise dimension {h.shape[-1]} does not match generator input {g.noise_dim}")
    inputs = []
    last = len(g.weights) - 1
    for k, (w, b) in enumerate(zip(g.weights, g.biases)):
        inputs.append(h)
        h = h @ w.T + b
        if k < last:
            h = np.tanh(h)
    return (h[0] if single else h), Tape(id(g), g.version, inputs, single)


def backward(g, tape, output_gradient):
    """Gradients of ``sum_n <output_gradient_n, G(z_n)>`` w.r.t. parameters and ``z``."""
    if tape.params_id != id(g) or tape.version != g.version:
        raise InvalidStateError("tape does not come from the current parameters; rerun forward")
    delta = np.asarray(output_gradient, dtype=float)
    delta = delta[None, :] if tape.single else delta
    n = tape.inputs[0].shape[0]
    if delta.shape != (n, g.output_dim):
        raise InvalidInputError(f"output gradient has shape {delta.shape}, expected {(n, g.output_dim)}")
    gw, gb = [None] * len(g.weights), [None] * len(g.weights)
    for k in range(len(g.weights) - 1, -1, -1):
        gw[k] = delta.T @ tape.inputs[k]
        gb[k] = delta.sum(axis=0)
        delta = delta @ g.weights[k]
        if k > 0:
            # inputs[k] = tanh(pre-activation of layer k-1)
            delta = delta * (1.0 - tape.inputs[k] ** 2)
    gz = delta[0] if tape.single else delta
    return Gradients(gw, gb), gz


def flat_gradients(grads):
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(grads.weights, grads.biases)])


# noise ---------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSource:
    kind: str                   # "gaussian" | "discrete"
    dim: int
    atoms: np.ndarray = None    # (M, dim) for discrete
    probs: np.ndarray = None    # (M,)

    @classmethod
    def gaussian(cls, dim):
        if dim < 1:
            raise InvalidInputError("noise dimension must be >= 1")
        return cls("gaussian", int(dim))

    @classmethod
    def discrete(cls, atoms, probs=None):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        m = atoms.shape[0]
        if m < 1:
            raise InvalidInputError("need at least one atom")
        probs = np.full(m, 1.0 / m) if probs is None else np.asarray(probs, dtype=float)
        if probs.shape != (m,) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidInputError("atom probabilities must be nonnegative, one per atom, and sum to 1")
        atoms.setflags(write=False)
        probs.setflags(write=False)
        return cls("discrete", atoms.shape[1], atoms, probs)

    @classmethod
    def discrete_from_gaussian(cls, dim, m, rng):
        """``m`` equally weighted atoms drawn once from a standard normal."""
        return cls.discrete(rng.standard_normal((m, dim)))

    @property
    def count(self):
        return None if self.atoms is None else self.atoms.shape[0]


def draw_noise(src, rng, n):
    """``n`` noise rows. Discrete sources return the atoms in order when ``n`` equals their count."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if src.kind == "gaussian":
        return rng.standard_normal((n, src.dim))
    if n == src.count:
        return np.array(src.atoms)
    return src.atoms[rng.choice(src.count, size=n, p=src.probs)]


# checkpoints ---------------------------------------------------------------

def _fmt(values):
    return " ".join(repr(float(v)) for v in np.ravel(values))


def write_checkpoint(path, g, dual=None):
    """Write parameters and, optionally, a dual state with ``u``, ``v`` and ``iteration``."""
    lines = [MAGIC, "layers " + " ".join(str(s) for s in g.sizes)]
    for k, (w, b) in enumerate(zip(g.weights, g.biases)):
        lines.append(f"W {k} {w.shape[0]} {w.shape[1]}")
        lines.extend(_fmt(row) for row in w)
        lines.append(f"b {k} {b.size}")
        lines.append(_fmt(b))
    if dual is not None:
        u, v = np.asarray(dual.u), np.asarray(dual.v)
        lines.append(f"dual {u.size} {v.size} {int(dual.iteration)}")
        lines.append("u " + _fmt(u))
        lines.append("v " + _fmt(v))
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _floats(text, count, where):
    try:
        vals = np.array([float(t) for t in text.split()]) if text.strip() else np.zeros(0)
    except ValueError:
        raise InvalidInputError(f"{where}: unparsable number") from None
    if vals.size != count:
        raise InvalidInputError(f"{where}: expected {count} values, found {vals.size}")
    return vals


def read_checkpoint(path):
    """Returns ``(params, dual)`` where ``dual`` is ``None`` or a dict with u, v, iteration."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise InvalidInputError(f"{path}: missing {MAGIC} header")
    it = iter(enumerate(lines[1:], start=2))

    def take(prefix):
        lineno, text = next(it, (None, None))
        if text is None:
            raise InvalidInputError(f"{path}: truncated checkpoint, expected {prefix!r}")
        parts = text.split()
        if prefix and (not parts or parts[0] != prefix):
            raise InvalidInputError(f"{path} line {lineno}: expected {prefix!r}, found {text[:20]!r}")
        return lineno, parts

    _, parts = take("layers")
    sizes = tuple(int(s) for s in parts[1:])
    ws, bs = [], []
    for k in range(len(sizes) - 1):
        _, head = take("W")
        rows, cols = int(head[2]), int(head[3])
        w = np.empty((rows, cols))
        for r in range(rows):
            lineno, row = take(None)
            w[r] = _floats(" ".join(row), cols, f"{path} line {lineno}")
        _, head = take("b")
        lineno, row = take(None)
        ws.append(w)
        bs.append(_floats(" ".join(row), int(head[2]), f"{path} line {lineno}"))
    params = GeneratorParams(sizes, ws, bs)
    lineno, parts = take(None)
    dual = None
    if parts and parts[0] == "dual":
        n, m, iteration = int(parts[1]), int(parts[2]), int(parts[3])
        lu, pu = take("u")
        lv, pv = take("v")
        dual = {"u": _floats(" ".join(pu[1:]), n, f"{path} line {lu}"),
                "v": _floats(" ".join(pv[1:]), m, f"{path} line {lv}"),
                "iteration": iteration}
        lineno, parts = take(None)
    if parts != ["end"]:
        raise InvalidInputError(f"{path} line {lineno}: expected 'end'")
    return params, dual

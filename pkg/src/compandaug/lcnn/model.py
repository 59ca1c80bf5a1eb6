"""LCNN model: a layer stack described by a compact text spec.

The spec is a whitespace-separated list of layer tokens, e.g.::

    conv(64,3,1) mfm max_pool(2) batch_norm ... flatten dense(160) mfm dense(2)

``conv(out_channels, kernel[, stride])`` uses 'same' padding; ``mfm`` halves
the channel (or unit) count; ``max_pool(s)`` or ``max_pool(sh,sw)`` pools
without overlap; ``dropout(p)`` is active only in training; ``utt_norm``
standardises each input example.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .layers import (MFM, BatchNorm, Conv2d, Dense, Dropout, Flatten, Layer, MaxPool2d,
                     ShapeError, UttNorm)

DEFAULT_INPUT_SHAPE = (84, 550)

# per-utterance input standardisation, four conv-MFM blocks (32, 48, 64, 32
# maps after MFM) with 2x2 pooling and batch norm between blocks, then a
# dense-MFM of 80 units and 2 logits
DEFAULT_LAYERS = (
    "utt_norm conv(64,3,1) mfm max_pool(2) batch_norm "
    "conv(96,3,1) mfm max_pool(2) batch_norm "
    "conv(128,3,1) mfm max_pool(2) batch_norm "
    "conv(64,3,1) mfm max_pool(2) "
    "flatten dense(160) mfm dense(2)"
)

CHECKPOINT_MAGIC = b"LCNNCKPT"
CHECKPOINT_VERSION = 1

_TOKEN = re.compile(r"([a-z_]+)(?:\(([^)]*)\))?")


class CheckpointError(ValueError):
    pass


def _make_layer(name: str, args: list[str]) -> Layer:
    try:
        if name == "conv":
            return Conv2d(*[int(a) for a in args])
        if name == "mfm":
            return MFM()
        if name == "max_pool":
            size = [int(a) for a in args] or [2]
            return MaxPool2d(size[0] if len(size) == 1 else tuple(size))
        if name == "batch_norm":
            return BatchNorm()
        if name == "flatten":
            return Flatten()
        if name == "utt_norm":
            return UttNorm()
        if name == "dense":
            return Dense(int(args[0]))
        if name == "dropout":
            return Dropout(float(args[0]))
    except (IndexError, TypeError, ValueError) as exc:
        raise ValueError("bad arguments for layer %s(%s): %s" % (name, ",".join(args), exc))
    raise ValueError("unknown layer type %r" % name)


@dataclass(frozen=True)
class LcnnSpec:
    layers: str = DEFAULT_LAYERS
    input_shape: tuple = DEFAULT_INPUT_SHAPE

    def __post_init__(self):
        object.__setattr__(self, "layers", " ".join(self.tokens()))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        self.shapes()

    def tokens(self) -> list[str]:
        text = re.sub(r"\s*,\s*", ",", self.layers)
        text = re.sub(r"\(\s*", "(", re.sub(r"\s*\)", ")", text))
        tokens = text.split()
        for tok in tokens:
            if not _TOKEN.fullmatch(tok):
                raise ValueError("cannot parse layer token %r" % tok)
        return tokens

    def build(self) -> list[Layer]:
        out = []
        for tok in self.tokens():
            name, args = _TOKEN.fullmatch(tok).groups()
            out.append(_make_layer(name, [a for a in (args or "").split(",") if a]))
        return out

    def shapes(self) -> list[tuple]:
        """Symbolic per-layer output shapes (without the batch axis)."""
        shape = (1,) + self.input_shape
        shapes = []
        for layer in self.build():
            shape = layer.output_shape(shape)
            shapes.append(shape)
        if shapes[-1] != (2,):
            raise ShapeError("network must end in 2 logits, got %s" % (shapes[-1],))
        return shapes


class Lcnn:
    """Layer stack over (N, 1, F, T) inputs producing (bonafide, spoof) logits."""

    def __init__(self, spec: LcnnSpec = LcnnSpec(), seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.layers = spec.build()
        rng = np.random.default_rng(seed)
        shape = (1,) + spec.input_shape
        for layer in self.layers:
            shape = layer.init(shape, rng, self.dtype)

    # -- parameters -------------------------------------------------------
    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield "%d.%s.%s" % (i, layer.kind, name), layer, name

    def named_buffers(self):
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.buffers):
                yield "%d.%s.%s" % (i, layer.kind, name), layer, name

    def state(self) -> dict[str, np.ndarray]:
        out = {k: l.params[n].copy() for k, l, n in self.named_params()}
        out.update({k: l.buffers[n].copy() for k, l, n in self.named_buffers()})
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for key, layer, name in self.named_params():
            layer.params[name][...] = state[key]
        for key, layer, name in self.named_buffers():
            layer.buffers[name][...] = state[key]

    def n_params(self) -> int:
        return sum(l.params[n].size for _, l, n in self.named_params())

    # -- computation -------------------------------------------------------
    def _prepare(self, features, dtype=None) -> np.ndarray:
        x = np.asarray(features, dtype=dtype or self.dtype)
        if x.shape == self.spec.input_shape:
            x = x[None]
        if x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[1:] != (1,) + self.spec.input_shape:
            raise ShapeError("expected features of shape %s, got %s"
                             % (self.spec.input_shape, np.shape(features)))
        return x

    def forward(self, features, train: bool = False, rng=None) -> np.ndarray:
        """Logits of shape (N, 2): column 0 bonafide, column 1 spoof."""
        return self._run(self._prepare(features), train, rng)

    def _run(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        g = dlogits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def score(self, features, batch_size: int = 64) -> np.ndarray:
        """Countermeasure scores: logit_bonafide - logit_spoof.

        Inference runs in float64 whatever the parameter dtype, so scores do
        not depend on how the set is split into batches.
        """
        x = self._prepare(features, np.float64)
        out = np.empty(x.shape[0], dtype=np.float64)
        for start in range(0, x.shape[0], batch_size):
            logits = self._run(x[start:start + batch_size])
            out[start:start + batch_size] = logits[:, 0] - logits[:, 1]
        return out

    # -- checkpoint --------------------------------------------------------
    def save(self, path) -> None:
        """Versioned binary: magic, version, JSON header, float32 tensors."""
        state = self.state()
        header = {"layers": self.spec.layers, "input_shape": list(self.spec.input_shape),
                  "dtype": self.dtype.name,
                  "tensors": [[k, list(v.shape)] for k, v in state.items()]}
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
            fh.write(blob)
            for v in state.values():
                fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "Lcnn":
        with open(path, "rb") as fh:
            data = fh.read()
        head = len(CHECKPOINT_MAGIC) + 8
        if len(data) < head or data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
            raise CheckpointError("%s: not an LCNN checkpoint" % path)
        version, n = struct.unpack("<II", data[len(CHECKPOINT_MAGIC):head])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError("%s: unsupported checkpoint version %d" % (path, version))
        header = json.loads(data[head:head + n].decode("utf-8"))
        spec = LcnnSpec(header["layers"], tuple(header["input_shape"]))
        model = cls(spec, seed=0, dtype=header["dtype"])
        offset = head + n
        state = {}
        for key, shape in header["tensors"]:
            count = int(np.prod(shape))
            end = offset + 4 * count
            if end > len(data):
                raise CheckpointError("%s: truncated tensor data" % path)
            state[key] = np.frombuffer(data[offset:end], dtype="<f4").reshape(shape)
            offset = end
        if offset != len(data):
            raise CheckpointError("%s: trailing bytes after tensors" % path)
        expected = set(model.state())
        if set(state) != expected:
            raise CheckpointError("%s: tensor names do not match the layer spec" % path)
        model.load_state(state)
        return model

"""Encoder / decoder / classifier MLPs over diffmath parameters."""

from __future__ import annotations

import copy
import io
import struct

import numpy as np

from .. import diffmath as dm

MAGIC = b"OTDGMDL\x00"
FORMAT_VERSION = 1


class ModelError(ValueError):
    pass


def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Model:
    """``h = g o f`` plus an optional decoder ``psi``.

    Values live in ``params`` (id -> array); the graph reads them through
    bindings, so updating a model never rebuilds parameter nodes.
    """

    ENCODER = ("enc.W1", "enc.b1", "enc.W2", "enc.b2")
    DECODER = ("dec.W1", "dec.b1", "dec.W2", "dec.b2")
    CLASSIFIER = ("cls.W", "cls.b")

    def __init__(self, in_dim: int, feature_dim: int, n_classes: int, hidden: int = 64,
                 decoder: bool = True, seed=0):
        if min(in_dim, feature_dim, hidden) < 1 or n_classes < 2:
            raise ModelError("dimensions must be positive and n_classes >= 2")
        self.in_dim, self.feature_dim, self.n_classes, self.hidden = in_dim, feature_dim, n_classes, hidden
        self.has_decoder = decoder
        rng = np.random.default_rng(seed)
        p = {
            "enc.W1": _glorot(rng, in_dim, hidden),
            "enc.b1": np.zeros((1, hidden)),
            "enc.W2": _glorot(rng, hidden, feature_dim),
            "enc.b2": np.zeros((1, feature_dim)),
        }
        # decoder draws are made unconditionally so encoder/classifier init
        # does not depend on whether a decoder is kept
        dec = {
            "dec.W1": _glorot(rng, feature_dim, hidden),
            "dec.b1": np.zeros((1, hidden)),
            "dec.W2": _glorot(rng, hidden, in_dim),
            "dec.b2": np.zeros((1, in_dim)),
        }
        p["cls.W"] = _glorot(rng, feature_dim, n_classes)
        p["cls.b"] = np.zeros((1, n_classes))
        if decoder:
            p.update(dec)
        self.params: dict[str, np.ndarray] = p
        self._nodes = {k: dm.Parameter(k, v) for k, v in p.items()}

    # -- graph builders ---------------------------------------------------
    def node(self, pid: str) -> dm.Parameter:
        return self._nodes[pid]

    def encode(self, x) -> dm.Node:
        n = self._nodes
        h = dm.relu(dm._lift(x) @ n["enc.W1"] + n["enc.b1"])
        return h @ n["enc.W2"] + n["enc.b2"]

    def decode(self, z) -> dm.Node:
        if not self.has_decoder:
            raise ModelError("model has no decoder")
        n = self._nodes
        h = dm.relu(dm._lift(z) @ n["dec.W1"] + n["dec.b1"])
        return h @ n["dec.W2"] + n["dec.b2"]

    def classify(self, z) -> dm.Node:
        n = self._nodes
        return dm._lift(z) @ n["cls.W"] + n["cls.b"]

    # -- numeric helpers ---------------------------------------------------
    def features(self, x) -> np.ndarray:
        return dm.evaluate(self.encode(np.asarray(x, dtype=np.float64)), self.params)

    def logits(self, x) -> np.ndarray:
        return dm.evaluate(self.classify(self.encode(np.asarray(x, dtype=np.float64))), self.params)

    def predict_proba(self, x) -> np.ndarray:
        s = self.logits(x)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def reconstruct(self, x) -> np.ndarray:
        return dm.evaluate(self.decode(self.encode(np.asarray(x, dtype=np.float64))), self.params)

    def group(self, name: str) -> tuple[str, ...]:
        ids = {"encoder": self.ENCODER, "decoder": self.DECODER, "classifier": self.CLASSIFIER}[name]
        return tuple(i for i in ids if i in self.params)

    def copy(self) -> "Model":
        m = copy.copy(self)
        m.params = {k: v.copy() for k, v in self.params.items()}
        return m

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_state(self, state: dict) -> None:
        if set(state) != set(self.params):
            raise ModelError("state does not match the model's parameters")
        for k, v in state.items():
            if np.shape(v) != self.params[k].shape:
                raise ModelError(f"shape mismatch for {k}")
        self.params = {k: np.array(v, dtype=np.float64) for k, v in state.items()}

    # -- serialization -----------------------------------------------------
    def to_bytes(self) -> bytes:
        """Binary: magic, format version, dims, then named float64 arrays."""
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<I", FORMAT_VERSION))
        buf.write(struct.pack("<5I", self.in_dim, self.feature_dim, self.n_classes, self.hidden,
                              int(self.has_decoder)))
        buf.write(struct.pack("<I", len(self.params)))
        for k in sorted(self.params):
            v = np.ascontiguousarray(self.params[k], dtype="<f8")
            key = k.encode()
            buf.write(struct.pack("<I", len(key)))
            buf.write(key)
            buf.write(struct.pack("<I", v.ndim))
            buf.write(struct.pack(f"<{v.ndim}I", *v.shape))
            buf.write(v.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Model":
        buf = io.BytesIO(data)
        if buf.read(len(MAGIC)) != MAGIC:
            raise ModelError("not a model file (bad magic)")
        (version,) = struct.unpack("<I", buf.read(4))
        if version != FORMAT_VERSION:
            raise ModelError(f"unsupported model format version {version}")
        in_dim, feat, ncls, hidden, has_dec = struct.unpack("<5I", buf.read(20))
        model = cls(in_dim, feat, ncls, hidden, bool(has_dec))
        (count,) = struct.unpack("<I", buf.read(4))
        state = {}
        for _ in range(count):
            (klen,) = struct.unpack("<I", buf.read(4))
            key = buf.read(klen).decode()
            (ndim,) = struct.unpack("<I", buf.read(4))
            shape = struct.unpack(f"<{ndim}I", buf.read(4 * ndim))
            size = int(np.prod(shape)) * 8
            state[key] = np.frombuffer(buf.read(size), dtype="<f8").reshape(shape).copy()
        model.load_state(state)
        return model

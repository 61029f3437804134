"""Binary classifiers over flat parameter vectors.

Models are stateless: a ``ModelSpec`` describes the architecture and a
``ParamVector`` carries the weights. FedAvg only ever sees the latter.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Literal

import numpy as np

EPS = 1e-7
_MAGIC = b"FUPV"
_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    kind: Literal["logistic", "mlp"]
    input_dim: int
    hidden_dim: int = 16
    init_seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.kind not in ("logistic", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.kind == "mlp" and self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1 for mlp")

    def layout(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        d, h = self.input_dim, self.hidden_dim
        if self.kind == "logistic":
            return (("w", (d,)), ("b", ()))
        return (("w1", (d, h)), ("b1", (h,)), ("w2", (h,)), ("b2", ()))


def _size(shape: tuple[int, ...]) -> int:
    return int(np.prod(shape, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class ParamVector:
    values: np.ndarray
    layout: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size != sum(_size(s) for _, s in self.layout):
            raise ValueError("layout sizes must sum to the vector length")
        if not np.all(np.isfinite(v)):
            raise ValueError("parameter vector contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def tensors(self) -> dict[str, np.ndarray]:
        out, k = {}, 0
        for name, shape in self.layout:
            n = _size(shape)
            out[name] = self.values[k : k + n].reshape(shape)
            k += n
        return out

    def with_values(self, values) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=np.float64), self.layout)

    def _check(self, other: "ParamVector"):
        if self.layout != other.layout:
            raise ValueError("parameter layouts differ")

    def __add__(self, other: "ParamVector") -> "ParamVector":
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ParamVector") -> "ParamVector":
        self._check(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float) -> "ParamVector":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "ParamVector":
        return self.with_values(-self.values)

    def to_bytes(self) -> bytes:
        """Little-endian blob: magic, version, layout header, then float64 values."""
        parts = [_MAGIC, struct.pack("<II", _VERSION, len(self.layout))]
        for name, shape in self.layout:
            raw = name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)) + raw)
            parts.append(struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}Q", *shape))
        parts.append(self.values.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParamVector":
        if blob[:4] != _MAGIC:
            raise ValueError("not a parameter blob")
        version, n = struct.unpack_from("<II", blob, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported blob version {version}")
        off, layout = 12, []
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + ln].decode("utf-8")
            off += ln
            (nd,) = struct.unpack_from("<B", blob, off)
            off += 1
            shape = struct.unpack_from(f"<{nd}Q", blob, off)
            off += 8 * nd
            layout.append((name, tuple(int(s) for s in shape)))
        values = np.frombuffer(blob, dtype="<f8", offset=off).astype(np.float64)
        return cls(values, tuple(layout))

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_bytes()).hexdigest()[:16]


@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or len(self.y) != self.x.shape[0] or len(self.y) < 1:
            raise ValueError("batch needs b >= 1 rows with matching labels")

    def __len__(self):
        return len(self.y)


def init_params(spec: ModelSpec) -> ParamVector:
    layout = spec.layout()
    n = sum(_size(s) for _, s in layout)
    if spec.kind == "logistic":
        return ParamVector(np.zeros(n), layout)
    rng = np.random.default_rng(spec.init_seed)
    return ParamVector(rng.uniform(-spec.init_scale, spec.init_scale, n), layout)


def _check_input(p: ParamVector, spec: ModelSpec, x: np.ndarray):
    if p.layout != spec.layout():
        raise ValueError("parameter layout does not match model spec")
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"expected input of width {spec.input_dim}, got shape {x.shape}")


def _forward(p: ParamVector, spec: ModelSpec, x: np.ndarray):
    t = p.tensors()
    if spec.kind == "logistic":
        return x @ t["w"] + t["b"], None
    h = np.tanh(x @ t["w1"] + t["b1"])
    return h @ t["w2"] + t["b2"], h


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logits(p: ParamVector, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_input(p, spec, x)
    return _forward(p, spec, x)[0]


def predict_proba(p: ParamVector, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    return np.clip(_sigmoid(logits(p, spec, x)), EPS, 1.0 - EPS)


def classify(p: ParamVector, spec: ModelSpec, x: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return (predict_proba(p, spec, x) >= threshold).astype(np.int64)


def soft_ce_loss_and_grad(p: ParamVector, spec: ModelSpec, x: np.ndarray, target: np.ndarray):
    """Mean cross-entropy against soft targets in [0, 1], with its exact gradient.

    The clamp on q is part of the loss, so rows whose probability is clamped
    contribute zero gradient.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_input(p, spec, x)
    z, h = _forward(p, spec, x)
    raw = _sigmoid(z)
    q = np.clip(raw, EPS, 1.0 - EPS)
    loss = float(-np.mean(target * np.log(q) + (1.0 - target) * np.log(1.0 - q)))
    active = (raw > EPS) & (raw < 1.0 - EPS)
    dz = np.where(active, q - target, 0.0) / len(target)
    t = p.tensors()
    if spec.kind == "logistic":
        grad = np.concatenate([x.T @ dz, [dz.sum()]])
    else:
        dh = np.outer(dz, t["w2"]) * (1.0 - h * h)
        grad = np.concatenate([(x.T @ dh).ravel(), dh.sum(axis=0), h.T @ dz, [dz.sum()]])
    return loss, p.with_values(grad)


def bce_loss_and_grad(p: ParamVector, spec: ModelSpec, batch: Batch):
    return soft_ce_loss_and_grad(p, spec, batch.x, np.asarray(batch.y, dtype=np.float64))


def bce_loss(p: ParamVector, spec: ModelSpec, batch: Batch) -> float:
    q = predict_proba(p, spec, batch.x)
    y = np.asarray(batch.y, dtype=np.float64)
    return float(-np.mean(y * np.log(q) + (1.0 - y) * np.log(1.0 - q)))


def bce_grad(p: ParamVector, spec: ModelSpec, batch: Batch) -> ParamVector:
    return bce_loss_and_grad(p, spec, batch)[1]

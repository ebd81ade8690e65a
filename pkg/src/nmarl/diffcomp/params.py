"""Named trainable parameters and their on-disk checkpoint format.

A checkpoint is a directory holding ``manifest.json`` (names, shapes, dtype,
byte offsets, free-form metadata) and ``params.bin`` (little-endian float64
payload, tensors concatenated in manifest order).
"""
from __future__ import annotations

import json
import os
from collections import OrderedDict

import numpy as np

from .engine import DTYPE, Tensor, parameter

MANIFEST = "manifest.json"
PAYLOAD = "params.bin"
_WIRE_DTYPE = np.dtype("<f8")


class CheckpointError(RuntimeError):
    pass


class ParamStore:
    """Ordered mapping of unique names to parameter tensors, plus optimizer state."""

    def __init__(self):
        self._params: OrderedDict[str, Tensor] = OrderedDict()
        self.opt_state: dict[str, dict[str, np.ndarray]] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = parameter(value, name=name)
        self._params[name] = p
        return p

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def __iter__(self):
        return iter(self._params)

    def names(self, prefix: str = ""):
        return [n for n in self._params if n.startswith(prefix)]

    def items(self, prefix: str = ""):
        return [(n, p) for n, p in self._params.items() if n.startswith(prefix)]

    def zero_grad(self):
        for p in self._params.values():
            p.grad = np.zeros_like(p.value)

    def grads(self):
        return OrderedDict((n, p.grad if p.grad is not None else np.zeros_like(p.value))
                           for n, p in self._params.items())

    def n_scalars(self, prefix: str = "") -> int:
        return sum(p.value.size for n, p in self.items(prefix))

    def values(self) -> OrderedDict:
        return OrderedDict((n, p.value.copy()) for n, p in self._params.items())

    def load_values(self, values, strict=True):
        for n, v in values.items():
            if n not in self._params:
                if strict:
                    raise CheckpointError(f"unexpected parameter {n!r}")
                continue
            p = self._params[n]
            v = np.asarray(v, dtype=DTYPE)
            if v.shape != p.value.shape:
                raise CheckpointError(f"shape mismatch for {n!r}: {v.shape} vs {p.value.shape}")
            p.value[...] = v
        if strict:
            missing = [n for n in self._params if n not in values]
            if missing:
                raise CheckpointError(f"checkpoint is missing parameters: {missing[:5]}")

    # persistence

    def save(self, path: str, metadata: dict | None = None):
        os.makedirs(path, exist_ok=True)
        entries, offset = [], 0
        with open(os.path.join(path, PAYLOAD), "wb") as fh:
            for n, p in self._params.items():
                buf = np.ascontiguousarray(p.value, dtype=_WIRE_DTYPE).tobytes()
                fh.write(buf)
                entries.append({"name": n, "shape": list(p.value.shape), "offset": offset})
                offset += len(buf)
        manifest = {"dtype": "float64", "byteorder": "little", "params": entries,
                    "metadata": metadata or {}}
        with open(os.path.join(path, MANIFEST), "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)

    @staticmethod
    def read(path: str):
        """Return ``(values, metadata)`` from a checkpoint directory."""
        try:
            with open(os.path.join(path, MANIFEST)) as fh:
                manifest = json.load(fh)
            with open(os.path.join(path, PAYLOAD), "rb") as fh:
                payload = fh.read()
        except FileNotFoundError as exc:
            raise CheckpointError(f"no checkpoint at {path!r}: {exc}") from None
        if manifest.get("dtype") != "float64" or manifest.get("byteorder") != "little":
            raise CheckpointError("unsupported checkpoint encoding")
        values = OrderedDict()
        for e in manifest["params"]:
            count = int(np.prod(e["shape"], dtype=np.int64))
            arr = np.frombuffer(payload, dtype=_WIRE_DTYPE, count=count, offset=e["offset"])
            values[e["name"]] = arr.astype(DTYPE).reshape(e["shape"])
        return values, manifest.get("metadata", {})

    def load(self, path: str, strict=True) -> dict:
        values, meta = self.read(path)
        self.load_values(values, strict=strict)
        return meta


# initializers

def orthogonal(rng, rows, cols, gain=1.0):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def scaled_uniform(rng, rows, cols, scale=1.0):
    # unit-variance-preserving: Var = scale**2 / fan_in
    lim = scale * np.sqrt(3.0 / cols)
    return rng.uniform(-lim, lim, size=(rows, cols))


def add_fc(store, rng, name, n_in, n_out, scale=1.0):
    store.add(f"{name}/W", scaled_uniform(rng, n_out, n_in, scale))
    store.add(f"{name}/b", np.zeros(n_out))


def add_lstm(store, rng, name, n_in, hidden):
    store.add(f"{name}/Wx", scaled_uniform(rng, 4 * hidden, n_in))
    wh = np.concatenate([orthogonal(rng, hidden, hidden) for _ in range(4)])
    store.add(f"{name}/Wh", wh)
    store.add(f"{name}/b", np.zeros(4 * hidden))

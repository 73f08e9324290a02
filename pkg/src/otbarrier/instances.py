"""JSON instance files and seeded generators.

Schema::

    {"kind": "classical" | "quantum",
     "dims": [n_1, ..., n_d],
     "cost": [...],          # flat row-major; quantum entries are [re, im]
     "marginals": [[...], ...],
     "metadata": {...}}      # optional

Quantum marginals are flat row-major [re, im] lists of n_i x n_i matrices.
Floats are written with ``repr`` so a write/read round trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .classical import ClassicalInstance
from .errors import DimensionError, InputError
from .quantum import QuantumInstance
from .tensor import ProductOperator

KINDS = ("classical", "quantum")


def _pairs(a: np.ndarray) -> list:
    a = np.asarray(a, dtype=complex).ravel()
    return [[float(v.real), float(v.imag)] for v in a]


def _from_pairs(x, shape, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    n = int(np.prod(shape))
    if arr.shape != (n, 2):
        raise DimensionError(f"{what}: expected {n} [re, im] pairs, got shape {arr.shape}")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(shape)


def to_dict(inst, metadata: dict | None = None) -> dict:
    meta = dict(metadata or {})
    if inst.name and "name" not in meta:
        meta["name"] = inst.name
    if isinstance(inst, QuantumInstance):
        out = {
            "kind": "quantum",
            "dims": list(inst.dims),
            "cost": _pairs(inst.C.matrix),
            "marginals": [_pairs(r) for r in inst.R.rho],
        }
    else:
        out = {
            "kind": "classical",
            "dims": list(inst.dims),
            "cost": [float(v) for v in inst.C.ravel()],
            "marginals": [[float(v) for v in p] for p in inst.P.p],
        }
    if meta:
        out["metadata"] = meta
    return out


def from_dict(data: dict):
    if not isinstance(data, dict):
        raise InputError("instance file must hold a JSON object")
    missing = [k for k in ("kind", "dims", "cost", "marginals") if k not in data]
    if missing:
        raise InputError(f"instance is missing fields: {', '.join(missing)}")
    kind = data["kind"]
    if kind not in KINDS:
        raise InputError(f"unknown kind {kind!r}")
    try:
        dims = tuple(int(n) for n in data["dims"])
    except (TypeError, ValueError) as exc:
        raise InputError(f"dims must be a list of integers: {exc}") from exc
    if len(dims) < 2 or any(n < 1 for n in dims):
        raise DimensionError(f"dims must list at least two positive sizes, got {dims}")
    margs = data["marginals"]
    if not isinstance(margs, list) or len(margs) != len(dims):
        raise DimensionError(f"expected {len(dims)} marginals")
    name = str(data.get("metadata", {}).get("name", ""))
    if kind == "classical":
        C = np.asarray(data["cost"], dtype=float)
        if C.size != int(np.prod(dims)):
            raise DimensionError(f"cost has {C.size} entries, dims need {int(np.prod(dims))}")
        P = []
        for i, (p, n) in enumerate(zip(margs, dims)):
            p = np.asarray(p, dtype=float)
            if p.shape != (n,):
                raise DimensionError(f"marginal {i} has shape {p.shape}, expected ({n},)")
            P.append(p)
        return ClassicalInstance(C.reshape(dims), P, name=name)
    N = int(np.prod(dims))
    C = _from_pairs(data["cost"], (N, N), "cost")
    R = [_from_pairs(r, (n, n), f"marginal {i}") for i, (r, n) in enumerate(zip(margs, dims))]
    return QuantumInstance(ProductOperator(dims, C), R, name=name)


def load_instance(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    return from_dict(data)


def dumps(data: dict) -> str:
    return json.dumps(data, indent=1) + "\n"


def save_instance(inst, path, metadata: dict | None = None) -> None:
    Path(path).write_text(dumps(to_dict(inst, metadata)))


def generate(kind: str, dims, seed: int = 0, conditioning: float = 0.1,
             diagonal: bool = False) -> dict:
    """Seeded random instance as a file dict.

    Classical: C uniform on [-1, 1]; p_i = floor/n_i + (1 - floor) w / sum w
    with w uniform, so min p_i >= floor/n_i.  Quantum: C = (A + A*)/2 scaled
    to spectral norm 1; rho_i = (B B* + floor I) / trace with
    ||B||_F^2 = n_i, so lambda_min(rho_i) >= floor / (n_i (1 + floor)).
    ``diagonal`` keeps only the diagonals of the quantum data.
    """
    if kind not in KINDS:
        raise InputError(f"unknown kind {kind!r}")
    dims = tuple(int(n) for n in dims)
    if len(dims) < 2 or any(n < 1 for n in dims):
        raise DimensionError(f"dims must list at least two positive sizes, got {dims}")
    if not 0 < conditioning <= 1:
        raise InputError(f"conditioning floor must lie in (0, 1], got {conditioning!r}")
    rng = np.random.default_rng(seed)
    meta = {"name": f"{kind}-{'x'.join(map(str, dims))}-s{seed}", "seed": seed,
            "conditioning": conditioning}
    if kind == "classical":
        C = rng.uniform(-1.0, 1.0, size=dims)
        P = []
        for n in dims:
            w = rng.uniform(0.0, 1.0, size=n)
            P.append(conditioning / n + (1.0 - conditioning) * w / w.sum())
        # equalize the masses exactly in floating point
        P = [p / p.sum() for p in P]
        inst = ClassicalInstance(C, P, name=meta["name"])
        return to_dict(inst, meta)
    N = int(np.prod(dims))
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    C = 0.5 * (A + A.conj().T)
    if diagonal:
        C = np.diag(np.diag(C).real).astype(complex)
    C = C / np.linalg.norm(C, 2)
    R = []
    for n in dims:
        B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        if diagonal:
            B = np.diag(np.diag(B))
        B *= np.sqrt(n) / np.linalg.norm(B)
        r = B @ B.conj().T + conditioning * np.eye(n)
        r = 0.5 * (r + r.conj().T)
        R.append(r / np.trace(r).real)
    meta["diagonal"] = bool(diagonal)
    inst = QuantumInstance(ProductOperator(dims, C), R, name=meta["name"])
    return to_dict(inst, meta)


def generate_instance(kind: str, dims, seed: int = 0, conditioning: float = 0.1,
                      diagonal: bool = False):
    return from_dict(generate(kind, dims, seed, conditioning, diagonal))

"""Text (JSON) export and import of map families and transfer-tensor sets.

Binary-free interchange: complex matrices are nested row-major lists of
``[re, im]`` pairs, and every document carries a convention header naming the
vectorization and norm conventions it was produced under. Floats survive the
round trip exactly (shortest-repr JSON), comfortably inside the 1e-15
contract.
"""

from __future__ import annotations

import json

import numpy as np

from .models import TimeGrid
from .tomography import (
    DynamicalMapFamily,
    FixedState,
    FrozenSystem,
    ReferencePolicy,
    TrueEnvironment,
    policy_label,
)
from .transfer import MemoryConfig, TransferTensorSet

CONVENTIONS = {
    "vectorization": "column-stacking",
    "matrix_entries": "row-major nested lists of [re, im] pairs",
    "operator_norm": "largest singular value",
}


def complex_matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def complex_matrix_from_json(rows: list) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def _policy_to_json(policy: ReferencePolicy) -> dict:
    descriptor = {"kind": policy_label(policy)}
    if isinstance(policy, FixedState):
        descriptor["tau"] = complex_matrix_to_json(policy.tau)
    return descriptor


def _policy_from_json(descriptor: dict) -> ReferencePolicy:
    kind = descriptor["kind"]
    if kind == "fixed":
        return FixedState(complex_matrix_from_json(descriptor["tau"]))
    if kind == "true-env":
        return TrueEnvironment()
    if kind == "frozen":
        # the frozen-system profile is a callable and is not serialized;
        # imported families carry their stored reference states instead
        return FrozenSystem(sigma=None)
    raise ValueError(f"unknown policy kind {kind!r}")


def family_to_json(family: DynamicalMapFamily) -> dict:
    return {
        "format": "memtensor-map-family",
        "version": 1,
        "conventions": CONVENTIONS,
        "grid": {
            "t0": family.grid.t0,
            "dt": family.grid.dt,
            "steps": family.grid.steps,
        },
        "policy": _policy_to_json(family.policy),
        "maps": {
            f"{i},{j}": complex_matrix_to_json(m) for (i, j), m in sorted(family.maps.items())
        },
        "reference_states": {
            str(j): complex_matrix_to_json(tau)
            for j, tau in sorted(family.reference_states.items())
        },
    }


def family_from_json(doc: dict) -> DynamicalMapFamily:
    if doc.get("format") != "memtensor-map-family":
        raise ValueError(f"not a map-family document: format={doc.get('format')!r}")
    grid = TimeGrid(**doc["grid"])
    family = DynamicalMapFamily(grid=grid, policy=_policy_from_json(doc["policy"]))
    for key, rows in doc["maps"].items():
        i, j = (int(part) for part in key.split(","))
        family.maps[(i, j)] = complex_matrix_from_json(rows)
    for key, rows in doc["reference_states"].items():
        family.reference_states[int(key)] = complex_matrix_from_json(rows)
    return family


def tensors_to_json(tensor_set: TransferTensorSet) -> dict:
    config = tensor_set.config
    return {
        "format": "memtensor-transfer-tensors",
        "version": 1,
        "conventions": CONVENTIONS,
        "config": {
            "dt": config.dt,
            "m": config.m,
            "c": config.c,
            "transient_steps": config.transient_steps,
        },
        "tensors": {
            f"{p},{l}": complex_matrix_to_json(t)
            for (p, l), t in sorted(tensor_set.tensors.items())
        },
        "residuals": {
            str(k): complex_matrix_to_json(r) for k, r in sorted(tensor_set.residuals.items())
        },
    }


def tensors_from_json(doc: dict) -> TransferTensorSet:
    if doc.get("format") != "memtensor-transfer-tensors":
        raise ValueError(f"not a transfer-tensor document: format={doc.get('format')!r}")
    tensor_set = TransferTensorSet(config=MemoryConfig(**doc["config"]))
    for key, rows in doc["tensors"].items():
        p, l = (int(part) for part in key.split(","))
        tensor_set.tensors[(p, l)] = complex_matrix_from_json(rows)
    for key, rows in doc["residuals"].items():
        tensor_set.residuals[int(key)] = complex_matrix_from_json(rows)
    return tensor_set


def save_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)

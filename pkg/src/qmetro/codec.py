"""Plain-data encoding of matrices, states and POVMs.

Complex arrays are stored as paired ``re``/``im`` nested lists so configs
stay human-editable and diff-friendly. ``im`` may be omitted when zero.
"""
from __future__ import annotations

import numpy as np

from .states import Povm, QuantumState


def encode_array(a) -> dict:
    a = np.asarray(a, dtype=complex)
    out = {"re": a.real.tolist()}
    if np.any(a.imag != 0):
        out["im"] = a.imag.tolist()
    return out


def decode_array(obj, ndim: int | None = None) -> np.ndarray:
    if isinstance(obj, dict):
        if "re" not in obj:
            raise ValueError("complex array needs an 're' entry")
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
        if re.shape != im.shape:
            raise ValueError(f"re/im shapes differ: {re.shape} vs {im.shape}")
        a = re + 1j * im
    else:
        a = np.asarray(obj, dtype=complex)
    if ndim is not None and a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("array has non-finite entries")
    return a


def encode_state(state: QuantumState) -> dict:
    if state.vector is not None:
        return {"vector": encode_array(state.vector)}
    if state.components is not None:
        return {"ensemble": {"weights": state.weights.tolist(),
                             "vectors": [encode_array(v) for v in state.components]}}
    return {"density": encode_array(state.rho)}


def decode_state(obj: dict) -> QuantumState:
    if not isinstance(obj, dict):
        raise ValueError("state must be a mapping")
    if "vector" in obj:
        return QuantumState.pure(decode_array(obj["vector"], 1), normalize=bool(obj.get("normalize", False)))
    if "density" in obj:
        return QuantumState.mixed(decode_array(obj["density"], 2))
    if "ensemble" in obj:
        ens = obj["ensemble"]
        return QuantumState.ensemble(ens["weights"], [decode_array(v, 1) for v in ens["vectors"]])
    raise ValueError("state needs one of: vector, density, ensemble")


def encode_povm(povm: Povm) -> dict:
    if povm.operators is not None:
        return {"operators": [encode_array(m) for m in povm.operators]}
    return {"elements": [encode_array(e) for e in povm.elements]}


def decode_povm(obj: dict) -> Povm:
    if not isinstance(obj, dict):
        raise ValueError("povm must be a mapping")
    if "operators" in obj:
        return Povm.from_operators([decode_array(m, 2) for m in obj["operators"]])
    if "elements" in obj:
        return Povm(tuple(decode_array(e, 2) for e in obj["elements"]))
    if "observable" in obj:
        return Povm.from_observable(decode_array(obj["observable"], 2))
    if "basis" in obj:
        return Povm.projective(decode_array(obj["basis"], 2))
    raise ValueError("povm needs one of: operators, elements, observable, basis")

"""Experiment configuration files (YAML).

Example::

    hamiltonian: {re: [[0.5, 0], [0, -0.5]]}
    tau: 1.0
    shots: 100
    state: {vector: {re: [0.7071067811865476, 0.7071067811865476]}}
    povm: {observable: {re: [[0, 0], [0, 0]], im: [[0, 1], [-1, 0]]}}

Any mapping of the form ``{file: path}`` is replaced by the YAML document
at ``path`` (relative to the config file). ``protocol`` may be a full
protocol mapping or ``{preset: ancilla, k: 3, tau: 1.0}``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .codec import decode_array, decode_povm, decode_state, encode_array, encode_povm, encode_state
from .errors import CapExceeded, QMetroError
from .linalg import hermitian_part
from .montecarlo import ESTIMATORS
from .protocols import MultiRoundSpec, ProtocolSpec, spec_from_dict
from .protocols.ancilla import build_ancilla_protocol, measurement_hamiltonian
from .states import Povm, QuantumState


class ConfigError(QMetroError, ValueError):
    """The configuration file cannot be parsed or is inconsistent."""


KNOWN_KEYS = {"hamiltonian", "tau", "shots", "state", "povm", "protocol", "b_true", "repeats",
              "estimator", "grid", "phi"}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    hamiltonian: np.ndarray | None = None
    tau: float | None = None
    shots: int = 1
    state: QuantumState | None = None
    povm: Povm | None = None
    protocol: ProtocolSpec | MultiRoundSpec | None = None
    protocol_source: dict | None = None
    b_true: float = 0.0
    repeats: int = 1
    estimator: str = "mle"
    grid: int = 721
    phi: float | None = None

    def require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError("config is missing: " + ", ".join(missing))

    def resolved_protocol(self) -> ProtocolSpec | MultiRoundSpec:
        """The declared protocol, or a single-step one built from state, H, POVM and tau."""
        if self.protocol is not None:
            return self.protocol
        self.require("state", "hamiltonian", "povm", "tau")
        return ProtocolSpec.simple(self.state, self.hamiltonian, self.povm, self.tau, self.shots)


def _resolve_files(obj, base: Path, depth: int = 0):
    if depth > 16:
        raise ConfigError("file references nest too deeply")
    if isinstance(obj, dict):
        if set(obj) == {"file"}:
            path = (base / str(obj["file"])).resolve()
            if not path.is_file():
                raise ConfigError(f"referenced file does not exist: {path}")
            return _resolve_files(_load_yaml(path.read_text()), path.parent, depth + 1)
        return {k: _resolve_files(v, base, depth) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_resolve_files(v, base, depth) for v in obj]
    return obj


def _load_yaml(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None


def _protocol(obj: dict):
    if obj.get("preset") == "ancilla":
        extra = set(obj) - {"preset", "k", "tau", "coupling", "rounds"}
        if extra:
            raise ConfigError(f"unknown ancilla preset keys: {sorted(extra)}")
        return build_ancilla_protocol(int(obj["k"]), float(obj.get("tau", 1.0)),
                                      float(obj.get("coupling", 1.0)), int(obj.get("rounds", 1)))
    if "preset" in obj:
        raise ConfigError(f"unknown protocol preset {obj['preset']!r}")
    return spec_from_dict(obj)


def _hamiltonian(obj) -> np.ndarray:
    if isinstance(obj, dict) and obj.get("preset") == "ancilla":
        return measurement_hamiltonian(int(obj["k"]))
    return hermitian_part(decode_array(obj, 2))


def parse_config(data: dict | str, base_dir: str | Path = ".") -> ExperimentConfig:
    """Build and validate a config from YAML text or an already-loaded mapping."""
    if isinstance(data, str):
        data = _load_yaml(data)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data = _resolve_files(data, Path(base_dir))
    try:
        h = _hamiltonian(data["hamiltonian"]) if "hamiltonian" in data else None
        state = decode_state(data["state"]) if "state" in data else None
        povm = decode_povm(data["povm"]) if "povm" in data else None
        proto = _protocol(data["protocol"]) if "protocol" in data else None
        tau = float(data["tau"]) if "tau" in data else None
        shots = int(data.get("shots", 1))
        estimator = str(data.get("estimator", "mle"))
        cfg = ExperimentConfig(
            hamiltonian=h, tau=tau, shots=shots, state=state, povm=povm, protocol=proto,
            protocol_source=data.get("protocol"),
            b_true=float(data.get("b_true", 0.0)), repeats=int(data.get("repeats", 1)),
            estimator=estimator, grid=int(data.get("grid", 721)),
            phi=float(data["phi"]) if data.get("phi") is not None else None,
        )
    except (ConfigError, CapExceeded):
        raise
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config entry: {exc!r}") from None
    except ValueError as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    if shots < 1 or cfg.repeats < 1:
        raise ConfigError("shots and repeats must be >= 1")
    if tau is not None and tau < 0:
        raise ConfigError("tau must be non-negative")
    if estimator not in ESTIMATORS:
        raise ConfigError(f"estimator must be one of {ESTIMATORS}")
    if proto is not None and h is None:
        first = proto if isinstance(proto, ProtocolSpec) else (proto.policy.get(()) or proto.fallback)
        if first is not None:
            cfg = replace(cfg, hamiltonian=first.hamiltonian, tau=first.tau if tau is None else tau)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file does not exist: {path}")
    return parse_config(path.read_text(), path.parent)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-data form with every file reference inlined; parses back to an equal config."""
    out = {"shots": cfg.shots, "b_true": cfg.b_true, "repeats": cfg.repeats, "estimator": cfg.estimator,
           "grid": cfg.grid}
    if cfg.phi is not None:
        out["phi"] = cfg.phi
    if cfg.hamiltonian is not None:
        out["hamiltonian"] = encode_array(cfg.hamiltonian)
    if cfg.tau is not None:
        out["tau"] = cfg.tau
    if cfg.state is not None:
        out["state"] = encode_state(cfg.state)
    if cfg.povm is not None:
        out["povm"] = encode_povm(cfg.povm)
    if cfg.protocol is not None:
        src = cfg.protocol_source
        out["protocol"] = dict(src) if isinstance(src, dict) and "preset" in src else cfg.protocol.to_dict()
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)

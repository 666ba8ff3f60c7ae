"""Shared numerical tolerances and experiment configuration records."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Tolerances:
    """Central tolerance record used across geometry, quadrature and coupling."""

    det: float = 1e-12
    boundary_vec: float = 1e-300
    isometry: float = 1e-10
    quad_rel: float = 1e-10
    quad_trunc: float = 1e-16
    hit_time: float = 1e-6
    boundary_limit: float = 1e-6
    zero_eigenvalue: float = 1e-8
    symmetry: float = 1e-12
    transfer_root: float = 1e-10


TOL = Tolerances()


@dataclass
class ExperimentConfig:
    experiment: str = "converge"
    beta: float = 2.0
    betas: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0])
    n_list: list[int] = field(default_factory=lambda: [16, 32, 64, 128, 256, 512])
    replicas: int = 50
    seed: int = 20240917
    base_step: float = 1e-3
    window: int = 20
    # quadrature grid: panels per piece, node budget, tail panels down to 1 - u_num
    nodes_per_panel: int = 16
    nodes_target: int = 1024
    tail_nodes: int = 4
    u_num: float = 1e-8
    kcut_c: float = 1.0
    kcut_p: float = 2.0
    t_grid: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.5, 1.0])
    r_points: int = 200
    deltas: list[float] = field(default_factory=lambda: [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3])
    truncations: list[float] = field(default_factory=lambda: [0.9, 0.99])
    gamma: float = 10.0
    step_replicas: int = 10000
    walk_n: int = 64
    walk_replicas: int = 2000
    dual_n: int = 8
    dual_nodes: int = 2000
    dual_replicas: int = 20
    law_replicas: int = 2000
    lln_replicas: int = 50
    figure_n: int = 16
    workers: int = 1
    confidence_sigma: float = 3.0
    outdir: str = "runs"

    def validate(self) -> None:
        numeric = {
            name: getattr(self, name)
            for name in ("beta", "replicas", "base_step", "window", "nodes_per_panel", "nodes_target",
                         "tail_nodes", "u_num", "kcut_c", "kcut_p", "r_points", "gamma",
                         "step_replicas", "walk_n", "walk_replicas", "dual_n", "dual_nodes",
                         "dual_replicas", "law_replicas", "lln_replicas", "figure_n", "workers",
                         "confidence_sigma")
        }
        for name, value in numeric.items():
            if not value > 0:
                raise ValueError(f"config field {name!r} must be positive, got {value!r}")
        if any(n < 1 for n in self.n_list):
            raise ValueError("n_list entries must be >= 1")
        if list(self.n_list) != sorted(self.n_list):
            raise ValueError("n_list must be sorted")
        for name in ("betas", "t_grid", "deltas", "truncations"):
            if any(not v > 0 for v in getattr(self, name)):
                raise ValueError(f"config field {name!r} must hold positive values")
        if not self.u_num < 1:
            raise ValueError("u_num must be below 1")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def apply_override(data: dict[str, Any], dotted: str) -> None:
    """Apply a ``key=value`` override; the value is parsed as JSON when possible."""
    if "=" not in dotted:
        raise ValueError(f"override must look like key=value, got {dotted!r}")
    key, raw = dotted.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value

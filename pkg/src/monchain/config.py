"""Experiment configuration: validation, JSON ingestion, fingerprinting.

Config files are flat JSON objects; lattice fields (L, J, pbc, nu,
monitored_sites, gamma) live at top level next to the run fields.  CLI
flag overrides are applied on top of the file before validation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .lattice import LatticeSpec

PROTOCOLS = (
    "quantum_jump",
    "no_click",
    "hermitian_quench",
    "fixed_interval",
    "projective",
)

# Bernoulli jump sampling is first order in dt; keep the total per-step
# jump probability small.
STEP_GUARD = 0.1

_LATTICE_KEYS = {"L", "J", "pbc", "nu", "monitored_sites", "gamma"}


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulation run."""

    lattice: LatticeSpec
    protocol: str
    dt: float = 0.05
    t_max: float = 100.0
    sample_interval: float = 0.5
    subsystem_sizes: tuple[int, ...] | None = None
    subsystem_offset: int = 0
    event_ell: int | None = None
    n_trajectories: int = 1
    master_seed: int = 0
    delta_t: float | None = None
    epsilons: tuple[float, ...] = (0.05,)
    kernel_width: float = 5.0
    tau_split: float | None = None
    n_bins: int | None = None
    fit_window: tuple[float, float] | None = None
    out_dir: str = "runs"

    def __post_init__(self):
        L = self.lattice.L
        if self.protocol not in PROTOCOLS:
            raise ConfigError(
                f"protocol: {self.protocol!r} is not one of {PROTOCOLS}"
            )
        if self.dt <= 0:
            raise ConfigError(f"dt: must be > 0, got {self.dt}")
        ratio = self.sample_interval / self.dt
        if self.sample_interval < self.dt or abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError(
                f"sample_interval: {self.sample_interval} must be an integer "
                f"multiple of dt={self.dt}"
            )
        if self.t_max < self.sample_interval:
            raise ConfigError(
                f"t_max: {self.t_max} is shorter than one sample interval"
            )
        if self.subsystem_sizes is None:
            object.__setattr__(self, "subsystem_sizes", (max(L // 4, 1),))
        sizes = tuple(int(x) for x in self.subsystem_sizes)
        if len(sizes) == 0 or len(set(sizes)) != len(sizes):
            raise ConfigError(f"subsystem_sizes: need distinct sizes, got {sizes}")
        for ell in sizes:
            if not 1 <= ell < L:
                raise ConfigError(f"subsystem_sizes: {ell} outside [1, {L})")
        object.__setattr__(self, "subsystem_sizes", sizes)
        if not 0 <= self.subsystem_offset < L:
            raise ConfigError(
                f"subsystem_offset: {self.subsystem_offset} outside [0, {L})"
            )
        if self.event_ell is not None and not 1 <= self.event_ell < L:
            raise ConfigError(f"event_ell: {self.event_ell} outside [1, {L})")
        if self.n_trajectories < 1:
            raise ConfigError(f"n_trajectories: must be >= 1")
        if self.protocol == "fixed_interval":
            if self.delta_t is None or self.delta_t <= 0:
                raise ConfigError(
                    "delta_t: fixed_interval protocol needs delta_t > 0"
                )
        budget = len(self.lattice.monitored_sites) * self.lattice.gamma * self.dt
        if budget > STEP_GUARD + 1e-12:
            raise ConfigError(
                f"step guard violated: n_sites*gamma*dt = {budget:.4g} > {STEP_GUARD} "
                "(reduce dt)"
            )
        if self.event_ell is None:
            object.__setattr__(self, "event_ell", sizes[0])

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.sample_interval / self.dt))

    @property
    def n_samples(self) -> int:
        return self.n_steps // self.steps_per_sample + 1

    def replace(self, **kwargs) -> "SimConfig":
        """New config with the given flat fields changed (lattice keys allowed)."""
        flat = to_flat_dict(self)
        flat.update(kwargs)
        return config_from_flat(flat)


def to_flat_dict(config: SimConfig) -> dict:
    """Flatten to the JSON schema (lattice fields at top level)."""
    d = asdict(config)
    lat = d.pop("lattice")
    out = {**lat, **d}
    out["monitored_sites"] = list(lat["monitored_sites"])
    return out


def config_from_flat(flat: dict) -> SimConfig:
    """Build a validated SimConfig from a flat key/value mapping."""
    flat = dict(flat)
    known = _LATTICE_KEYS | {f.name for f in fields(SimConfig) if f.name != "lattice"}
    unknown = set(flat) - known
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    if "L" not in flat:
        raise ConfigError("L: required field missing")
    if "protocol" not in flat:
        raise ConfigError("protocol: required field missing")
    lat_kwargs = {k: flat.pop(k) for k in list(flat) if k in _LATTICE_KEYS}
    if "monitored_sites" in lat_kwargs:
        lat_kwargs["monitored_sites"] = tuple(lat_kwargs["monitored_sites"])
    for key in ("subsystem_sizes", "epsilons", "fit_window"):
        if flat.get(key) is not None:
            flat[key] = tuple(flat[key])
    lattice = LatticeSpec(**lat_kwargs)
    return SimConfig(lattice=lattice, **flat)


def parse_config(path: str | Path, overrides: dict | None = None) -> SimConfig:
    """Load a JSON config file and apply flat-field overrides."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        flat = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(flat, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    if overrides:
        flat.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_flat(flat)


def fingerprint(config: SimConfig) -> str:
    """Content hash of the config, stable under key reordering.

    The output directory is excluded so the same experiment hashes
    identically wherever its results are stored.
    """
    flat = to_flat_dict(config)
    flat.pop("out_dir")
    canon = json.dumps(flat, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]

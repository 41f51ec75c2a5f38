"""Experiment configuration: JSON file plus command-line overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional


class ConfigError(ValueError):
    pass


# per-test defaults applied to every field left at None
TEST_DEFAULTS = {
    1: dict(n=64, dt=0.05, T=20.0, offline_dt=None),
    2: dict(n=41, dt=0.1, T=1.0, controls=[0.0, 0.5, 1.0], gamma_pen=1e-3, offline_dt=0.5),
    3: dict(n=41, dt=0.1, T=2.0, controls=[0.0, 1.0], gamma_pen=0.0, offline_dt=0.5),
    4: dict(n=41, dt=0.1, T=1.0, controls=[0.0, 1.0], gamma_pen=0.0, offline_dt=0.2),
}


@dataclass(frozen=True)
class ExperimentConfig:
    test: int = 1
    n: Optional[int] = None
    r: float = 100.0
    dt: Optional[float] = None
    T: Optional[float] = None
    tol: float = 1e-3
    deim_tol: Optional[float] = None
    pressure_tol: Optional[float] = None
    eps_T: Optional[float] = None
    controls: Optional[list] = None
    m_sweep: Optional[list] = None
    offline_M: int = 2
    offline_dt: Optional[float] = None
    T_target: float = 20.0
    gamma_pen: Optional[float] = None
    test2_bc: str = "lid"
    lam: float = 0.0
    sizes: Optional[list] = None
    timing_steps: int = 20
    repeats: int = 3
    vector_max_n: int = 64
    max_nodes: int = 3_000_000
    out: str = "out"
    seed: int = 0

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def override(self, **kw) -> "ExperimentConfig":
        cfg = replace(self, **{k: v for k, v in kw.items() if v is not None})
        cfg.validate()
        return cfg

    def resolved(self) -> "ExperimentConfig":
        """Copy with the per-test defaults filled in."""
        defaults = TEST_DEFAULTS[self.test]
        kw = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        cfg = replace(self, **kw)
        if cfg.eps_T is None:
            cfg = replace(cfg, eps_T=cfg.dt**2)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def bad(msg):
            raise ConfigError(msg)

        if self.test not in TEST_DEFAULTS:
            bad(f"test must be one of 1..4, got {self.test}")
        if self.n is not None and (not isinstance(self.n, int) or self.n < 2):
            bad(f"n must be an integer >= 2, got {self.n}")
        for name in ("dt", "T", "r", "tol", "T_target"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                bad(f"{name} must be positive, got {v}")
        for name in ("tol", "deim_tol", "pressure_tol"):
            v = getattr(self, name)
            if v is not None and not 0 < v <= 1:
                bad(f"{name} must lie in (0, 1], got {v}")
        for name in ("eps_T", "gamma_pen", "lam"):
            v = getattr(self, name)
            if v is not None and v < 0:
                bad(f"{name} must be non-negative, got {v}")
        if self.controls is not None:
            c = list(self.controls)
            if not c or any(b <= a for a, b in zip(c, c[1:])):
                bad("controls must be a non-empty increasing list")
        if self.m_sweep is not None and (not self.m_sweep or any(int(m) < 1 for m in self.m_sweep)):
            bad("m_sweep entries must be positive integers")
        if self.test2_bc not in ("lid", "homogeneous"):
            bad(f"test2_bc must be 'lid' or 'homogeneous', got {self.test2_bc!r}")
        if self.offline_M < 1:
            bad("offline_M must be >= 1")
        if self.offline_dt is not None and self.offline_dt <= 0:
            bad("offline_dt must be positive")
        if self.sizes is not None and any(int(s) < 2 for s in self.sizes):
            bad("sizes must be integers >= 2")
        if self.timing_steps < 1 or self.repeats < 1:
            bad("timing_steps and repeats must be >= 1")
        if self.dt is not None and self.T is not None:
            k = self.T / self.dt
            if abs(k - round(k)) > 1e-9:
                bad(f"T={self.T} is not a multiple of dt={self.dt}")
        if self.dt is not None and self.offline_dt is not None:
            k = self.offline_dt / self.dt
            if abs(k - round(k)) > 1e-9 or round(k) < 1:
                bad(f"offline_dt={self.offline_dt} is not a multiple of dt={self.dt}")

    @property
    def n_t(self) -> int:
        return int(round(self.T / self.dt))

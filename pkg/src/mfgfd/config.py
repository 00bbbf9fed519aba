"""Run configuration: a flat INI-style key-value file with sections.

The key names are normative (see the README for the full reference).  A
minimal evolutive config:

    [problem]
    kind = evolutive
    nu = 1.0
    beta = 2.0
    T = 1.0
    N_h = 16
    N_T = 32
    hamiltonian = zero
    u0 = zero
    mT = uniform

    [cost]
    kind = local
    local.preset = linear

Validation failures raise ConfigError carrying the offending section.key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config_text"]


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config error at [{key}]: {message}")
        self.key = key
        self.detail = message


@dataclass
class RunConfig:
    kind: str = "evolutive"
    nu: float = 1.0
    beta: float = 2.0
    horizon: float = 1.0
    n_side: int = 16
    n_steps: int = 32
    hamiltonian: str = "zero"
    hamiltonian_amplitude: float = 1.0
    hamiltonian_file: Optional[str] = None
    u0: str = "zero"
    u0_amplitude: float = 1.0
    u0_file: Optional[str] = None
    mT: str = "uniform"
    mT_kappa: float = 2.0
    mT_file: Optional[str] = None
    cost_kind: str = "local"
    cost_local_preset: str = "linear"
    cost_local_alpha: float = 1.0
    damping: float = 0.5
    outer_tol: float = 1e-9
    max_outer: int = 500
    newton_tol: float = 1e-11
    max_newton: int = 50
    armijo_c: float = 1e-4
    min_step: float = 2.0 ** -20
    residual_tol: float = 1e-12
    levels: list[int] = field(default_factory=list)
    steps_per_side: int = 2
    out_dir: str = "out"
    text: str = ""


def _get(parser, section, key, cast, default, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(f"{section}.{key}", "required key is missing")
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r}") from None


def _parse_levels(raw: str) -> list[int]:
    return [int(tok) for tok in raw.replace(",", " ").split()]


def parse_config_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case (N_h, N_T, T)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None

    cfg = RunConfig(text=text)
    if parser.has_section("problem"):
        cfg.kind = _get(parser, "problem", "kind", str, cfg.kind)
        cfg.nu = _get(parser, "problem", "nu", float, cfg.nu)
        cfg.beta = _get(parser, "problem", "beta", float, cfg.beta)
        cfg.horizon = _get(parser, "problem", "T", float, cfg.horizon)
        cfg.n_side = _get(parser, "problem", "N_h", int, cfg.n_side)
        cfg.n_steps = _get(parser, "problem", "N_T", int, cfg.n_steps)
        cfg.hamiltonian = _get(parser, "problem", "hamiltonian", str, cfg.hamiltonian)
        cfg.hamiltonian_amplitude = _get(
            parser, "problem", "hamiltonian.amplitude", float, cfg.hamiltonian_amplitude
        )
        cfg.hamiltonian_file = _get(parser, "problem", "hamiltonian.file", str, None)
        cfg.u0 = _get(parser, "problem", "u0", str, cfg.u0)
        cfg.u0_amplitude = _get(parser, "problem", "u0.amplitude", float, cfg.u0_amplitude)
        cfg.u0_file = _get(parser, "problem", "u0.file", str, None)
        cfg.mT = _get(parser, "problem", "mT", str, cfg.mT)
        cfg.mT_kappa = _get(parser, "problem", "mT.kappa", float, cfg.mT_kappa)
        cfg.mT_file = _get(parser, "problem", "mT.file", str, None)
    if parser.has_section("cost"):
        cfg.cost_kind = _get(parser, "cost", "kind", str, cfg.cost_kind)
        cfg.cost_local_preset = _get(parser, "cost", "local.preset", str, cfg.cost_local_preset)
        cfg.cost_local_alpha = _get(parser, "cost", "local.alpha", float, cfg.cost_local_alpha)
    if parser.has_section("solver"):
        cfg.damping = _get(parser, "solver", "damping", float, cfg.damping)
        cfg.outer_tol = _get(parser, "solver", "outer_tol", float, cfg.outer_tol)
        cfg.max_outer = _get(parser, "solver", "max_outer", int, cfg.max_outer)
        cfg.newton_tol = _get(parser, "solver", "newton_tol", float, cfg.newton_tol)
        cfg.max_newton = _get(parser, "solver", "max_newton", int, cfg.max_newton)
        cfg.armijo_c = _get(parser, "solver", "armijo_c", float, cfg.armijo_c)
        cfg.min_step = _get(parser, "solver", "min_step", float, cfg.min_step)
        cfg.residual_tol = _get(parser, "solver", "residual_tol", float, cfg.residual_tol)
    if parser.has_section("study"):
        cfg.levels = _get(parser, "study", "levels", _parse_levels, [])
        cfg.steps_per_side = _get(parser, "study", "steps_per_side", int, cfg.steps_per_side)
    if parser.has_section("output"):
        cfg.out_dir = _get(parser, "output", "dir", str, cfg.out_dir)

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.kind not in ("evolutive", "ergodic"):
        raise ConfigError("problem.kind", f"must be 'evolutive' or 'ergodic', got {cfg.kind!r}")
    if not cfg.beta > 1.0:
        raise ConfigError("problem.beta", f"the Hamiltonian power must satisfy beta > 1, got {cfg.beta}")
    if cfg.nu <= 0:
        raise ConfigError("problem.nu", f"must be positive, got {cfg.nu}")
    if cfg.n_side < 2:
        raise ConfigError("problem.N_h", f"must be an integer >= 2, got {cfg.n_side}")
    if cfg.kind == "evolutive":
        if cfg.horizon <= 0:
            raise ConfigError("problem.T", f"must be positive, got {cfg.horizon}")
        if cfg.n_steps < 1:
            raise ConfigError("problem.N_T", f"must be a positive integer, got {cfg.n_steps}")
    if cfg.hamiltonian not in ("zero", "sines", "file"):
        raise ConfigError("problem.hamiltonian", f"unknown preset {cfg.hamiltonian!r}")
    if cfg.hamiltonian == "file" and not cfg.hamiltonian_file:
        raise ConfigError("problem.hamiltonian.file", "required for the 'file' preset")
    if cfg.u0 not in ("zero", "cosine", "file"):
        raise ConfigError("problem.u0", f"unknown preset {cfg.u0!r}")
    if cfg.u0 == "file" and not cfg.u0_file:
        raise ConfigError("problem.u0.file", "required for the 'file' preset")
    if cfg.mT not in ("uniform", "bump", "file"):
        raise ConfigError("problem.mT", f"unknown preset {cfg.mT!r}")
    if cfg.mT == "file" and not cfg.mT_file:
        raise ConfigError("problem.mT.file", "required for the 'file' preset")
    if cfg.cost_kind not in ("local", "bilaplacian"):
        raise ConfigError("cost.kind", f"must be 'local' or 'bilaplacian', got {cfg.cost_kind!r}")
    if cfg.cost_kind == "local" and cfg.cost_local_preset not in ("linear", "power"):
        raise ConfigError("cost.local.preset", f"must be 'linear' or 'power', got {cfg.cost_local_preset!r}")
    if cfg.cost_kind == "local" and cfg.cost_local_preset == "power" and not 0.0 < cfg.cost_local_alpha <= 2.0:
        raise ConfigError("cost.local.alpha", f"must lie in (0, 2], got {cfg.cost_local_alpha}")
    if cfg.kind == "ergodic" and cfg.cost_kind != "local":
        raise ConfigError("cost.kind", "the ergodic solver requires a local cost")
    if not 0.0 < cfg.damping <= 1.0:
        raise ConfigError("solver.damping", f"must lie in (0, 1], got {cfg.damping}")
    if cfg.outer_tol <= 0 or cfg.newton_tol <= 0 or cfg.residual_tol <= 0:
        raise ConfigError("solver", "tolerances must be positive")
    if cfg.max_outer < 1 or cfg.max_newton < 1:
        raise ConfigError("solver", "iteration caps must be >= 1")
    if not 0.0 < cfg.armijo_c < 1.0:
        raise ConfigError("solver.armijo_c", f"must lie in (0, 1), got {cfg.armijo_c}")
    if cfg.levels:
        if len(cfg.levels) < 2:
            raise ConfigError("study.levels", "need at least two levels")
        for a, b in zip(cfg.levels, cfg.levels[1:]):
            if b % a != 0 or b <= a:
                raise ConfigError(
                    "study.levels",
                    f"levels must be nested (each divides the next): {a} -> {b}",
                )
        if cfg.steps_per_side < 1:
            raise ConfigError("study.steps_per_side", "must be >= 1")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("file", f"config file {path} does not exist")
    return parse_config_text(path.read_text())

"""Experiment configuration: a single JSON document validated against a bundled schema."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import GamekitError, InvalidInput
from .game import GameSpec, make_spec
from .lti import LtiSystem, Trajectory, generate_offline_data, read_trajectory_csv
from .numerics import DEFAULT_RCOND, default_tol


class ConfigError(GamekitError):
    """Unreadable, schema-invalid or inconsistent configuration."""


@dataclass(frozen=True)
class DataRecipe:
    length: int
    amplitude: float = 5.0
    seed: int = 0
    x1: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        return {"length": self.length, "amplitude": self.amplitude, "seed": self.seed,
                "x1": None if self.x1 is None else list(self.x1)}


@dataclass(frozen=True)
class Tolerances:
    rank: float = field(default_factory=default_tol)
    residual: float = 1e-8
    rcond: float = DEFAULT_RCOND
    cross_check: float = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one CLI run needs; exactly one of ``data_files`` and ``generate`` is set."""

    game: GameSpec
    T_ini: int
    horizon_min: int
    horizon_max: int
    system: LtiSystem | None = None
    data_files: tuple[Path, ...] = ()
    generate: DataRecipe | None = None
    n_hint: int | None = None
    T: int | None = None
    u_ini: np.ndarray | None = None
    y_ini: np.ndarray | None = None
    eps: float = 0.01
    M: int = 1000
    output_dir: Path = Path("gamekit_out")
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if (self.generate is None) == (not self.data_files):
            raise ConfigError("exactly one data source (files or generate) is required")
        if self.generate is not None and self.system is None:
            raise ConfigError("generating data needs a system")
        if not 1 <= self.horizon_min <= self.horizon_max:
            raise ConfigError(f"empty horizon range {self.horizon_min}..{self.horizon_max}")
        if self.n_hint is None and self.system is None:
            raise ConfigError("n_hint is required when no system is given")
        if (self.u_ini is None) != (self.y_ini is None):
            raise ConfigError("initial_data needs both u_ini and y_ini")

    @property
    def horizons(self) -> range:
        return range(self.horizon_min, self.horizon_max + 1)

    @property
    def solve_T(self) -> int:
        return self.horizon_max if self.T is None else self.T

    @property
    def state_dim(self) -> int:
        return self.n_hint if self.n_hint is not None else self.system.n

    @property
    def has_initial_data(self) -> bool:
        return self.u_ini is not None

    def load_data(self, seed: int | None = None, length: int | None = None) -> list[Trajectory]:
        """Read the data files or run the generation recipe (``seed``/``length`` override it)."""
        if self.generate is not None:
            g = self.generate
            x1 = None if g.x1 is None else np.asarray(g.x1)
            return [generate_offline_data(self.system, g.length if length is None else length,
                                          g.amplitude, g.seed if seed is None else seed, x1)]
        return [read_trajectory_csv(path) for path in self.data_files]


def schema() -> dict:
    text = resources.files("gamekit").joinpath("schema/config.schema.json").read_text("utf-8")
    return json.loads(text)


def config_from_dict(doc: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    """Validate ``doc`` and build the typed configuration; relative paths resolve against ``base_dir``."""
    import jsonschema

    try:
        jsonschema.validate(doc, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    base = Path(base_dir)
    g = doc["game"]
    partition = tuple(g["partition"])
    try:
        system = None
        if "system" in doc:
            s = doc["system"]
            system = LtiSystem(s["A"], s["B"], s["C"], s["D"], partition=partition)
        game = make_spec(partition, g["Q"], g["R"], g["deltas"], g.get("references"))
    except InvalidInput as exc:
        raise ConfigError(str(exc)) from None

    data = doc["data"]
    files: tuple[Path, ...] = ()
    recipe = None
    if "files" in data:
        files = tuple((base / f) if not Path(f).is_absolute() else Path(f) for f in data["files"])
        missing = [str(f) for f in files if not f.is_file()]
        if missing:
            raise ConfigError(f"data files not found: {', '.join(missing)}")
    else:
        gen = data["generate"]
        recipe = DataRecipe(gen["length"], float(gen.get("amplitude", 5.0)), int(gen.get("seed", 0)),
                            tuple(gen["x1"]) if "x1" in gen else None)

    ini = doc.get("initial_data")
    tol = Tolerances(**doc.get("tolerances", {}))
    out = Path(doc.get("output_dir", "gamekit_out"))
    return ExperimentConfig(
        game=game, T_ini=doc["T_ini"], horizon_min=doc["horizons"]["min"],
        horizon_max=doc["horizons"]["max"], system=system, data_files=files, generate=recipe,
        n_hint=doc.get("n_hint"), T=doc.get("T"),
        u_ini=None if ini is None else np.asarray(ini["u_ini"], dtype=float),
        y_ini=None if ini is None else np.asarray(ini["y_ini"], dtype=float),
        eps=float(doc.get("eps", 0.01)), M=int(doc.get("M", 1000)),
        output_dir=out if out.is_absolute() else base / out, tolerances=tol)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(doc, path.parent)


def reference_config_dict(seed: int = 0, length: int = 500) -> dict:
    """The embedded two-player reference experiment as a config document."""
    from . import benchmark as bm

    spec = bm.reference_game()
    window = bm.reference_window()
    return {
        "system": {"A": bm.A_REFERENCE.tolist(), "B": bm.B_REFERENCE.tolist(),
                   "C": bm.C_REFERENCE.tolist(), "D": bm.D_REFERENCE.tolist()},
        "game": {"partition": list(spec.partition),
                 "Q": [q.tolist() for q in spec.Q],
                 "R": [[r.tolist() for r in row] for row in spec.R],
                 "deltas": list(spec.deltas),
                 "references": [r[0].tolist() for r in spec.references]},
        "data": {"generate": {"length": length, "amplitude": bm.AMPLITUDE, "seed": seed,
                              "x1": [0.0, 0.0, 0.0]}},
        "T_ini": bm.T_INI,
        "T": bm.HORIZON,
        "horizons": {"min": 1, "max": bm.HORIZON},
        "initial_data": {"u_ini": window.u_ini.tolist(), "y_ini": window.y_ini.tolist()},
        "eps": 0.01,
        "M": 1000,
    }

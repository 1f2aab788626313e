"""Experiment configuration files (YAML).

Every invalid field raises :class:`ConfigError` naming the field, before any
work starts. The grammar is documented in the README.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .analysis import MethodSpec
from .clustering import DISTANCES
from .coarsening import VARIANTS
from .hierarchy import METHODS, LevelSpec


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Path
    methods: tuple
    beta_grid: tuple
    tol_grid: tuple
    name: str = ""
    n_repeats: int = 50
    rhs_seed: int = 0
    seed: int = 0
    max_iters: int = 5000
    output: Path | None = None
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def resolved(self) -> dict:
        """JSON-friendly echo of the effective settings."""
        out = {
            "dataset": str(self.dataset), "name": self.name, "beta_grid": list(self.beta_grid),
            "tol_grid": list(self.tol_grid), "n_repeats": self.n_repeats,
            "rhs_seed": self.rhs_seed, "seed": self.seed, "max_iters": self.max_iters,
            "output": None if self.output is None else str(self.output),
            "rhs_generator": "numpy.random.Philox (Philox4x64-10) + Generator.standard_normal",
            "methods": [],
        }
        for m in self.methods:
            levels = [{k: v for k, v in asdict(s).items() if k != "assignment"} for s in m.levels]
            out["methods"].append({"method": m.method, "label": m.label, "m": m.m, "levels": levels})
        return out


_LEVEL_FIELDS = {f for f in LevelSpec.__dataclass_fields__ if f != "assignment"}
_TOP_FIELDS = {"dataset", "name", "methods", "beta_grid", "tol_grid", "n_repeats", "rhs_seed",
               "seed", "max_iters", "output", "levels"}


def _num(value, name, kind=float, positive=False, minimum=None):
    try:
        if isinstance(value, bool):
            raise TypeError
        v = kind(float(value)) if kind is int else kind(value)
        if kind is int and float(value) != v:
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}") from None
    if positive and not v > 0:
        raise ConfigError(name, f"must be positive, got {v}")
    if minimum is not None and v < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {v}")
    return v


def _grid(raw, name):
    if raw is None:
        raise ConfigError(name, "missing")
    items = raw if isinstance(raw, list) else [raw]
    if not items:
        raise ConfigError(name, "grid must be non-empty")
    return tuple(_num(v, f"{name}[{i}]", positive=True) for i, v in enumerate(items))


def _level(raw, name) -> LevelSpec:
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected a mapping")
    unknown = set(raw) - _LEVEL_FIELDS
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown field")
    kw = dict(raw)
    if "clustering" in kw and kw["clustering"] not in ("lf", "km", "re", "leader_follower",
                                                        "kmeans", "renyi"):
        raise ConfigError(f"{name}.clustering", f"unknown algorithm {kw['clustering']!r}")
    if "distance" in kw and kw["distance"] not in DISTANCES:
        raise ConfigError(f"{name}.distance", f"must be one of {DISTANCES}")
    if "interpolation" in kw and kw["interpolation"] not in VARIANTS:
        raise ConfigError(f"{name}.interpolation", f"must be one of {VARIANTS}")
    if "coarse_solver" in kw and kw["coarse_solver"] not in ("cholesky", "cg", "fcg"):
        raise ConfigError(f"{name}.coarse_solver", "must be cholesky, cg or fcg")
    for key in ("n_clusters", "n_interp", "n_vectors", "inner_max_iters", "m"):
        if key in kw and kw[key] is not None:
            kw[key] = _num(kw[key], f"{name}.{key}", int, minimum=1)
    if "seed" in kw:
        kw["seed"] = _num(kw["seed"], f"{name}.seed", int, minimum=0)
    for key in ("tolerance", "inner_tol", "omega"):
        if key in kw and kw[key] is not None:
            kw[key] = _num(kw[key], f"{name}.{key}", positive=True)
    if "beta" in kw and kw["beta"] is not None:
        kw["beta"] = _num(kw["beta"], f"{name}.beta", minimum=0.0)
    kw.setdefault("clustering", "lf")
    if kw.get("n_clusters") is None and (kw["clustering"] not in ("lf", "leader_follower")
                                         or kw.get("tolerance") is None):
        raise ConfigError(name, "needs n_clusters (or tolerance for leader-follower)")
    return LevelSpec(**kw)


def _method(raw, name, default_levels) -> MethodSpec:
    if isinstance(raw, str):
        raw = {"method": raw}
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected a mapping or a method name")
    unknown = set(raw) - {"method", "levels", "label", "m"}
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown field")
    method = raw.get("method")
    if method not in METHODS:
        raise ConfigError(f"{name}.method", f"must be one of {METHODS}, got {method!r}")
    m = _num(raw.get("m", 20), f"{name}.m", int, minimum=1)
    levels_raw = raw.get("levels", default_levels)
    levels: tuple = ()
    if method not in ("cg", "jacobi_cg"):
        if not levels_raw:
            raise ConfigError(f"{name}.levels", f"{method} needs at least one level")
        levels = tuple(_level(lv, f"{name}.levels[{i}]") for i, lv in enumerate(levels_raw))
        if method != "fcg_multilevel" and len(levels) != 1:
            raise ConfigError(f"{name}.levels", f"{method} takes exactly one level")
        if levels[-1].coarse_solver != "cholesky":
            raise ConfigError(f"{name}.levels[{len(levels) - 1}].coarse_solver",
                              "the coarsest level must use cholesky")
        for i, lv in enumerate(levels[:-1]):
            if lv.coarse_solver == "cholesky":
                raise ConfigError(f"{name}.levels[{i}].coarse_solver",
                                  "intermediate levels need cg or fcg")
    return MethodSpec(method, levels, str(raw.get("label", "")), m)


def parse_config(data: dict, base_dir=None, check_files=True) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping")
    unknown = set(data) - _TOP_FIELDS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    if "dataset" not in data:
        raise ConfigError("dataset", "missing")
    base_dir = Path(base_dir or ".")
    dataset = Path(str(data["dataset"]))
    if not dataset.is_absolute():
        dataset = base_dir / dataset
    if check_files and not dataset.exists():
        raise ConfigError("dataset", f"file not found: {dataset}")
    methods_raw = data.get("methods")
    if not methods_raw:
        raise ConfigError("methods", "method list is empty")
    if not isinstance(methods_raw, list):
        raise ConfigError("methods", "expected a list")
    default_levels = data.get("levels")
    methods = tuple(_method(m, f"methods[{i}]", default_levels) for i, m in enumerate(methods_raw))
    output = data.get("output")
    if output is not None:
        output = Path(str(output))
        if not output.is_absolute():
            output = base_dir / output
    return ExperimentConfig(
        dataset=dataset,
        methods=methods,
        beta_grid=_grid(data.get("beta_grid"), "beta_grid"),
        tol_grid=_grid(data.get("tol_grid"), "tol_grid"),
        name=str(data.get("name", dataset.stem)),
        n_repeats=_num(data.get("n_repeats", 50), "n_repeats", int, minimum=1),
        rhs_seed=_num(data.get("rhs_seed", 0), "rhs_seed", int, minimum=0),
        seed=_num(data.get("seed", 0), "seed", int, minimum=0),
        max_iters=_num(data.get("max_iters", 5000), "max_iters", int, minimum=1),
        output=output,
        source=data,
    )


def load_config(path, check_files=True) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return parse_config(data, base_dir=path.parent, check_files=check_files)

"""Run configuration: schema, validation and model construction.

A run is described by one JSON file.  Everything is validated before any
computation starts and the validated config is echoed into the report.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import models as zoo
from .filters import FilterSpec
from .lattice import build_lattice

__all__ = [
    "ConfigError",
    "LatticeSpec",
    "ModelSpec",
    "FilterConfig",
    "GeometryConfig",
    "PumpConfig",
    "OutputConfig",
    "RunConfig",
    "QUANTITIES",
    "load_config",
    "apply_overrides",
    "build_model",
    "build_loop",
    "build_filter",
]

QUANTITIES = ("hall_marker", "hall_kubo", "chern_marker_oracle", "thouless_pump",
              "laughlin_charge", "braiding_phase", "xxm_residual", "heatmap",
              "verify_filter")


class ConfigError(ValueError):
    """Invalid configuration or command-line override (exit code 2)."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------
class LatticeSpec(_Strict):
    kind: Literal["square", "chain", "honeycomb"] = "square"
    Lx: int = Field(4, ge=1)
    Ly: int = Field(1, ge=1)
    orbitals: int = Field(1, ge=1)
    periodic: bool = False


class AtomicInsulator(_Strict):
    name: Literal["atomic-insulator"]
    Lx: int = Field(24, ge=2)
    Ly: int = Field(24, ge=2)
    q: int = Field(3, ge=2)
    spacing: float = Field(2.0, gt=0)
    periodic: bool = True


class Hofstadter(_Strict):
    name: Literal["hofstadter"]
    p: int = Field(1, ge=1)
    q: int = Field(3, ge=2)
    Lx: int = Field(24, ge=2)
    Ly: int = Field(24, ge=2)
    t: float = 1.0
    filling: float | None = Field(None, gt=0, lt=1)
    periodic: bool = True


class Haldane(_Strict):
    name: Literal["haldane"]
    t1: float = 1.0
    t2: float = 0.25
    phi: float = float(np.pi / 2)
    m: float = 0.0
    Lx: int = Field(24, ge=2)
    Ly: int = Field(24, ge=2)
    filling: float = Field(0.5, gt=0, lt=1)
    periodic: bool = True
    interface_mass: float | None = Field(
        None, description="mass used for x >= Lx/2; the left half keeps m")


class RiceMele(_Strict):
    name: Literal["rice-mele"]
    t: float = 1.0
    delta: float = 0.5
    Delta: float = 1.0
    length: int = Field(100, ge=4)
    steps: int = Field(200, ge=4)
    cut: int | None = None
    static: bool = False


class RiceMeleInteracting(_Strict):
    name: Literal["rice-mele-interacting"]
    t: float = 1.0
    delta: float = 0.5
    Delta: float = 1.0
    V: float = 0.5
    length: int = Field(8, ge=3)
    orbitals: int = Field(2, ge=1, le=2)
    steps: int = Field(32, ge=4)
    cut: int | None = None


class CustomHoppings(_Strict):
    name: Literal["custom-hoppings"]
    path: str
    lattice: LatticeSpec
    n_particles: int = Field(ge=0)
    gap_probe: float | None = None
    checksum: str | None = None


class CustomTerms(_Strict):
    name: Literal["custom-terms"]
    path: str
    lattice: LatticeSpec
    n_particles: int = Field(ge=0)
    checksum: str | None = None


ModelSpec = Annotated[Union[AtomicInsulator, Hofstadter, Haldane, RiceMele,
                            RiceMeleInteracting, CustomHoppings, CustomTerms],
                      Field(discriminator="name")]


# ---------------------------------------------------------------------------
# run options
# ---------------------------------------------------------------------------
class FilterConfig(_Strict):
    delta: float | None = Field(None, gt=0, description="absolute threshold")
    fraction: float = Field(0.5, gt=0, lt=1, description="threshold as a fraction of the gap")
    interpolation: Literal["linear-odd", "cubic-odd", "zero", "smooth"] = "linear-odd"


class Grid(_Strict):
    spacing: float = Field(2.0, ge=1.0)
    x: tuple[float, float] | None = None
    y: tuple[float, float] | None = None
    offset: tuple[float, float] = (0.13, 0.07)


class GeometryConfig(_Strict):
    junction: tuple[float, float] | None = Field(
        None, description="absolute junction point; default lattice centre + offset")
    offset: tuple[float, float] = (0.5, 0.5)
    angles: tuple[float, float, float] = (90.0, 210.0, 330.0)
    orientation: Literal[1, -1] = 1
    annulus_radii: tuple[float, ...] = (4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)
    annulus_width: float | None = None
    flux_radius: float | None = None
    rectangle: float = Field(12.0, gt=0)
    separation: float = Field(4.0, gt=0)
    grid: Grid = Grid()


class PumpConfig(_Strict):
    windows: tuple[int, ...] = (8, 12, 16, 24)
    n_s: int | None = Field(None, ge=4)


class OutputConfig(_Strict):
    json_path: str = Field("report.json", alias="json")
    csv_path: str = Field("report.csv", alias="csv")
    field_csv_path: str = Field("field.csv", alias="field_csv")
    svg_path: str = Field("heatmap.svg", alias="svg")

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class RunConfig(_Strict):
    """Validated run description; see ``configs/*.json`` for examples."""

    model: ModelSpec
    backend: Literal["quadratic", "manybody"] = "quadratic"
    filter: FilterConfig = FilterConfig()
    geometry: GeometryConfig = GeometryConfig()
    cutoff: float = Field(8.0, gt=0)
    quantities: tuple[Literal[QUANTITIES], ...] | None = None  # type: ignore[valid-type]
    pump: PumpConfig = PumpConfig()
    output: OutputConfig = OutputConfig()
    seed: int = 0
    timing: bool = False

    @model_validator(mode="after")
    def _consistent(self):
        name = self.model.name
        one_d = name in ("rice-mele", "rice-mele-interacting")
        if self.backend == "manybody" and name not in ("rice-mele-interacting", "custom-terms"):
            raise ValueError(f"model {name!r} has no many-body construction")
        if name in ("rice-mele-interacting", "custom-terms") and self.backend != "manybody":
            raise ValueError(f"model {name!r} needs backend 'manybody'")
        for q in self.quantities or ():
            if q == "thouless_pump" and not one_d:
                raise ValueError("thouless_pump needs a Rice-Mele loop")
            if q not in ("thouless_pump", "verify_filter") and one_d:
                raise ValueError(f"{q} needs a two-dimensional model")
        return self

    def echo(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)


def _set_path(tree: dict, dotted: str, value: Any):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        if not isinstance(node.get(k, {}), dict):
            raise ConfigError(f"cannot override {dotted!r}: {k!r} is not a section")
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` overrides; values are parsed as JSON when possible."""
    data = json.loads(json.dumps(data))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_path(data, key.strip(), value)
    return data


def load_config(path, overrides: list[str] | None = None) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    data = apply_overrides(data, overrides or [])
    model = data.get("model", {})
    if model.get("name") in ("custom-hoppings", "custom-terms") and "path" in model:
        mp = Path(model["path"])
        if not mp.is_absolute():
            mp = p.parent / mp
        if not mp.is_file():
            raise ConfigError(f"model input not found: {mp}")
        model["path"] = str(mp)
        model["checksum"] = zoo.file_checksum(mp)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------
def build_model(cfg: RunConfig):
    """Instantiate the configured model (2d models, or one loop point for 1d)."""
    m = cfg.model
    if m.name == "atomic-insulator":
        return zoo.atomic_insulator(m.Lx, m.Ly, m.q, m.spacing, m.periodic)
    if m.name == "hofstadter":
        return zoo.hofstadter(m.p, m.q, m.Lx, m.Ly, m.t, m.filling, m.periodic)
    if m.name == "haldane":
        profile = None
        if m.interface_mass is not None:
            half, m0, m1 = m.Lx / 2, m.m, m.interface_mass
            profile = lambda pos: np.where(pos[:, 0] < half, m0, m1)  # noqa: E731
        return zoo.haldane(m.t1, m.t2, m.phi, m.m, m.Lx, m.Ly, m.filling, m.periodic,
                           mass_profile=profile)
    if m.name == "rice-mele":
        return zoo.rice_mele(0.0, m.length, m.t, m.delta, m.Delta)
    if m.name == "rice-mele-interacting":
        return zoo.rice_mele_interacting(0.0, m.length, m.t, m.delta, m.Delta, m.V,
                                         orbitals=m.orbitals)
    lat = build_lattice(m.lattice.kind, m.lattice.Lx, m.lattice.Ly, m.lattice.orbitals,
                        m.lattice.periodic)
    if m.name == "custom-hoppings":
        return zoo.custom_hoppings(m.path, lat, m.n_particles, m.gap_probe)
    return zoo.custom_terms(m.path, lat, m.n_particles)


def build_loop(cfg: RunConfig) -> zoo.PumpLoop:
    m = cfg.model
    if m.name == "rice-mele":
        if m.static:
            frozen = zoo.rice_mele(0.0, m.length, m.t, m.delta, m.Delta)
            cut = m.length // 2 - 1 if m.cut is None else m.cut
            return zoo.PumpLoop(lambda s: frozen, m.steps, cut, "rice-mele-static")
        return zoo.rice_mele_family(m.length, m.steps, m.cut, t=m.t, delta=m.delta,
                                    Delta=m.Delta)
    if m.name == "rice-mele-interacting":
        return zoo.rice_mele_interacting_family(m.length, m.steps, m.cut, t=m.t,
                                                delta=m.delta, Delta=m.Delta, V=m.V,
                                                orbitals=m.orbitals)
    raise ConfigError(f"model {m.name!r} is not a pump loop")


def build_filter(cfg: RunConfig, gap: float) -> FilterSpec:
    f = cfg.filter
    delta = f.delta if f.delta is not None else f.fraction * gap
    return FilterSpec(delta, f.interpolation)

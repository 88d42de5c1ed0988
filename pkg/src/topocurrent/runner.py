"""Execute a validated run configuration and assemble its report.

Each requested quantity is one pure job.  Quantities that need the Hall
marker as input (the Laughlin sum and the braiding target) run in a second
wave after the marker is known.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import heatmap as hm
from .config import ConfigError, RunConfig, build_filter, build_loop, build_model
from .filters import FilterSpec, verify_filter
from .lattice import triple_partition
from .parallel import pmap, single_blas_thread
from .quadratic import QuadraticModel
from .report import build_report, error_record, result_record, write_report
from .transport import (TransportResult, _loop_gap, _model_hash, braiding_phase,
                        chern_marker_oracle, hall_kubo, hall_marker, laughlin_charge,
                        thouless_pump, thouless_pump_ed, xxm_residual)

__all__ = ["COMMANDS", "TOLERANCES", "run", "execute"]

# subcommand -> (allowed quantities, default quantities)
COMMANDS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "hall": (("hall_marker", "hall_kubo", "chern_marker_oracle"), ("hall_marker", "hall_kubo")),
    "pump": (("thouless_pump",), ("thouless_pump",)),
    "flux": (("hall_marker", "laughlin_charge"), ("hall_marker", "laughlin_charge")),
    "braid": (("hall_marker", "braiding_phase", "xxm_residual"),
              ("hall_marker", "braiding_phase", "xxm_residual")),
    "heatmap": (("heatmap",), ("heatmap",)),
    "verify-filter": (("verify_filter",), ("verify_filter",)),
}

# convergence floor of the radius trace for each quantity (None: no trace)
TOLERANCES = {
    "hall_marker": 1e-3,
    "hall_kubo": 1e-3,
    "chern_marker_oracle": None,
    "thouless_pump": 1e-3,
    "laughlin_charge": 1e-2,
    "braiding_phase": None,
    "xxm_residual": None,
    "heatmap": 1e-3,
    "verify_filter": None,
}

# quantities that take the Hall marker as input
_SECOND_WAVE = ("laughlin_charge", "braiding_phase")


@dataclass
class _Context:
    cfg: RunConfig
    model: object = None
    spec: FilterSpec | None = None
    point: np.ndarray | None = None
    partition: object = None
    loop: object = None


def _quantities(cfg: RunConfig, command: str) -> tuple[str, ...]:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    allowed, default = COMMANDS[command]
    qs = cfg.quantities or default
    bad = [q for q in qs if q not in allowed]
    if bad:
        raise ConfigError(f"command {command!r} cannot compute {bad}; allowed: {list(allowed)}")
    one_d = cfg.model.name in ("rice-mele", "rice-mele-interacting")
    if command == "pump" and not one_d:
        raise ConfigError("command 'pump' needs a Rice-Mele model")
    if command not in ("pump", "verify-filter") and one_d:
        raise ConfigError(f"command {command!r} needs a two-dimensional model")
    return tuple(qs)


def _context(cfg: RunConfig, command: str) -> _Context:
    ctx = _Context(cfg)
    if cfg.model.name in ("rice-mele", "rice-mele-interacting"):
        ctx.loop = build_loop(cfg)
        return ctx
    ctx.model = build_model(cfg)
    ctx.spec = build_filter(cfg, ctx.model.gap)
    g = cfg.geometry
    lat = ctx.model.lattice
    ctx.point = (np.asarray(g.junction, float) if g.junction is not None
                 else lat.center + np.asarray(g.offset, float))
    if command != "heatmap" and command != "verify-filter":
        ctx.partition = triple_partition(lat, ctx.point, g.angles, g.orientation)
    return ctx


def _pump(ctx: _Context, _sigma) -> TransportResult:
    cfg = ctx.cfg
    m0 = ctx.loop.build(0.0)
    f = cfg.filter
    if isinstance(m0, QuadraticModel):
        delta = f.delta if f.delta is not None else f.fraction * _loop_gap(ctx.loop)
        return thouless_pump(ctx.loop, FilterSpec(delta, f.interpolation), cfg.pump.windows)
    spec = FilterSpec(f.delta, f.interpolation) if f.delta is not None else None
    return thouless_pump_ed(ctx.loop, spec, cfg.pump.n_s, fraction=f.fraction)


def _verify(ctx: _Context, _sigma) -> TransportResult:
    cfg = ctx.cfg
    if ctx.loop is not None:
        m0 = ctx.loop.build(0.0)
        f = cfg.filter
        delta = f.delta if f.delta is not None else f.fraction * _loop_gap(ctx.loop)
        spec = FilterSpec(delta, f.interpolation)
        gap, mhash = _loop_gap(ctx.loop), _model_hash(m0)
    else:
        spec, gap, mhash = ctx.spec, ctx.model.gap, _model_hash(ctx.model)
    rep = verify_filter(spec)
    checks = {
        "below_gap": spec.delta < gap,
        "out_of_gap_exact": rep["out_of_gap_residual"] == 0.0,
        "odd": rep["oddness_residual"] <= 1e-12,
        "purely_imaginary": rep["real_part_residual"] <= 1e-12,
    }
    rep.update(gap=gap, checks=checks,
               continuous_at_threshold=rep["threshold_jump"] <= 1e-9,
               time_domain_ready=rep["kernel_tail_fraction"] < 1e-6)
    res = TransportResult("verify_filter", rep["out_of_gap_residual"], spec.delta, [],
                          all(checks.values()), None, rep, spec.as_dict(), mhash)
    return res


_JOBS: dict[str, Callable[[_Context, float | None], TransportResult]] = {
    "hall_marker": lambda c, s: hall_marker(c.model, c.spec, c.partition, c.cfg.cutoff),
    "hall_kubo": lambda c, s: hall_kubo(c.model, c.spec, c.point, c.cfg.cutoff),
    "chern_marker_oracle": lambda c, s: _oracle(c),
    "thouless_pump": _pump,
    "laughlin_charge": lambda c, s: laughlin_charge(
        c.model, c.spec, c.partition, c.cfg.geometry.annulus_radii,
        c.cfg.geometry.annulus_width, c.cfg.geometry.flux_radius, s),
    "braiding_phase": lambda c, s: braiding_phase(
        c.model, c.spec, c.point, c.cfg.geometry.rectangle, c.cfg.geometry.separation,
        sigma=None if s is None else float(round(s))),
    "xxm_residual": lambda c, s: xxm_residual(c.model, c.spec, c.point,
                                              c.cfg.geometry.rectangle),
    "verify_filter": _verify,
}


def _oracle(c: _Context) -> TransportResult:
    if not isinstance(c.model, QuadraticModel):
        raise TypeError("the projector oracle needs a free-fermion model")
    v = chern_marker_oracle(c.model.projector, c.partition, c.cfg.cutoff)
    return TransportResult("chern_marker_oracle", v, c.cfg.cutoff, [], True,
                           float(abs(v - round(v))), {"route": "projector"},
                           c.spec.as_dict(), _model_hash(c.model))


def _safe(fn, quantity, cfg):
    tol = TOLERANCES.get(quantity)

    def job(arg):
        try:
            res = fn(arg)
        except Exception as exc:  # every module error becomes a report entry
            return error_record(quantity, exc, cfg.cutoff, tol)
        status = None
        if quantity == "verify_filter":
            status = "ok" if res.converged else "FAILED"
        return result_record(res, tol, cfg.timing, status)

    return job


def _heatmap(ctx: _Context) -> tuple[list[dict], dict]:
    cfg = ctx.cfg
    g = cfg.geometry.grid
    tol = TOLERANCES["heatmap"]
    points = hm.grid_points(ctx.model.lattice, cfg.cutoff, g.spacing, g.x, g.y, g.offset)
    results = hm.marker_field(ctx.model, ctx.spec, points, cfg.cutoff, cfg.geometry.angles,
                              cfg.geometry.orientation)
    records = []
    for p, r in zip(points, results):
        r.extra.update(x=float(p[0]), y=float(p[1]))
        r.quantity = "heatmap"
        records.append(result_record(r, tol, cfg.timing))
    files = {
        "field_csv": hm.field_csv(points, results, tol),
        "svg": hm.render_svg(points, [r.value for r in results], g.spacing,
                             title=f"Hall marker, cutoff {cfg.cutoff:g}"),
    }
    return records, files


def run(cfg: RunConfig, command: str) -> tuple[dict, dict]:
    """Compute the requested quantities.

    Returns the report dictionary and a mapping of extra output texts
    (heatmap CSV and SVG) keyed by output field.
    """
    qs = _quantities(cfg, command)
    files: dict = {}
    with single_blas_thread():
        try:
            ctx = _context(cfg, command)
        except ConfigError:
            raise
        except Exception as exc:
            records = [error_record(q, exc, cfg.cutoff, TOLERANCES.get(q)) for q in qs]
            return build_report(command, cfg.echo(), records), files
    if command == "heatmap":
        try:
            records, files = _heatmap(ctx)
        except Exception as exc:
            records = [error_record("heatmap", exc, cfg.cutoff, TOLERANCES["heatmap"])]
        return build_report(command, cfg.echo(), records), files
    first = [q for q in qs if q not in _SECOND_WAVE]
    second = [q for q in qs if q in _SECOND_WAVE]
    out = dict(zip(first, pmap(lambda q: _safe(lambda c: _JOBS[q](c, None), q, cfg)(ctx),
                               first)))
    sigma = None
    if "hall_marker" in out and out["hall_marker"]["status"] != "error":
        sigma = out["hall_marker"]["value"]
    out.update(zip(second, pmap(lambda q: _safe(lambda c: _JOBS[q](c, sigma), q, cfg)(ctx),
                                second)))
    return build_report(command, cfg.echo(), [out[q] for q in qs]), files


def execute(cfg: RunConfig, command: str, base: Path | None = None) -> int:
    """Run and write all outputs; returns the process exit code."""
    report, files = run(cfg, command)
    base = Path(base) if base is not None else Path.cwd()
    o = cfg.output
    write_report(report, base / o.json_path, base / o.csv_path)
    for key, path in (("field_csv", o.field_csv_path), ("svg", o.svg_path)):
        if key in files:
            p = base / path
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(files[key])
    return int(report["exit_code"])

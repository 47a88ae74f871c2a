"""Scenario files, field rendering, validation, run orchestration and output.

A scenario is a single JSON document (schema_version 1) naming the grid, the
model constants, one field spec per data function and the initial density, a
transfer kernel, the solver settings and optional study blocks:

    {
      "schema_version": 1,
      "grid":   {"d": 1, "n": 128},
      "params": {"delta": 0.1, "u_plus": 0.9, "u_minus": 0.5, "rho_tilde": 1.0},
      "fields": {
        "kappa": {"kind": "constant", "value": 0.5},
        "eta":   {"kind": "modes", "offset": 0.1,
                   "modes": [{"k": [1], "amplitude": 0.02, "phase": 0.0}]},
        "omega": {"kind": "constant", "value": 0.05},
        "gamma": {"kind": "constant", "value": 0.3},
        "rho0":  {"kind": "preset", "name": "gaussian-bump",
                   "center": [0.5], "width": 0.1, "height": 0.4, "baseline": 1.0}
      },
      "kernel": {"kind": "uniform"},
      "solver": {"epsilon": 0.05, "t_end": 0.5, "guard_k": 1e6,
                  "dt": {"mode": "auto", "safety": 0.8}, "record_every": 1},
      "studies": {"epsilon_ladder": {"epsilons": [0.2, 0.1, 0.05, 0.025], "m_prime": 3}},
      "output": {"directory": "out", "write_snapshots": false}
    }

Every numeric constraint of the data hypotheses maps to exactly one named
validation rule (see VALIDATION_RULES); violations raise
:class:`ValidationError` carrying the rule name and the JSON path.  Rendered
fields are never clamped.

Dense kernels live in a sidecar binary of little-endian float64 in row-major
(source-major) order, referenced by path relative to the scenario file.

Outputs: ``timeseries.csv`` with the fixed header
``t,mass,min_rho,max_rho,energy_m,sup_rhs,dt`` (17 significant digits,
sup_rhs being the running sup of ||rho_t||_inf), ``summary.json`` with every
audit naming its tolerance and verdict, a normalized ``scenario.json`` echo,
and optional per-record snapshots ``snapshot_NNNN.csv`` with ``x1[,x2],rho``
rows.  Reruns overwrite deterministically.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analysis import (
    CancellationReport,
    ConvergenceTable,
    EnergyCertificate,
    LowerBoundReport,
    MassAuditReport,
    ResolutionReport,
    certify_energy,
    epsilon_ladder_study,
    lower_bound_audit,
    mass_audit,
    nonlocal_cancellation_audit,
    resolution_difference,
)
from .integrate import (
    AutoDt,
    FixedDt,
    SolverConfig,
    Trajectory,
    default_guard_m,
    integrate,
    stable_dt,
)
from .model import (
    DenseKernel,
    ModelData,
    ModelParams,
    SeparableKernel,
    TransferKernel,
    UniformKernel,
    kernel_normalize,
    min_value,
)
from .spectral import GridField, TorusGrid, forward_transform, sobolev_norm

__all__ = [
    "SCHEMA_VERSION",
    "ValidationError",
    "ScenarioParseError",
    "Mode",
    "ConstantField",
    "ModesField",
    "GaussianBumpField",
    "FieldSpec",
    "UniformKernelSpec",
    "SeparableKernelSpec",
    "DenseFileKernelSpec",
    "KernelSpec",
    "LadderStudy",
    "ResolutionStudy",
    "Scenario",
    "render_field",
    "build_kernel",
    "build_model_data",
    "initial_density",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "run_scenario",
    "summarize_run",
    "write_outputs",
    "epsilon_study",
    "resolution_check",
    "write_dense_kernel",
]

SCHEMA_VERSION = 1

#: One named rule per numeric hypothesis constraint and cross-check.
VALIDATION_RULES = {
    "delta-positive": "delta > 0",
    "u-window": "0 < u_minus < u_plus < 1",
    "rho-tilde-positive": "rho_tilde > 0",
    "kappa-range": "0 <= kappa <= 1 pointwise",
    "eta-nonneg": "eta >= 0 pointwise",
    "omega-nonneg": "omega >= 0 pointwise",
    "gamma-nonneg": "gamma >= 0 pointwise",
    "rho0-positive": "rho0 > 0 pointwise",
    "tau-nonneg": "tau >= 0 everywhere",
    "tau-row-positive": "every source slice of tau has positive destination integral",
    "tau-normalized": "destination integrals of tau equal 1 after normalization",
    "kernel-size": "dense kernels limited to 4096 grid points",
    "guard-radius": "guard_k exceeds the initial H^m norm",
    "ladder-norm-index": "d/2 < m_prime < guard_m",
    "ladder-epsilons": "ladder entries positive and nonincreasing",
    "resolution-pair": "resolution study uses n2 = 2 n",
    "mode-nyquist": "mode indices stay below the grid Nyquist frequency",
    "schema": "document structure matches the scenario schema",
}


class ScenarioParseError(ValueError):
    """Malformed JSON; carries the character position from the decoder."""


class ValidationError(ValueError):
    """A named validation rule failed at a specific document path."""

    def __init__(self, rule: str, path: str, message: str):
        assert rule in VALIDATION_RULES, rule
        super().__init__(f"[{rule}] at {path}: {message}")
        self.rule = rule
        self.path = path


# ---------------------------------------------------------------------------
# field specs

@dataclass(frozen=True)
class Mode:
    k: tuple[int, ...]
    amplitude: float
    phase: float = 0.0


@dataclass(frozen=True)
class ConstantField:
    value: float


@dataclass(frozen=True)
class ModesField:
    """offset + sum of amplitude * cos(2 pi k.x + phase); exactly band-limited."""

    offset: float
    modes: tuple[Mode, ...]


@dataclass(frozen=True)
class GaussianBumpField:
    """Periodized Gaussian: baseline + height * sum over integer shifts of
    exp(-|x - center - j|^2 / (2 width^2)), truncated once the shifted terms
    fall below 1e-15 of the height."""

    center: tuple[float, ...]
    width: float
    height: float
    baseline: float


FieldSpec = ConstantField | ModesField | GaussianBumpField


def render_field(spec: FieldSpec, grid: TorusGrid) -> GridField:
    """Deterministic rendering of a field spec on the grid."""
    if isinstance(spec, ConstantField):
        return GridField(grid, np.full(grid.shape, float(spec.value)))
    if isinstance(spec, ModesField):
        coords = grid.coordinates()
        vals = np.full(grid.shape, float(spec.offset))
        half = grid.n // 2
        for mode in spec.modes:
            k = np.asarray(mode.k, dtype=int)
            if k.shape != (grid.d,):
                raise ValidationError("schema", "modes", f"mode {mode.k} has wrong dimension")
            if np.any(np.abs(k) > half - 1):
                raise ValidationError("mode-nyquist", "modes",
                                      f"mode {mode.k} exceeds the lattice of n = {grid.n}")
            phase = 2.0 * np.pi * sum(int(ki) * c for ki, c in zip(k, coords)) + mode.phase
            vals = vals + mode.amplitude * np.cos(phase)
        return GridField(grid, vals)
    if isinstance(spec, GaussianBumpField):
        if len(spec.center) != grid.d:
            raise ValidationError("schema", "center", "bump center has wrong dimension")
        if not spec.width > 0:
            raise ValidationError("schema", "width", "bump width must be positive")
        coords = grid.coordinates()
        # shifts beyond reach contribute < 1e-15 of the height
        reach = int(math.ceil(1.0 + spec.width * math.sqrt(2.0 * math.log(1e15))))
        vals = np.full(grid.shape, float(spec.baseline))
        for shift in np.ndindex(*[2 * reach + 1] * grid.d):
            j = np.asarray(shift) - reach
            r2 = sum((c - ctr - jj) ** 2 for c, ctr, jj in zip(coords, spec.center, j))
            vals = vals + spec.height * np.exp(-r2 / (2.0 * spec.width**2))
        return GridField(grid, vals)
    raise TypeError(f"unknown field spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# kernel specs

@dataclass(frozen=True)
class UniformKernelSpec:
    pass


@dataclass(frozen=True)
class SeparableKernelSpec:
    source: FieldSpec
    dest: FieldSpec


@dataclass(frozen=True)
class DenseFileKernelSpec:
    path: str


KernelSpec = UniformKernelSpec | SeparableKernelSpec | DenseFileKernelSpec


def write_dense_kernel(matrix: np.ndarray, path) -> None:
    """Sidecar format: little-endian float64, row-major, source index first."""
    np.ascontiguousarray(matrix, dtype="<f8").tofile(path)


def build_kernel(spec: KernelSpec, grid: TorusGrid, base_dir: Path) -> TransferKernel:
    if isinstance(spec, UniformKernelSpec):
        return kernel_normalize(UniformKernel(1.0))
    if isinstance(spec, SeparableKernelSpec):
        src = render_field(spec.source, grid)
        dst = render_field(spec.dest, grid)
        if min_value(src) < 0 or min_value(dst) < 0:
            raise ValidationError("tau-nonneg", "kernel", "separable profiles must be nonnegative")
        if min_value(src) <= 0 or float(dst.values.mean()) <= 0:
            raise ValidationError("tau-row-positive", "kernel",
                                  "a source slice integrates to zero")
        return kernel_normalize(SeparableKernel(src, dst))
    if isinstance(spec, DenseFileKernelSpec):
        npts = grid.num_points
        if npts > 4096:
            raise ValidationError("kernel-size", "kernel",
                                  f"{npts} grid points exceed the dense-kernel guard")
        path = Path(spec.path)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ValidationError("schema", "kernel.path", f"kernel file {path} does not exist")
        raw = np.fromfile(path, dtype="<f8")
        if raw.size != npts * npts:
            raise ValidationError("schema", "kernel.path",
                                  f"kernel file holds {raw.size} values, expected {npts * npts}")
        matrix = raw.reshape(npts, npts)
        if matrix.min() < 0:
            raise ValidationError("tau-nonneg", "kernel", "dense kernel has negative entries")
        rows = matrix.mean(axis=1)
        if rows.min() <= 0:
            raise ValidationError("tau-row-positive", "kernel",
                                  f"source row {int(np.argmin(rows))} integrates to {rows.min():.3e}")
        return kernel_normalize(DenseKernel(matrix))
    raise TypeError(f"unknown kernel spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# scenario document

@dataclass(frozen=True)
class LadderStudy:
    epsilons: tuple[float, ...]
    m_prime: int


@dataclass(frozen=True)
class ResolutionStudy:
    n2: int
    m_prime: int = 3
    threshold: float = 1e-6


@dataclass(frozen=True)
class Scenario:
    grid: TorusGrid
    params: ModelParams
    kappa: FieldSpec
    eta: FieldSpec
    omega: FieldSpec
    gamma: FieldSpec
    rho0: FieldSpec
    kernel: KernelSpec
    solver: SolverConfig
    epsilon_ladder: LadderStudy | None = None
    resolution_pair: ResolutionStudy | None = None
    output_dir: str | None = None
    write_snapshots: bool = False
    base_dir: str = "."


# -- parsing helpers ---------------------------------------------------------

def _need(doc: dict, key: str, path: str):
    if key not in doc:
        raise ValidationError("schema", f"{path}.{key}" if path else key, "missing required key")
    return doc[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError("schema", path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError("schema", path, f"expected an integer, got {value!r}")
    return value


def _parse_field_spec(doc, path: str, d: int) -> FieldSpec:
    if not isinstance(doc, dict):
        raise ValidationError("schema", path, "field spec must be an object")
    kind = _need(doc, "kind", path)
    if kind == "constant":
        return ConstantField(_number(_need(doc, "value", path), f"{path}.value"))
    if kind == "modes":
        offset = _number(doc.get("offset", 0.0), f"{path}.offset")
        modes = []
        raw = _need(doc, "modes", path)
        if not isinstance(raw, list):
            raise ValidationError("schema", f"{path}.modes", "modes must be a list")
        for i, entry in enumerate(raw):
            k = entry.get("k") if isinstance(entry, dict) else None
            if not isinstance(k, list) or len(k) != d:
                raise ValidationError("schema", f"{path}.modes[{i}].k",
                                      f"wavevector must be a list of {d} integers")
            modes.append(Mode(tuple(_integer(v, f"{path}.modes[{i}].k") for v in k),
                              _number(_need(entry, "amplitude", f"{path}.modes[{i}]"),
                                      f"{path}.modes[{i}].amplitude"),
                              _number(entry.get("phase", 0.0), f"{path}.modes[{i}].phase")))
        return ModesField(offset, tuple(modes))
    if kind == "preset":
        name = _need(doc, "name", path)
        if name != "gaussian-bump":
            raise ValidationError("schema", f"{path}.name", f"unknown preset {name!r}")
        center = _need(doc, "center", path)
        if not isinstance(center, list) or len(center) != d:
            raise ValidationError("schema", f"{path}.center", f"center must be a list of {d} numbers")
        return GaussianBumpField(
            tuple(_number(c, f"{path}.center") for c in center),
            _number(_need(doc, "width", path), f"{path}.width"),
            _number(_need(doc, "height", path), f"{path}.height"),
            _number(doc.get("baseline", 0.0), f"{path}.baseline"),
        )
    raise ValidationError("schema", f"{path}.kind", f"unknown field kind {kind!r}")


def _parse_kernel_spec(doc, path: str, d: int) -> KernelSpec:
    if not isinstance(doc, dict):
        raise ValidationError("schema", path, "kernel spec must be an object")
    kind = _need(doc, "kind", path)
    if kind == "uniform":
        return UniformKernelSpec()
    if kind == "separable":
        return SeparableKernelSpec(
            _parse_field_spec(_need(doc, "source", path), f"{path}.source", d),
            _parse_field_spec(_need(doc, "dest", path), f"{path}.dest", d),
        )
    if kind == "dense-file":
        p = _need(doc, "path", path)
        if not isinstance(p, str):
            raise ValidationError("schema", f"{path}.path", "kernel path must be a string")
        return DenseFileKernelSpec(p)
    raise ValidationError("schema", f"{path}.kind", f"unknown kernel kind {kind!r}")


def _parse_solver(doc, path: str, d: int) -> SolverConfig:
    if not isinstance(doc, dict):
        raise ValidationError("schema", path, "solver block must be an object")
    epsilon = _number(_need(doc, "epsilon", path), f"{path}.epsilon")
    t_end = _number(_need(doc, "t_end", path), f"{path}.t_end")
    guard_k = _number(_need(doc, "guard_k", path), f"{path}.guard_k")
    guard_m = _integer(doc.get("guard_m", default_guard_m(d)), f"{path}.guard_m")
    record_every = _integer(doc.get("record_every", 1), f"{path}.record_every")
    dealias = doc.get("dealias", False)
    if not isinstance(dealias, bool):
        raise ValidationError("schema", f"{path}.dealias", "dealias must be a boolean")
    dt_doc = doc.get("dt", {"mode": "auto", "safety": 0.8})
    if not isinstance(dt_doc, dict) or "mode" not in dt_doc:
        raise ValidationError("schema", f"{path}.dt", "dt must be an object with a mode")
    if dt_doc["mode"] == "auto":
        policy = AutoDt(_number(dt_doc.get("safety", 0.8), f"{path}.dt.safety"))
    elif dt_doc["mode"] == "fixed":
        policy = FixedDt(_number(_need(dt_doc, "value", f"{path}.dt"), f"{path}.dt.value"))
    else:
        raise ValidationError("schema", f"{path}.dt.mode", f"unknown dt mode {dt_doc['mode']!r}")
    try:
        return SolverConfig(epsilon=epsilon, t_end=t_end, guard_k=guard_k,
                            guard_m=guard_m, dt_policy=policy,
                            record_every=record_every, dealias=dealias)
    except ValueError as exc:
        raise ValidationError("schema", path, str(exc)) from exc


def scenario_from_dict(doc: dict, base_dir: str = ".") -> Scenario:
    """Build and fully validate a scenario from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ValidationError("schema", "", "scenario document must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError("schema", "schema_version",
                              f"expected {SCHEMA_VERSION}, got {version!r}")
    grid_doc = _need(doc, "grid", "")
    grid = TorusGrid(_integer(_need(grid_doc, "d", "grid"), "grid.d"),
                     _integer(_need(grid_doc, "n", "grid"), "grid.n"))

    p = _need(doc, "params", "")
    delta = _number(_need(p, "delta", "params"), "params.delta")
    u_plus = _number(_need(p, "u_plus", "params"), "params.u_plus")
    u_minus = _number(_need(p, "u_minus", "params"), "params.u_minus")
    rho_tilde = _number(_need(p, "rho_tilde", "params"), "params.rho_tilde")
    if not delta > 0:
        raise ValidationError("delta-positive", "params.delta", f"delta = {delta}")
    if not (0.0 < u_minus < u_plus < 1.0):
        raise ValidationError("u-window", "params",
                              f"u_minus = {u_minus}, u_plus = {u_plus}")
    if not rho_tilde > 0:
        raise ValidationError("rho-tilde-positive", "params.rho_tilde",
                              f"rho_tilde = {rho_tilde}")
    params = ModelParams(delta, u_plus, u_minus, rho_tilde)

    fields = _need(doc, "fields", "")
    specs = {}
    for name in ("kappa", "eta", "omega", "gamma", "rho0"):
        specs[name] = _parse_field_spec(_need(fields, name, "fields"), f"fields.{name}", grid.d)

    kernel = _parse_kernel_spec(_need(doc, "kernel", ""), "kernel", grid.d)
    solver = _parse_solver(_need(doc, "solver", ""), "solver", grid.d)

    studies = doc.get("studies", {}) or {}
    ladder = None
    if "epsilon_ladder" in studies:
        block = studies["epsilon_ladder"]
        eps = block.get("epsilons")
        if not isinstance(eps, list) or len(eps) < 2:
            raise ValidationError("schema", "studies.epsilon_ladder.epsilons",
                                  "need a list of at least two epsilons")
        eps = tuple(_number(e, "studies.epsilon_ladder.epsilons") for e in eps)
        if any(e <= 0 for e in eps) or any(b > a for a, b in zip(eps, eps[1:])):
            raise ValidationError("ladder-epsilons", "studies.epsilon_ladder.epsilons",
                                  f"ladder {list(eps)} is not positive nonincreasing")
        m_prime = _integer(block.get("m_prime", 3), "studies.epsilon_ladder.m_prime")
        if not grid.d / 2 < m_prime < solver.guard_m:
            raise ValidationError("ladder-norm-index", "studies.epsilon_ladder.m_prime",
                                  f"m_prime = {m_prime} with guard_m = {solver.guard_m}")
        ladder = LadderStudy(eps, m_prime)
    resolution = None
    if "resolution_pair" in studies:
        block = studies["resolution_pair"]
        n2 = _integer(_need(block, "n2", "studies.resolution_pair"),
                      "studies.resolution_pair.n2")
        if n2 != 2 * grid.n:
            raise ValidationError("resolution-pair", "studies.resolution_pair.n2",
                                  f"n2 = {n2}, grid n = {grid.n}")
        m_prime = _integer(block.get("m_prime", 3), "studies.resolution_pair.m_prime")
        if not grid.d / 2 < m_prime < solver.guard_m:
            raise ValidationError("ladder-norm-index", "studies.resolution_pair.m_prime",
                                  f"m_prime = {m_prime} with guard_m = {solver.guard_m}")
        threshold = _number(block.get("threshold", 1e-6), "studies.resolution_pair.threshold")
        resolution = ResolutionStudy(n2, m_prime, threshold)

    output = doc.get("output", {}) or {}
    out_dir = output.get("directory")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ValidationError("schema", "output.directory", "directory must be a string")
    snaps = output.get("write_snapshots", False)
    if not isinstance(snaps, bool):
        raise ValidationError("schema", "output.write_snapshots", "must be a boolean")

    scenario = Scenario(grid=grid, params=params, kernel=kernel, solver=solver,
                        epsilon_ladder=ladder, resolution_pair=resolution,
                        output_dir=out_dir, write_snapshots=snaps,
                        base_dir=str(base_dir), **specs)
    _validate_rendered(scenario)
    return scenario


def _validate_rendered(s: Scenario) -> None:
    """Render every field and check the data hypotheses; no clamping."""
    kappa = render_field(s.kappa, s.grid)
    if min_value(kappa) < 0 or float(kappa.values.max()) > 1:
        raise ValidationError("kappa-range", "fields.kappa",
                              f"range [{min_value(kappa):.4g}, {float(kappa.values.max()):.4g}]")
    for name, rule in (("eta", "eta-nonneg"), ("omega", "omega-nonneg"),
                       ("gamma", "gamma-nonneg")):
        fld = render_field(getattr(s, name), s.grid)
        if min_value(fld) < 0:
            raise ValidationError(rule, f"fields.{name}", f"min = {min_value(fld):.4g}")
    rho0 = render_field(s.rho0, s.grid)
    if min_value(rho0) <= 0:
        raise ValidationError("rho0-positive", "fields.rho0", f"min = {min_value(rho0):.4g}")
    kernel = build_kernel(s.kernel, s.grid, Path(s.base_dir))  # raises named kernel rules
    lo, hi = kernel.row_integral_range(s.grid)
    if max(abs(lo - 1.0), abs(hi - 1.0)) > 1e-12:
        raise ValidationError("tau-normalized", "kernel",
                              f"row integrals within [{lo:.15g}, {hi:.15g}]")
    norm0 = sobolev_norm(forward_transform(rho0), s.solver.guard_m)
    if not s.solver.guard_k > norm0:
        raise ValidationError("guard-radius", "solver.guard_k",
                              f"guard_k = {s.solver.guard_k:.6g} vs ||rho0||_Hm = {norm0:.6g}")


def load_scenario(path) -> Scenario:
    """Parse, schema-validate and hypothesis-validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return scenario_from_dict(doc, base_dir=str(path.parent))


# -- serialization back to a document ----------------------------------------

def _field_to_dict(spec: FieldSpec) -> dict:
    if isinstance(spec, ConstantField):
        return {"kind": "constant", "value": spec.value}
    if isinstance(spec, ModesField):
        return {"kind": "modes", "offset": spec.offset,
                "modes": [{"k": list(m.k), "amplitude": m.amplitude, "phase": m.phase}
                          for m in spec.modes]}
    return {"kind": "preset", "name": "gaussian-bump", "center": list(spec.center),
            "width": spec.width, "height": spec.height, "baseline": spec.baseline}


def _kernel_to_dict(spec: KernelSpec, base_dir: str) -> dict:
    if isinstance(spec, UniformKernelSpec):
        return {"kind": "uniform"}
    if isinstance(spec, SeparableKernelSpec):
        return {"kind": "separable", "source": _field_to_dict(spec.source),
                "dest": _field_to_dict(spec.dest)}
    path = Path(spec.path)
    if not path.is_absolute():
        # anchor to the original scenario location so the echo stays loadable
        path = (Path(base_dir) / path).resolve()
    return {"kind": "dense-file", "path": str(path)}


def scenario_to_dict(s: Scenario) -> dict:
    if isinstance(s.solver.dt_policy, FixedDt):
        dt = {"mode": "fixed", "value": s.solver.dt_policy.dt}
    else:
        dt = {"mode": "auto", "safety": s.solver.dt_policy.safety}
    doc = {
        "schema_version": SCHEMA_VERSION,
        "grid": {"d": s.grid.d, "n": s.grid.n},
        "params": {"delta": s.params.delta, "u_plus": s.params.u_plus,
                   "u_minus": s.params.u_minus, "rho_tilde": s.params.rho_tilde},
        "fields": {name: _field_to_dict(getattr(s, name))
                   for name in ("kappa", "eta", "omega", "gamma", "rho0")},
        "kernel": _kernel_to_dict(s.kernel, s.base_dir),
        "solver": {"epsilon": s.solver.epsilon, "t_end": s.solver.t_end,
                   "guard_k": s.solver.guard_k, "guard_m": s.solver.guard_m,
                   "dt": dt, "record_every": s.solver.record_every,
                   "dealias": s.solver.dealias},
    }
    studies = {}
    if s.epsilon_ladder is not None:
        studies["epsilon_ladder"] = {"epsilons": list(s.epsilon_ladder.epsilons),
                                     "m_prime": s.epsilon_ladder.m_prime}
    if s.resolution_pair is not None:
        studies["resolution_pair"] = {"n2": s.resolution_pair.n2,
                                      "m_prime": s.resolution_pair.m_prime,
                                      "threshold": s.resolution_pair.threshold}
    if studies:
        doc["studies"] = studies
    output = {}
    if s.output_dir is not None:
        output["directory"] = s.output_dir
    if s.write_snapshots:
        output["write_snapshots"] = True
    if output:
        doc["output"] = output
    return doc


# ---------------------------------------------------------------------------
# orchestration

def build_model_data(s: Scenario, grid: TorusGrid | None = None) -> ModelData:
    """Render the data fields (on an alternate grid if given) and assemble
    the immutable model bundle."""
    g = grid or s.grid
    return ModelData(
        kappa=render_field(s.kappa, g),
        eta=render_field(s.eta, g),
        omega=render_field(s.omega, g),
        gamma=render_field(s.gamma, g),
        tau=build_kernel(s.kernel, g, Path(s.base_dir)),
        params=s.params,
    )


def initial_density(s: Scenario, grid: TorusGrid | None = None) -> GridField:
    return render_field(s.rho0, grid or s.grid)


def run_scenario(s: Scenario) -> Trajectory:
    return integrate(initial_density(s), build_model_data(s), s.solver)


def summarize_run(trajectory: Trajectory, data: ModelData, s: Scenario | None = None) -> dict:
    """Machine-readable run summary; every audit names its tolerance and verdict."""
    lower: LowerBoundReport = lower_bound_audit(trajectory)
    cancel: CancellationReport = nonlocal_cancellation_audit(trajectory, data)
    audits = {
        "lower_bound": {
            "verdict": "pass" if lower.passed else "fail",
            "tolerance": lower.tolerance,
            "worst_margin": lower.worst_margin,
        },
        "nonlocal_cancellation": {
            "verdict": "pass" if cancel.passed else "fail",
            "tolerance": cancel.tolerance,
            "max_abs_integral": cancel.max_abs,
        },
    }
    if len(trajectory.records) >= 2:
        mass: MassAuditReport = mass_audit(trajectory, data)
        audits["mass_balance"] = {
            "verdict": "reported",
            "tolerance": None,
            "max_abs_residual": mass.max_abs_residual,
        }
    if len(trajectory.records) >= 3:
        cert: EnergyCertificate = certify_energy(trajectory)
        audits["energy_envelope"] = {
            "verdict": "pass" if cert.passed else "fail",
            "tolerance": cert.tolerance,
            "margin": cert.margin,
            "c_hat": cert.c_hat,
            "horizon": cert.horizon,
            "worst_ratio": cert.worst_ratio,
        }
    t = trajectory.times()
    dissip = np.array([r.diagnostics.dissipation for r in trajectory.records])
    summary = {
        "schema_version": SCHEMA_VERSION,
        "status": {
            "kind": trajectory.status.kind,
            "t": trajectory.status.t,
            "guard_kind": trajectory.status.guard_kind,
            "detail": trajectory.status.detail,
        },
        "epsilon": trajectory.epsilon,
        "guard_m": trajectory.guard_m,
        "rho_floor": trajectory.rho_floor,
        "kstar_observed": lower.kstar,
        "horizons": {
            "varpi_m": lower.varpi_m,
            "positivity": lower.positivity_horizon,
            "t_m": lower.t_m,
        },
        "dissipation_integral": float(np.trapezoid(dissip, t)) if len(t) >= 2 else 0.0,
        "data_sups": data.data_sups(),
        "records": len(trajectory.records),
        "audits": audits,
    }
    if s is not None:
        summary["grid"] = {"d": s.grid.d, "n": s.grid.n}
    return summary


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.floating, np.integer)):
        return _sanitize(obj.item())
    return obj


def write_outputs(trajectory: Trajectory, summary: dict, out_dir,
                  scenario: Scenario | None = None,
                  write_snapshots: bool = False) -> dict[str, str]:
    """Write timeseries.csv, summary.json, the scenario echo and optional
    snapshots; returns the paths written.  Deterministic and overwriting."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    ts = out / "timeseries.csv"
    with open(ts, "w", newline="") as fh:
        fh.write("t,mass,min_rho,max_rho,energy_m,sup_rhs,dt\n")
        for rec in trajectory.records:
            d = rec.diagnostics
            row = [rec.t, d.mass, d.min_rho, d.max_rho, d.energy_m, d.sup_rhs, d.dt]
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    written["timeseries"] = str(ts)

    sm = out / "summary.json"
    sm.write_text(json.dumps(_sanitize(summary), indent=2, sort_keys=True) + "\n")
    written["summary"] = str(sm)

    if scenario is not None:
        sc = out / "scenario.json"
        sc.write_text(json.dumps(_sanitize(scenario_to_dict(scenario)), indent=2) + "\n")
        written["scenario"] = str(sc)

    if write_snapshots:
        from .spectral import inverse_transform
        grid = trajectory.records[0].rho.grid
        coords = grid.coordinates()
        header = ",".join(f"x{i + 1}" for i in range(grid.d)) + ",rho"
        for i, rec in enumerate(trajectory.records):
            vals = inverse_transform(rec.rho).values
            snap = out / f"snapshot_{i:04d}.csv"
            with open(snap, "w", newline="") as fh:
                fh.write(header + "\n")
                flat = [c.reshape(-1) for c in coords] + [vals.reshape(-1)]
                for row in zip(*flat):
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
        written["snapshots"] = str(out)
    return written


def epsilon_study(s: Scenario, epsilons=None, m_prime: int | None = None) -> ConvergenceTable:
    """Run the smoothing-parameter ladder declared by the scenario (or the
    overrides) and fit the empirical order."""
    if epsilons is None or m_prime is None:
        if s.epsilon_ladder is None:
            raise ValueError("scenario declares no epsilon ladder and no overrides were given")
        epsilons = epsilons if epsilons is not None else s.epsilon_ladder.epsilons
        m_prime = m_prime if m_prime is not None else s.epsilon_ladder.m_prime
    return epsilon_ladder_study(initial_density(s), build_model_data(s), s.solver,
                                epsilons, m_prime)


def resolution_check(s: Scenario, n2: int | None = None, m_prime: int | None = None,
                     threshold: float | None = None) -> ResolutionReport:
    """Two-grid consistency: rerun the scenario with the same analytic data on
    the doubled grid and measure the H^{m'} gap after spectral upsampling.

    Both runs share one fixed step (the smaller of the two stability bounds)
    so the comparison isolates the spatial resolution.
    """
    study = s.resolution_pair
    n2 = n2 if n2 is not None else (study.n2 if study else 2 * s.grid.n)
    m_prime = m_prime if m_prime is not None else (study.m_prime if study else 3)
    threshold = threshold if threshold is not None else (study.threshold if study else 1e-6)
    if n2 != 2 * s.grid.n:
        raise ValidationError("resolution-pair", "n2", f"n2 = {n2}, grid n = {s.grid.n}")
    if not s.grid.d / 2 < m_prime < s.solver.guard_m:
        raise ValidationError("ladder-norm-index", "m_prime", f"m_prime = {m_prime}")

    fine_grid = TorusGrid(s.grid.d, n2)
    data_c = build_model_data(s)
    data_f = build_model_data(s, fine_grid)
    rho0_c = initial_density(s)
    rho0_f = initial_density(s, fine_grid)

    if isinstance(s.solver.dt_policy, FixedDt):
        dt = s.solver.dt_policy.dt
    else:
        safety = s.solver.dt_policy.safety
        dt = min(stable_dt(s.solver.epsilon, s.grid, data_c, safety),
                 stable_dt(s.solver.epsilon, fine_grid, data_f, safety),
                 s.solver.t_end)
    config = replace(s.solver, dt_policy=FixedDt(dt))

    traj_c = integrate(rho0_c, data_c, config)
    traj_f = integrate(rho0_f, data_f, config)
    for label, traj in (("coarse", traj_c), ("fine", traj_f)):
        if traj.status.kind != "completed":
            raise RuntimeError(f"{label} run ended with {traj.status.kind} "
                               f"({traj.status.guard_kind or traj.status.detail})")
    diff = resolution_difference(traj_f.final.rho, traj_c.final.rho, m_prime)
    return ResolutionReport(s.grid.n, n2, m_prime, diff, threshold, diff <= threshold)

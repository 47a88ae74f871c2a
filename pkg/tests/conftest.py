"""Shared fixtures and the acceptance-criteria reporter."""

from __future__ import annotations

import numpy as np
import pytest

from crowdflow.model import ModelData, ModelParams, UniformKernel, kernel_normalize
from crowdflow.spectral import GridField, TorusGrid

# registry filled by tests/test_acceptance.py, printed after the run
_ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, passed: bool, detail: str = "") -> None:
    flag = "PASS" if passed else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    _ACCEPTANCE_LINES.append(f"criterion {number:2d}  {name:34s} {flag}{suffix}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def grid1d() -> TorusGrid:
    return TorusGrid(1, 64)


@pytest.fixture
def grid2d() -> TorusGrid:
    return TorusGrid(2, 16)


def smooth_field(grid: TorusGrid, rng: np.random.Generator, offset: float = 0.0,
                 amplitude: float = 0.25, kmax: int = 4) -> GridField:
    """Random low-band trigonometric field, spectrum damped by 1/(1+|k|)^2."""
    coords = grid.coordinates()
    vals = np.full(grid.shape, offset)
    for k in np.ndindex(*[2 * kmax + 1] * grid.d):
        kk = np.asarray(k) - kmax
        if not kk.any():
            continue
        nz = kk[np.nonzero(kk)][0]
        if nz < 0:
            continue
        a = amplitude * rng.normal() / (1.0 + float(kk @ kk)) ** 1.5
        ph = rng.uniform(0.0, 2.0 * np.pi)
        arg = 2.0 * np.pi * sum(int(c) * q for c, q in zip(kk, coords)) + ph
        vals = vals + a * np.cos(arg)
    return GridField(grid, vals)


def toy_data(grid: TorusGrid, rng: np.random.Generator | None = None,
             **overrides) -> ModelData:
    """A smooth, well-posed data bundle on the given grid."""
    x = grid.coordinates()[0]
    fields = dict(
        kappa=GridField(grid, 0.5 + 0.3 * np.cos(2 * np.pi * x)),
        eta=GridField(grid, 0.05 + 0.02 * np.cos(2 * np.pi * x + 0.4)),
        omega=GridField(grid, np.full(grid.shape, 0.05)),
        gamma=GridField(grid, 0.3 + 0.1 * np.sin(2 * np.pi * x)),
        tau=kernel_normalize(UniformKernel()),
        params=ModelParams(0.08, 0.85, 0.6, 1.0),
    )
    fields.update(overrides)
    return ModelData(**fields)

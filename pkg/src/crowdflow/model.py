"""Model data, nonlinearities, nonlocal transfer and right-hand sides.

The density rho(t, x) >= 0 on the unit torus evolves by

    rho_t = delta Lap(rho u) + eta - omega rho + I[gamma rho u] - gamma rho u

where u = u_plus - kappa u_minus / (1 + rho / rho_tilde) is the probability
that a resident relocates (bounded in [u_plus - u_minus, u_plus] for
kappa in [0, 1] and rho >= 0).  The product rho u splits as

    rho u = u_plus rho - kappa M(rho),      M(rho) = u_minus rho / (1 + rho/rho_tilde),

with M increasing, M(0) = 0 and limit u_minus rho_tilde.  The transfer
operator I[q](x) = integral tau(y, x) q(y) dy redistributes density with a
kernel normalized so the destination integral is 1 for every source y, which
makes integral (I[gamma rho u] - gamma rho u) dx vanish.

Two right-hand sides are provided: the plain operator (:func:`rhs_classical`)
and the smoothed evolution operator (:func:`rhs_regularized`)

    A_eps[rho] = delta J_eps[ Lap( u_plus J_eps[rho] - kappa M(J_eps[rho]) ) ]
                 + eta - omega rho + I[gamma rho u] - gamma rho u,

where only the diffusion term sees the smoothing; reaction and transfer act
on the raw state.  At eps = 0 the two coincide bit for bit.

Nonlinear terms are evaluated pointwise on the grid (pseudospectral); the
expanded form of Lap(rho u),

    u+ Lap rho - Lap kappa M(rho) - 2 M'(rho) grad kappa . grad rho
    - kappa M'(rho) Lap rho - kappa M''(rho) |grad rho|^2,

is kept as an independent cross-check path, selectable with path="expanded".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    GridField,
    SpectralField,
    TorusGrid,
    forward_transform,
    inverse_transform,
    min_value,
    mollify,
    sup_norm,
)

__all__ = [
    "ModelParams",
    "ModelData",
    "UniformKernel",
    "SeparableKernel",
    "DenseKernel",
    "TransferKernel",
    "PositivityError",
    "KERNEL_NORMALIZATION_TOL",
    "DENSE_KERNEL_MAX_POINTS",
    "unattractiveness",
    "saturation",
    "saturation_derivative",
    "kernel_normalize",
    "kernel_row_integral_range",
    "nonlocal_transfer",
    "rhs_classical",
    "rhs_regularized",
    "flux_values",
    "flux_gradient",
]

#: Row integrals of a normalized kernel must sit within this of 1.
KERNEL_NORMALIZATION_TOL = 1e-12

#: Dense kernels hold num_points^2 entries; refuse anything bigger.
DENSE_KERNEL_MAX_POINTS = 4096


class PositivityError(ValueError):
    """Raised when an operator is evaluated on a density that is not
    strictly positive (directly or after smoothing)."""

    def __init__(self, what: str, minimum: float):
        super().__init__(f"{what} must be strictly positive (min = {minimum:.6e})")
        self.what = what
        self.minimum = minimum


@dataclass(frozen=True)
class ModelParams:
    """Constants of the model: diffusivity delta > 0, relocation window
    0 < u_minus < u_plus < 1 and crowding scale rho_tilde > 0."""

    delta: float
    u_plus: float
    u_minus: float
    rho_tilde: float

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not (0.0 < self.u_minus < self.u_plus < 1.0):
            raise ValueError("need 0 < u_minus < u_plus < 1")
        if not self.rho_tilde > 0:
            raise ValueError("rho_tilde must be positive")


def _unwrap(field):
    if isinstance(field, GridField):
        return field.values, field.grid
    return np.asarray(field, dtype=float), None


def _rewrap(values, grid):
    if grid is not None:
        return GridField(grid, values)
    if np.ndim(values) == 0:
        return float(values)
    return values


def unattractiveness(kappa, rho, params: ModelParams):
    """u = u_plus - kappa u_minus / (1 + rho / rho_tilde).

    Accepts scalars, arrays or GridFields (both arguments alike); requires
    rho > -rho_tilde so the crowding factor never blows up.
    """
    kv, kg = _unwrap(kappa)
    rv, rg = _unwrap(rho)
    out = params.u_plus - kv * params.u_minus / (1.0 + rv / params.rho_tilde)
    return _rewrap(out, kg or rg)


def saturation(rho, params: ModelParams):
    """M(rho) = u_minus rho / (1 + rho / rho_tilde), the crowding-limited
    part of rho u."""
    rv, rg = _unwrap(rho)
    return _rewrap(params.u_minus * rv / (1.0 + rv / params.rho_tilde), rg)


def saturation_derivative(rho, params: ModelParams, order: int = 1):
    """Closed-form derivatives of M: order 1, 2 or 3."""
    rv, rg = _unwrap(rho)
    s = 1.0 + rv / params.rho_tilde
    if order == 1:
        out = params.u_minus / s**2
    elif order == 2:
        out = -2.0 * params.u_minus / (params.rho_tilde * s**3)
    elif order == 3:
        out = 6.0 * params.u_minus / (params.rho_tilde**2 * s**4)
    else:
        raise ValueError("saturation derivatives are available for orders 1-3")
    return _rewrap(out, rg)


# ---------------------------------------------------------------------------
# transfer kernels

@dataclass(frozen=True)
class UniformKernel:
    """tau(y, x) = level; after normalization I[q] is the mean of q."""

    level: float = 1.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.level) and self.level >= 0):
            raise ValueError("kernel level must be finite and nonnegative")

    def row_integral_range(self, grid: TorusGrid) -> tuple[float, float]:
        return (self.level, self.level)

    def apply(self, q: np.ndarray) -> np.ndarray:
        return np.full_like(q, self.level * float(q.mean()))


@dataclass(frozen=True)
class SeparableKernel:
    """tau(y, x) = source(y) dest(x).

    Row normalization divides out the source profile entirely, so a
    normalized separable kernel sends everything to the destination profile:
    I[q](x) = dest(x) integral q dy.
    """

    source: GridField
    dest: GridField

    def __post_init__(self) -> None:
        if self.source.grid != self.dest.grid:
            raise ValueError("source and destination profiles must share a grid")
        if min_value(self.source) < 0 or min_value(self.dest) < 0:
            raise ValueError("kernel profiles must be nonnegative")

    def row_integral_range(self, grid: TorusGrid) -> tuple[float, float]:
        mb = float(self.dest.values.mean())
        return (min_value(self.source) * mb, float(self.source.values.max()) * mb)

    def apply(self, q: np.ndarray) -> np.ndarray:
        return self.dest.values * float(np.mean(self.source.values * q))


@dataclass(frozen=True)
class DenseKernel:
    """tau sampled at grid point pairs, matrix[y_flat, x_flat] in C order."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("dense kernel must be a square matrix")
        if m.shape[0] > DENSE_KERNEL_MAX_POINTS:
            raise ValueError(
                f"dense kernel over {m.shape[0]} points exceeds the "
                f"{DENSE_KERNEL_MAX_POINTS}-point memory guard"
            )
        if not np.all(np.isfinite(m)):
            raise ValueError("dense kernel entries must be finite")
        if m.min() < 0:
            raise ValueError("dense kernel entries must be nonnegative")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def row_integral_range(self, grid: TorusGrid) -> tuple[float, float]:
        if self.matrix.shape[0] != grid.num_points:
            raise ValueError("dense kernel size does not match the grid")
        rows = self.matrix.mean(axis=1)
        return (float(rows.min()), float(rows.max()))

    def apply(self, q: np.ndarray) -> np.ndarray:
        n = q.size
        out = (q.reshape(-1) @ self.matrix) / n
        return out.reshape(q.shape)


TransferKernel = UniformKernel | SeparableKernel | DenseKernel


def kernel_row_integral_range(kernel: TransferKernel, grid: TorusGrid) -> tuple[float, float]:
    """Smallest and largest destination integral over source points y."""
    return kernel.row_integral_range(grid)


def _assert_normalized(kernel: TransferKernel, grid: TorusGrid) -> None:
    lo, hi = kernel.row_integral_range(grid)
    err = max(abs(lo - 1.0), abs(hi - 1.0))
    if err > KERNEL_NORMALIZATION_TOL:
        raise ValueError(
            f"transfer kernel is not normalized (row integrals off by {err:.3e}); "
            "run kernel_normalize first"
        )


def kernel_normalize(kernel: TransferKernel, grid: TorusGrid | None = None) -> TransferKernel:
    """Divide every source slice tau(y, .) by its destination integral.

    Fails if any slice has a nonpositive integral; afterwards every row
    integral equals 1 to within KERNEL_NORMALIZATION_TOL.
    """
    if isinstance(kernel, UniformKernel):
        if kernel.level <= 0:
            raise ValueError("uniform kernel level must be positive to normalize")
        return UniformKernel(1.0)
    if isinstance(kernel, SeparableKernel):
        mb = float(kernel.dest.values.mean())
        if min_value(kernel.source) <= 0 or mb <= 0:
            raise ValueError("separable kernel has a source slice with nonpositive integral")
        g = kernel.dest.grid
        return SeparableKernel(
            GridField(g, np.ones(g.shape)), GridField(g, kernel.dest.values / mb)
        )
    if isinstance(kernel, DenseKernel):
        rows = kernel.matrix.mean(axis=1)
        if rows.min() <= 0:
            bad = int(np.argmin(rows))
            raise ValueError(f"dense kernel row {bad} has nonpositive integral {rows.min():.3e}")
        return DenseKernel(kernel.matrix / rows[:, None])
    raise TypeError(f"unknown kernel type {type(kernel).__name__}")


def nonlocal_transfer(q: GridField, kernel: TransferKernel) -> GridField:
    """I[q](x) = integral tau(y, x) q(y) dy by rectangle-rule quadrature.

    Requires a normalized kernel; then integral I[q] dx = integral q dy and
    nonnegative q maps to nonnegative I[q].
    """
    _assert_normalized(kernel, q.grid)
    return GridField(q.grid, kernel.apply(q.values))


# ---------------------------------------------------------------------------
# model data bundle

@dataclass(frozen=True)
class ModelData:
    """Static data of one scenario: kappa, eta, omega, gamma on a shared grid,
    a normalized transfer kernel and the model constants.

    Construction validates the pointwise bounds (0 <= kappa <= 1 and
    eta, omega, gamma >= 0) and the kernel normalization; instances are
    immutable and safe to share between concurrent runs.
    """

    kappa: GridField
    eta: GridField
    omega: GridField
    gamma: GridField
    tau: TransferKernel
    params: ModelParams

    def __post_init__(self) -> None:
        g = self.kappa.grid
        for name in ("eta", "omega", "gamma"):
            if getattr(self, name).grid != g:
                raise ValueError(f"{name} lives on a different grid than kappa")
        if min_value(self.kappa) < 0 or float(self.kappa.values.max()) > 1:
            raise ValueError("kappa must lie in [0, 1] pointwise")
        for name in ("eta", "omega", "gamma"):
            if min_value(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be nonnegative pointwise")
        _assert_normalized(self.tau, g)
        # spectral gradient/Laplacian of kappa feed the expanded diffusion path
        khat = forward_transform(self.kappa)
        grads = tuple(
            inverse_transform(SpectralField(g, khat.coeffs * (2j * np.pi * k))).values
            for k in g.wavevectors()
        )
        lap = inverse_transform(
            SpectralField(g, khat.coeffs * (-4.0 * np.pi**2 * g.wavenumber_sq()))
        ).values
        object.__setattr__(self, "_grad_kappa", grads)
        object.__setattr__(self, "_lap_kappa", lap)

    @property
    def grid(self) -> TorusGrid:
        return self.kappa.grid

    def data_sups(self) -> dict[str, float]:
        """Grid sups of the rendered data fields (finite stand-ins for the
        data-bound constants reported in run summaries)."""
        return {
            "kappa": sup_norm(self.kappa),
            "eta": sup_norm(self.eta),
            "omega": sup_norm(self.omega),
            "gamma": sup_norm(self.gamma),
        }


# ---------------------------------------------------------------------------
# right-hand sides

def flux_values(rho_values: np.ndarray, data: ModelData) -> np.ndarray:
    """rho u on the grid in the split form u_plus rho - kappa M(rho)."""
    p = data.params
    return p.u_plus * rho_values - data.kappa.values * (
        p.u_minus * rho_values / (1.0 + rho_values / p.rho_tilde)
    )


def _dealias_mask(grid: TorusGrid) -> np.ndarray:
    cut = grid.n // 3
    mask = np.ones(grid.shape)
    for k in grid.wavevectors():
        mask = mask * (np.abs(k) <= cut)
    return mask


def _grid_values(rho: SpectralField, what: str) -> np.ndarray:
    vals = inverse_transform(rho).values
    m = float(vals.min())
    if m <= 0.0:
        raise PositivityError(what, m)
    return vals


def _expanded_flux_laplacian(
    rho: SpectralField, vals: np.ndarray, data: ModelData, dealias: bool
) -> np.ndarray:
    # u+ Lap rho  -  [Lap kappa M + 2 M' grad kappa . grad rho
    #                 + kappa M' Lap rho + kappa M'' |grad rho|^2]
    g = rho.grid
    p = data.params
    lap_hat = rho.coeffs * (-4.0 * np.pi**2 * g.wavenumber_sq())
    lap_vals = inverse_transform(SpectralField(g, lap_hat)).values
    grads = [
        inverse_transform(SpectralField(g, rho.coeffs * (2j * np.pi * k))).values
        for k in g.wavevectors()
    ]
    m1 = saturation_derivative(vals, p, 1)
    grad_dot = sum(gk * gr for gk, gr in zip(data._grad_kappa, grads))
    grad_sq = sum(gr**2 for gr in grads)
    pointwise = (
        data._lap_kappa * saturation(vals, p)
        + 2.0 * m1 * grad_dot
        + data.kappa.values * m1 * lap_vals
        + data.kappa.values * saturation_derivative(vals, p, 2) * grad_sq
    )
    phat = np.fft.fftn(pointwise) / g.num_points
    if dealias:
        phat = phat * _dealias_mask(g)
    return p.u_plus * lap_hat - phat


def _rhs(
    rho: SpectralField,
    epsilon: float,
    data: ModelData,
    path: str,
    dealias: bool,
) -> SpectralField:
    if rho.grid != data.grid:
        raise ValueError("state and model data live on different grids")
    g = rho.grid
    vals = _grid_values(rho, "density")
    if epsilon > 0:
        smoothed = mollify(rho, epsilon)
        smooth_vals = _grid_values(smoothed, "mollified density")
    else:
        smoothed, smooth_vals = rho, vals

    k2 = g.wavenumber_sq()
    if path == "direct":
        fhat = np.fft.fftn(flux_values(smooth_vals, data)) / g.num_points
        if dealias:
            fhat = fhat * _dealias_mask(g)
        diff = (-4.0 * np.pi**2 * k2) * fhat
    elif path == "expanded":
        diff = _expanded_flux_laplacian(smoothed, smooth_vals, data, dealias)
    else:
        raise ValueError("path must be 'direct' or 'expanded'")
    if epsilon > 0:
        diff = diff * np.exp(-epsilon * k2)
    diff = data.params.delta * diff

    moved = data.gamma.values * flux_values(vals, data)
    exchange = data.tau.apply(moved) - moved
    pointwise = data.eta.values - data.omega.values * vals + exchange
    total = diff + np.fft.fftn(pointwise) / g.num_points
    return SpectralField(g, total)


def rhs_classical(
    rho: SpectralField,
    data: ModelData,
    *,
    path: str = "direct",
    dealias: bool = False,
) -> SpectralField:
    """Time derivative delta Lap(rho u) + eta - omega rho + I[gamma rho u] - gamma rho u.

    path="direct" forms rho u on the grid and applies the spectral Laplacian;
    path="expanded" uses the chain-rule expansion of Lap(rho u) as an
    independent evaluation route.  Requires min rho > 0.
    """
    return _rhs(rho, 0.0, data, path, dealias)


def rhs_regularized(
    rho: SpectralField,
    epsilon: float,
    data: ModelData,
    *,
    path: str = "direct",
    dealias: bool = False,
) -> SpectralField:
    """Smoothed evolution operator A_eps; see the module docstring.

    Smoothing wraps the diffusion term only.  epsilon = 0 reproduces
    :func:`rhs_classical` exactly.  Requires min rho > 0 and, after
    smoothing, min J_eps[rho] > 0.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return _rhs(rho, epsilon, data, path, dealias)


def flux_gradient(rho: SpectralField, data: ModelData, *, expanded: bool = False) -> list[GridField]:
    """grad(rho u) per axis: spectral gradient of the grid flux, or the
    chain-rule form u+ grad rho - grad kappa M - kappa M' grad rho."""
    g = rho.grid
    vals = inverse_transform(rho).values
    if not expanded:
        fhat = np.fft.fftn(flux_values(vals, data)) / g.num_points
        return [
            inverse_transform(SpectralField(g, fhat * (2j * np.pi * k)))
            for k in g.wavevectors()
        ]
    p = data.params
    m1 = saturation_derivative(vals, p, 1)
    out = []
    for axis, k in enumerate(g.wavevectors()):
        grad_rho = inverse_transform(SpectralField(g, rho.coeffs * (2j * np.pi * k))).values
        comp = (
            p.u_plus * grad_rho
            - data._grad_kappa[axis] * saturation(vals, p)
            - data.kappa.values * m1 * grad_rho
        )
        out.append(GridField(g, comp))
    return out

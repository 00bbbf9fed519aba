"""Periodic 2-D grid, finite-difference stencils, inner products and norms.

Everything lives on the unit torus [0,1)^2 discretized by a uniform N x N
grid with step h = 1/N.  Node (i, j) sits at (i/N, j/N); index arithmetic is
periodic, so any integer pair resolves to (i mod N, j mod N).  Fields are
stored as (N, N) float64 arrays in C order, which is the lexicographic
(i, j) layout; ``GridField.flat()`` exposes that vector without copying.

Sums and norms use numpy reductions, so the reduction order is fixed by the
array layout and results are reproducible run to run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "TorusGrid",
    "GridField",
    "TimeMesh",
    "SpaceTimeField",
    "FourVectorField",
    "d1_plus",
    "d2_plus",
    "one_sided_diffs",
    "stencil_array",
    "laplace5",
    "cell_average",
    "inner2",
    "mass",
    "norm_sup",
    "norm_lp",
    "seminorm_w1",
    "st_norm_sup",
    "st_norm_lp",
    "st_seminorm_w1",
    "bilinear_interp",
    "trilinear_interp",
    "restrict",
    "restrict_space_time",
    "save_grid_field",
    "load_grid_field",
    "save_space_time_field",
    "load_space_time_field",
]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform N x N grid on the unit torus.

    Coordinates are always produced as i / n_side (exact for the
    power-of-two sizes used in practice), never accumulated, so the
    identity h * n_side = 1 holds in the representation used for
    coordinates.
    """

    n_side: int

    def __post_init__(self) -> None:
        if self.n_side < 1:
            raise ValueError(f"n_side must be a positive integer, got {self.n_side}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_side

    def coords1d(self) -> np.ndarray:
        return np.arange(self.n_side) / self.n_side

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid (X1, X2) of node coordinates, indexed [i, j]."""
        c = self.coords1d()
        return np.meshgrid(c, c, indexing="ij")

    def wrap(self, i: int, j: int) -> tuple[int, int]:
        return i % self.n_side, j % self.n_side

    def compatible(self, other: "TorusGrid") -> bool:
        return self.n_side == other.n_side


def _check_same_grid(*fields: "GridField") -> TorusGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if not grid.compatible(f.grid):
            raise ValueError(
                f"grid mismatch: n_side {grid.n_side} vs {f.grid.n_side}"
            )
    return grid


@dataclass
class GridField:
    """Real-valued function on the periodic grid.

    ``values`` has shape (n_side, n_side); ``values.ravel()`` is the
    lexicographic (i, j) vector used by the sparse solvers.
    """

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        n = self.grid.n_side
        if v.shape == (n * n,):
            v = v.reshape(n, n)
        if v.shape != (n, n):
            raise ValueError(f"expected shape {(n, n)}, got {v.shape}")
        self.values = np.ascontiguousarray(v)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "GridField":
        return cls(grid, np.zeros((grid.n_side, grid.n_side)))

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> "GridField":
        return cls(grid, np.full((grid.n_side, grid.n_side), float(c)))

    @classmethod
    def from_function(cls, grid: TorusGrid, f: Callable) -> "GridField":
        """Nodal samples of a vectorized callable f(x1, x2)."""
        x1, x2 = grid.node_coords()
        return cls(grid, np.asarray(f(x1, x2), dtype=np.float64))

    def at(self, i: int, j: int) -> float:
        """Periodic access: any integer pair wraps to (i mod N, j mod N)."""
        return float(self.values[i % self.grid.n_side, j % self.grid.n_side])

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def copy(self) -> "GridField":
        return GridField(self.grid, self.values.copy())


@dataclass(frozen=True)
class TimeMesh:
    """Uniform time mesh on [0, T] with N_T steps; t_n = n * dt."""

    horizon: float
    n_steps: int

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


class SpaceTimeField:
    """Sequence of N_T + 1 grid fields, slice n holding values at t_n."""

    def __init__(self, mesh: TimeMesh, slices: Sequence[GridField]):
        if len(slices) != mesh.n_steps + 1:
            raise ValueError(
                f"expected {mesh.n_steps + 1} slices, got {len(slices)}"
            )
        _check_same_grid(*slices)
        self.mesh = mesh
        self.slices = list(slices)

    @property
    def grid(self) -> TorusGrid:
        return self.slices[0].grid

    @classmethod
    def from_array(cls, mesh: TimeMesh, grid: TorusGrid, arr: np.ndarray) -> "SpaceTimeField":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(mesh, [GridField(grid, arr[n]) for n in range(arr.shape[0])])

    @classmethod
    def constant(cls, mesh: TimeMesh, grid: TorusGrid, c: float) -> "SpaceTimeField":
        return cls(mesh, [GridField.constant(grid, c) for _ in range(mesh.n_steps + 1)])

    def __len__(self) -> int:
        return len(self.slices)

    def __getitem__(self, n: int) -> GridField:
        return self.slices[n]

    def stack(self) -> np.ndarray:
        """(N_T + 1, N, N) array of all slices."""
        return np.stack([s.values for s in self.slices])

    def copy(self) -> "SpaceTimeField":
        return SpaceTimeField(self.mesh, [s.copy() for s in self.slices])


@dataclass
class FourVectorField:
    """One 4-vector per node: the one-sided difference stencil of a field."""

    grid: TorusGrid
    values: np.ndarray  # shape (N, N, 4)

    def __post_init__(self) -> None:
        n = self.grid.n_side
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (n, n, 4):
            raise ValueError(f"expected shape {(n, n, 4)}, got {v.shape}")
        self.values = v

    def at(self, i: int, j: int) -> np.ndarray:
        return self.values[i % self.grid.n_side, j % self.grid.n_side]


# ---------------------------------------------------------------------------
# elementary difference operators
# ---------------------------------------------------------------------------

def d1_plus(u: GridField) -> GridField:
    """Forward difference in the first index: (u[i+1,j] - u[i,j]) / h."""
    v = u.values
    return GridField(u.grid, (np.roll(v, -1, axis=0) - v) / u.grid.h)


def d2_plus(u: GridField) -> GridField:
    """Forward difference in the second index: (u[i,j+1] - u[i,j]) / h."""
    v = u.values
    return GridField(u.grid, (np.roll(v, -1, axis=1) - v) / u.grid.h)


def stencil_array(values: np.ndarray, h: float) -> np.ndarray:
    """One-sided difference stencil of (..., N, N) arrays, shape (..., N, N, 4).

    Component order at node (i, j): forward difference in i at (i, j),
    forward difference in i at (i-1, j), forward difference in j at (i, j),
    forward difference in j at (i, j-1).
    """
    dp1 = (np.roll(values, -1, axis=-2) - values) / h
    dp2 = (np.roll(values, -1, axis=-1) - values) / h
    return np.stack(
        [dp1, np.roll(dp1, 1, axis=-2), dp2, np.roll(dp2, 1, axis=-1)], axis=-1
    )


def one_sided_diffs(u: GridField) -> FourVectorField:
    """The four one-sided differences of u at every node."""
    return FourVectorField(u.grid, stencil_array(u.values, u.grid.h))


def laplace_array(values: np.ndarray, h: float) -> np.ndarray:
    """Five-point Laplacian on the trailing two axes of (..., N, N) arrays."""
    return (
        np.roll(values, -1, axis=-2)
        + np.roll(values, 1, axis=-2)
        + np.roll(values, -1, axis=-1)
        + np.roll(values, 1, axis=-1)
        - 4.0 * values
    ) / (h * h)


def laplace5(u: GridField) -> GridField:
    """Five-point discrete Laplacian with periodic wrap."""
    return GridField(u.grid, laplace_array(u.values, u.grid.h))


# ---------------------------------------------------------------------------
# cell averages
# ---------------------------------------------------------------------------

_GAUSS3_NODES = np.array([-math.sqrt(3.0 / 5.0), 0.0, math.sqrt(3.0 / 5.0)])
_GAUSS3_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def cell_average(sampler: Callable, grid: TorusGrid) -> GridField:
    """Cell means of a continuous density over the h x h cells.

    Uses a fixed 3x3 tensor Gauss rule per cell (degree 5 in each
    direction), which is exact for the smooth presets at the tolerances
    used in the tests.  ``sampler`` must accept vectorized (x1, x2).
    """
    h = grid.h
    x1, x2 = grid.node_coords()
    w2d = np.outer(_GAUSS3_WEIGHTS, _GAUSS3_WEIGHTS) / 4.0
    w2d = w2d / w2d.sum()  # cell means of constants are exact
    out = np.zeros_like(x1)
    for a in range(3):
        for b in range(3):
            pts1 = x1 + 0.5 * h * _GAUSS3_NODES[a]
            pts2 = x2 + 0.5 * h * _GAUSS3_NODES[b]
            out += w2d[a, b] * np.asarray(sampler(pts1, pts2), dtype=np.float64)
    return GridField(grid, out)


# ---------------------------------------------------------------------------
# inner products and norms
# ---------------------------------------------------------------------------

def inner2(u: GridField, v: GridField) -> float:
    """Plain unweighted sum of products over all nodes."""
    _check_same_grid(u, v)
    return float(np.sum(u.values * v.values))


def mass(u: GridField) -> float:
    """h^2-weighted total: h^2 * sum of node values."""
    return float(u.grid.h ** 2 * np.sum(u.values))


def norm_sup(u: GridField) -> float:
    return float(np.max(np.abs(u.values)))


def norm_lp(u: GridField, p: float) -> float:
    """h^2-weighted discrete L^p norm."""
    return float((u.grid.h ** 2 * np.sum(np.abs(u.values) ** p)) ** (1.0 / p))


def seminorm_w1(u: GridField, p: float) -> float:
    """h^2-weighted L^p norm of the Euclidean length of the stencil."""
    d = one_sided_diffs(u).values
    mag = np.sqrt(np.sum(d * d, axis=-1))
    return float((u.grid.h ** 2 * np.sum(mag ** p)) ** (1.0 / p))


def st_norm_sup(f: SpaceTimeField) -> float:
    return float(max(norm_sup(s) for s in f.slices))


def st_norm_lp(f: SpaceTimeField, p: float) -> float:
    """(h^2 dt)-weighted L^p norm over all slices."""
    h2 = f.grid.h ** 2
    total = sum(np.sum(np.abs(s.values) ** p) for s in f.slices)
    return float((h2 * f.mesh.dt * total) ** (1.0 / p))


def st_seminorm_w1(f: SpaceTimeField, p: float) -> float:
    """(h^2 dt)-weighted L^p norm of stencil lengths over slices 1..N_T."""
    h2 = f.grid.h ** 2
    total = 0.0
    for s in f.slices[1:]:
        d = one_sided_diffs(s).values
        total += np.sum(np.sum(d * d, axis=-1) ** (p / 2.0))
    return float((h2 * f.mesh.dt * total) ** (1.0 / p))


# ---------------------------------------------------------------------------
# interpolation and restriction
# ---------------------------------------------------------------------------

def _locate(coord: float, n: int) -> tuple[int, float]:
    pos = (coord % 1.0) * n
    i0 = int(math.floor(pos))
    if i0 >= n:
        i0 -= n
        pos -= n
    return i0, pos - i0


def bilinear_interp(u: GridField, x: Sequence[float]) -> float:
    """Tensor-product linear interpolation with periodic wrap; exact at nodes."""
    n = u.grid.n_side
    i0, t1 = _locate(float(x[0]), n)
    j0, t2 = _locate(float(x[1]), n)
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    v = u.values
    return float(
        (1.0 - t1) * (1.0 - t2) * v[i0, j0]
        + t1 * (1.0 - t2) * v[i1, j0]
        + (1.0 - t1) * t2 * v[i0, j1]
        + t1 * t2 * v[i1, j1]
    )


def trilinear_interp(f: SpaceTimeField, t: float, x: Sequence[float]) -> float:
    """Space-time variant: bilinear in space, linear in t (clamped to [0, T])."""
    nt = f.mesh.n_steps
    tau = min(max(t, 0.0), f.mesh.horizon) / f.mesh.dt
    n0 = min(int(math.floor(tau)), nt - 1)
    theta = tau - n0
    a = bilinear_interp(f.slices[n0], x)
    b = bilinear_interp(f.slices[n0 + 1], x)
    return (1.0 - theta) * a + theta * b


def restrict(u_fine: GridField, grid_coarse: TorusGrid) -> GridField:
    """Injection onto a nested coarse grid (coarse node reads coinciding fine node)."""
    nf, nc = u_fine.grid.n_side, grid_coarse.n_side
    if nf % nc != 0:
        raise ValueError(f"grids not nested: fine {nf} is not a multiple of coarse {nc}")
    r = nf // nc
    return GridField(grid_coarse, u_fine.values[::r, ::r].copy())


def restrict_space_time(
    f_fine: SpaceTimeField, mesh_coarse: TimeMesh, grid_coarse: TorusGrid
) -> SpaceTimeField:
    """Injection in space and time onto nested coarse meshes."""
    nt_f, nt_c = f_fine.mesh.n_steps, mesh_coarse.n_steps
    if nt_f % nt_c != 0:
        raise ValueError(f"time meshes not nested: {nt_f} vs {nt_c}")
    stride = nt_f // nt_c
    slices = [restrict(f_fine.slices[n * stride], grid_coarse) for n in range(nt_c + 1)]
    return SpaceTimeField(mesh_coarse, slices)


# ---------------------------------------------------------------------------
# serialization: CSV with an `i,j,value` header plus a JSON sidecar
# ---------------------------------------------------------------------------

def save_grid_field(u: GridField, path: str | Path) -> None:
    path = Path(path)
    n = u.grid.n_side
    lines = ["i,j,value"]
    v = u.values
    for i in range(n):
        for j in range(n):
            lines.append(f"{i},{j},{v[i, j]:.17g}")
    path.write_text("\n".join(lines) + "\n")
    sidecar = {"n_side": n, "h": u.grid.h}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def load_grid_field(path: str | Path) -> GridField:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = TorusGrid(int(meta["n_side"]))
    values = np.zeros((grid.n_side, grid.n_side))
    with path.open() as fh:
        header = fh.readline()
        if header.strip() != "i,j,value":
            raise ValueError(f"unexpected header in {path}: {header!r}")
        for line in fh:
            if not line.strip():
                continue
            si, sj, sv = line.split(",")
            values[int(si), int(sj)] = float(sv)
    return GridField(grid, values)


def save_space_time_field(f: SpaceTimeField, directory: str | Path, prefix: str = "slice") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for n, s in enumerate(f.slices):
        save_grid_field(s, directory / f"{prefix}_{n:04d}.csv")
    meta = {
        "n_side": f.grid.n_side,
        "h": f.grid.h,
        "horizon": f.mesh.horizon,
        "n_steps": f.mesh.n_steps,
        "dt": f.mesh.dt,
    }
    (directory / f"{prefix}_meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_space_time_field(directory: str | Path, prefix: str = "slice") -> SpaceTimeField:
    directory = Path(directory)
    meta = json.loads((directory / f"{prefix}_meta.json").read_text())
    mesh = TimeMesh(float(meta["horizon"]), int(meta["n_steps"]))
    slices = [
        load_grid_field(directory / f"{prefix}_{n:04d}.csv")
        for n in range(mesh.n_steps + 1)
    ]
    return SpaceTimeField(mesh, slices)

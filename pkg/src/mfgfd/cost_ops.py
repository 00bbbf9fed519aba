"""Coupling costs: pointwise local costs and the bilaplacian smoothing operator.

A local cost applies a scalar function F to the density node by node.  The
nonlocal cost maps m to the solution w of (Lap_h^2 + I) w = m on the
periodic grid; since the five-point Laplacian is diagonal in the discrete
Fourier basis, the solve is a pair of FFTs against the exact symbol, and
the result doubles as its own oracle (the residual is checked on every
application).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .torus_grid import GridField, TorusGrid, inner2, laplace5, mass, norm_sup

__all__ = [
    "DiscreteDensity",
    "LocalCost",
    "BilaplacianCost",
    "CostSolveError",
    "eval_cost",
    "monotone_pairing",
    "smoothing_bounds_check",
]

MASS_TOL = 1e-12


class CostSolveError(RuntimeError):
    """Nonlocal solve failed its residual contract."""

    def __init__(self, residual: float, limit: float):
        super().__init__(f"smoothing solve residual {residual:.3e} exceeds {limit:.3e}")
        self.residual = residual
        self.limit = limit


class DiscreteDensity:
    """Grid field in the discrete probability simplex: nonnegative, h^2-mass 1."""

    def __init__(self, field: GridField):
        lowest = float(np.min(field.values))
        if lowest < 0.0:
            raise ValueError(f"density has a negative node value {lowest:.3e}")
        m = mass(field)
        if abs(m - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {m!r} deviates from 1 by more than {MASS_TOL}")
        self.field = field

    @property
    def grid(self) -> TorusGrid:
        return self.field.grid

    @classmethod
    def uniform(cls, grid: TorusGrid) -> "DiscreteDensity":
        return cls(GridField.constant(grid, 1.0))

    @classmethod
    def normalized(cls, field: GridField) -> "DiscreteDensity":
        """Rescale a nonnegative field multiplicatively to unit mass."""
        m = mass(field)
        if m <= 0.0:
            raise ValueError("cannot normalize a field with nonpositive mass")
        return cls(GridField(field.grid, field.values / m))


@dataclass
class LocalCost:
    """Pointwise cost F(m) with the growth/coercivity constants it certifies.

    The constants mean: m F(m) >= delta |F(m)|^gamma - c1 on [0, inf), and
    F'(m) >= delta_lower * min(m^eta1, m^-eta2) with eta1 > 0, 0 < eta2 < 1.
    F is only defined for nonnegative arguments; ``apply`` clamps inputs
    below at zero (callers gate genuinely negative densities beforehand).
    """

    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Optional[Callable[[np.ndarray], np.ndarray]]
    delta: float
    gamma: float
    c1: float
    delta_lower: float
    eta1: float
    eta2: float
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.delta <= 0 or self.gamma <= 1 or self.c1 < 0:
            raise ValueError("need delta > 0, gamma > 1, c1 >= 0")
        if self.eta1 <= 0 or not (0 < self.eta2 < 1):
            raise ValueError("need eta1 > 0 and eta2 in (0, 1)")

    @classmethod
    def linear(cls) -> "LocalCost":
        return cls(
            f=lambda m: m,
            f_prime=lambda m: np.ones_like(m),
            delta=1.0,
            gamma=2.0,
            c1=0.0,
            delta_lower=1.0,
            eta1=0.5,
            eta2=0.5,
            name="linear",
        )

    @classmethod
    def power(cls, alpha: float) -> "LocalCost":
        """F(m) = m^alpha for alpha in (0, 2]; m F = |F|^((1+alpha)/alpha) exactly."""
        if not 0.0 < alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
        return cls(
            f=lambda m, a=alpha: m ** a,
            f_prime=lambda m, a=alpha: a * m ** (a - 1.0),
            delta=1.0,
            gamma=(1.0 + alpha) / alpha,
            c1=0.0,
            delta_lower=alpha,
            eta1=max(alpha - 1.0, 0.5),
            eta2=max(1.0 - alpha, 0.5),
            name=f"power({alpha:g})",
        )

    @classmethod
    def zero(cls) -> "LocalCost":
        """Trivial cost, used for decoupled heat-flow checks."""
        return cls(
            f=lambda m: np.zeros_like(m),
            f_prime=None,
            delta=1.0,
            gamma=2.0,
            c1=0.0,
            delta_lower=1.0,
            eta1=0.5,
            eta2=0.5,
            name="zero",
        )

    def apply(self, m: GridField) -> GridField:
        vals = self.f(np.maximum(m.values, 0.0))
        return GridField(m.grid, np.asarray(vals, dtype=np.float64))


class BilaplacianCost:
    """Smoothing cost: m -> w with (Lap_h^2 + I) w = m on the periodic grid.

    The symbol of -Lap_h at mode (k, l) is
    mu = (4 - 2 cos(2 pi k / N) - 2 cos(2 pi l / N)) / h^2 >= 0, so the
    solve divides the Fourier coefficients by 1 + mu^2.  Every application
    verifies the defining equation to RESIDUAL_LIMIT in the sup norm.
    """

    RESIDUAL_LIMIT = 1e-10

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        n = grid.n_side
        k = np.arange(n)
        mu1 = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / grid.h ** 2
        mu = mu1[:, None] + mu1[None, :]
        self._symbol = 1.0 + mu * mu

    def apply(self, m: GridField) -> GridField:
        if not m.grid.compatible(self.grid):
            raise ValueError("density grid does not match the cost grid")
        what = np.fft.fft2(m.values) / self._symbol
        w = GridField(self.grid, np.real(np.fft.ifft2(what)))
        residual = norm_sup(
            GridField(self.grid, laplace5(laplace5(w)).values + w.values - m.values)
        )
        # recomputing the fourth-order stencil amplifies representation error
        # by ~ (4/h^2)^2 eps, so the gate carries that backward-error floor on
        # top of the data-relative contract
        eps = np.finfo(np.float64).eps
        floor = 16.0 * eps * (4.0 / self.grid.h ** 2) ** 2 * norm_sup(w)
        limit = self.RESIDUAL_LIMIT * max(1.0, norm_sup(m)) + floor
        if residual > limit:
            raise CostSolveError(residual, limit)
        return w


CostOperator = LocalCost | BilaplacianCost


def _gate(m: GridField) -> GridField:
    lowest = float(np.min(m.values))
    if lowest < -1e-10:
        raise ValueError(f"density node value {lowest:.3e} below the -1e-10 gate")
    total = mass(m)
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"density mass {total!r} outside the 1e-8 gate")
    return m


def eval_cost(cost: CostOperator, m: "DiscreteDensity | GridField") -> GridField:
    """Apply the cost to a discrete probability density (loosely gated)."""
    field = m.field if isinstance(m, DiscreteDensity) else _gate(m)
    return cost.apply(field)


def monotone_pairing(
    cost: CostOperator, m: "DiscreteDensity | GridField", m_tilde: "DiscreteDensity | GridField"
) -> float:
    """Unweighted pairing (cost[m] - cost[m~], m - m~); nonnegative for the built-ins."""
    fm = m.field if isinstance(m, DiscreteDensity) else _gate(m)
    fmt = m_tilde.field if isinstance(m_tilde, DiscreteDensity) else _gate(m_tilde)
    cm = cost.apply(fm)
    cmt = cost.apply(fmt)
    diff_cost = GridField(fm.grid, cm.values - cmt.values)
    diff_m = GridField(fm.grid, fm.values - fmt.values)
    return inner2(diff_cost, diff_m)


def _random_density(grid: TorusGrid, rng: np.random.Generator) -> DiscreteDensity:
    raw = np.abs(rng.normal(1.0, 0.5, size=(grid.n_side, grid.n_side))) + 1e-3
    return DiscreteDensity.normalized(GridField(grid, raw))


def _spike_density(grid: TorusGrid) -> DiscreteDensity:
    vals = np.zeros((grid.n_side, grid.n_side))
    vals[0, 0] = 1.0 / grid.h ** 2
    return DiscreteDensity(GridField(grid, vals))


def _lipschitz_quotient(w: GridField) -> float:
    """Largest neighbor difference quotient; bounds |w(x)-w(y)| / d(x,y) up to 2x."""
    v = w.values
    h = w.grid.h
    d1 = np.abs(np.roll(v, -1, axis=0) - v) / h
    d2 = np.abs(np.roll(v, -1, axis=1) - v) / h
    return float(max(d1.max(), d2.max()))


def smoothing_bounds_check(
    grids: Sequence[TorusGrid], samples: int = 8, seed: int = 0
) -> dict:
    """Uniform bounds of the smoothing cost across a grid hierarchy.

    Applies the bilaplacian cost to random simplex densities plus the
    single-cell spike on every grid and reports the largest sup norm and
    Lipschitz quotient per level.  Both stay bounded independently of the
    grid step; a growing sequence fails the check.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    levels = []
    for grid in grids:
        cost = BilaplacianCost(grid)
        sup_max = 0.0
        lip_max = 0.0
        densities = [_random_density(grid, rng) for _ in range(samples)]
        densities.append(_spike_density(grid))
        for dens in densities:
            w = cost.apply(dens.field)
            sup_max = max(sup_max, norm_sup(w))
            lip_max = max(lip_max, _lipschitz_quotient(w))
        levels.append(
            {"n_side": grid.n_side, "sup_norm_max": sup_max, "lipschitz_max": lip_max}
        )
    sups = [lv["sup_norm_max"] for lv in levels]
    lips = [lv["lipschitz_max"] for lv in levels]
    # bounded means the later levels do not blow past the recorded constant
    bound_sup = max(sups)
    bound_lip = max(lips)
    growth_ok = sups[-1] <= 2.0 * sups[0] + 1.0 and lips[-1] <= 2.0 * lips[0] + 1.0
    return {
        "levels": levels,
        "bound_sup": bound_sup,
        "bound_lip": bound_lip,
        "pass": bool(growth_ok),
    }

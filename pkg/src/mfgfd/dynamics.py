"""Single time-step operators of the coupled scheme.

The value-function step is semi-implicit Euler: given the current slice and
a frozen cost field, the next slice solves

    (u_next - u_cur)/dt - nu Lap_h u_next + value(x, stencil(u_next)) = cost,

by damped Newton with the exact Jacobian (1/dt) I - nu L + B(u), where B
collects the upwind gradient against the one-sided difference stencils.
Monotonicity of the upwind Hamiltonian makes the Jacobian an M-matrix, so
the sparse direct solve is always well posed and Armijo backtracking on the
residual sup norm gives global progress (the iteration is semismooth at the
gradient kink, where the gradient is extended by zero).

The density step is implicit: given u_next and the later density slice it
solves

    (1/dt) m_cur - nu Lap_h m_cur - transport(u_next, m_cur) = (1/dt) m_next.

Its matrix is assembled as (1/dt) I plus the transpose of the
advection-diffusion block of the value-step Jacobian, which is exactly the
adjoint relation the scheme is built on; column sums of that block vanish,
so the h^2-weighted mass is conserved to the linear-solve tolerance, and
the M-matrix sign pattern preserves nonnegativity.  Nonnegative clamping of
roundoff-level undershoot (never below -1e-12) keeps densities in the
simplex without hiding real defects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hamiltonian import PowerHamiltonian
from .torus_grid import (
    GridField,
    TorusGrid,
    inner2,
    laplace_array,
    norm_sup,
    one_sided_diffs,
)

__all__ = [
    "HjbStepConfig",
    "LinearSolveContract",
    "NonConvergence",
    "LinearSolveError",
    "PositivityError",
    "hjb_residual",
    "hjb_step_solve",
    "hjb_step_picard",
    "transport_apply",
    "linearized_hjb_apply",
    "adjoint_apply",
    "advection_matrix",
    "linearized_hjb_matrix",
    "hjb_jacobian",
    "fp_matrix",
    "fp_step_solve",
    "adjoint_check",
]

CLAMP_LIMIT = 1e-12


@dataclass
class HjbStepConfig:
    """Newton controls for the semi-implicit value step."""

    newton_tol: float = 1e-11
    max_newton: int = 50
    armijo_c: float = 1e-4
    min_step: float = 2.0 ** -20

    def __post_init__(self) -> None:
        if self.newton_tol <= 0 or self.min_step <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in (0, 1)")


@dataclass
class LinearSolveContract:
    """Residual guarantee for every linear solve: |Ax - b|_inf <= tol * |b|_inf."""

    method: str = "splu"
    residual_tol: float = 1e-12


class NonConvergence(RuntimeError):
    """Newton failed; usually a too-large dt or degenerate data."""

    def __init__(self, iterations: int, final_residual: float):
        super().__init__(
            f"Newton did not converge after {iterations} iterations "
            f"(residual {final_residual:.3e})"
        )
        self.iterations = iterations
        self.final_residual = final_residual


class LinearSolveError(RuntimeError):
    pass


class PositivityError(RuntimeError):
    """Density undershoot beyond the clamp limit; a real defect, not roundoff."""


# ---------------------------------------------------------------------------
# sparse building blocks, cached per grid size
# ---------------------------------------------------------------------------

_matrix_cache: dict[int, dict[str, sp.spmatrix]] = {}


def _grid_matrices(n: int) -> dict[str, sp.spmatrix]:
    cached = _matrix_cache.get(n)
    if cached is not None:
        return cached
    idx = np.arange(n)
    cyc = sp.csr_matrix((np.ones(n), (idx, (idx + 1) % n)), shape=(n, n))
    eye_n = sp.identity(n, format="csr")
    s1p = sp.kron(cyc, eye_n, format="csr")  # picks u[i+1, j]
    s2p = sp.kron(eye_n, cyc, format="csr")  # picks u[i, j+1]
    mats = {
        "I": sp.identity(n * n, format="csr"),
        "S1p": s1p,
        "S1m": s1p.T.tocsr(),
        "S2p": s2p,
        "S2m": s2p.T.tocsr(),
    }
    h2 = (1.0 / n) ** 2
    mats["L"] = (
        (mats["S1p"] + mats["S1m"] + mats["S2p"] + mats["S2m"] - 4.0 * mats["I"]) / h2
    ).tocsr()
    _matrix_cache[n] = mats
    return mats


def laplacian_matrix(grid: TorusGrid) -> sp.spmatrix:
    """Five-point Laplacian as a sparse matrix on the lexicographic vector."""
    return _grid_matrices(grid.n_side)["L"]


def advection_matrix(ham: PowerHamiltonian, u: GridField) -> sp.spmatrix:
    """Derivative of the node-wise Hamiltonian values with respect to u.

    Row (i, j) differentiates value(x_ij, stencil(u)_ij) through the four
    one-sided differences.  Off-diagonals are nonpositive and each row sums
    to zero, both consequences of the upwind monotonicity.
    """
    n = u.grid.n_side
    h = u.grid.h
    mats = _grid_matrices(n)
    g = ham.grad_grid(one_sided_diffs(u))
    d1 = sp.diags(g[..., 0].ravel())
    d2 = sp.diags(g[..., 1].ravel())
    d3 = sp.diags(g[..., 2].ravel())
    d4 = sp.diags(g[..., 3].ravel())
    b = (
        d1 @ (mats["S1p"] - mats["I"])
        + d2 @ (mats["I"] - mats["S1m"])
        + d3 @ (mats["S2p"] - mats["I"])
        + d4 @ (mats["I"] - mats["S2m"])
    ) / h
    return b.tocsr()


def linearized_hjb_matrix(ham: PowerHamiltonian, nu: float, u: GridField) -> sp.spmatrix:
    """Advection-diffusion block: -nu L + B(u)."""
    return (-nu * laplacian_matrix(u.grid) + advection_matrix(ham, u)).tocsr()


def hjb_jacobian(ham: PowerHamiltonian, nu: float, dt: float, u: GridField) -> sp.spmatrix:
    return ((1.0 / dt) * _grid_matrices(u.grid.n_side)["I"] + linearized_hjb_matrix(ham, nu, u)).tocsr()


def fp_matrix(ham: PowerHamiltonian, nu: float, dt: float, u_next: GridField) -> sp.spmatrix:
    """System matrix of the implicit density step: (1/dt) I + (-nu L + B(u))^T."""
    return (
        (1.0 / dt) * _grid_matrices(u_next.grid.n_side)["I"]
        + linearized_hjb_matrix(ham, nu, u_next).T
    ).tocsc()


def _solve_checked(a: sp.spmatrix, b: np.ndarray, contract: LinearSolveContract) -> np.ndarray:
    lu = spla.splu(a.tocsc())
    x = lu.solve(b)
    limit = contract.residual_tol * max(float(np.max(np.abs(b))), 1e-300)
    resid = a @ x - b
    if float(np.max(np.abs(resid))) > limit:
        x = x + lu.solve(-resid)  # one step of iterative refinement
        resid = a @ x - b
        if float(np.max(np.abs(resid))) > limit:
            raise LinearSolveError(
                f"linear solve residual {float(np.max(np.abs(resid))):.3e} exceeds contract"
            )
    return x


# ---------------------------------------------------------------------------
# value-function step
# ---------------------------------------------------------------------------

def hjb_residual(
    ham: PowerHamiltonian,
    nu: float,
    dt: float,
    u_next: GridField,
    u_cur: GridField,
    phi_field: GridField,
) -> GridField:
    """Defect of the semi-implicit value equation at (u_next, u_cur, cost)."""
    lap = laplace_array(u_next.values, u_next.grid.h)
    gval = ham.value_grid(one_sided_diffs(u_next)).values
    res = (u_next.values - u_cur.values) / dt - nu * lap + gval - phi_field.values
    return GridField(u_next.grid, res)


def hjb_step_solve(
    ham: PowerHamiltonian,
    nu: float,
    dt: float,
    u_cur: GridField,
    phi_field: GridField,
    cfg: Optional[HjbStepConfig] = None,
    contract: Optional[LinearSolveContract] = None,
    initial_guess: Optional[GridField] = None,
) -> GridField:
    """Advance the value function one step by damped Newton.

    Starts from ``initial_guess`` (default: the current slice), iterates
    u <- u + t * delta with J(u) delta = -residual(u) and Armijo
    backtracking on the residual sup norm, and returns once that norm is
    below ``newton_tol``.  Raises NonConvergence when ``max_newton``
    iterations cannot reach the tolerance.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    cfg = cfg or HjbStepConfig()
    contract = contract or LinearSolveContract()
    u = (initial_guess or u_cur).copy()
    res = hjb_residual(ham, nu, dt, u, u_cur, phi_field)
    r = norm_sup(res)
    for it in range(cfg.max_newton):
        if r <= cfg.newton_tol:
            return u
        jac = hjb_jacobian(ham, nu, dt, u)
        delta = _solve_checked(jac, -res.flat(), contract).reshape(u.values.shape)
        t = 1.0
        accepted = False
        while t >= cfg.min_step:
            trial = GridField(u.grid, u.values + t * delta)
            res_try = hjb_residual(ham, nu, dt, trial, u_cur, phi_field)
            r_try = norm_sup(res_try)
            if r_try <= (1.0 - cfg.armijo_c * t) * r:
                u, res, r = trial, res_try, r_try
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise NonConvergence(it + 1, r)
    if r <= cfg.newton_tol:
        return u
    raise NonConvergence(cfg.max_newton, r)


def hjb_step_picard(
    ham: PowerHamiltonian,
    nu: float,
    dt: float,
    u_cur: GridField,
    phi_field: GridField,
    tol: float = 1e-12,
    max_iter: int = 200000,
) -> GridField:
    """Fixed-point iteration u <- u_cur + dt (nu Lap u - value + cost).

    Independent cross-check of the Newton path; contracts only when dt is
    small against nu / h^2, so it is a small-step oracle, not a solver.
    """
    u = u_cur.copy()
    for _ in range(max_iter):
        lap = laplace_array(u.values, u.grid.h)
        gval = ham.value_grid(one_sided_diffs(u)).values
        new = u_cur.values + dt * (nu * lap - gval + phi_field.values)
        change = float(np.max(np.abs(new - u.values)))
        u = GridField(u.grid, new)
        if change <= tol:
            return u
    raise NonConvergence(max_iter, change)


# ---------------------------------------------------------------------------
# transport and the implicit density step
# ---------------------------------------------------------------------------

def transport_apply(ham: PowerHamiltonian, u: GridField, m: GridField) -> GridField:
    """Discrete transport of m along the upwind momentum field of u.

    Defined by duality: inner2(transport(u, m), w) equals minus the sum of
    m * grad(stencil(u)) . stencil(w) over all nodes, for every w.  The sum
    over all nodes is therefore zero (take w = 1), which is the discrete
    mass conservation.
    """
    if not u.grid.compatible(m.grid):
        raise ValueError("u and m must share one grid")
    h = u.grid.h
    g = ham.grad_grid(one_sided_diffs(u))
    a1 = m.values * g[..., 0]
    a2 = m.values * g[..., 1]
    a3 = m.values * g[..., 2]
    a4 = m.values * g[..., 3]
    out = (
        (a1 - np.roll(a1, 1, axis=0))
        + (np.roll(a2, -1, axis=0) - a2)
        + (a3 - np.roll(a3, 1, axis=1))
        + (np.roll(a4, -1, axis=1) - a4)
    ) / h
    return GridField(u.grid, out)


def linearized_hjb_apply(ham: PowerHamiltonian, nu: float, u: GridField, v: GridField) -> GridField:
    """Linearization of the stationary value operator at u, applied to v."""
    if not u.grid.compatible(v.grid):
        raise ValueError("u and v must share one grid")
    g = ham.grad_grid(one_sided_diffs(u))
    dv = one_sided_diffs(v).values
    lap = laplace_array(v.values, v.grid.h)
    return GridField(u.grid, -nu * lap + np.sum(g * dv, axis=-1))


def adjoint_apply(ham: PowerHamiltonian, nu: float, u: GridField, m: GridField) -> GridField:
    """Adjoint of the linearized value operator: -nu Lap m - transport(u, m)."""
    lap = laplace_array(m.values, m.grid.h)
    return GridField(m.grid, -nu * lap - transport_apply(ham, u, m).values)


def _fp_step_with_stats(
    ham: PowerHamiltonian,
    nu: float,
    dt: float,
    u_next: GridField,
    m_next: GridField,
    contract: Optional[LinearSolveContract] = None,
) -> tuple[GridField, float]:
    """Solve the implicit density step; returns (m_cur, clamp magnitude)."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    contract = contract or LinearSolveContract()
    a = fp_matrix(ham, nu, dt, u_next)
    b = m_next.values.ravel() / dt
    x = _solve_checked(a, b, contract)
    lowest = float(np.min(x))
    clamp = 0.0
    if lowest < 0.0:
        if lowest < -CLAMP_LIMIT:
            raise PositivityError(
                f"density undershoot {lowest:.3e} below the {-CLAMP_LIMIT:.0e} clamp limit"
            )
        clamp = -lowest
        pre_mass = float(np.sum(x))
        x = np.maximum(x, 0.0)
        post_mass = float(np.sum(x))
        if post_mass > 0.0:
            x *= pre_mass / post_mass
    return GridField(u_next.grid, x.reshape(m_next.values.shape)), clamp


def fp_step_solve(
    ham: PowerHamiltonian,
    nu: float,
    dt: float,
    u_next: GridField,
    m_next: GridField,
    contract: Optional[LinearSolveContract] = None,
) -> GridField:
    """Step the density backward: the earlier slice given u_next and m_next."""
    m_cur, _ = _fp_step_with_stats(ham, nu, dt, u_next, m_next, contract)
    return m_cur


# ---------------------------------------------------------------------------
# adjoint structure check
# ---------------------------------------------------------------------------

def adjoint_check(
    ham: PowerHamiltonian,
    nu: float,
    u: GridField,
    probes: int = 20,
    seed: int = 0,
) -> float:
    """Largest normalized defect of the adjoint pairing over random probes.

    For probe fields (v, m) compares inner2(L_u v, m) with inner2(v, A_u m),
    where L_u is the linearized value operator and A_u the
    diffusion-transport operator; the two are assembled independently (direct
    stencils vs the roll-based transport), so agreement to roundoff pins the
    adjoint structure.  Each defect is normalized by
    |L_u v|_2 |m|_2 + |v|_2 |A_u m|_2; the contract is a result <= 1e-12.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    n = u.grid.n_side
    worst = 0.0
    for _ in range(probes):
        v = GridField(u.grid, rng.normal(0.0, 1.0, size=(n, n)))
        m = GridField(u.grid, rng.normal(0.0, 1.0, size=(n, n)))
        lv = linearized_hjb_apply(ham, nu, u, v)
        am = adjoint_apply(ham, nu, u, m)
        lhs = inner2(lv, m)
        rhs = inner2(v, am)
        scale = (
            float(np.linalg.norm(lv.flat()) * np.linalg.norm(m.flat()))
            + float(np.linalg.norm(v.flat()) * np.linalg.norm(am.flat()))
            + 1e-300
        )
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst

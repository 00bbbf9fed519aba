"""Coupled solvers for the forward-backward and the stationary systems.

The evolutive system couples a forward value sweep (each step implicit in u,
with the cost field frozen from the density trajectory) to a backward
density sweep (each step implicit in m, explicit in u).  A damped Picard
iteration on the density trajectory closes the loop: sweep values forward,
sweep densities backward from the terminal density, then blend the new
trajectory into the old one.  The iteration stops once the trajectory
change is below tolerance *and* the defect of both discrete equations at
the candidate pair is at or below the inner target, so the returned
solution genuinely satisfies the scheme, not just a stagnation criterion.

The stationary system adds the unknown effective constant: the value block
is solved by Newton on (u, lambda) with the zero-mean row closing the rank
deficiency, and the invariant density is the kernel vector of the
transpose advection-diffusion operator, found by inverse power iteration
with a tiny shift (the operator is an M-matrix with zero column sums, so
the shifted solves preserve positivity and converge in a couple of
iterations).

This module also hosts the exact algebraic checker for the perturbed
two-pair balance: endpoint pairings plus both weighted Bregman terms plus
the cost monotonicity pairing equal the perturbation pairings.  The checker
computes the residuals of *both* pairs, so the balance holds to roundoff
for arbitrary trajectories and reduces to the unperturbed statement when
the base pair solves the scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cost_ops import CostOperator, DiscreteDensity, LocalCost
from .dynamics import (
    HjbStepConfig,
    LinearSolveContract,
    _fp_step_with_stats,
    _solve_checked,
    hjb_residual,
    hjb_step_solve,
    linearized_hjb_matrix,
    transport_apply,
)
from .hamiltonian import PowerHamiltonian, weighted_bregman_gap
from .torus_grid import (
    GridField,
    SpaceTimeField,
    TimeMesh,
    TorusGrid,
    inner2,
    laplace_array,
    mass,
    norm_sup,
    one_sided_diffs,
    stencil_array,
)

__all__ = [
    "EvolutiveProblem",
    "ErgodicProblem",
    "FixedPointConfig",
    "EvolutiveSolution",
    "ErgodicSolution",
    "PerturbationPair",
    "OuterNonConvergence",
    "InversePowerStall",
    "solve_evolutive",
    "solve_ergodic",
    "system_residuals",
    "identity_terms",
    "forward_backward_identity_gap",
    "apriori_monitors",
    "evolutive_residuals",
]

INNER_RESIDUAL_TARGET = 1e-9


class OuterNonConvergence(RuntimeError):
    """Fixed-point iteration stalled; damping or the cost may be at fault."""

    def __init__(self, iters: int, last_change: float):
        super().__init__(
            f"outer iteration did not converge after {iters} sweeps "
            f"(last change {last_change:.3e})"
        )
        self.iters = iters
        self.last_change = last_change


class InversePowerStall(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"inverse power iteration stalled after {iterations} steps "
            f"(residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


@dataclass
class FixedPointConfig:
    """Outer-iteration controls shared by both solvers."""

    damping: float = 0.5
    outer_tol: float = 1e-9
    max_outer: int = 500

    def __post_init__(self) -> None:
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.outer_tol <= 0 or self.max_outer < 1:
            raise ValueError("outer_tol must be positive and max_outer >= 1")


@dataclass
class EvolutiveProblem:
    nu: float
    hamiltonian: PowerHamiltonian
    cost: CostOperator
    u0: GridField
    mT: DiscreteDensity
    mesh: TimeMesh
    grid: TorusGrid

    def __post_init__(self) -> None:
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        for f, name in ((self.u0, "u0"), (self.mT.field, "mT"), (self.hamiltonian.potential, "potential")):
            if not f.grid.compatible(self.grid):
                raise ValueError(f"{name} lives on a different grid")
        cost_grid = getattr(self.cost, "grid", None)
        if cost_grid is not None and not cost_grid.compatible(self.grid):
            raise ValueError("cost operator is bound to a different grid")


@dataclass
class ErgodicProblem:
    nu: float
    hamiltonian: PowerHamiltonian
    cost: LocalCost
    grid: TorusGrid

    def __post_init__(self) -> None:
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if not isinstance(self.cost, LocalCost):
            raise ValueError("the stationary solver requires a local cost")


@dataclass
class EvolutiveSolution:
    u: SpaceTimeField
    m: SpaceTimeField
    outer_iters: int
    residual_history: list[float]
    monitors: Optional[dict]
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ErgodicSolution:
    u: GridField
    m: DiscreteDensity
    lam: float
    outer_iters: int
    residual_history: list[float]
    diagnostics: dict = field(default_factory=dict)


@dataclass
class PerturbationPair:
    """Per-step defects of a perturbed trajectory pair.

    Slice n of ``a`` (and of ``b``) is the defect of the step n -> n+1, for
    n = 0..N_T-1; slice N_T is unused and kept zero.
    """

    a: SpaceTimeField
    b: SpaceTimeField


# ---------------------------------------------------------------------------
# evolutive solver
# ---------------------------------------------------------------------------

def _cost_fields(p: EvolutiveProblem, m_slices: list[GridField]) -> list[GridField]:
    return [p.cost.apply(m_slices[n]) for n in range(p.mesh.n_steps)]


def _bellman_sweep(
    p: EvolutiveProblem,
    cost_fields: list[GridField],
    hjb_cfg: HjbStepConfig,
    contract: LinearSolveContract,
    warm: Optional[list[GridField]],
) -> list[GridField]:
    u = [p.u0.copy()]
    for n in range(p.mesh.n_steps):
        guess = warm[n + 1] if warm is not None else None
        u.append(
            hjb_step_solve(
                p.hamiltonian,
                p.nu,
                p.mesh.dt,
                u[n],
                cost_fields[n],
                cfg=hjb_cfg,
                contract=contract,
                initial_guess=guess,
            )
        )
    return u


def _fp_sweep(
    p: EvolutiveProblem, u: list[GridField], contract: LinearSolveContract
) -> tuple[list[GridField], float]:
    nt = p.mesh.n_steps
    m: list[Optional[GridField]] = [None] * (nt + 1)
    m[nt] = p.mT.field.copy()
    clamp_max = 0.0
    for n in range(nt - 1, -1, -1):
        m[n], clamp = _fp_step_with_stats(
            p.hamiltonian, p.nu, p.mesh.dt, u[n + 1], m[n + 1], contract
        )
        clamp_max = max(clamp_max, clamp)
    return m, clamp_max  # type: ignore[return-value]


def _trajectory_change(grid: TorusGrid, a: list[GridField], b: list[GridField]) -> float:
    """Sup over slices of the h^2-weighted l1 distance."""
    h2 = grid.h ** 2
    return max(h2 * float(np.sum(np.abs(x.values - y.values))) for x, y in zip(a, b))


def evolutive_residuals(
    p: EvolutiveProblem, u: SpaceTimeField, m: SpaceTimeField
) -> tuple[float, float]:
    """Sup-norm defects of the two discrete equations along a trajectory pair."""
    dt = p.mesh.dt
    hjb_max = 0.0
    fp_max = 0.0
    for n in range(p.mesh.n_steps):
        phi = p.cost.apply(m.slices[n])
        res_u = hjb_residual(p.hamiltonian, p.nu, dt, u.slices[n + 1], u.slices[n], phi)
        hjb_max = max(hjb_max, norm_sup(res_u))
        lap = laplace_array(m.slices[n].values, p.grid.h)
        res_m = (
            (m.slices[n + 1].values - m.slices[n].values) / dt
            + p.nu * lap
            + transport_apply(p.hamiltonian, u.slices[n + 1], m.slices[n]).values
        )
        fp_max = max(fp_max, float(np.max(np.abs(res_m))))
    return hjb_max, fp_max


def solve_evolutive(
    p: EvolutiveProblem,
    cfg: Optional[FixedPointConfig] = None,
    initial_m: Optional[SpaceTimeField] = None,
    hjb_cfg: Optional[HjbStepConfig] = None,
    contract: Optional[LinearSolveContract] = None,
) -> EvolutiveSolution:
    """Damped Picard iteration on the density trajectory.

    Each sweep advances the value function forward with the cost frozen at
    the current densities (the cost entering step n -> n+1 is evaluated at
    slice n), then pulls the density backward from the terminal datum, then
    blends: m <- (1 - theta) m + theta m_new.  The damping factor is halved
    (at most six times in total) whenever the trajectory change grows from
    one sweep to the next.  Termination requires the change below
    ``outer_tol`` and the defects of both equations at the candidate pair
    at or below 1e-9 in sup norm; the returned first u-slice is the initial
    datum and the returned last m-slice the terminal density, both exactly.
    """
    cfg = cfg or FixedPointConfig()
    hjb_cfg = hjb_cfg or HjbStepConfig()
    contract = contract or LinearSolveContract()
    nt = p.mesh.n_steps

    if initial_m is not None:
        if initial_m.mesh.n_steps != nt or not initial_m.grid.compatible(p.grid):
            raise ValueError("initial_m does not match the problem discretization")
        m_cur = [s.copy() for s in initial_m.slices]
    else:
        m_cur = [p.mT.field.copy() for _ in range(nt + 1)]

    theta = cfg.damping
    halvings = 0
    prev_change = math.inf
    history: list[float] = []
    warm: Optional[list[GridField]] = None

    for k in range(cfg.max_outer):
        cost_cur = _cost_fields(p, m_cur)
        u = _bellman_sweep(p, cost_cur, hjb_cfg, contract, warm)
        m_new, clamp_max = _fp_sweep(p, u, contract)
        change = _trajectory_change(p.grid, m_new, m_cur)
        history.append(change)

        if change < cfg.outer_tol:
            # candidate return pair is (u, m_new): the density sweep is exact
            # for u, and the value sweep is exact for the *old* densities, so
            # the value defect is the cost mismatch between the trajectories.
            cost_new = _cost_fields(p, m_new)
            mismatch = max(
                float(np.max(np.abs(cn.values - cc.values)))
                for cn, cc in zip(cost_new, cost_cur)
            )
            if mismatch + hjb_cfg.newton_tol <= INNER_RESIDUAL_TARGET:
                m_field = SpaceTimeField(p.mesh, m_new)
                u_field = SpaceTimeField(p.mesh, u)
                hjb_res, fp_res = evolutive_residuals(p, u_field, m_field)
                monitors = (
                    _trajectory_monitors(u_field, m_field, p.cost, p.hamiltonian.beta)
                    if isinstance(p.cost, LocalCost)
                    else None
                )
                diagnostics = {
                    "hjb_residual": hjb_res,
                    "fp_residual": fp_res,
                    "max_clamp": clamp_max,
                    "final_change": change,
                    "theta_final": theta,
                }
                return EvolutiveSolution(
                    u=u_field,
                    m=m_field,
                    outer_iters=k + 1,
                    residual_history=history,
                    monitors=monitors,
                    diagnostics=diagnostics,
                )

        if change > prev_change and halvings < 6:
            theta = theta / 2.0
            halvings += 1
        prev_change = change

        m_cur = [
            GridField(p.grid, (1.0 - theta) * mc.values + theta * mn.values)
            for mc, mn in zip(m_cur, m_new)
        ]
        warm = u

    raise OuterNonConvergence(cfg.max_outer, history[-1] if history else math.inf)


# ---------------------------------------------------------------------------
# ergodic solver
# ---------------------------------------------------------------------------

def _ergodic_hjb_newton(
    p: ErgodicProblem,
    cost_field: GridField,
    u_init: GridField,
    lam_init: float,
    tol: float,
    contract: LinearSolveContract,
    max_iter: int = 60,
) -> tuple[GridField, float]:
    """Newton on (u, lambda) for the stationary value equation with zero mean."""
    n2 = p.grid.n_side ** 2
    h2 = p.grid.h ** 2
    u = u_init.copy()
    lam = lam_init

    def residual(uf: GridField, lam_val: float) -> np.ndarray:
        lap = laplace_array(uf.values, p.grid.h)
        gval = p.hamiltonian.value_grid(one_sided_diffs(uf)).values
        top = -p.nu * lap + gval + lam_val - cost_field.values
        return np.concatenate([top.ravel(), [h2 * float(np.sum(uf.values))]])

    res = residual(u, lam)
    r = float(np.max(np.abs(res)))
    for it in range(max_iter):
        if r <= tol:
            return u, lam
        a = linearized_hjb_matrix(p.hamiltonian, p.nu, u)
        ones_col = sp.csr_matrix(np.ones((n2, 1)))
        mean_row = sp.csr_matrix(h2 * np.ones((1, n2)))
        bordered = sp.bmat([[a, ones_col], [mean_row, None]], format="csc")
        delta = _solve_checked(bordered, -res, contract)
        t = 1.0
        accepted = False
        while t >= 2.0 ** -20:
            u_try = GridField(p.grid, u.values + t * delta[:n2].reshape(u.values.shape))
            lam_try = lam + t * delta[n2]
            res_try = residual(u_try, lam_try)
            r_try = float(np.max(np.abs(res_try)))
            if r_try <= (1.0 - 1e-4 * t) * r:
                u, lam, res, r = u_try, lam_try, res_try, r_try
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise OuterNonConvergence(it + 1, r)
    raise OuterNonConvergence(max_iter, r)


def _stationary_density(
    p: ErgodicProblem,
    u: GridField,
    tol: float,
    contract: LinearSolveContract,
    m_init: Optional[GridField] = None,
    shift: float = 1e-8,
    max_iter: int = 50,
) -> GridField:
    """Kernel vector of the transpose advection-diffusion operator.

    Inverse power iteration on (A + shift I) with A = (-nu L + B(u))^T; A is
    an M-matrix with zero column sums, so the shifted inverse is nonnegative
    and the normalized iterates converge to the invariant density at rate
    roughly shift / spectral-gap (a couple of iterations in practice).
    """
    n = p.grid.n_side
    a = (linearized_hjb_matrix(p.hamiltonian, p.nu, u).T).tocsc()
    shifted = (a + shift * sp.identity(n * n, format="csc")).tocsc()
    lu = spla.splu(shifted)
    x = (m_init.values if m_init is not None else np.ones((n, n))).ravel().copy()
    x = np.maximum(x, 0.0)
    x /= p.grid.h ** 2 * float(np.sum(x))
    residual = float(np.max(np.abs(a @ x)))
    for it in range(max_iter):
        if residual <= tol:
            break
        y = lu.solve(x)
        total = p.grid.h ** 2 * float(np.sum(y))
        if not np.isfinite(total) or total <= 0.0:
            raise InversePowerStall(it + 1, residual)
        x_new = y / total
        new_residual = float(np.max(np.abs(a @ x_new)))
        if new_residual >= residual and residual > tol * 10.0:
            raise InversePowerStall(it + 1, new_residual)
        x = x_new
        residual = new_residual
    else:
        if residual > tol:
            raise InversePowerStall(max_iter, residual)
    x = np.maximum(x, 0.0)
    x /= p.grid.h ** 2 * float(np.sum(x))
    return GridField(p.grid, x.reshape(n, n))


def solve_ergodic(
    p: ErgodicProblem,
    cfg: Optional[FixedPointConfig] = None,
    contract: Optional[LinearSolveContract] = None,
) -> ErgodicSolution:
    """Damped fixed point on the invariant density.

    Alternates the bordered Newton solve for (u, lambda) with the inverse
    power solve for the invariant density, blending densities with the
    damping factor.  Returns once the density change is below tolerance and
    the three residuals (value equation, stationary density equation, and
    the two normalizations) are at or below 1e-8.
    """
    cfg = cfg or FixedPointConfig()
    contract = contract or LinearSolveContract()
    n = p.grid.n_side
    h2 = p.grid.h ** 2
    residual_target = min(1e-8, 10.0 * cfg.outer_tol)

    m = GridField.constant(p.grid, 1.0)
    u = GridField.zeros(p.grid)
    lam = float(h2 * np.sum(p.cost.apply(m).values - p.hamiltonian.potential.values))
    theta = cfg.damping
    halvings = 0
    prev_change = math.inf
    history: list[float] = []

    for k in range(cfg.max_outer):
        cost_field = p.cost.apply(m)
        u, lam = _ergodic_hjb_newton(
            p, cost_field, u, lam, tol=min(1e-11, residual_target / 10.0), contract=contract
        )
        m_new = _stationary_density(
            p, u, tol=residual_target / 10.0, contract=contract, m_init=m
        )
        change = h2 * float(np.sum(np.abs(m_new.values - m.values)))
        history.append(change)

        if change < cfg.outer_tol:
            cost_new = p.cost.apply(m_new)
            res_hjb = float(np.max(np.abs(cost_new.values - cost_field.values)))
            if res_hjb <= residual_target / 2.0:
                u_centered = GridField(u.grid, u.values - h2 * float(np.sum(u.values)))
                dens = DiscreteDensity.normalized(m_new)
                diag = _ergodic_diagnostics(p, u_centered, dens.field, lam)
                return ErgodicSolution(
                    u=u_centered,
                    m=dens,
                    lam=lam,
                    outer_iters=k + 1,
                    residual_history=history,
                    diagnostics=diag,
                )

        if change > prev_change and halvings < 6:
            theta = theta / 2.0
            halvings += 1
        prev_change = change
        m = GridField(p.grid, (1.0 - theta) * m.values + theta * m_new.values)

    raise OuterNonConvergence(cfg.max_outer, history[-1] if history else math.inf)


def _ergodic_diagnostics(
    p: ErgodicProblem, u: GridField, m: GridField, lam: float
) -> dict:
    lap_u = laplace_array(u.values, p.grid.h)
    gval = p.hamiltonian.value_grid(one_sided_diffs(u)).values
    res_hjb = -p.nu * lap_u + gval + lam - p.cost.apply(m).values
    lap_m = laplace_array(m.values, p.grid.h)
    res_fp = -p.nu * lap_m - transport_apply(p.hamiltonian, u, m).values
    return {
        "hjb_residual": float(np.max(np.abs(res_hjb))),
        "fp_residual": float(np.max(np.abs(res_fp))),
        "u_mean": p.grid.h ** 2 * float(np.sum(u.values)),
        "m_mass_defect": abs(mass(m) - 1.0),
    }


# ---------------------------------------------------------------------------
# perturbed-pair identity
# ---------------------------------------------------------------------------

def system_residuals(
    ham: PowerHamiltonian,
    nu: float,
    cost: CostOperator,
    u: SpaceTimeField,
    m: SpaceTimeField,
) -> PerturbationPair:
    """Per-step defects of an arbitrary trajectory pair against the scheme.

    Slice n of the first output is the value-equation defect of step
    n -> n+1 with the cost evaluated at density slice n; slice n of the
    second is the density-equation defect.  A pair produced by the solver
    has both near zero; for arbitrary trajectories this is exactly the
    perturbation that makes them solve the perturbed system by construction.
    """
    dt = u.mesh.dt
    grid = u.grid
    nt = u.mesh.n_steps
    a = [GridField.zeros(grid) for _ in range(nt + 1)]
    b = [GridField.zeros(grid) for _ in range(nt + 1)]
    for n in range(nt):
        phi = cost.apply(m.slices[n])
        a[n] = hjb_residual(ham, nu, dt, u.slices[n + 1], u.slices[n], phi)
        lap = laplace_array(m.slices[n].values, grid.h)
        b[n] = GridField(
            grid,
            (m.slices[n + 1].values - m.slices[n].values) / dt
            + nu * lap
            + transport_apply(ham, u.slices[n + 1], m.slices[n]).values,
        )
    return PerturbationPair(
        a=SpaceTimeField(u.mesh, a), b=SpaceTimeField(u.mesh, b)
    )


def identity_terms(
    ham: PowerHamiltonian,
    nu: float,
    dt: float,
    sol: tuple[SpaceTimeField, SpaceTimeField],
    sol_tilde: tuple[SpaceTimeField, SpaceTimeField],
    pert: PerturbationPair,
    cost: CostOperator,
) -> dict:
    """All terms of the perturbed-pair balance, plus the gap and its scale.

    The balance reads

        endpoint_final + endpoint_initial + bregman_base + bregman_tilde
            + cost_pairing  =  pert_a + pert_b,

    where the perturbation pairings use the given defects of the tilde pair
    minus the internally recomputed defects of the base pair, so the
    equality is algebraically exact for arbitrary inputs.  When the base
    pair solves the scheme, its defects vanish and this is the classical
    statement.  All sums are unweighted node sums.
    """
    u, m = sol
    ut, mt = sol_tilde
    nt = u.mesh.n_steps
    base_pert = system_residuals(ham, nu, cost, u, m)

    endpoint_final = -(1.0 / dt) * inner2(
        GridField(u.grid, m.slices[nt].values - mt.slices[nt].values),
        GridField(u.grid, u.slices[nt].values - ut.slices[nt].values),
    )
    endpoint_initial = (1.0 / dt) * inner2(
        GridField(u.grid, m.slices[0].values - mt.slices[0].values),
        GridField(u.grid, u.slices[0].values - ut.slices[0].values),
    )
    bregman_base = weighted_bregman_gap(ham, m, u, ut)
    bregman_tilde = weighted_bregman_gap(ham, mt, ut, u)

    cost_pairing = 0.0
    pert_a = 0.0
    pert_b = 0.0
    for n in range(nt):
        dm = m.slices[n].values - mt.slices[n].values
        cost_pairing += float(
            np.sum((cost.apply(m.slices[n]).values - cost.apply(mt.slices[n]).values) * dm)
        )
        a_eff = pert.a.slices[n].values - base_pert.a.slices[n].values
        pert_a += float(np.sum(a_eff * dm))
        du_next = u.slices[n + 1].values - ut.slices[n + 1].values
        b_eff = pert.b.slices[n].values - base_pert.b.slices[n].values
        pert_b += float(np.sum(b_eff * du_next))

    lhs = endpoint_final + endpoint_initial + bregman_base + bregman_tilde + cost_pairing
    rhs = pert_a + pert_b
    terms = {
        "endpoint_final": endpoint_final,
        "endpoint_initial": endpoint_initial,
        "bregman_base": bregman_base,
        "bregman_tilde": bregman_tilde,
        "cost_pairing": cost_pairing,
        "pert_a": pert_a,
        "pert_b": pert_b,
    }
    scale = sum(abs(v) for v in terms.values()) + 1e-300
    return {"terms": terms, "gap": abs(lhs - rhs), "scale": scale}


def forward_backward_identity_gap(
    ham: PowerHamiltonian,
    nu: float,
    dt: float,
    sol: tuple[SpaceTimeField, SpaceTimeField],
    sol_tilde: tuple[SpaceTimeField, SpaceTimeField],
    pert: PerturbationPair,
    cost: CostOperator,
) -> float:
    """Absolute defect of the perturbed-pair balance; roundoff-level by construction."""
    return identity_terms(ham, nu, dt, sol, sol_tilde, pert, cost)["gap"]


# ---------------------------------------------------------------------------
# a priori monitors
# ---------------------------------------------------------------------------

def apriori_monitors(sol: "EvolutiveSolution", cost: LocalCost, beta: float = 2.0) -> dict:
    """Runtime monitors of the a priori bounded quantities for local costs.

    Reports the minimum of u over all slices, the (h^2 dt)-weighted power
    sums of the stencil magnitudes (power ``beta``, the Hamiltonian
    exponent of the run) and of |F(m)|^gamma, the largest h^2-weighted l1
    norm of u, and the path of slice means with its total variation.  Each
    is bounded by a level-independent constant on the smooth presets; the
    tests pin those constants.
    """
    return _trajectory_monitors(sol.u, sol.m, cost, beta)


def _trajectory_monitors(
    u: SpaceTimeField, m: SpaceTimeField, cost: LocalCost, beta: float
) -> dict:
    h2 = u.grid.h ** 2
    dt = u.mesh.dt
    grad_term = 0.0
    for n in range(1, u.mesh.n_steps + 1):
        d = stencil_array(u.slices[n].values, u.grid.h)
        grad_term += float(np.sum(np.sum(d * d, axis=-1) ** (beta / 2.0)))
    grad_term *= h2 * dt

    cost_term = 0.0
    for n in range(u.mesh.n_steps):
        fvals = cost.f(np.maximum(m.slices[n].values, 0.0))
        cost_term += float(np.sum(np.abs(fvals) ** cost.gamma))
    cost_term *= h2 * dt

    u_min = min(float(np.min(s.values)) for s in u.slices)
    u_l1_max = max(h2 * float(np.sum(np.abs(s.values))) for s in u.slices)
    means = [h2 * float(np.sum(s.values)) for s in u.slices]
    tv = float(np.sum(np.abs(np.diff(means))))
    return {
        "u_min": u_min,
        "grad_power_total": grad_term,
        "cost_power_total": cost_term,
        "u_l1_max": u_l1_max,
        "u_mean_path": means,
        "u_mean_total_variation": tv,
    }

"""Stationary solutions: damped fixed-point iteration and time marching.

The fixed-point map mirrors the existence construction for the reduced
active-linker problem: freeze the active density and solve the height
equation, then solve the active-linker equation with the frozen ripping rate
and the mean-field source ``(k/|D|) * ((eta_a/eta_i - 1) * int(rho_a) + m0)``.
The inactive density is reconstructed afterwards from the constant weighted
sum ``eta_a rho_a + eta_i rho_i = rho_0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Diagnostics, Operators, step
from .grid import Grid, integrate
from .linalg import SolveOptions, cg_solve
from .model import MICROGRAM, PASCAL, ModelParams, PressureField, ripping_rate


class StationaryError(RuntimeError):
    """Fixed-point or marching failed to converge; carries the last iterate."""

    def __init__(self, message: str, result: "StationaryResult" = None):
        super().__init__(message)
        self.result = result


@dataclass
class StationaryResult:
    h: np.ndarray
    rho_a: np.ndarray
    rho_i: np.ndarray
    residual_height: float
    residual_rho_a: float
    residual_rho_i: float
    iterations: int
    total_mass: float
    rho0_weighted: float


def _relative_sup(residual: np.ndarray, *terms: np.ndarray) -> float:
    """Sup-norm residual relative to the largest participating term."""
    scale = max((float(np.max(np.abs(t))) for t in terms), default=0.0)
    r = float(np.max(np.abs(residual)))
    if scale == 0.0:
        return r
    return r / scale


def _residuals(
    grid: Grid, ops: Operators, params: ModelParams, pressure: PressureField,
    h: np.ndarray, rho_a: np.ndarray, rho_i: np.ndarray,
) -> tuple[float, float, float]:
    """Relative sup norms of the strong-form stationary equations."""
    h_int = grid.restrict(h)
    rate = ripping_rate(h, params)
    lap = ops.A @ h_int
    bend = params.kappa * (ops.A @ lap)
    tens = params.gamma * lap
    spring = params.xi * MICROGRAM * grid.restrict(rho_a) * h_int
    force = PASCAL * grid.restrict(pressure.values)
    res_h = bend + tens + params.lam * h_int + spring - force
    diff_a = params.eta_a * (ops.AN @ rho_a)
    diff_i = params.eta_i * (ops.AN @ rho_i)
    recon = params.k * rho_i
    rip = rate * rho_a
    res_a = diff_a - recon + rip
    res_i = diff_i + recon - rip
    return (
        _relative_sup(res_h, bend, tens, spring, force),
        _relative_sup(res_a, diff_a, recon, rip, params.k * rho_a),
        _relative_sup(res_i, diff_i, recon, rip, params.k * rho_a),
    )


def stationary_fixed_point(
    params: ModelParams,
    pressure: PressureField,
    m0: float,
    grid: Grid,
    opts: SolveOptions = SolveOptions(),
    damping: float = 0.5,
    max_iterations: int = 500,
    tol: float = 1e-10,
) -> StationaryResult:
    """Damped Picard iteration on the fixed-point map of the reduced problem.

    Requires positive diffusivities and ``damping`` in (0, 1].  Converges on
    ``max(|h - F_h|, |rho_a - F_rho|)_inf <= tol``; non-convergence raises
    with the last iterate attached.
    """
    if params.eta_a <= 0.0 or params.eta_i <= 0.0:
        raise ValueError("fixed point construction needs positive diffusivities")
    if not (0.0 < damping <= 1.0):
        raise ValueError("damping must lie in (0, 1]")

    ops = Operators(grid)
    w = grid.weights
    p_int = PASCAL * grid.restrict(pressure.values)
    ratio = params.eta_a / params.eta_i

    h_bar = np.zeros(grid.num_nodes)
    rho_bar = np.full(grid.num_nodes, m0)  # |D| = 1
    iterations = 0
    increment = np.inf
    for iterations in range(1, max_iterations + 1):
        # height equation with frozen active density
        B_h = ops.stationary_height_matrix(params, rho_bar)
        h_int = cg_solve(B_h, p_int, opts, x0=grid.restrict(h_bar))
        h_new = grid.embed(h_int)

        # active-linker equation with frozen rate and mean-field source
        rate = ripping_rate(h_bar, params)
        source = params.k * ((ratio - 1.0) * integrate(grid, rho_bar) + m0)
        B_a = ops.density_matrix(params.eta_a, params.k * ratio + rate)
        rho_new = cg_solve(B_a, w * source, opts, x0=rho_bar)

        increment = max(
            float(np.max(np.abs(h_new - h_bar))),
            float(np.max(np.abs(rho_new - rho_bar))),
        )
        h_bar = (1.0 - damping) * h_bar + damping * h_new
        rho_bar = (1.0 - damping) * rho_bar + damping * rho_new
        if increment <= tol:
            break
    converged = increment <= tol

    # reconstruct the inactive density from the constant weighted sum
    rho0 = params.eta_i * ((ratio - 1.0) * integrate(grid, rho_bar) + m0)
    rho_i = (rho0 - params.eta_a * rho_bar) / params.eta_i
    res = _residuals(grid, ops, params, pressure, h_bar, rho_bar, rho_i)
    weighted = params.eta_a * rho_bar + params.eta_i * rho_i
    result = StationaryResult(
        h=h_bar,
        rho_a=rho_bar,
        rho_i=rho_i,
        residual_height=res[0],
        residual_rho_a=res[1],
        residual_rho_i=res[2],
        iterations=iterations,
        total_mass=integrate(grid, rho_bar + rho_i),
        rho0_weighted=integrate(grid, weighted),
    )
    if not converged:
        raise StationaryError(
            f"fixed point: no convergence in {max_iterations} iterations "
            f"(last increment {increment:.3e})",
            result,
        )
    return result


def stationary_by_marching(
    config, stop_tol: float, max_steps: int = 20000
) -> StationaryResult:
    """March the time-dependent system until ``max_step_diff <= stop_tol``."""
    if stop_tol <= 0.0:
        raise ValueError("stop_tol must be positive")
    from .dynamics import _grid_for, initial_state

    grid = _grid_for(config)
    ops = Operators(grid)
    state, pressure = initial_state(config, grid)
    opts = config.solve_options()
    diagnostics = Diagnostics()

    converged = False
    for _ in range(max_steps):
        prev_h = state.h
        state = step(state, config.tau, config.params, pressure, grid,
                     config.scheme, opts, ops=ops)
        diagnostics.record(state, prev_h, config.params, grid)
        if diagnostics.max_step_diff[-1] <= stop_tol:
            converged = True
            break

    res = _residuals(grid, ops, config.params, pressure, state.h, state.rho_a, state.rho_i)
    weighted = config.params.eta_a * state.rho_a + config.params.eta_i * state.rho_i
    result = StationaryResult(
        h=state.h,
        rho_a=state.rho_a,
        rho_i=state.rho_i,
        residual_height=res[0],
        residual_rho_a=res[1],
        residual_rho_i=res[2],
        iterations=state.step_index,
        total_mass=integrate(grid, state.rho_a + state.rho_i),
        rho0_weighted=integrate(grid, weighted),
    )
    if not converged:
        raise StationaryError(
            f"marching: max_step_diff {diagnostics.max_step_diff[-1]:.3e} above "
            f"{stop_tol:.1e} after {max_steps} steps",
            result,
        )
    return result


def weighted_density_residual(
    result_or_state, params: ModelParams, grid: Grid
) -> float:
    """Deviation of ``eta_a rho_a + eta_i rho_i`` from its spatial mean.

    Zero (up to solver error) for stationary solutions; generally positive
    for mid-run time-dependent states.
    """
    rho_a = result_or_state.rho_a
    rho_i = result_or_state.rho_i
    weighted = params.eta_a * rho_a + params.eta_i * rho_i
    mean = integrate(grid, weighted)  # |D| = 1
    return float(np.max(np.abs(weighted - mean)))

"""Parameter scans: follow every eigenstate of a sector along a grid of V, g or omega."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContinuationError, ConvergenceError
from .model import LambdaState, ModelParams, Rep
from .qbe import (
    SolverConfig,
    _collisions,
    charges_from_lambda,
    newton_solve,
    residual_norm,
    solve_sector,
    track_branch,
)

log = logging.getLogger(__name__)

PARAMETERS = ("V", "g", "omega")


@dataclass
class ScanPoint:
    value: float
    params: ModelParams
    states: list[LambdaState]
    charges: np.ndarray
    residuals: np.ndarray
    collisions: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def with_parameter(params: ModelParams, parameter: str, value: float) -> ModelParams:
    if parameter not in PARAMETERS:
        raise ValueError(f"unknown scan parameter {parameter!r}; expected one of {PARAMETERS}")
    if parameter == "omega":
        if not params.is_spin_boson:
            raise ValueError("omega scans need the spin-boson realization")
        return params.with_omega(value)
    if (parameter == "V") != params.is_spin_boson:
        raise ValueError(f"parameter {parameter} does not belong to the {params.realization.value} realization")
    return params.with_coupling(value)


def _match(previous: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Permutation of ``current`` rows that best follows ``previous`` (nearest Lambda)."""
    cost = np.linalg.norm(previous[:, None, :] - current[None, :, :], axis=2)
    _, cols = linear_sum_assignment(cost)
    return cols


def _step(start: ModelParams, stop: ModelParams, M: int, states, cfg: SolverConfig, substeps: int):
    """Continue each state from ``start`` to ``stop`` along a straight line in the parameters."""
    s0, s1 = start.coupling_scale(), stop.coupling_scale()

    def path(t):
        if start.is_spin_boson and start.omega != stop.omega:
            return start.with_omega((1 - t) * start.omega + t * stop.omega)
        return start.with_coupling((1 - t) * start.coupling + t * stop.coupling)

    ts = np.linspace(0.0, 1.0, substeps + 1)
    out = []
    for st in states:
        X = track_branch(path, M, st.values * s0, ts, cfg)[-1]
        out.append(newton_solve(stop, M, Rep.PARTICLE, LambdaState(X / s1, M, Rep.PARTICLE), cfg))
    return out


def scan(
    params: ModelParams,
    M: int,
    parameter: str,
    grid: Sequence[float],
    cfg: SolverConfig = SolverConfig(),
    substeps: int = 4,
) -> list[ScanPoint]:
    """Solve the sector at grid[0] and carry each state along the grid.

    Branch identity is kept by continuation between neighbouring points.  If
    two branches collide, the point is re-solved from scratch and its states
    are matched to the previous point by nearest Lambda; the collision is
    recorded on the point and the scan goes on.
    """
    grid = [float(x) for x in grid]
    if not grid:
        raise ValueError("empty scan grid")
    points: list[ScanPoint] = []
    prev = None
    for value in grid:
        p = with_parameter(params, parameter, value)
        notes: list[str] = []
        collisions: list[str] = []
        if prev is None:
            states = solve_sector(p, M, Rep.PARTICLE, cfg)
        else:
            states = None
            for attempt in range(3):
                try:
                    states = _step(prev.params, p, M, prev.states, cfg, substeps * 4**attempt)
                except (ContinuationError, ConvergenceError) as exc:
                    notes.append(f"continuation failed ({exc}); refining")
                    continue
                hit = _collisions(np.array([st.values for st in states]))
                if hit is None:
                    break
                collisions.append(f"branches {hit[0]} and {hit[1]} collide at {parameter}={value:.6g}")
                states = None
            if states is None:
                fresh = solve_sector(p, M, Rep.PARTICLE, cfg)
                order = _match(np.array([st.values for st in prev.states]), np.array([st.values for st in fresh]))
                states = [fresh[j] for j in order]
        for note in notes + collisions:
            log.warning(note)
        points.append(
            ScanPoint(
                value=value,
                params=p,
                states=states,
                charges=np.array([charges_from_lambda(p, st) for st in states]),
                residuals=np.array([residual_norm(p, st) for st in states]),
                collisions=collisions,
                notes=notes,
            )
        )
        prev = points[-1]
    return points

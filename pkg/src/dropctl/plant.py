"""Coupled two-tank plant: equilibrium, linearization, discretization.

Nonlinear level dynamics (Torricelli orifice flows):

    A1 dH1/dt = Q1 - Cc sqrt(2 g (H1 - H2))
    A2 dH2/dt = Q2 + Cc sqrt(2 g (H1 - H2)) - Cd sqrt(2 g H2)

Tank 1 drains into tank 2 through the coupling orifice, tank 2 drains out.
The controlled input is the deviation of the tank-1 inflow, the disturbance
an inflow deviation on a configurable tank, and the performance output is
the (weighted) pair of level deviations.  Parameter values shipped with the
default scenario are illustrative lab-scale numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .mjls import MjlsModel

__all__ = [
    "TankParams",
    "ChannelConfig",
    "LinearPlant",
    "NoEquilibrium",
    "SingularLinearization",
    "equilibrium",
    "linearize",
    "discretize",
    "build_plant",
    "to_mjls",
]

_RESIDUAL_TOL = 1e-12


class NoEquilibrium(RuntimeError):
    """Newton iteration on the flow-balance residual failed to converge."""


class SingularLinearization(RuntimeError):
    """Jacobian of the orifice flows is singular at the operating point."""


@dataclass(frozen=True)
class TankParams:
    """Physical tank parameters (SI units).

    coupling_coeff may be zero (tanks decoupled); everything else must be
    strictly positive, inflows non-negative.
    """

    area1: float
    area2: float
    coupling_coeff: float
    outlet_coeff: float
    gravity: float
    inflow1: float
    inflow2: float
    sample_time: float

    def __post_init__(self) -> None:
        for name in ("area1", "area2", "outlet_coeff", "gravity", "sample_time"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.coupling_coeff < 0.0:
            raise ValueError("coupling_coeff must be non-negative")
        for name in ("inflow1", "inflow2"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class ChannelConfig:
    """How the physical plant maps onto control/disturbance/output channels.

    input_scale and disturbance_scale are the flow units (m^3/s per unit of
    u and w); level_weights weight the two level deviations in z, and a
    positive control_weight appends a weighted copy of u to z.
    """

    input_scale: float = 1e-4
    disturbance_scale: float = 1e-4
    disturbance_entry: str = "tank1"
    level_weights: tuple[float, float] = (1.0, 1.0)
    control_weight: float = 0.0

    def __post_init__(self) -> None:
        if self.input_scale <= 0.0 or self.disturbance_scale <= 0.0:
            raise ValueError("channel scales must be strictly positive")
        if self.disturbance_entry not in ("tank1", "tank2"):
            raise ValueError("disturbance_entry must be 'tank1' or 'tank2'")
        if len(self.level_weights) != 2 or any(w < 0.0 for w in self.level_weights):
            raise ValueError("level_weights must be two non-negative numbers")
        if self.control_weight < 0.0:
            raise ValueError("control_weight must be non-negative")


@dataclass(frozen=True)
class LinearPlant:
    """Linearized tank model around its equilibrium, plus ZOH discretization."""

    params: TankParams
    channels: ChannelConfig
    levels: tuple[float, float]          # equilibrium (H1*, H2*)
    ac: np.ndarray
    bc: np.ndarray                        # control column (scaled flow units)
    ec: np.ndarray                        # disturbance column (scaled)
    ad: np.ndarray
    bd: np.ndarray
    ed: np.ndarray
    cz: np.ndarray
    dz: np.ndarray
    ez: np.ndarray


def _flow_residual(params: TankParams, h1: float, h2: float) -> np.ndarray:
    g2 = 2.0 * params.gravity
    qc = params.coupling_coeff * np.sqrt(g2 * (h1 - h2))
    qd = params.outlet_coeff * np.sqrt(g2 * h2)
    return np.array([params.inflow1 - qc, params.inflow1 + params.inflow2 - qd])


def equilibrium(params: TankParams) -> tuple[float, float]:
    """Steady-state levels (H1*, H2*) by damped Newton on the flow balance.

    Converges to residual <= 1e-12 from a generic initial guess; raises
    NoEquilibrium when the inflows admit no physical equilibrium.
    """
    g2 = 2.0 * params.gravity
    qout = params.inflow1 + params.inflow2
    if qout <= 0.0:
        raise NoEquilibrium("no outflow: both inflows are zero")
    if params.inflow1 > 0.0 and params.coupling_coeff == 0.0:
        raise NoEquilibrium("tank-1 inflow cannot pass a closed coupling orifice")

    if params.inflow1 == 0.0 or params.coupling_coeff == 0.0:
        # no steady coupling flow: H1* = H2*, scalar Newton on the outlet
        h2 = _newton_outlet(params, qout)
        return (h2, h2)

    h2, h1 = 0.5, 1.0
    res = _flow_residual(params, h1, h2)
    for _ in range(100):
        if np.max(np.abs(res)) <= _RESIDUAL_TOL:
            return (h1, h2)
        dh = h1 - h2
        sc = params.coupling_coeff * params.gravity / np.sqrt(g2 * dh)
        sd = params.outlet_coeff * params.gravity / np.sqrt(g2 * h2)
        jac = np.array([[-sc, sc], [0.0, -sd]])
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            raise NoEquilibrium("singular Jacobian during Newton iteration")
        lam = 1.0
        for _ in range(60):
            h1n, h2n = h1 + lam * step[0], h2 + lam * step[1]
            if h2n > 0.0 and h1n - h2n > 0.0:
                rn = _flow_residual(params, h1n, h2n)
                if np.max(np.abs(rn)) < np.max(np.abs(res)):
                    h1, h2, res = h1n, h2n, rn
                    break
            lam *= 0.5
        else:
            raise NoEquilibrium("Newton line search stalled")
    if np.max(np.abs(res)) <= _RESIDUAL_TOL:
        return (h1, h2)
    raise NoEquilibrium("Newton iteration did not reach the residual tolerance")


def _newton_outlet(params: TankParams, qout: float) -> float:
    g2 = 2.0 * params.gravity
    h2 = 0.5
    for _ in range(100):
        r = qout - params.outlet_coeff * np.sqrt(g2 * h2)
        if abs(r) <= _RESIDUAL_TOL:
            return h2
        dr = -params.outlet_coeff * params.gravity / np.sqrt(g2 * h2)
        step = -r / dr
        lam = 1.0
        for _ in range(60):
            h2n = h2 + lam * step
            if h2n > 0.0 and abs(qout - params.outlet_coeff * np.sqrt(g2 * h2n)) < abs(r):
                h2 = h2n
                break
            lam *= 0.5
        else:
            raise NoEquilibrium("outlet Newton stalled")
    raise NoEquilibrium("outlet Newton did not converge")


def linearize(
    params: TankParams, levels: tuple[float, float]
) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians at the operating point: d(levels)/dt = Ac dH + Bin dQ.

    Bin has one column per inflow (tank 1, tank 2), in raw m^3/s units.
    Raises SingularLinearization when an orifice flow derivative blows up
    (H1 = H2 with coupling, or H2 = 0).
    """
    h1, h2 = levels
    g2 = 2.0 * params.gravity
    if h2 <= 0.0:
        raise SingularLinearization("outlet flow is not differentiable at H2 <= 0")
    if params.coupling_coeff == 0.0:
        sc = 0.0
    else:
        if h1 - h2 <= 0.0:
            raise SingularLinearization(
                "coupling flow is not differentiable at H1 <= H2"
            )
        sc = params.coupling_coeff * params.gravity / np.sqrt(g2 * (h1 - h2))
    sd = params.outlet_coeff * params.gravity / np.sqrt(g2 * h2)
    ac = np.array(
        [
            [-sc / params.area1, sc / params.area1],
            [sc / params.area2, -(sc + sd) / params.area2],
        ]
    )
    bin_ = np.array([[1.0 / params.area1, 0.0], [0.0, 1.0 / params.area2]])
    return ac, bin_


def discretize(ac: np.ndarray, bc: np.ndarray, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    ac = np.asarray(ac, dtype=float)
    bc = np.asarray(bc, dtype=float)
    if ts <= 0.0:
        raise ValueError("sample time must be strictly positive")
    n, m = ac.shape[0], bc.shape[1]
    if ac.shape != (n, n) or bc.shape[0] != n:
        raise ValueError("inconsistent continuous-time matrix shapes")
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = ac
    aug[:n, n:] = bc
    phi = scipy.linalg.expm(aug * ts)
    return phi[:n, :n], phi[:n, n:]


def build_plant(params: TankParams, channels: ChannelConfig | None = None) -> LinearPlant:
    """Equilibrium -> linearize -> pick channels -> ZOH discretize."""
    channels = channels or ChannelConfig()
    levels = equilibrium(params)
    ac, bin_ = linearize(params, levels)
    bc = bin_[:, [0]] * channels.input_scale
    col = 0 if channels.disturbance_entry == "tank1" else 1
    ec = bin_[:, [col]] * channels.disturbance_scale
    ad, bde = discretize(ac, np.hstack([bc, ec]), params.sample_time)
    bd, ed = bde[:, [0]], bde[:, [1]]

    cz = np.diag(channels.level_weights).astype(float)
    dz = np.zeros((2, 1))
    ez = np.zeros((2, 1))
    if channels.control_weight > 0.0:
        cz = np.vstack([cz, np.zeros((1, 2))])
        dz = np.vstack([dz, [[channels.control_weight]]])
        ez = np.vstack([ez, np.zeros((1, 1))])
    return LinearPlant(
        params=params, channels=channels, levels=levels,
        ac=ac, bc=bc, ec=ec, ad=ad, bd=bd, ed=ed, cz=cz, dz=dz, ez=ez,
    )


def to_mjls(plant: LinearPlant) -> MjlsModel:
    """Two-mode jump model of the lossy actuation link.

    Mode index 0: control packet delivered (B = Bd); mode index 1: packet
    dropped, the actuator applies nothing (B = 0).  Dynamics, disturbance
    and output maps are mode-independent.
    """
    zero_b = np.zeros_like(plant.bd)
    return MjlsModel(
        a=(plant.ad, plant.ad),
        b=(plant.bd, zero_b),
        e=(plant.ed, plant.ed),
        cz=(plant.cz, plant.cz),
        dz=(plant.dz, plant.dz),
        ez=(plant.ez, plant.ez),
    )

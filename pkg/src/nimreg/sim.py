"""Controller assembly and closed-loop simulation.

The regulator is the internal-model copy xi' = Phi_c(xi) + G v with output
u = xi_1 + v and the static loop v = -k y.  Closed loops come in two
algebraically equivalent forms: the plain xi coordinates and the shifted
eta = xi - G e coordinates, whose error equation exposes the effective gain
k_bar = k - Gamma G.

State layouts, by slot order:

    zero dynamics          [z (n), w (r)]
    observer cascade       [z (n), w (r), xi (d)]
    closed loop (both)     [z (n), e, w (r), xi or eta (d)]

Field builders return component fields (see dynsys); wrap with as_array_rhs
to integrate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .dynsys import ExosystemSpec, PlantSpec, as_array_rhs
from .errors import ConfigError
from .integrators import Trajectory, integrate

if TYPE_CHECKING:
    from .gain import GainDesign
    from .internal_model import InternalModel

__all__ = [
    "ControllerConfig",
    "StateLayout",
    "regulator_output",
    "closed_loop_field_xi",
    "closed_loop_field_eta",
    "zero_dynamics_observer_field",
    "run_closed_loop",
    "run_observer_cascade",
]


@dataclass(eq=False)
class ControllerConfig:
    """Internal model, gain design, and the output-feedback gain k.

    k = 0 is allowed for diagnostics; regulation entry points require
    k_bar = k - Gamma G > 0 and check it there.
    """

    im: "InternalModel"
    gd: "GainDesign"
    k: float

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError("feedback gain k must be >= 0")

    @property
    def k_bar(self) -> float:
        return self.k - float(self.gd.G[0])


def regulator_output(cc: ControllerConfig, xi, y):
    """Control signal (u, v) from the controller state and measurement:
    v = -k y, u = xi_1 + v."""
    v = -cc.k * y
    return xi[0] + v, v


@dataclass(frozen=True)
class StateLayout:
    """Slot bookkeeping for stacked state vectors."""

    n: int
    r: int
    d: int = 0
    has_error: bool = False

    @property
    def m(self) -> int:
        return self.n + self.r + self.d + (1 if self.has_error else 0)

    @property
    def z(self) -> slice:
        return slice(0, self.n)

    @property
    def e(self) -> int:
        if not self.has_error:
            raise ConfigError("layout has no error slot")
        return self.n

    @property
    def w(self) -> slice:
        off = self.n + (1 if self.has_error else 0)
        return slice(off, off + self.r)

    @property
    def xi(self) -> slice:
        off = self.n + (1 if self.has_error else 0) + self.r
        return slice(off, off + self.d)


def _gain_list(gd) -> list:
    return [float(g) for g in np.asarray(gd.G, dtype=float).ravel()]


def closed_loop_field_xi(plant: PlantSpec, exo: ExosystemSpec, cc: ControllerConfig):
    """Closed loop in plain coordinates [z, e, w, xi]:

        z' = f0 + f1 e,  e' = q + xi_1 + v,  w' = s,  xi' = Phi_c(xi) + G v,

    with v = -k e."""
    n, r, d = plant.n, exo.r, cc.im.d
    G = _gain_list(cc.gd)
    k = float(cc.k)
    im = cc.im
    layout = StateLayout(n=n, r=r, d=d, has_error=True)

    def field(x):
        z, e, w, xi = x[:n], x[n], x[n + 1:n + 1 + r], x[n + 1 + r:]
        v = -k * e
        fz = plant.f0(z, w)
        f1v = plant.f1(z, e, w)
        zdot = tuple(a + b * e for a, b in zip(fz, f1v))
        edot = plant.q(z, e, w) + xi[0] + v
        phi = im.phi_c(xi)
        xidot = tuple(p + g * v for p, g in zip(phi, G))
        return zdot + (edot,) + tuple(exo.s(w)) + xidot

    return field, layout


def closed_loop_field_eta(plant: PlantSpec, exo: ExosystemSpec, cc: ControllerConfig):
    """Closed loop in shifted coordinates [z, e, w, eta], eta = xi - G e:

        z' = f0 + f1 e,  e' = q + eta_1 - k_bar e,  w' = s,
        eta' = Phi_c(eta + G e) - G (eta_1 + G_1 e) - G q(z, e, w)."""
    n, r, d = plant.n, exo.r, cc.im.d
    G = _gain_list(cc.gd)
    k_bar = float(cc.k_bar)
    im = cc.im
    layout = StateLayout(n=n, r=r, d=d, has_error=True)

    def field(x):
        z, e, w, eta = x[:n], x[n], x[n + 1:n + 1 + r], x[n + 1 + r:]
        fz = plant.f0(z, w)
        f1v = plant.f1(z, e, w)
        zdot = tuple(a + b * e for a, b in zip(fz, f1v))
        qv = plant.q(z, e, w)
        edot = qv + eta[0] - k_bar * e
        xi = [ec + g * e for ec, g in zip(eta, G)]
        gamma_xi = xi[0]
        phi = im.phi_c(xi)
        etadot = tuple(p - g * (gamma_xi + qv) for p, g in zip(phi, G))
        return zdot + (edot,) + tuple(exo.s(w)) + etadot

    return field, layout


def zero_dynamics_observer_field(plant: PlantSpec, exo: ExosystemSpec,
                                 im: "InternalModel", G):
    """Zero dynamics driving the internal-model copy, on [z, w, xi]:

        z' = f0,  w' = s,  xi' = Phi_c(xi) + G (-q(z, 0, w) - xi_1).

    The (z, w) block is autonomous, so its flow matches the bare zero
    dynamics slot for slot."""
    n, r, d = plant.n, exo.r, im.d
    G = [float(g) for g in np.asarray(G, dtype=float).ravel()]
    layout = StateLayout(n=n, r=r, d=d, has_error=False)

    def field(x):
        z, w, xi = x[:n], x[n:n + r], x[n + r:]
        innov = -plant.q(z, 0.0, w) - xi[0]
        phi = im.phi_c(xi)
        return tuple(plant.f0(z, w)) + tuple(exo.s(w)) + tuple(
            p + g * innov for p, g in zip(phi, G))

    return field, layout


def _run(field, layout, x0, t_span, method, **kwargs) -> Trajectory:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[0] != layout.m:
        raise ConfigError(f"initial state has {x0.shape[0]} slots, expected {layout.m}")
    traj = integrate(as_array_rhs(field), x0, t_span, method=method, **kwargs)
    traj.meta["layout"] = layout
    return traj


def run_closed_loop(plant, exo, cc, x0, t_span, form: str = "xi",
                    method: str = "rk4", **kwargs) -> Trajectory:
    """Integrate the closed loop from stacked [z, e, w, xi-or-eta] states."""
    if form == "xi":
        field, layout = closed_loop_field_xi(plant, exo, cc)
    elif form == "eta":
        field, layout = closed_loop_field_eta(plant, exo, cc)
    else:
        raise ConfigError(f"unknown closed-loop form {form!r}")
    return _run(field, layout, x0, t_span, method, **kwargs)


def run_observer_cascade(plant, exo, im, G, x0, t_span,
                         method: str = "rk4", **kwargs) -> Trajectory:
    """Integrate the zero-dynamics/observer cascade from [z, w, xi] states."""
    field, layout = zero_dynamics_observer_field(plant, exo, im, G)
    return _run(field, layout, x0, t_span, method, **kwargs)

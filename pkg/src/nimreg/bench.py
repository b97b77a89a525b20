"""Benchmark systems: plant, exosystem, driver, and sampling defaults.

All three share the scalar plant skeleton

    z' = f0(z, w) + f1 * e,    e' = q(z, e, w) + u,

and differ in the exosystem and the driver the internal model must realize.
The Van der Pol benchmark carries a cached reference limit cycle so initial
exosystem states can be placed on the attractor rather than near it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynsys import ExosystemSpec, PlantSpec, ScenarioSets, as_array_rhs, inflate_box
from .errors import ConfigError
from .integrators import dopri5

__all__ = ["Benchmark", "registry", "get_benchmark", "reference_cycle"]


@dataclass(eq=False)
class Benchmark:
    name: str
    plant: PlantSpec
    exo: ExosystemSpec
    d: int
    f: Callable
    z_box: np.ndarray
    e_interval: np.ndarray
    exp_attractive: bool
    linear_baseline_pass: bool
    w0_sampler: Callable | None = None
    mu: float | None = None
    notes: str = ""

    def scenario_sets(self, n_samples: int = 50, seed: int = 0,
                      xi_box=None) -> ScenarioSets:
        return ScenarioSets(z_box=self.z_box, e_interval=self.e_interval,
                            xi_box=xi_box, n_samples=n_samples, seed=seed)


# Van der Pol reference cycle ---------------------------------------------------

_CYCLE_CACHE: dict = {}


def _vdp_rhs(mu: float):
    def rhs(x):
        return np.array([x[1], mu * (1.0 - x[0] ** 2) * x[1] - x[0]])
    return rhs


def _hermite_state(y0, y1, f0, f1, h, theta):
    d = y1 - y0
    a = 3.0 * d - h * (2.0 * f0 + f1)
    b = -2.0 * d + h * (f0 + f1)
    return y0 + theta * (h * f0 + theta * (a + theta * b))


def reference_cycle(mu: float = 1.0) -> dict:
    """Limit cycle of w' = (w2, mu (1 - w1^2) w2 - w1) as dense samples over
    one period, cached per mu.

    Returned dict: t (n,), states (n, 2), f (n, 2), period, amplitude.
    Samples are accurate to roughly the integrator tolerance (1e-11), far
    inside the 1e-6 projection budget callers rely on.
    """
    key = round(float(mu), 12)
    if key in _CYCLE_CACHE:
        return _CYCLE_CACHE[key]
    rhs = _vdp_rhs(mu)
    settled = dopri5(rhs, np.array([2.0, 0.0]), (0.0, 30.0),
                     rtol=1e-11, atol=1e-13).final
    dense = dopri5(rhs, settled, (0.0, 25.0), rtol=1e-11, atol=1e-13,
                   dt_out=1e-3)
    w1, w2 = dense.states[:, 0], dense.states[:, 1]
    # upward crossings of the section w2 = 0 on the w1 < 0 side
    hits = np.nonzero((w2[:-1] < 0.0) & (w2[1:] >= 0.0) & (w1[:-1] < 0.0))[0]
    if hits.size < 2:
        raise ConfigError(f"no limit cycle found for mu={mu:g}")

    def refine(i):
        y0, y1 = dense.states[i], dense.states[i + 1]
        f0, f1 = rhs(y0), rhs(y1)
        h = dense.t[i + 1] - dense.t[i]
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _hermite_state(y0, y1, f0, f1, h, mid)[1] < 0.0:
                lo = mid
            else:
                hi = mid
        theta = 0.5 * (lo + hi)
        return dense.t[i] + theta * h, _hermite_state(y0, y1, f0, f1, h, theta)

    t_a, state_a = refine(hits[0])
    t_b, _ = refine(hits[1])
    period = t_b - t_a
    n = 8192
    loop = dopri5(rhs, state_a, (0.0, period), rtol=1e-11, atol=1e-13,
                  dt_out=period / n)
    fvals = np.stack([rhs(s) for s in loop.states])
    cycle = {"t": loop.t, "states": loop.states, "f": fvals,
             "period": float(period),
             "amplitude": float(np.max(np.abs(loop.states[:, 0]))), "mu": mu}
    _CYCLE_CACHE[key] = cycle
    return cycle


def _cycle_sampler(mu: float):
    cycle = reference_cycle(mu)
    t, states, fvals = cycle["t"], cycle["states"], cycle["f"]

    def sample(count, rng):
        phases = rng.uniform(0.0, cycle["period"], size=count)
        idx = np.clip(np.searchsorted(t, phases) - 1, 0, t.size - 2)
        h = t[idx + 1] - t[idx]
        theta = ((phases - t[idx]) / h)[:, None]
        y0, y1 = states[idx], states[idx + 1]
        f0, f1 = fvals[idx], fvals[idx + 1]
        d = y1 - y0
        a = 3.0 * d - h[:, None] * (2.0 * f0 + f1)
        b = -2.0 * d + h[:, None] * (f0 + f1)
        pts = y0 + theta * (h[:, None] * f0 + theta * (a + theta * b))
        return pts.T
    return sample


# benchmark definitions -----------------------------------------------------------


def _harmonic() -> Benchmark:
    exo = ExosystemSpec(r=2, s=lambda w: (w[1], -w[0]),
                        w_box=np.array([[-1.0, 1.0], [-1.0, 1.0]]))
    plant = PlantSpec(n=1,
                      f0=lambda z, w: (-z[0] + w[0],),
                      f1=lambda z, zeta, w: (0.1,),
                      q=lambda z, zeta, w: w[0] + zeta * z[0])

    def sampler(count, rng):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
        return np.stack([np.cos(theta), np.sin(theta)])

    return Benchmark(name="harmonic", plant=plant, exo=exo, d=2,
                     f=lambda eta: eta[0],
                     z_box=np.array([[-2.0, 2.0]]),
                     e_interval=np.array([[-0.5, 0.5]]),
                     exp_attractive=True, linear_baseline_pass=True,
                     w0_sampler=sampler,
                     notes="sinusoidal exogenous signal; driver is linear")


def _vdp(mu: float = 1.0) -> Benchmark:
    cycle = reference_cycle(mu)
    extent = np.column_stack([cycle["states"].min(axis=0),
                              cycle["states"].max(axis=0)])
    exo = ExosystemSpec(r=2,
                        s=lambda w: (w[1], mu * (1.0 - w[0] ** 2) * w[1] - w[0]),
                        w_box=inflate_box(extent, 0.05))
    plant = PlantSpec(n=1,
                      f0=lambda z, w: (-z[0] + w[0],),
                      f1=lambda z, zeta, w: (0.1,),
                      q=lambda z, zeta, w: w[0] + zeta * z[0])

    def f(eta):
        a, b = eta[0], eta[1]
        return -mu * (1.0 - a * a) * b + a

    return Benchmark(name="vdp", plant=plant, exo=exo, d=2, f=f,
                     z_box=np.array([[-2.0, 2.0]]),
                     e_interval=np.array([[-0.5, 0.5]]),
                     exp_attractive=True, linear_baseline_pass=False,
                     w0_sampler=_cycle_sampler(mu), mu=mu,
                     notes="relaxation oscillation; driver genuinely nonlinear")


def _static() -> Benchmark:
    exo = ExosystemSpec(r=1, s=lambda w: (0.0,), w_box=np.array([[0.0, 0.0]]))
    plant = PlantSpec(n=1,
                      f0=lambda z, w: (-z[0],),
                      f1=lambda z, zeta, w: (0.0,),
                      q=lambda z, zeta, w: zeta)

    return Benchmark(name="static", plant=plant, exo=exo, d=1,
                     f=lambda eta: 0.0,
                     z_box=np.array([[-1.0, 1.0]]),
                     e_interval=np.array([[-0.5, 0.5]]),
                     exp_attractive=False, linear_baseline_pass=True,
                     w0_sampler=lambda count, rng: np.zeros((1, count)),
                     notes="pure stabilization smoke test; tau is identically zero")


def registry() -> list:
    """All benchmarks, cheapest first."""
    return [_harmonic(), _vdp(), _static()]


def get_benchmark(name: str, mu: float | None = None) -> Benchmark:
    if name == "harmonic":
        return _harmonic()
    if name == "vdp":
        return _vdp(1.0 if mu is None else mu)
    if name == "static":
        return _static()
    raise ConfigError(f"unknown benchmark {name!r}; "
                      "choose from harmonic, vdp, static")

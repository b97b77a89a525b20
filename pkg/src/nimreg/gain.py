"""Observer gain design for the internal-model cascade.

The base gain G0 places the poles of A - G0*Gamma; the deployed gain is the
high-gain scaling G_i = kappa^(i+1) * G0_i.  A Lyapunov certificate P for the
placed matrix gives the analytic lower bound kappa > 2 L |P| under which the
saturated driver cannot destroy contraction; find_kappa_star searches upward
from that bound until the tracking error demonstrably decays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FitError, IntegrationError, PreconditionError, SearchError

__all__ = [
    "place_poles",
    "matched_pole_error",
    "solve_lyapunov",
    "build_gain",
    "kappa_lower_bound",
    "GainDesign",
    "design_gains",
    "KappaSearch",
    "find_kappa_star",
]


def _companion(G0: np.ndarray) -> np.ndarray:
    d = G0.size
    A = np.eye(d, k=1)
    A[:, 0] -= G0
    return A


def place_poles(d: int, poles=None) -> np.ndarray:
    """Gain column G0 so that A - G0*Gamma has the requested spectrum.

    poles defaults to d copies of -1.  Complex poles must come in conjugate
    pairs and every pole must lie strictly in the left half plane.
    """
    if d < 1:
        raise ConfigError(f"need d >= 1, got {d}")
    if poles is None:
        poles = [-1.0] * d
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    if poles.size != d:
        raise ConfigError(f"got {poles.size} poles for dimension {d}")
    if np.any(poles.real >= 0.0):
        raise ConfigError("all poles must have negative real part")
    if not np.allclose(np.sort_complex(poles), np.sort_complex(poles.conj()),
                       rtol=1e-12, atol=1e-12):
        raise ConfigError("complex poles must be closed under conjugation")
    coeffs = np.poly(poles)
    if np.max(np.abs(coeffs.imag)) > 1e-9 * max(1.0, np.max(np.abs(coeffs.real))):
        raise ConfigError("pole set produced non-real polynomial coefficients")
    G0 = coeffs.real[1:].astype(float)
    err = matched_pole_error(G0, poles)
    if err > 1e-6:
        raise PreconditionError(
            f"pole placement postcondition failed: cluster error {err:.3e}")
    return G0


def matched_pole_error(G0: np.ndarray, poles) -> float:
    """Worst distance between each requested pole and the mean of its matched
    eigenvalue cluster.

    For repeated poles the individual eigenvalues of the companion matrix are
    perturbed like eps^(1/mult), but their mean is backward stable, so the
    comparison is done per multiplicity cluster.
    """
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    eig = np.linalg.eigvals(_companion(np.asarray(G0, dtype=float)))
    clusters: list[list] = []
    for p in sorted(poles, key=lambda v: (v.real, v.imag)):
        if clusters and abs(p - clusters[-1][0]) < 1e-9:
            clusters[-1].append(p)
        else:
            clusters.append([p])
    avail = list(eig)
    worst = 0.0
    for members in clusters:
        value = members[0]
        picked = []
        for _ in members:
            i = int(np.argmin([abs(a - value) for a in avail]))
            picked.append(avail.pop(i))
        worst = max(worst, abs(np.mean(picked) - value))
    return float(worst)


def solve_lyapunov(A: np.ndarray) -> np.ndarray:
    """Solve P A + A^T P = -I for symmetric positive definite P.

    Dense solve over the d(d+1)/2 symmetric unknowns; fine for the small d
    used here.  Non-Hurwitz input surfaces as a singular system or an
    indefinite P, both reported as precondition failures.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    if A.shape != (d, d):
        raise ConfigError("A must be square")
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    index = {p: q for q, p in enumerate(pairs)}
    M = np.zeros((len(pairs), len(pairs)))
    b = np.zeros(len(pairs))
    for row, (k, l) in enumerate(pairs):
        b[row] = -1.0 if k == l else 0.0
        for m in range(d):
            M[row, index[(min(k, m), max(k, m))]] += A[m, l]
            M[row, index[(min(m, l), max(m, l))]] += A[m, k]
    try:
        sol = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise PreconditionError(f"Lyapunov system is singular: {exc}") from exc
    P = np.zeros((d, d))
    for q, (i, j) in enumerate(pairs):
        P[i, j] = P[j, i] = sol[q]
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("Lyapunov certificate is not positive definite; "
                                "the placed matrix is not Hurwitz") from exc
    return P


def build_gain(G0: np.ndarray, kappa: float) -> np.ndarray:
    """High-gain scaling G_i = kappa^(i+1) * G0_i."""
    if not kappa > 1.0:
        raise ConfigError(f"kappa must exceed 1, got {kappa:g}")
    G0 = np.asarray(G0, dtype=float)
    scale = kappa ** np.arange(1, G0.size + 1)
    return scale * G0


def kappa_lower_bound(lipschitz: float, P: np.ndarray) -> float:
    """Analytic contraction threshold 2 L |P| (spectral norm)."""
    return 2.0 * float(lipschitz) * float(np.linalg.norm(P, 2))


@dataclass(eq=False)
class GainDesign:
    d: int
    poles: tuple
    G0: np.ndarray
    kappa: float
    G: np.ndarray
    P: np.ndarray
    kappa_lb: float
    pole_error: float


def design_gains(d: int, kappa: float, lipschitz: float = 0.0,
                 poles=None) -> GainDesign:
    if poles is None:
        poles = [-1.0] * d
    G0 = place_poles(d, poles)
    P = solve_lyapunov(_companion(G0))
    G = build_gain(G0, kappa)
    return GainDesign(d=d, poles=tuple(complex(p) for p in np.atleast_1d(poles)),
                      G0=G0, kappa=float(kappa), G=G, P=P,
                      kappa_lb=kappa_lower_bound(lipschitz, P),
                      pole_error=matched_pole_error(G0, poles))


@dataclass
class KappaSearch:
    kappa: float
    rate: float
    kappa_lb: float
    history: list
    design: GainDesign


def find_kappa_star(plant, exo, im, tau, sets, *, w0_sampler=None, poles=None,
                    alpha_min: float = 0.3, kappa_max: float = 1024.0,
                    horizon: float = 2.0, n_runs: int = 20,
                    h: float = 1e-3) -> KappaSearch:
    """Double kappa from the analytic bound until the median tracking error
    |xi - tau(z, w)| decays at least at rate alpha_min.

    The certified bound is where the search starts; the returned kappa is the
    first empirically passing value, which may equal the bound.
    """
    from .analysis import tracking_error_decay

    if tau.image_box is None:
        raise PreconditionError("tau image box not computed; search needs a "
                                "xi sample box")
    d = im.d
    if poles is None:
        poles = [-1.0] * d
    G0 = place_poles(d, poles)
    P = solve_lyapunov(_companion(G0))
    bound = kappa_lower_bound(im.driver.L, P)
    rng = np.random.default_rng(sets.seed + 3)
    from .dynsys import sample_box
    z0 = sample_box(sets.z_box, n_runs, rng)
    if w0_sampler is not None:
        w0 = np.asarray(w0_sampler(n_runs, rng), dtype=float)
    else:
        w0 = sample_box(exo.w_box, n_runs, rng)
    xi_box = sets.xi_box if sets.xi_box is not None else tau.image_box
    xi0 = sample_box(xi_box, n_runs, rng)

    kappa = max(1.0 + 1e-6, bound)
    history = []
    while kappa <= kappa_max:
        G = build_gain(G0, kappa)
        alpha = None
        try:
            fit = tracking_error_decay(plant, exo, im, tau, G,
                                       z0=z0, w0=w0, xi0=xi0,
                                       horizon=horizon, h=h)
            alpha = fit.alpha
        except (FitError, IntegrationError):
            pass
        history.append((kappa, alpha))
        if alpha is not None and alpha >= alpha_min:
            design = design_gains(d, kappa, lipschitz=im.driver.L, poles=poles)
            return KappaSearch(kappa=kappa, rate=alpha, kappa_lb=bound,
                               history=history, design=design)
        kappa *= 2.0
    rates = [a for _, a in history if a is not None]
    raise SearchError(
        f"no kappa <= {kappa_max:g} reached decay rate {alpha_min:g} "
        f"(analytic bound was {bound:g})",
        best_rate=max(rates) if rates else None, history=history)

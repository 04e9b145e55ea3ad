"""Constitutive relations and the wave-system coefficient mapping.

Converts between state representations and evaluates the coefficient
functions of the first-order system

    dP/dt + a dQ/dx = f
    dQ/dt + b dP/dx + 2c dQ/dx = g

from the physical vessel model, where

    a = dP/dA,  b = A/rho - alpha Q^2 / (A^2 a),  c = alpha Q / A,
    f = 0,      g = alpha Q^2/A^2 * dA/dx|_P - 4 pi nu alpha/(alpha-1) * Q/A.

Characteristic speeds are lambda_R = c + u and lambda_L = c - u with
u = sqrt(c^2 + a b); the characteristic variables are
r = -lambda_L P + a Q and s = -lambda_R P + a Q.

All operations are pure and accept either scalars or aligned numpy
arrays in the state/position arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CollapsedVesselError,
    HyperbolicityViolation,
    TubeLawError,
)
from .network import PowerLaw, TabulatedLaw, TubeLaw, Vessel

DEFAULT_EPSILON0 = 1e-10  # area floor (m^2)

_NEWTON_MAX_ITERS = 100


@dataclass(frozen=True)
class PrimitiveState:
    """Pressure (Pa) and volumetric flow (m^3/s); scalar or array."""

    P: float | np.ndarray
    Q: float | np.ndarray


@dataclass(frozen=True)
class CoefficientSet:
    """Wave-system coefficients and area evaluated at one (x, t, P, Q),
    or elementwise on aligned arrays."""

    a: float | np.ndarray
    b: float | np.ndarray
    c: float | np.ndarray
    f: float | np.ndarray
    g: float | np.ndarray
    A: float | np.ndarray


@dataclass(frozen=True)
class EigenData:
    lambda_R: float | np.ndarray
    lambda_L: float | np.ndarray
    u: float | np.ndarray  # sqrt(c^2 + a b)


@dataclass(frozen=True)
class RiemannPair:
    r: float | np.ndarray
    s: float | np.ndarray


# --- tube-law evaluation ------------------------------------------------


def pressure_from_radius(law: TubeLaw, x, R):
    """Evaluate the tube law P(x, R). Strictly increasing in R."""
    if isinstance(law, PowerLaw):
        R = np.asarray(R, dtype=float)
        if np.any(R <= 0):
            raise TubeLawError("radius must be positive")
        # expm1/log1p form avoids cancellation near R = R0
        out = law.C * np.expm1(law.beta * np.log(R / law.R0))
        return float(out) if out.ndim == 0 else out
    if isinstance(law, TabulatedLaw):
        R_arr = np.asarray(R, dtype=float)
        if np.any(R_arr < law.radii[0]) or np.any(R_arr > law.radii[-1]):
            raise TubeLawError(
                f"radius outside tabulated range [{law.radii[0]}, {law.radii[-1]}]"
            )
        i, j, w = law._station_weights(float(np.asarray(x).reshape(-1)[0]) if np.ndim(x) else float(x))
        out = (1.0 - w) * law._interp[i](R_arr) + w * law._interp[j](R_arr)
        return float(out) if out.ndim == 0 else out
    raise TypeError(f"not a tube law: {law!r}")


def _dP_dR(law: TubeLaw, x, R):
    if isinstance(law, PowerLaw):
        R = np.asarray(R, dtype=float)
        out = law.C * law.beta / law.R0 * (R / law.R0) ** (law.beta - 1.0)
        return float(out) if out.ndim == 0 else out
    i, j, w = law._station_weights(float(x))
    R_arr = np.asarray(R, dtype=float)
    out = (1.0 - w) * law._dinterp[i](R_arr) + w * law._dinterp[j](R_arr)
    return float(out) if out.ndim == 0 else out


def radius_from_pressure(law: TubeLaw, x, P):
    """Invert the tube law at fixed x; unique by monotonicity.

    The power law inverts in closed form. Tabulated laws use a Newton
    iteration with a bisection safeguard on the bracketing radius range,
    converging the pressure residual to 1e-14 relative.
    """
    if isinstance(law, PowerLaw):
        P = np.asarray(P, dtype=float)
        if np.any(P / law.C <= -1.0):
            raise TubeLawError(f"pressure below power-law range (need P > {-law.C})")
        out = law.R0 * np.exp(np.log1p(P / law.C) / law.beta)
        return float(out) if out.ndim == 0 else out
    if isinstance(law, TabulatedLaw):
        P_arr = np.asarray(P, dtype=float)
        if P_arr.ndim == 0:
            return _invert_tabulated(law, float(x), float(P_arr))
        return np.array([_invert_tabulated(law, float(x), float(p)) for p in P_arr])
    raise TypeError(f"not a tube law: {law!r}")


def _invert_tabulated(law: TabulatedLaw, x: float, P: float) -> float:
    lo, hi = float(law.radii[0]), float(law.radii[-1])
    p_lo = pressure_from_radius(law, x, lo)
    p_hi = pressure_from_radius(law, x, hi)
    if P < p_lo or P > p_hi:
        raise TubeLawError(f"pressure {P} outside tabulated range [{p_lo}, {p_hi}] at x={x}")
    tol = 1e-14 * max(1.0, abs(P))
    R = 0.5 * (lo + hi)
    for _ in range(_NEWTON_MAX_ITERS):
        res = pressure_from_radius(law, x, R) - P
        if abs(res) <= tol or hi - lo <= 4.0 * np.spacing(hi):
            # converged, or the bracket is exhausted at float resolution
            # (interpolant evaluation noise bounds the residual below)
            return R
        if res > 0:
            hi = R
        else:
            lo = R
        slope = _dP_dR(law, x, R)
        step = res / slope if slope > 0 else np.inf
        R_new = R - step
        if not (lo < R_new < hi):  # Newton left the bracket; bisect
            R_new = 0.5 * (lo + hi)
        R = R_new
    raise TubeLawError(f"tube-law inversion did not converge at x={x}, P={P}")


def _dA_dx_fixed_P(law: TubeLaw, x, P):
    """x-derivative of area at fixed pressure; zero for x-independent laws,
    finite differences across stations for tabulated laws."""
    if isinstance(law, PowerLaw) or law.x_stations.size == 1:
        return np.zeros_like(np.asarray(P, dtype=float)) if np.ndim(P) else 0.0
    xs = law.x_stations
    i = int(np.clip(np.searchsorted(xs, x) - 1, 0, xs.size - 2))
    x_lo = xs[max(i - 1, 0)] if np.isclose(x, xs[i]) and i > 0 else xs[i]
    x_hi = xs[i + 1]
    if x_hi == x_lo:
        return np.zeros_like(np.asarray(P, dtype=float)) if np.ndim(P) else 0.0
    R_lo = radius_from_pressure(law, x_lo, P)
    R_hi = radius_from_pressure(law, x_hi, P)
    out = (np.pi * np.asarray(R_hi) ** 2 - np.pi * np.asarray(R_lo) ** 2) / (x_hi - x_lo)
    return float(out) if np.ndim(out) == 0 else out


# --- coefficient mapping ------------------------------------------------


def _eval_synthetic(spec, x, t):
    if callable(spec):
        out = np.asarray(spec(x, t), dtype=float)
        return np.broadcast_to(out, np.shape(x)).astype(float) if np.ndim(x) else float(out)
    if np.ndim(x):
        return np.full(np.shape(x), float(spec))
    return float(spec)


def coefficients(
    vessel: Vessel,
    x,
    t: float,
    state: PrimitiveState,
    epsilon0: float = DEFAULT_EPSILON0,
    checked: bool = True,
) -> CoefficientSet:
    """Coefficients (a, b, c, f, g, A) of the wave system at (x, t, P, Q).

    For physical vessels the state's pressure is inverted through the
    tube law to recover area. With checked=True (the solver path) a
    collapsed area (A < epsilon0) or a nonpositive slope a raises; with
    checked=False out-of-range points come back as NaN so callers can
    report them (the condition-checker path).

    x and the state fields may be aligned arrays.
    """
    syn = vessel.synthetic
    if syn is not None:
        shape = np.shape(x)
        A = np.full(shape, syn.area) if shape else syn.area
        return CoefficientSet(
            a=_eval_synthetic(syn.a, x, t),
            b=_eval_synthetic(syn.b, x, t),
            c=_eval_synthetic(syn.c, x, t),
            f=_eval_synthetic(syn.f, x, t),
            g=_eval_synthetic(syn.g, x, t),
            A=A,
        )

    law = vessel.tube_law
    P = np.asarray(state.P, dtype=float)
    Q = np.asarray(state.Q, dtype=float)
    scalar = P.ndim == 0 and np.ndim(x) == 0

    if checked and isinstance(law, PowerLaw) and not scalar:
        # fused solver-path evaluation (x-independent law, closed-form
        # inverse); semantics identical to the generic branch below
        arg = P / law.C
        if not np.min(arg) > -1.0:
            raise TubeLawError(
                f"vessel {vessel.id!r}: pressure below power-law range (need P > {-law.C})"
            )
        R = law.R0 * np.exp(np.log1p(arg) / law.beta)
        A = np.pi * R * R
        if not np.min(A) >= epsilon0:
            raise CollapsedVesselError(
                f"vessel {vessel.id!r}: area {np.min(A):.3e} m^2 below floor {epsilon0:.3e}"
            )
        dPdR = law.C * law.beta / law.R0 * (R / law.R0) ** (law.beta - 1.0)
        a = dPdR / (2.0 * np.pi * R)
        alpha = vessel.alpha
        Q_over_A = Q / A
        b = A / vessel.rho_blood - alpha * Q_over_A * Q_over_A / a
        c = alpha * Q_over_A
        g = -(4.0 * np.pi * vessel.nu * alpha / (alpha - 1.0)) * Q_over_A
        return CoefficientSet(a, b, c, np.zeros_like(a), g, A)

    if checked:
        R = radius_from_pressure(law, x, P)
    else:
        try:
            R = radius_from_pressure(law, x, P)
        except TubeLawError:
            if P.ndim == 0:
                nan = float("nan")
                return CoefficientSet(nan, nan, nan, nan, nan, nan)
            R = np.full(P.shape, np.nan)
            for k, p in enumerate(P):
                try:
                    R[k] = radius_from_pressure(
                        law, x[k] if np.ndim(x) else x, float(p)
                    )
                except TubeLawError:
                    pass
    R = np.asarray(R, dtype=float)
    A = np.pi * R**2
    if checked and np.any(A < epsilon0):
        idx = int(np.argmin(A))
        raise CollapsedVesselError(
            f"vessel {vessel.id!r}: area {np.min(A):.3e} m^2 below floor {epsilon0:.3e}"
        )

    dPdR = np.asarray(_dP_dR(law, x, R), dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = dPdR / (2.0 * np.pi * R)
        if checked and np.any(a <= 0):
            raise TubeLawError(f"vessel {vessel.id!r}: nonpositive slope dP/dA")
        alpha = vessel.alpha
        b = A / vessel.rho_blood - alpha * Q**2 / (A**2 * a)
        c = alpha * Q / A
        dAdx = np.asarray(_dA_dx_fixed_P(law, x, P), dtype=float)
        g = alpha * Q**2 / A**2 * dAdx - (
            4.0 * np.pi * vessel.nu * alpha / (alpha - 1.0)
        ) * Q / A
    f = np.zeros_like(a)
    if scalar:
        return CoefficientSet(float(a), float(b), float(c), float(f), float(g), float(A))
    return CoefficientSet(a, b, c, f, g, A)


# --- eigenstructure and characteristic variables ------------------------


def eigen(cs: CoefficientSet) -> EigenData:
    """Characteristic speeds of the wave system; requires c^2 + a b > 0."""
    disc = cs.c * cs.c + cs.a * cs.b
    # a NaN minimum also fails this comparison
    if not np.min(disc) > 0:
        raise HyperbolicityViolation(
            f"c^2 + a*b must be positive, worst value {float(np.min(disc)):.6e}"
        )
    u = np.sqrt(disc)
    return EigenData(lambda_R=cs.c + u, lambda_L=cs.c - u, u=u)


def to_riemann(cs: CoefficientSet, e: EigenData, st: PrimitiveState) -> RiemannPair:
    """Characteristic variables r = -lambda_L P + a Q, s = -lambda_R P + a Q."""
    return RiemannPair(
        r=-e.lambda_L * st.P + cs.a * st.Q,
        s=-e.lambda_R * st.P + cs.a * st.Q,
    )


def from_riemann(cs: CoefficientSet, e: EigenData, rp: RiemannPair) -> PrimitiveState:
    """Invert the characteristic transform:
    P = (r - s)/(2u), Q = (lambda_R r - lambda_L s)/(2 u a)."""
    P = (rp.r - rp.s) / (2.0 * e.u)
    Q = (e.lambda_R * rp.r - e.lambda_L * rp.s) / (2.0 * e.u * cs.a)
    return PrimitiveState(P=P, Q=Q)

"""Semi-Lagrangian characteristics kernel.

One linear update advances the characteristic variables r and s one
time level on a fixed uniform grid: trace each family's characteristic
backward from every grid node with a two-stage midpoint rule through
the frozen speed field, interpolate the level-t value at the foot
linearly, and add the trapezoidal integral of the source term along the
traced segment:

    r(x, t+dt) = r(foot, t) + dt/2 * (F_R(foot, t) + F_R(x, t+dt))

with F_R = l_R . (f, g) + (d_R l_R) . (P, Q), l_R = (-lambda_L, a), and
d_R the derivative along the right-going characteristic (and the mirror
expressions for s). Coefficients are frozen at the outer fixed-point
iterate: the directional derivatives of the eigenvector entries come
from centered x-differences and one-sided t-differences across the two
stored time levels.

Grid nodes whose foot leaves the domain are left unresolved (NaN); the
junction module closes them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import (
    CoefficientSet,
    EigenData,
    PrimitiveState,
    coefficients,
    eigen,
    to_riemann,
)
from .errors import CFLViolation
from .network import Vessel

OUT_LEFT = "out_left"
OUT_RIGHT = "out_right"
INTERIOR = "interior"


@dataclass
class VesselField:
    """Nodal (P, Q) values on the uniform grid x_j = j/n_cells."""

    vessel_id: str
    t: float
    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        if self.P.shape != self.Q.shape or self.P.ndim != 1:
            raise ValueError("P and Q must be 1D arrays of equal length")

    @property
    def n_cells(self) -> int:
        return self.P.size - 1

    def copy(self) -> "VesselField":
        return VesselField(self.vessel_id, self.t, self.P.copy(), self.Q.copy())


@dataclass(frozen=True)
class CharFoot:
    """Where one traced characteristic meets the lower time level."""

    x_foot: float
    status: str  # INTERIOR | OUT_LEFT | OUT_RIGHT
    value: float  # interpolated characteristic variable (NaN if out)
    source_integral: float  # trapezoidal integral of F along the segment


@dataclass(frozen=True)
class DirectionalDerivatives:
    """Derivatives of the left-eigenvector entries along each family."""

    dR_lambda_L: float | np.ndarray
    dR_a: float | np.ndarray
    dL_lambda_R: float | np.ndarray
    dL_a: float | np.ndarray


@dataclass
class LevelData:
    """Frozen per-vessel data at one time level."""

    t: float
    x: np.ndarray
    coeffs: CoefficientSet  # array-valued
    eig: EigenData
    P: np.ndarray
    Q: np.ndarray
    r: np.ndarray
    s: np.ndarray
    # level-intrinsic spatial derivatives, cached so a level reused
    # across fixed-point iterations is not rebuilt
    lamL_x: np.ndarray | None = None
    lamR_x: np.ndarray | None = None
    a_x: np.ndarray | None = None
    # source terms split as F = base + gP * P + gQ * Q per family (the
    # state-coupled part is solved implicitly at the new level)
    F_R: np.ndarray | None = None  # filled once both levels exist
    F_L: np.ndarray | None = None
    base_F_R: np.ndarray | None = None
    gR_P: np.ndarray | None = None
    gR_Q: np.ndarray | None = None
    base_F_L: np.ndarray | None = None
    gL_P: np.ndarray | None = None
    gL_Q: np.ndarray | None = None


@dataclass
class FrozenStep:
    """Both time levels of frozen coefficients for one vessel and step."""

    vessel_id: str
    dt: float
    dx: float
    old: LevelData
    new: LevelData

    def endpoint_data(self, end: str) -> tuple[CoefficientSet, EigenData]:
        """Scalar coefficient/eigen data at a vessel end, new level."""
        idx = 0 if end == "x0" else -1
        c, e = self.new.coeffs, self.new.eig
        cs = CoefficientSet(
            a=float(c.a[idx]), b=float(c.b[idx]), c=float(c.c[idx]),
            f=float(c.f[idx]), g=float(c.g[idx]), A=float(c.A[idx]),
        )
        eig_pt = EigenData(
            lambda_R=float(e.lambda_R[idx]),
            lambda_L=float(e.lambda_L[idx]),
            u=float(e.u[idx]),
        )
        return cs, eig_pt


def source_terms(
    cs: CoefficientSet,
    e: EigenData,
    st: PrimitiveState,
    d: DirectionalDerivatives,
) -> tuple[float | np.ndarray, float | np.ndarray]:
    """Source terms of the characteristic equations:

    F_R = -lambda_L f + a g - (d_R lambda_L) P + (d_R a) Q
    F_L = -lambda_R f + a g - (d_L lambda_R) P + (d_L a) Q

    Works elementwise on aligned arrays.
    """
    F_R = -e.lambda_L * cs.f + cs.a * cs.g - d.dR_lambda_L * st.P + d.dR_a * st.Q
    F_L = -e.lambda_R * cs.f + cs.a * cs.g - d.dL_lambda_R * st.P + d.dL_a * st.Q
    return F_R, F_L


def _ddx(arr: np.ndarray, dx: float) -> np.ndarray:
    """Centered differences, second-order one-sided at the ends."""
    out = np.empty_like(arr)
    out[1:-1] = (arr[2:] - arr[:-2]) / (2.0 * dx)
    out[0] = (-3.0 * arr[0] + 4.0 * arr[1] - arr[2]) / (2.0 * dx)
    out[-1] = (3.0 * arr[-1] - 4.0 * arr[-2] + arr[-3]) / (2.0 * dx)
    return out


def _build_level(vessel: Vessel, t: float, P: np.ndarray, Q: np.ndarray, epsilon0: float) -> LevelData:
    x = vessel.grid
    cs = coefficients(vessel, x, t, PrimitiveState(P, Q), epsilon0=epsilon0)
    e = eigen(cs)
    rp = to_riemann(cs, e, PrimitiveState(P, Q))
    dx = 1.0 / vessel.n_cells
    return LevelData(
        t=t, x=x, coeffs=cs, eig=e, P=np.asarray(P, float),
        Q=np.asarray(Q, float), r=rp.r, s=rp.s,
        lamL_x=_ddx(np.asarray(e.lambda_L), dx),
        lamR_x=_ddx(np.asarray(e.lambda_R), dx),
        a_x=_ddx(np.asarray(cs.a), dx),
    )


def freeze_step(
    vessel: Vessel,
    t_old: float,
    P_old: np.ndarray,
    Q_old: np.ndarray,
    t_new: float,
    P_new: np.ndarray,
    Q_new: np.ndarray,
    epsilon0: float,
    old_level: LevelData | None = None,
) -> FrozenStep:
    """Freeze the coefficient fields of one vessel at both time levels
    and precompute the nodal characteristic source terms. Passing a
    previously built old_level skips rebuilding it (it does not change
    across fixed-point iterations within a step)."""
    dt = t_new - t_old
    if dt <= 0:
        raise ValueError("t_new must exceed t_old")
    old = old_level if old_level is not None else _build_level(vessel, t_old, P_old, Q_old, epsilon0)
    new = _build_level(vessel, t_new, P_new, Q_new, epsilon0)
    dx = 1.0 / vessel.n_cells

    lamL_t = (new.eig.lambda_L - old.eig.lambda_L) / dt
    lamR_t = (new.eig.lambda_R - old.eig.lambda_R) / dt
    a_t = (new.coeffs.a - old.coeffs.a) / dt

    for lev in (old, new):
        d = DirectionalDerivatives(
            dR_lambda_L=lamL_t + lev.eig.lambda_R * lev.lamL_x,
            dR_a=a_t + lev.eig.lambda_R * lev.a_x,
            dL_lambda_R=lamR_t + lev.eig.lambda_L * lev.lamR_x,
            dL_a=a_t + lev.eig.lambda_L * lev.a_x,
        )
        F_R, F_L = source_terms(lev.coeffs, lev.eig, PrimitiveState(lev.P, lev.Q), d)
        lev.F_R = np.asarray(F_R)
        lev.F_L = np.asarray(F_L)
        lev.gR_P = -np.asarray(d.dR_lambda_L)
        lev.gR_Q = np.asarray(d.dR_a)
        lev.gL_P = -np.asarray(d.dL_lambda_R)
        lev.gL_Q = np.asarray(d.dL_a)
        lev.base_F_R = -lev.eig.lambda_L * lev.coeffs.f + lev.coeffs.a * lev.coeffs.g
        lev.base_F_L = -lev.eig.lambda_R * lev.coeffs.f + lev.coeffs.a * lev.coeffs.g
    return FrozenStep(vessel_id=vessel.id, dt=dt, dx=dx, old=old, new=new)


# --- tracing ------------------------------------------------------------


def _lambda_arrays(frozen: FrozenStep, family: str) -> tuple[np.ndarray, np.ndarray]:
    if family == "R":
        return np.asarray(frozen.old.eig.lambda_R), np.asarray(frozen.new.eig.lambda_R)
    if family == "L":
        return np.asarray(frozen.old.eig.lambda_L), np.asarray(frozen.new.eig.lambda_L)
    raise ValueError(f"family must be 'R' or 'L', got {family!r}")


def _trace(frozen: FrozenStep, x_targets: np.ndarray, family: str, cfl_max: float) -> np.ndarray:
    """Feet of the family's characteristics through (x_targets, t+dt),
    by the explicit midpoint rule on the frozen speed field."""
    lam_old, lam_new = _lambda_arrays(frozen, family)
    x = frozen.new.x
    dt = frozen.dt
    lam_at_target = np.interp(x_targets, x, lam_new)
    x_half = x_targets - 0.5 * dt * lam_at_target
    # interpolating the level average equals averaging the interpolants
    lam_mid = np.interp(x_half, x, 0.5 * (lam_old + lam_new))
    limit = cfl_max * frozen.dx
    travel = np.abs(dt * lam_mid)
    if np.any(travel > limit):
        worst = float(np.max(travel))
        raise CFLViolation(
            f"vessel {frozen.vessel_id!r} family {family}: characteristic travels "
            f"{worst:.3e} > cfl_max*dx = {limit:.3e}; reduce dt"
        )
    return x_targets - dt * lam_mid


def _foot_at(frozen: FrozenStep, x_target: float, x_foot: float, family: str) -> CharFoot:
    level = frozen.old
    values = level.r if family == "R" else level.s
    F_old = level.F_R if family == "R" else level.F_L
    F_new = frozen.new.F_R if family == "R" else frozen.new.F_L
    if x_foot < 0.0:
        return CharFoot(x_foot, OUT_LEFT, np.nan, np.nan)
    if x_foot > 1.0:
        return CharFoot(x_foot, OUT_RIGHT, np.nan, np.nan)
    val = float(np.interp(x_foot, level.x, values))
    src = 0.5 * frozen.dt * (
        float(np.interp(x_foot, level.x, F_old))
        + float(np.interp(x_target, frozen.new.x, F_new))
    )
    return CharFoot(float(x_foot), INTERIOR, val, src)


def trace_foot(frozen: FrozenStep, x_target: float, family: str, cfl_max: float = 0.9) -> CharFoot:
    """Trace one characteristic foot backward one time level.

    Returns the foot position, the interpolated characteristic variable
    there, and the accumulated source integral; feet leaving through
    x=0 or x=1 are marked out and carry no value.
    """
    x_foot = _trace(frozen, np.asarray([x_target], dtype=float), family, cfl_max)[0]
    return _foot_at(frozen, float(x_target), float(x_foot), family)


@dataclass
class BoundaryFeet:
    """The four endpoint characteristic traces of one vessel/step."""

    left_r: CharFoot
    left_s: CharFoot
    right_r: CharFoot
    right_s: CharFoot


@dataclass(frozen=True)
class EndpointRow:
    """The resolved characteristic value at a vessel end, split into its
    known part and its linear coupling to the endpoint state:

        char = known + kP * P_end + kQ * Q_end

    (the coupling comes from the new-level source evaluation of the
    trapezoidal rule; zero for constant coefficients). Node closures may
    refine char against the solved endpoint state at no extra cost."""

    known: float
    kP: float
    kQ: float

    def value(self, P: float, Q: float) -> float:
        return self.known + self.kP * P + self.kQ * Q


@dataclass
class InteriorUpdate:
    """New-level characteristic fields; NaN entries are unresolved feet
    (they exited the domain) awaiting a node closure."""

    r: np.ndarray
    s: np.ndarray
    feet: BoundaryFeet
    # resolved-family rows for the closures: s at x=0, r at x=1
    left_row: EndpointRow | None = None
    right_row: EndpointRow | None = None

    @property
    def s_left(self) -> float:
        """Resolved s at x=0 (the interior-determined variable there),
        with the source coupling evaluated at the frozen iterate."""
        return float(self.s[0])

    @property
    def r_right(self) -> float:
        """Resolved r at x=1, coupling at the frozen iterate."""
        return float(self.r[-1])


def interior_update(frozen: FrozenStep, cfl_max: float = 0.9) -> InteriorUpdate:
    """Advance r and s one time level.

    The trapezoidal source integral evaluates the new-level source at
    the target node, where it is linear in the unknown state; that
    coupling is solved in closed form per node (a 2x2 system in r, s),
    so the update solves the frozen-coefficient linear problem exactly
    at interior nodes. Nodes whose foot leaves the domain stay
    unresolved for the node closures, which receive the resolved
    family's value split as known part + endpoint-state coupling.
    """
    x = frozen.new.x
    new = frozen.new
    half_dt = 0.5 * frozen.dt
    known = {}
    feet_arr = {}
    foot_val = {}
    for family in ("R", "L"):
        feet = _trace(frozen, x, family, cfl_max)
        level = frozen.old
        values = level.r if family == "R" else level.s
        F_old = level.F_R if family == "R" else level.F_L
        base_new = new.base_F_R if family == "R" else new.base_F_L
        inside = (feet >= 0.0) & (feet <= 1.0)
        clipped = np.clip(feet, 0.0, 1.0)
        vals = np.interp(clipped, x, values)
        part = vals + half_dt * (np.interp(clipped, x, F_old) + base_new)
        known[family] = np.where(inside, part, np.nan)
        feet_arr[family] = feet
        foot_val[family] = vals

    # state coupling of the new-level source, mapped to (r, s) through
    # the inverse characteristic transform
    u2 = 2.0 * new.eig.u
    ua2 = u2 * new.coeffs.a
    kRr = half_dt * (new.gR_P / u2 + new.gR_Q * new.eig.lambda_R / ua2)
    kRs = half_dt * (-new.gR_P / u2 - new.gR_Q * new.eig.lambda_L / ua2)
    kLr = half_dt * (new.gL_P / u2 + new.gL_Q * new.eig.lambda_R / ua2)
    kLs = half_dt * (-new.gL_P / u2 - new.gL_Q * new.eig.lambda_L / ua2)
    det = (1.0 - kRr) * (1.0 - kLs) - kRs * kLr
    if np.any(np.abs(det) < 0.5):
        raise CFLViolation(
            f"vessel {frozen.vessel_id!r}: source coupling too stiff for this dt"
        )
    Ar, As = known["R"], known["L"]
    with np.errstate(invalid="ignore"):
        r_new = ((1.0 - kLs) * Ar + kRs * As) / det
        s_new = (kLr * Ar + (1.0 - kRr) * As) / det

    # endpoint nodes: the companion family usually exited there, so the
    # 2x2 entries are not usable. Evaluate the coupling at the frozen
    # iterate for the field arrays and hand the exact split to the
    # closures (which solve it against the endpoint state).
    def endpoint_row(A, gP, gQ, idx):
        if not np.isfinite(A[idx]):
            return None, np.nan
        row = EndpointRow(
            known=float(A[idx]),
            kP=float(half_dt * gP[idx]),
            kQ=float(half_dt * gQ[idx]),
        )
        return row, row.value(float(new.P[idx]), float(new.Q[idx]))

    left_row, s_new[0] = endpoint_row(As, new.gL_P, new.gL_Q, 0)
    right_row, r_new[-1] = endpoint_row(Ar, new.gR_P, new.gR_Q, -1)
    _, r_new[0] = endpoint_row(Ar, new.gR_P, new.gR_Q, 0)
    _, s_new[-1] = endpoint_row(As, new.gL_P, new.gL_Q, -1)

    def end_foot(family, idx):
        xf = float(feet_arr[family][idx])
        if xf < 0.0:
            return CharFoot(xf, OUT_LEFT, np.nan, np.nan)
        if xf > 1.0:
            return CharFoot(xf, OUT_RIGHT, np.nan, np.nan)
        arr = r_new if family == "R" else s_new
        val = float(foot_val[family][idx])
        return CharFoot(xf, INTERIOR, val, float(arr[idx]) - val)

    boundary = BoundaryFeet(
        left_r=end_foot("R", 0),
        left_s=end_foot("L", 0),
        right_r=end_foot("R", -1),
        right_s=end_foot("L", -1),
    )
    return InteriorUpdate(
        r=r_new, s=s_new, feet=boundary, left_row=left_row, right_row=right_row
    )

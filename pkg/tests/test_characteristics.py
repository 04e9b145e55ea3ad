"""Characteristics kernel tests: tracing, source terms, interior update."""

import numpy as np
import pytest

from vesselflow import CFLViolation, SyntheticCoefficients, Vessel
from vesselflow.characteristics import (
    INTERIOR,
    OUT_LEFT,
    OUT_RIGHT,
    DirectionalDerivatives,
    freeze_step,
    interior_update,
    source_terms,
    trace_foot,
)
from vesselflow.constitutive import CoefficientSet, PrimitiveState, eigen

EPS0 = 1e-10


def synthetic_vessel(n_cells, a=1.0, b=1.0, c=0.0, f=0.0, g=0.0):
    return Vessel(
        id="v", n_cells=n_cells, x0_node="L", x1_node="R",
        synthetic=SyntheticCoefficients(a=a, b=b, c=c, f=f, g=g),
    )


def frozen_for(vessel, P0, Q0, dt, P1=None, Q1=None, t0=0.0):
    P1 = P0 if P1 is None else P1
    Q1 = Q0 if Q1 is None else Q1
    return freeze_step(vessel, t0, P0, Q0, t0 + dt, P1, Q1, EPS0)


# --- trace_foot ----------------------------------------------------------


def test_trace_constant_speed():
    # a=b=1, c=0 gives lambda_R = 1 everywhere
    v = synthetic_vessel(10)
    z = np.zeros(11)
    fr = frozen_for(v, z, z, dt=0.08)
    foot = trace_foot(fr, 0.5, "R")
    assert foot.status == INTERIOR
    assert foot.x_foot == pytest.approx(0.42, abs=1e-15)


def test_trace_exit_geometry():
    # lambda_L = -1: tracing back moves right; near x=1 it exits
    v = synthetic_vessel(5)
    z = np.zeros(6)
    fr = frozen_for(v, z, z, dt=0.1)
    foot = trace_foot(fr, 0.05, "L")
    assert foot.status == INTERIOR
    assert foot.x_foot == pytest.approx(0.15, abs=1e-15)
    foot = trace_foot(fr, 0.99, "L")
    assert foot.status == OUT_RIGHT
    assert foot.x_foot == pytest.approx(1.09, abs=1e-15)
    assert np.isnan(foot.value)
    # and the mirror exit for the right-going family
    foot = trace_foot(fr, 0.01, "R")
    assert foot.status == OUT_LEFT


def test_trace_linear_speed_matches_exponential():
    # a=1, c=0, b = phi(x)^2 with phi = (1+x)/2 gives lambda_R = phi, a
    # spatially linear speed: the exact backward trace from (x0, dt)
    # lands at (1+x0) exp(-dt/2) - 1, and the midpoint rule should agree
    # to O(dt^3) (interpolation of a linear speed field is exact).
    n, dt = 200, 0.05
    v = Vessel(
        id="v", n_cells=n, x0_node="L", x1_node="R",
        synthetic=SyntheticCoefficients(
            a=1.0, b=lambda x, t: (0.5 * (1.0 + np.asarray(x))) ** 2, c=0.0
        ),
    )
    z = np.zeros(n + 1)
    fr = frozen_for(v, z, z, dt)
    x0 = 0.5
    foot = trace_foot(fr, x0, "R", cfl_max=20.0)  # accuracy test, not a CFL test
    exact = (1.0 + x0) * np.exp(-0.5 * dt) - 1.0
    assert foot.status == INTERIOR
    assert abs(foot.x_foot - exact) <= dt**3


def test_trace_cfl_violation():
    v = synthetic_vessel(50)  # dx = 0.02, lambda = 1
    z = np.zeros(51)
    fr = frozen_for(v, z, z, dt=0.05)  # travel 0.05 > 0.9*0.02
    with pytest.raises(CFLViolation):
        trace_foot(fr, 0.5, "R")


def test_foot_monotone_in_target():
    # same-family feet cannot cross
    rng = np.random.default_rng(2)
    n = 64
    P = 2.0 + 0.3 * np.sin(2 * np.pi * np.linspace(0, 1, n + 1))
    Q = 0.2 * np.cos(2 * np.pi * np.linspace(0, 1, n + 1))
    v = synthetic_vessel(n)

    def b_fun(x, t):
        return 1.0 + 0.2 * np.sin(2 * np.pi * np.asarray(x))

    v = Vessel(
        id="v", n_cells=n, x0_node="L", x1_node="R",
        synthetic=SyntheticCoefficients(a=1.0, b=b_fun, c=0.1),
    )
    fr = frozen_for(v, P, Q, dt=0.01)
    targets = np.sort(rng.uniform(0, 1, 200))
    for family in ("R", "L"):
        feet = [trace_foot(fr, x, family).x_foot for x in targets]
        assert np.all(np.diff(feet) >= 0)


# --- source terms --------------------------------------------------------


def test_source_terms_vanish_for_constant_unforced():
    cs = CoefficientSet(a=1.0, b=1.0, c=0.0, f=0.0, g=0.0, A=1.0)
    e = eigen(cs)
    d = DirectionalDerivatives(0.0, 0.0, 0.0, 0.0)
    F_R, F_L = source_terms(cs, e, PrimitiveState(P=3.0, Q=-2.0), d)
    assert F_R == 0.0 and F_L == 0.0


def test_source_terms_constant_forcing():
    cs = CoefficientSet(a=1.0, b=1.0, c=0.0, f=0.0, g=1.0, A=1.0)
    e = eigen(cs)
    d = DirectionalDerivatives(0.0, 0.0, 0.0, 0.0)
    F_R, F_L = source_terms(cs, e, PrimitiveState(P=0.0, Q=0.0), d)
    assert F_R == 1.0 and F_L == 1.0


def test_source_terms_manufactured_field():
    # Smooth manufactured coefficients; oracle = hand-derived analytic
    # derivatives at t=0. The scheme's t-difference of the (nonlinear in
    # t) eigenvalues carries an O(dt) offset, so dt is kept small.
    n = 8000
    x = np.linspace(0, 1, n + 1)
    dt = 1e-6

    def a_fun(xa, t):
        return 2.0 + 0.3 * np.sin(2 * np.pi * np.asarray(xa)) + 0.5 * t

    def b_fun(xa, t):
        return 1.0 + 0.2 * np.cos(2 * np.pi * np.asarray(xa)) - 0.1 * t

    def c_fun(xa, t):
        return 0.3 * np.asarray(xa) + 0.2 * t

    v = Vessel(
        id="v", n_cells=n, x0_node="L", x1_node="R",
        synthetic=SyntheticCoefficients(a=a_fun, b=b_fun, c=c_fun, f=0.1, g=0.2),
    )
    P = 1.0 + 0.5 * np.sin(2 * np.pi * x)
    Q = 0.3 * np.cos(2 * np.pi * x)
    fr = freeze_step(v, 0.0, P, Q, dt, P, Q, EPS0)

    # analytic directional derivatives at t = 0 (old level)
    a = a_fun(x, 0.0)
    b = b_fun(x, 0.0)
    c = c_fun(x, 0.0)
    a_x = 0.3 * 2 * np.pi * np.cos(2 * np.pi * x)
    b_x = -0.2 * 2 * np.pi * np.sin(2 * np.pi * x)
    c_x = 0.3 * np.ones_like(x)
    a_t, b_t, c_t = 0.5, -0.1, 0.2
    u = np.sqrt(c**2 + a * b)
    u_x = (c * c_x + 0.5 * (a_x * b + a * b_x)) / u
    u_t = (c * c_t + 0.5 * (a_t * b + a * b_t)) / u
    lamR, lamL = c + u, c - u
    lamR_x, lamR_t = c_x + u_x, c_t + u_t
    lamL_x, lamL_t = c_x - u_x, c_t - u_t
    dR_lamL = lamL_t + lamR * lamL_x
    dR_a = a_t + lamR * a_x
    dL_lamR = lamR_t + lamL * lamR_x
    dL_a = a_t + lamL * a_x
    F_R_exact = -lamL * 0.1 + a * 0.2 - dR_lamL * P + dR_a * Q
    F_L_exact = -lamR * 0.1 + a * 0.2 - dL_lamR * P + dL_a * Q

    scale = np.max(np.abs(F_R_exact))
    assert np.max(np.abs(fr.old.F_R - F_R_exact)) <= 1e-6 * scale
    assert np.max(np.abs(fr.old.F_L - F_L_exact)) <= 1e-6 * scale


# --- interior update -----------------------------------------------------


def riemann_initial(vessel, r_fun, s_fun):
    """(P, Q) grids realizing prescribed characteristic profiles for a
    constant-coefficient synthetic vessel."""
    x = vessel.grid
    syn = vessel.synthetic
    u = np.sqrt(syn.c**2 + syn.a * syn.b)
    lamR, lamL = syn.c + u, syn.c - u
    r = r_fun(x)
    s = s_fun(x)
    P = (r - s) / (2 * u)
    Q = (lamR * r - lamL * s) / (2 * u * syn.a)
    return P, Q


def test_interior_translation_one_step():
    n = 200
    v = synthetic_vessel(n)  # lambda_R = 1, lambda_L = -1
    dt = 0.5 / n
    P, Q = riemann_initial(v, lambda x: np.sin(2 * np.pi * x), lambda x: np.zeros_like(x))
    fr = frozen_for(v, P, Q, dt)
    upd = interior_update(fr)
    x = v.grid
    interior = slice(1, n)
    exact = np.sin(2 * np.pi * (x - dt))
    err = np.max(np.abs(upd.r[interior] - exact[interior]))
    assert err <= 1e-3
    assert np.isnan(upd.r[0])  # foot exited left, closure pending
    assert np.isfinite(upd.r_right) and np.isfinite(upd.s_left)


def test_interior_zero_state_fixed():
    v = synthetic_vessel(20)
    z = np.zeros(21)
    fr = frozen_for(v, z, z, dt=0.01)
    upd = interior_update(fr)
    assert np.all(upd.r[1:] == 0.0)
    assert np.all(upd.s[:-1] == 0.0)


def test_interior_pure_source_integration():
    # g = 1, zero data: one step adds exactly dt to both families
    v = synthetic_vessel(20, g=1.0)
    z = np.zeros(21)
    dt = 0.01
    fr = frozen_for(v, z, z, dt)
    upd = interior_update(fr)
    assert np.allclose(upd.r[1:], dt, rtol=0, atol=0)
    assert np.allclose(upd.s[:-1], dt, rtol=0, atol=0)


def test_exactness_on_constants_bit_for_bit():
    v = synthetic_vessel(33, c=0.2)
    P = np.full(34, 3.7)
    Q = np.full(34, -1.2)
    fr = frozen_for(v, P, Q, dt=0.005)
    upd = interior_update(fr)
    r0 = float(fr.old.r[0])
    s0 = float(fr.old.s[0])
    assert np.all(upd.r[1:] == r0)
    assert np.all(upd.s[:-1] == s0)


def test_one_step_convergence_order():
    # linear-interp error halves at least ~2x per refinement at fixed CFL
    errs = []
    for n in (100, 200):
        v = synthetic_vessel(n)
        dt = 0.5 / n
        P, Q = riemann_initial(
            v, lambda x: np.sin(2 * np.pi * x), lambda x: np.zeros_like(x)
        )
        fr = frozen_for(v, P, Q, dt)
        upd = interior_update(fr)
        x = v.grid
        exact = np.sin(2 * np.pi * (x - dt))
        errs.append(np.max(np.abs(upd.r[1:n] - exact[1:n])))
    order = np.log2(errs[0] / errs[1])
    assert order >= 0.9

"""Time-stepping driver.

Each time level is advanced by a fixed-point ("freeze and re-solve")
iteration: coefficients are evaluated at the current iterate, one
linear characteristics update plus every node closure produces the next
iterate, and the loop stops when successive iterates agree to the
configured tolerance. For state-independent coefficients the second
iterate reproduces the first, so the step degenerates to one linear
solve; for the physical vessel model the iteration contracts for small
enough dt.

The outer loop advances these steps over [0, t_end], runs the
solvability checks on the configured cadence, emits probe records, and
adapts dt (halve, retry, restore) when a step fails on the Courant
bound or fails to converge.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .characteristics import FrozenStep, LevelData, VesselField, freeze_step, interior_update
from .constitutive import PrimitiveState, RiemannPair, coefficients, from_riemann
from .errors import (
    CFLViolation,
    PicardDivergence,
    SimulationError,
    WellPosednessFailure,
)
from .junctions import (
    EndpointClosureInput,
    JunctionSolution,
    TransitionalState,
    assemble_branching,
    assemble_transitional,
    close_external_flow,
    close_external_pressure,
    solve_junction,
)
from .network import (
    Branching,
    Diagnostic,
    ExternalFlow,
    ExternalPressure,
    Network,
    Transitional,
    endpoints_of,
    validate_network,
)
from .output import ProbeSpec, emit_probes
from .signals import eval_signal
from .wellposedness import check_state

_MAX_HALVINGS = 10
_RESTORE_AFTER = 10


@dataclass
class SimConfig:
    dt: float  # base time step (s)
    t_end: float  # final time (s)
    cfl_max: float = 0.9
    picard_tol: float = 1e-10
    picard_max_iters: int = 50
    epsilon0: float = 1e-10  # area floor (m^2)
    check_every: int = 1  # steps between full condition sweeps

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < 0 or self.cfl_max <= 0:
            raise ValueError("dt, cfl_max must be positive and t_end nonnegative")
        if self.picard_tol <= 0 or self.picard_max_iters < 1:
            raise ValueError("picard_tol must be positive, picard_max_iters >= 1")
        if self.epsilon0 <= 0 or self.check_every < 1:
            raise ValueError("epsilon0 must be positive, check_every >= 1")


@dataclass
class NetworkState:
    """All vessel fields plus node-internal states at one time level."""

    t: float
    fields: dict[str, VesselField]
    transitional: dict[str, TransitionalState] = field(default_factory=dict)
    junction_pressures: dict[str, float] = field(default_factory=dict)

    def copy(self) -> "NetworkState":
        return NetworkState(
            t=self.t,
            fields={k: v.copy() for k, v in self.fields.items()},
            transitional={
                k: TransitionalState(v.P_C1, v.P_C2) for k, v in self.transitional.items()
            },
            junction_pressures=dict(self.junction_pressures),
        )


@dataclass
class SimReport:
    steps: int = 0
    picard_total: int = 0
    picard_iterations: list[int] = field(default_factory=list)
    contraction_histories: list[list[float]] = field(default_factory=list)
    dt_adjustments: int = 0
    condition_summaries: list[tuple[float, bool]] = field(default_factory=list)
    final_state: NetworkState | None = None

    @property
    def t_final(self) -> float:
        return self.final_state.t if self.final_state is not None else 0.0


# --- initial state -------------------------------------------------------


InitField = float | Sequence[float] | Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class VesselInit:
    P: InitField = 0.0
    Q: InitField = 0.0


@dataclass(frozen=True)
class InitSpec:
    default: VesselInit | None = None
    per_vessel: dict[str, VesselInit] = field(default_factory=dict)

    def for_vessel(self, vid: str) -> VesselInit:
        if vid in self.per_vessel:
            return self.per_vessel[vid]
        if self.default is not None:
            return self.default
        raise ValueError(f"no initial condition for vessel {vid!r}")


def _sample(spec: InitField, x: np.ndarray, what: str) -> np.ndarray:
    if callable(spec):
        out = np.asarray(spec(x), dtype=float)
        if out.shape != x.shape:
            raise ValueError(f"{what}: callable returned shape {out.shape}, expected {x.shape}")
        return out
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.full(x.shape, float(arr))
    if arr.shape != x.shape:
        raise ValueError(f"{what}: array of length {arr.size}, expected {x.size}")
    return arr


def initial_state(
    net: Network, init: InitSpec, cfg: SimConfig
) -> tuple[NetworkState, list]:
    """Sample the initial fields on every vessel grid, seed the
    transitional capacitor states, and report node compatibility
    residuals (warning above 1e-6 relative, error above 1e-2)."""
    fields = {}
    for vid in sorted(net.vessels):
        v = net.vessels[vid]
        x = v.grid
        spec = init.for_vessel(vid)
        P = _sample(spec.P, x, f"{vid}.P")
        Q = _sample(spec.Q, x, f"{vid}.Q")
        # raises CollapsedVesselError if the area floor is violated
        coefficients(v, x, 0.0, PrimitiveState(P, Q), epsilon0=cfg.epsilon0)
        fields[vid] = VesselField(vid, 0.0, P, Q)

    transitional = {}
    diags: list[Diagnostic] = []
    for nid in sorted(net.nodes):
        node = net.nodes[nid]
        ends = endpoints_of(net, nid)

        def end_val(arr_name, vid, end):
            arr = getattr(fields[vid], arr_name)
            return float(arr[0] if end == "x0" else arr[-1])

        if isinstance(node, Transitional):
            art_P = [end_val("P", a.vessel, "x1") for a in node.arteries]
            vein_P = [end_val("P", a.vessel, "x0") for a in node.veins]
            p1 = node.P_C1_init if node.P_C1_init is not None else float(np.mean(art_P))
            p2 = node.P_C2_init if node.P_C2_init is not None else float(np.mean(vein_P))
            transitional[nid] = TransitionalState(p1, p2)
            for att in node.arteries:
                res = att.resistance * end_val("Q", att.vessel, "x1") - (
                    end_val("P", att.vessel, "x1") - p1
                )
                _residual_diag(diags, nid, f"artery {att.vessel} resistive relation", res,
                               scale=max(1.0, abs(end_val("P", att.vessel, "x1"))))
            for att in node.veins:
                res = att.resistance * end_val("Q", att.vessel, "x0") - (
                    p2 - end_val("P", att.vessel, "x0")
                )
                _residual_diag(diags, nid, f"vein {att.vessel} resistive relation", res,
                               scale=max(1.0, abs(end_val("P", att.vessel, "x0"))))
        elif isinstance(node, Branching):
            q_in = sum(end_val("Q", vid, end) for vid, end, o in ends if o == "incoming")
            q_out = sum(end_val("Q", vid, end) for vid, end, o in ends if o == "outgoing")
            q_scale = max(1.0, sum(abs(end_val("Q", vid, end)) for vid, end, _ in ends))
            _residual_diag(diags, nid, "flow balance", q_in - q_out, scale=q_scale)
            # implied node pressure minimizing the initial momentum residuals
            weights, pressures = [], []
            for att in node.attachments:
                A = _end_area(net, fields, att.vessel, att.end, cfg.epsilon0)
                weights.append(A / att.rho_j)
                pressures.append(end_val("P", att.vessel, att.end))
            pj = float(np.dot(weights, pressures) / np.sum(weights))
            spread = max(abs(p - pj) for p in pressures)
            _residual_diag(diags, nid, "pressure continuity", spread,
                           scale=max(1.0, max(abs(p) for p in pressures)))
        elif isinstance(node, (ExternalPressure, ExternalFlow)) and len(ends) == 1:
            vid, end, _ = ends[0]
            sig0 = eval_signal(node.signal, 0.0)
            if isinstance(node, ExternalPressure):
                res = end_val("P", vid, end) - sig0
                what = "boundary pressure"
            else:
                res = end_val("Q", vid, end) - sig0
                what = "boundary flow"
            _residual_diag(diags, nid, what, res, scale=max(1.0, abs(sig0)))

    state = NetworkState(t=0.0, fields=fields, transitional=transitional)
    return state, diags


def _residual_diag(diags, nid, what, res, scale):
    rel = abs(res) / scale
    if rel >= 1e-2:
        diags.append(Diagnostic("error", nid, f"initial {what} residual {rel:.3e}"))
    elif rel >= 1e-6:
        diags.append(Diagnostic("warning", nid, f"initial {what} residual {rel:.3e}"))


def _end_area(net, fields, vid, end, epsilon0):
    v = net.vessels[vid]
    idx = 0 if end == "x0" else -1
    x = v.grid[idx]
    f = fields[vid]
    cs = coefficients(
        v, x, 0.0, PrimitiveState(float(f.P[idx]), float(f.Q[idx])), epsilon0=epsilon0
    )
    return cs.A


# --- one time level ------------------------------------------------------


def _deviation(P_new, Q_new, P_old, Q_old, trans_new, trans_old) -> float:
    """Relative sup-norm distance between iterates, per field."""
    dev = 0.0
    for vid in P_new:
        for new, old in ((P_new[vid], P_old[vid]), (Q_new[vid], Q_old[vid])):
            scale = 1.0 + float(np.max(np.abs(new)))
            dev = max(dev, float(np.max(np.abs(new - old))) / scale)
    for nid in trans_new:
        for new, old in (
            (trans_new[nid].P_C1, trans_old[nid].P_C1),
            (trans_new[nid].P_C2, trans_old[nid].P_C2),
        ):
            dev = max(dev, abs(new - old) / (1.0 + abs(new)))
    return dev


def picard_step(
    net: Network, state_prev: NetworkState, cfg: SimConfig, dt: float | None = None
) -> tuple[NetworkState, int, list[float]]:
    """Advance one time level by fixed-point iteration.

    Starting from the previous level (constant-in-time extrapolation),
    repeatedly freeze the coefficients at the iterate, run the linear
    characteristics update on every vessel, close every node, and stop
    when the relative sup deviation between iterates drops below
    cfg.picard_tol. Returns the converged state, the number of
    iterations used, and the deviation history.
    """
    dt = cfg.dt if dt is None else dt
    t_new = state_prev.t + dt
    vessel_ids = sorted(net.vessels)
    topology = {nid: endpoints_of(net, nid) for nid in sorted(net.nodes)}

    old_level_cache: dict[str, LevelData] = {}
    P_cur = {vid: state_prev.fields[vid].P.copy() for vid in vessel_ids}
    Q_cur = {vid: state_prev.fields[vid].Q.copy() for vid in vessel_ids}
    trans_cur = {k: TransitionalState(v.P_C1, v.P_C2) for k, v in state_prev.transitional.items()}

    history: list[float] = []
    junction_pressures: dict[str, float] = {}
    char_cache: dict[tuple[str, str], float] = {}

    for iteration in range(1, cfg.picard_max_iters + 1):
        frozen: dict[str, FrozenStep] = {}
        for vid in vessel_ids:
            prev_field = state_prev.fields[vid]
            frozen[vid] = freeze_step(
                net.vessels[vid],
                state_prev.t,
                prev_field.P,
                prev_field.Q,
                t_new,
                P_cur[vid],
                Q_cur[vid],
                cfg.epsilon0,
                old_level=old_level_cache.get(vid),
            )
            old_level_cache[vid] = frozen[vid].old

        updates = {vid: interior_update(frozen[vid], cfg.cfl_max) for vid in vessel_ids}

        P_next, Q_next = {}, {}
        for vid in vessel_ids:
            lev = frozen[vid].new
            upd = updates[vid]
            # NaN at unresolved endpoint entries propagates and is
            # overwritten by the node closures below
            with np.errstate(invalid="ignore"):
                st = from_riemann(lev.coeffs, lev.eig, RiemannPair(r=upd.r, s=upd.s))
            P_next[vid] = np.asarray(st.P, dtype=float)
            Q_next[vid] = np.asarray(st.Q, dtype=float)

        trans_next: dict[str, TransitionalState] = {}
        for nid in sorted(net.nodes):
            node = net.nodes[nid]
            solution = _close_node(
                node, topology[nid], frozen, updates, state_prev,
                trans_prev=state_prev.transitional, t_new=t_new, dt=dt,
                char_cache=char_cache,
            )
            for (vid, end), st in solution.states.items():
                idx = 0 if end == "x0" else -1
                P_next[vid][idx] = st.P
                Q_next[vid][idx] = st.Q
            if isinstance(node, Branching):
                junction_pressures[nid] = solution.internals["P_junc"]
            elif isinstance(node, Transitional):
                trans_next[nid] = TransitionalState(
                    solution.internals["P_C1"], solution.internals["P_C2"]
                )

        dev = _deviation(P_next, Q_next, P_cur, Q_cur, trans_next or trans_cur, trans_cur)
        history.append(dev)
        P_cur, Q_cur = P_next, Q_next
        trans_cur = trans_next if trans_next else trans_cur
        if dev <= cfg.picard_tol:
            fields = {
                vid: VesselField(vid, t_new, P_cur[vid], Q_cur[vid]) for vid in vessel_ids
            }
            new_state = NetworkState(
                t=t_new,
                fields=fields,
                transitional=trans_cur,
                junction_pressures=junction_pressures,
            )
            return new_state, iteration, history

    raise PicardDivergence(
        f"fixed-point iteration did not converge in {cfg.picard_max_iters} iterations "
        f"at t = {t_new:.6g} (deviations {history[-3:]}); reduce dt",
        deviations=history,
    )


_INNER_TOL = 1e-13
_MAX_INNER = 20


def _close_node(
    node, ends, frozen, updates, state_prev, trans_prev, t_new, dt,
    char_cache=None,
) -> JunctionSolution:
    """Solve one node's closure at the new time level.

    The resolved characteristic value at each end carries a small linear
    coupling to the endpoint state (from the new-level source term of
    the trapezoidal rule); the closure and that coupling are brought to
    a joint fixed point by a cheap inner refinement loop, so the plain
    characteristic relations hold exactly against the final values.
    char_cache warm-starts the loop from the previous outer iteration.
    """
    inputs = []
    rows = []
    for vid, end, orient in ends:
        upd = updates[vid]
        row = upd.right_row if end == "x1" else upd.left_row
        if char_cache is not None and (vid, end) in char_cache and row is not None:
            char = row.known + char_cache[(vid, end)]
        else:
            char = upd.r_right if end == "x1" else upd.s_left
        if row is None or not np.isfinite(char):
            raise WellPosednessFailure(
                f"vessel {vid!r} end {end}: the interior-determined characteristic "
                "left the domain; endpoint split condition violated",
                t=t_new,
            )
        cs, eig_pt = frozen[vid].endpoint_data(end)
        prev_field = state_prev.fields[vid]
        q_prev = float(prev_field.Q[0] if end == "x0" else prev_field.Q[-1])
        rho_j = resistance = None
        if isinstance(node, Branching):
            rho_j = next(
                a.rho_j for a in node.attachments if a.vessel == vid and a.end == end
            )
        elif isinstance(node, Transitional):
            atts = node.arteries if end == "x1" else node.veins
            resistance = next(a.resistance for a in atts if a.vessel == vid)
        inputs.append(
            EndpointClosureInput(
                vessel_id=vid, end=end, coeffs=cs, eig=eig_pt, char_value=char,
                q_prev=q_prev, rho_j=rho_j, resistance=resistance,
            )
        )
        rows.append(row)

    def solve_once(current):
        if isinstance(node, ExternalPressure):
            st = close_external_pressure(current[0], eval_signal(node.signal, t_new))
            return JunctionSolution(states={(current[0].vessel_id, current[0].end): st})
        if isinstance(node, ExternalFlow):
            st = close_external_flow(current[0], eval_signal(node.signal, t_new))
            return JunctionSolution(states={(current[0].vessel_id, current[0].end): st})
        if isinstance(node, Branching):
            return solve_junction(assemble_branching(node, current, dt))
        if isinstance(node, Transitional):
            return solve_junction(
                assemble_transitional(node, current, trans_prev[node.id], dt)
            )
        raise TypeError(f"unknown node type: {node!r}")

    for _ in range(_MAX_INNER):
        solution = solve_once(inputs)
        worst = 0.0
        refreshed = []
        for inp, row in zip(inputs, rows):
            st = solution.states[(inp.vessel_id, inp.end)]
            char = row.value(st.P, st.Q)
            worst = max(worst, abs(char - inp.char_value) / (1.0 + abs(char)))
            refreshed.append(replace(inp, char_value=char))
        if worst <= _INNER_TOL:
            break
        inputs = refreshed
    if char_cache is not None:
        for inp, row in zip(refreshed, rows):
            char_cache[(inp.vessel_id, inp.end)] = inp.char_value - row.known
    return solution


# --- outer time loop -----------------------------------------------------


def run(
    net: Network,
    init: NetworkState,
    cfg: SimConfig,
    probes: Sequence[ProbeSpec] = (),
    sink=None,
    on_step: Callable[[NetworkState], None] | None = None,
) -> SimReport:
    """Advance the network from the initial state to cfg.t_end.

    Emits one probe record per probe quantity per completed step, runs
    the condition checks on the configured cadence (full sweep every
    cfg.check_every steps, endpoint checks every step), and halves dt
    on Courant or convergence failures, restoring the base step after
    ten clean steps. Raises if a condition check fails or dt would drop
    below dt / 2**10.
    """
    errors = [d for d in validate_network(net) if d.severity == "error"]
    if errors:
        raise WellPosednessFailure(
            "network validation failed: " + "; ".join(f"{d.subject}: {d.message}" for d in errors)
        )

    report = SimReport()
    state = init
    pre = check_state(net, state, cfg)
    report.condition_summaries.append((state.t, pre.passed))
    if not pre.passed:
        raise WellPosednessFailure(
            "solvability check failed at t=0: " + "; ".join(pre.failures()), report=pre, t=state.t
        )

    base_dt = cfg.dt
    cur_dt = base_dt
    depth = 0  # halving depth below the base step
    clean_streak = 0
    tiny = 1e-12 * max(1.0, cfg.t_end)

    while state.t < cfg.t_end - tiny:
        dt_step = min(cur_dt, cfg.t_end - state.t)
        try:
            state_new, iters, hist = picard_step(net, state, cfg, dt_step)
        except (CFLViolation, PicardDivergence) as exc:
            if depth >= _MAX_HALVINGS:
                raise SimulationError(
                    f"step failed at t = {state.t:.6g} after {depth} dt halvings: {exc}"
                ) from exc
            depth += 1
            clean_streak = 0
            cur_dt *= 0.5
            report.dt_adjustments += 1
            continue

        state = state_new
        report.steps += 1
        report.picard_total += iters
        report.picard_iterations.append(iters)
        report.contraction_histories.append(hist)

        if depth:
            clean_streak += 1
            if clean_streak >= _RESTORE_AFTER:
                # climb back one rung per ten clean steps
                depth -= 1
                cur_dt = min(base_dt, 2.0 * cur_dt)
                clean_streak = 0

        full = report.steps % cfg.check_every == 0
        rep = check_state(net, state, cfg, endpoints_only=not full)
        if full:
            report.condition_summaries.append((state.t, rep.passed))
        if not rep.passed:
            raise WellPosednessFailure(
                f"solvability check failed at t = {state.t:.6g}: " + "; ".join(rep.failures()),
                report=rep,
                t=state.t,
            )

        if sink is not None and probes:
            emit_probes(sink, net, state, probes, epsilon0=cfg.epsilon0)
        if on_step is not None:
            on_step(state)

    report.final_state = state
    return report

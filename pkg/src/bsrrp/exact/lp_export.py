"""LP text export of the binary flow model, plus a substitution checker.

The emitted dialect is the plain LP format (Minimize / Subject To / Binaries
/ End).  Row names carry a family prefix so a failed substitution points at
the constraint family, and every variable name decodes back to its indices.
``encode_schedule`` turns a schedule into a 0/1 assignment whose occupancy,
presence, and progress variables are derived through the model's own flow
recurrences, so substituting a valid schedule satisfies every row and an
injected fault fails exactly its family.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..model import (
    Instance,
    InstanceError,
    LANE_BUFFER,
    MOVE_DIRECT,
    MOVE_RESHUFFLE,
    MOVE_RETRIEVE,
    MOVE_STORE,
    Schedule,
    SlotRef,
    TIME_MODEL_UNIT_MOVE,
    distance,
    empty_distance,
    travel_time,
)
from .variables import IPVariableSpace


class ExportSizeError(ValueError):
    def __init__(self, would_be: int, cap: int):
        super().__init__(f"formulation would declare {would_be} variables, over the cap {cap}")
        self.would_be = would_be
        self.cap = cap


Term = tuple[float, str]


@dataclass(frozen=True)
class LPRow:
    name: str
    terms: tuple[Term, ...]
    sense: str          # "<=", ">=", "="
    rhs: float

    @property
    def family(self) -> str:
        return self.name.split("_", 1)[0]


@dataclass(frozen=True)
class LPModel:
    objective: tuple[Term, ...]
    rows: tuple[LPRow, ...]
    binaries: frozenset[str]


def _fmt_coef(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _fmt_terms(terms: list[Term]) -> str:
    parts: list[str] = []
    for coef, name in terms:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        if mag == 1:
            parts.append(f"{sign} {name}")
        else:
            parts.append(f"{sign} {_fmt_coef(mag)} {name}")
    text = " ".join(parts)
    if text.startswith("+ "):
        text = text[2:]
    return text


def _merge(terms: list[Term]) -> list[Term]:
    acc: dict[str, float] = {}
    order: list[str] = []
    for coef, name in terms:
        if name not in acc:
            acc[name] = 0.0
            order.append(name)
        acc[name] += coef
    return [(acc[name], name) for name in order if acc[name] != 0]


def export_ip(instance: Instance, max_variables: int = 250_000) -> str:
    if instance.time_model == TIME_MODEL_UNIT_MOVE:
        raise InstanceError(
            "unit-move instances use zero-duration empty drives, which the "
            "step formulation cannot express")
    space = IPVariableSpace(instance)
    if space.total() > max_variables:
        raise ExportSizeError(space.total(), max_variables)

    layout = instance.layout
    h = instance.handling_time
    T = space.horizon
    ts = range(1, T + 1)
    loads = {u.id: u for u in instance.loads}
    src = layout.source_slot
    snk = layout.sink_slot
    S_B = space.buffer_slots
    S_A = space.all_slots
    S_NS = space.nonsink_slots
    V = space.vehicles
    N = space.loads

    def tau_l(a: SlotRef, b: SlotRef) -> int:
        return travel_time(layout, a, b, True, h)

    def tau_e(a: SlotRef, b: SlotRef) -> int:
        return travel_time(layout, a, b, False, h)

    stacks_by_lane: dict[int, list[SlotRef]] = {}
    for a in S_B:
        stacks_by_lane.setdefault(a.lane, []).append(a)
    for slots in stacks_by_lane.values():
        slots.sort(key=lambda s: s.depth)

    nm = space
    rows: list[LPRow] = []

    def row(name: str, terms: list[Term], sense: str, rhs: float) -> None:
        merged = _merge(terms)
        if merged:
            rows.append(LPRow(name, tuple(merged), sense, rhs))

    # -- objective ----------------------------------------------------------
    objective: list[Term] = []
    for t in ts:
        for v in V:
            for a in S_NS:
                for n in N:
                    d = distance(layout, a, snk)
                    if d:
                        objective.append((d, nm.retrieve(a, n, t, v)))
            for a in S_B:
                for n in N:
                    d = distance(layout, src, a)
                    if d:
                        objective.append((d, nm.store(a, n, t, v)))
            for a in S_B:
                for b in S_B:
                    d = distance(layout, a, b)
                    if d:
                        for n in N:
                            objective.append((d, nm.reshuffle(a, b, n, t, v)))
            for a in S_A:
                for b in S_A:
                    d = empty_distance(layout, a, b)
                    if d:
                        objective.append((d, nm.empty_drive(a, b, t, v)))

    # -- fixed start --------------------------------------------------------
    initial = {u.initial_slot: u.id for u in instance.loads if u.pre_stored}
    for a in S_B:
        for n in N:
            val = 1 if initial.get(a) == n else 0
            row(f"startb_{a.lane}_{a.depth}_{n}", [(1, nm.occupancy(a, n, 1))], "=", val)
    for n in N:
        row(f"starts_{n}", [(1, nm.stored(n, 1))], "=", 1 if loads[n].pre_stored else 0)
    for a in S_A:
        for v in V:
            val = 1 if instance.vehicle_starts[v - 1] == a else 0
            row(f"startc_{a.lane}_{a.depth}_{v}", [(1, nm.presence(a, 1, v))], "=", val)

    # -- stock accounting ----------------------------------------------------
    for n in N:
        for t in ts:
            row(f"storedom_{n}_{t}",
                [(1, nm.occupancy(a, n, t)) for a in S_B] + [(-1, nm.stored(n, t))],
                "<=", 0)
            row(f"deliveredlb_{n}_{t}",
                [(1, nm.delivered(n, t)), (-1, nm.stored(n, t))]
                + [(1, nm.occupancy(a, n, t)) for a in S_B],
                ">=", 0)
    for a in S_B:
        for t in ts:
            row(f"slotcap_{a.lane}_{a.depth}_{t}",
                [(1, nm.occupancy(a, n, t)) for n in N], "<=", 1)
    for lane_slots in stacks_by_lane.values():
        for deep, shallow in zip(lane_slots, lane_slots[1:]):
            for t in ts:
                row(f"dense_{deep.lane}_{deep.depth}_{t}",
                    [(1, nm.occupancy(deep, n, t)) for n in N]
                    + [(-1, nm.occupancy(shallow, n, t)) for n in N],
                    ">=", 0)

    # -- acting requires being there ------------------------------------------
    for t in ts:
        for v in V:
            for a in S_B:
                terms: list[Term] = []
                for b in S_B:
                    for n in N:
                        terms.append((1, nm.reshuffle(a, b, n, t, v)))
                for b in S_A:
                    terms.append((1, nm.empty_drive(a, b, t, v)))
                for n in N:
                    terms.append((1, nm.retrieve(a, n, t, v)))
                terms.append((-1, nm.presence(a, t, v)))
                row(f"presencebuf_{a.lane}_{a.depth}_{t}_{v}", terms, "<=", 0)
            row(f"presencesink_{t}_{v}",
                [(1, nm.empty_drive(snk, b, t, v)) for b in S_A]
                + [(-1, nm.presence(snk, t, v))], "<=", 0)
            terms = [(1, nm.store(a, n, t, v)) for a in S_B for n in N]
            terms += [(1, nm.empty_drive(src, b, t, v)) for b in S_A]
            terms += [(1, nm.retrieve(src, n, t, v)) for n in N]
            terms.append((-1, nm.presence(src, t, v)))
            row(f"presencesource_{t}_{v}", terms, "<=", 0)

    # -- a load is cross-docked or stored, never both ------------------------
    for n in N:
        for t in ts:
            row(f"directxor_{n}_{t}",
                [(1, nm.retrieve(src, n, t, v)) for v in V] + [(1, nm.stored(n, t))],
                "<=", 1)

    # -- acting on a load requires it there -----------------------------------
    for a in S_B:
        for n in N:
            for t in ts:
                terms = [(1, nm.retrieve(a, n, t, v)) for v in V]
                terms += [(1, nm.reshuffle(a, b, n, t, v)) for b in S_B for v in V]
                terms.append((-1, nm.occupancy(a, n, t)))
                row(f"loadavail_{a.lane}_{a.depth}_{n}_{t}", terms, "<=", 0)

    # -- slot occupancy flow ---------------------------------------------------
    for a in S_B:
        for n in N:
            for t in ts:
                if t == 1:
                    continue
                terms = [(1, nm.occupancy(a, n, t)), (-1, nm.occupancy(a, n, t - 1))]
                for v in V:
                    for c in S_B:
                        t_in = t - tau_l(c, a)
                        if t_in >= 1:
                            terms.append((-1, nm.reshuffle(c, a, n, t_in, v)))
                        terms.append((1, nm.reshuffle(a, c, n, t - 1, v)))
                    terms.append((1, nm.retrieve(a, n, t - 1, v)))
                    t_in = t - tau_l(src, a)
                    if t_in >= 1:
                        terms.append((-1, nm.store(a, n, t_in, v)))
                row(f"occflow_{a.lane}_{a.depth}_{n}_{t}", terms, "=", 0)

    # -- progress accounting ----------------------------------------------------
    for n in N:
        for t in ts:
            terms = [(1, nm.delivered(n, t))]
            for a in S_NS:
                for tp in range(1, t):
                    for v in V:
                        terms.append((-1, nm.retrieve(a, n, tp, v)))
            row(f"deliveredacc_{n}_{t}", terms, "=", 0)
            if t > 1:
                terms = [(1, nm.stored(n, t)), (-1, nm.stored(n, 1))]
                for a in S_B:
                    for tp in range(1, t - tau_l(src, a) + 1):
                        for v in V:
                            terms.append((-1, nm.store(a, n, tp, v)))
                row(f"storedacc_{n}_{t}", terms, "=", 0)

    # -- vehicle flow -------------------------------------------------------------
    for t in ts:
        if t == 1:
            continue
        for v in V:
            for a in S_B:
                terms = [(1, nm.presence(a, t, v)), (-1, nm.presence(a, t - 1, v))]
                t_in = t - tau_l(src, a)
                if t_in >= 1:
                    for n in N:
                        terms.append((-1, nm.store(a, n, t_in, v)))
                for n in N:
                    terms.append((1, nm.retrieve(a, n, t - 1, v)))
                for c in S_B:
                    t_in = t - tau_l(c, a)
                    if t_in >= 1:
                        for n in N:
                            terms.append((-1, nm.reshuffle(c, a, n, t_in, v)))
                    for n in N:
                        terms.append((1, nm.reshuffle(a, c, n, t - 1, v)))
                for c in S_A:
                    t_in = t - tau_e(c, a)
                    if t_in >= 1:
                        terms.append((-1, nm.empty_drive(c, a, t_in, v)))
                    terms.append((1, nm.empty_drive(a, c, t - 1, v)))
                row(f"vehflowbuf_{a.lane}_{a.depth}_{t}_{v}", terms, "=", 0)

            terms = [(1, nm.presence(snk, t, v)), (-1, nm.presence(snk, t - 1, v))]
            for a in S_NS:
                t_in = t - tau_l(a, snk)
                if t_in >= 1:
                    for n in N:
                        terms.append((-1, nm.retrieve(a, n, t_in, v)))
            for a in S_A:
                t_in = t - tau_e(a, snk)
                if t_in >= 1:
                    terms.append((-1, nm.empty_drive(a, snk, t_in, v)))
                terms.append((1, nm.empty_drive(snk, a, t - 1, v)))
            row(f"vehflowsink_{t}_{v}", terms, "=", 0)

            terms = [(1, nm.presence(src, t, v)), (-1, nm.presence(src, t - 1, v))]
            for a in S_B:
                for n in N:
                    terms.append((1, nm.store(a, n, t - 1, v)))
            for n in N:
                terms.append((1, nm.retrieve(src, n, t - 1, v)))
            for a in S_A:
                t_in = t - tau_e(a, src)
                if t_in >= 1:
                    terms.append((-1, nm.empty_drive(a, src, t_in, v)))
                terms.append((1, nm.empty_drive(src, a, t - 1, v)))
            row(f"vehflowsource_{t}_{v}", terms, "=", 0)

    # -- retrieval windows ----------------------------------------------------
    for n in N:
        u = loads[n]
        pre_terms: list[Term] = []
        win_terms: list[Term] = []
        post_terms: list[Term] = []
        for a in S_NS:
            tau = tau_l(a, snk)
            lo = u.due_open - tau
            hi = u.deadline - tau
            for t in ts:
                if t < lo:
                    pre_terms.extend((1, nm.retrieve(a, n, t, v)) for v in V)
                elif t <= hi:
                    win_terms.extend((1, nm.retrieve(a, n, t, v)) for v in V)
                else:
                    post_terms.extend((1, nm.retrieve(a, n, t, v)) for v in V)
        row(f"retrievalpre_{n}", pre_terms, "=", 0)
        if not win_terms:
            raise InstanceError(f"load {n} cannot reach the sink inside its window")
        row(f"retrievalwin_{n}", win_terms, "=", 1)
        row(f"retrievalpost_{n}", post_terms, "=", 0)

    # -- arrival windows --------------------------------------------------------
    for n in N:
        u = loads[n]
        if u.pre_stored:
            terms = [(1, nm.store(a, n, t, v)) for a in S_B for t in ts for v in V]
            row(f"storageprestored_{n}", terms, "=", 0)
            continue
        pre_terms = []
        svc_terms = []
        post_terms = []
        for a in S_B:
            for t in ts:
                if t < u.arrival_open:
                    pre_terms.extend((1, nm.store(a, n, t, v)) for v in V)
                elif t <= u.arrival_close:
                    svc_terms.extend((1, nm.store(a, n, t, v)) for v in V)
                else:
                    post_terms.extend((1, nm.store(a, n, t, v)) for v in V)
        tau = tau_l(src, snk)
        d_lo = max(1, u.due_open - tau)
        d_hi = min(u.deadline - tau, u.arrival_close)
        for t in range(d_lo, min(d_hi, T) + 1):
            svc_terms.extend((1, nm.retrieve(src, n, t, v)) for v in V)
        row(f"storagepre_{n}", pre_terms, "=", 0)
        if not svc_terms:
            raise InstanceError(f"load {n} cannot be serviced inside its arrival window")
        row(f"arrivalsvc_{n}", svc_terms, "=", 1)
        row(f"storagepost_{n}", post_terms, "=", 0)

    # -- one vehicle per buffer lane ---------------------------------------------
    # Each vehicle contributes through its presence variable while parked plus
    # an approach window while driving in, truncated at both the departure and
    # the arrival step so one vehicle can never double-count a step.  Exit
    # windows are omitted: the presence variable already covers the departure
    # step, and anything beyond is covered by the replay checker instead.
    for lane_id, lane_slots in sorted(stacks_by_lane.items()):
        for t in ts:
            terms = []
            for v in V:
                for a in lane_slots:
                    terms.append((1, nm.presence(a, t, v)))
                    span_l = layout.traversal_time(a) + h
                    span_e = layout.traversal_time(a)
                    m = min(span_l, tau_l(src, a))
                    for tp in range(max(1, t - m + 1), t):
                        for n in N:
                            terms.append((1, nm.store(a, n, tp, v)))
                    for c in S_B:
                        m = min(span_l, tau_l(c, a))
                        for tp in range(max(1, t - m + 1), t):
                            for n in N:
                                terms.append((1, nm.reshuffle(c, a, n, tp, v)))
                    for c in S_A:
                        if c == a:
                            continue
                        m = min(span_e, tau_e(c, a))
                        for tp in range(max(1, t - m + 1), t):
                            terms.append((1, nm.empty_drive(c, a, tp, v)))
            row(f"monopoly_{lane_id}_{t}", terms, "<=", 1)

    # -- no reaching past a blocking load ------------------------------------------
    for lane_slots in stacks_by_lane.values():
        for a, above in zip(lane_slots, lane_slots[1:]):
            for k in S_B:
                for t in ts:
                    for v in V:
                        terms = [(1, nm.reshuffle(a, k, n, t, v)) for n in N]
                        terms += [(1, nm.retrieve(a, n, t, v)) for n in N]
                        terms.append((1, nm.empty_drive(a, k, t, v)))
                        terms += [(1, nm.occupancy(above, n, t)) for n in N]
                        row(f"lifo_{a.lane}_{a.depth}_{k.lane}_{k.depth}_{t}_{v}",
                            terms, "<=", 1)

    # -- write ---------------------------------------------------------------------
    lines = ["\\ binary flow model export", "Minimize"]
    obj_terms = _merge(objective)
    if obj_terms:
        text = _fmt_terms(obj_terms)
        words = text.split(" ")
        chunk: list[str] = []
        pieces: list[str] = []
        for w in words:
            chunk.append(w)
            if len(chunk) >= 24:
                pieces.append(" ".join(chunk))
                chunk = []
        if chunk:
            pieces.append(" ".join(chunk))
        lines.append(" obj: " + pieces[0])
        lines.extend("      " + p for p in pieces[1:])
    else:
        lines.append(" obj: 0 " + IPVariableSpace.stored(N[0], 1))
    lines.append("Subject To")
    for r in rows:
        lines.append(f" {r.name}: {_fmt_terms(list(r.terms))} {r.sense} {_fmt_coef(r.rhs)}")
    lines.append("Binaries")
    names = space.names()
    for i in range(0, len(names), 8):
        lines.append(" " + " ".join(names[i:i + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


# -- parsing and substitution -------------------------------------------------

def parse_lp(text: str) -> LPModel:
    objective: list[Term] = []
    rows: list[LPRow] = []
    binaries: set[str] = set()
    section = None
    current: list[str] | None = None

    def close_row() -> None:
        nonlocal current
        if current is None:
            return
        name, body = " ".join(current).split(":", 1)
        for sense in ("<=", ">=", "="):
            if sense in body:
                lhs, rhs = body.rsplit(sense, 1)
                if name.strip() == "obj":
                    objective.extend(_parse_terms(lhs))
                else:
                    rows.append(LPRow(name.strip(), tuple(_parse_terms(lhs)),
                                      sense, float(rhs)))
                break
        else:
            if name.strip() == "obj":
                objective.extend(_parse_terms(body))
            else:
                raise ValueError(f"row without a relation: {name}")
        current = None

    for raw in text.splitlines():
        line = raw.rstrip()
        if not line or line.lstrip().startswith("\\"):
            continue
        stripped = line.strip()
        if stripped in ("Minimize", "Maximize", "Subject To", "Binaries", "End"):
            close_row()
            section = stripped
            continue
        if section in ("Minimize", "Subject To"):
            if ":" in stripped:
                close_row()
                current = [stripped]
            elif current is None:
                raise ValueError(f"continuation without a row: {stripped}")
            else:
                current.append(stripped)
        elif section == "Binaries":
            binaries.update(stripped.split())
    close_row()
    return LPModel(tuple(objective), tuple(rows), frozenset(binaries))


def _parse_terms(text: str) -> list[Term]:
    tokens = text.replace("+", " + ").replace("-", " - ").split()
    terms: list[Term] = []
    sign = 1.0
    coef: float | None = None
    for tok in tokens:
        if tok == "+":
            sign, coef = 1.0, None
        elif tok == "-":
            sign, coef = -1.0, None
        else:
            try:
                value = float(tok)
            except ValueError:
                terms.append((sign * (coef if coef is not None else 1.0), tok))
                sign, coef = 1.0, None
            else:
                coef = value
    return terms


def check_assignment(model: LPModel, assignment: dict[str, float]) -> list[str]:
    """Names of rows the 0/1 assignment violates (absent variables are 0)."""
    failing: list[str] = []
    for r in model.rows:
        val = sum(coef * assignment.get(name, 0) for coef, name in r.terms)
        ok = (val <= r.rhs + 1e-9 if r.sense == "<=" else
              val >= r.rhs - 1e-9 if r.sense == ">=" else
              abs(val - r.rhs) <= 1e-9)
        if not ok:
            failing.append(r.name)
    return failing


def objective_value(model: LPModel, assignment: dict[str, float]) -> float:
    return sum(coef * assignment.get(name, 0) for coef, name in model.objective)


def encode_schedule(instance: Instance, schedule: Schedule) -> dict[str, int]:
    """0/1 assignment for a schedule, with derived state via the recurrences."""
    if instance.time_model == TIME_MODEL_UNIT_MOVE:
        raise InstanceError("unit-move schedules cannot be encoded for the LP export")
    space = IPVariableSpace(instance)
    layout = instance.layout
    h = instance.handling_time
    T = space.horizon
    src = layout.source_slot
    snk = layout.sink_slot
    assign: dict[str, int] = {}

    def tau(a: SlotRef, b: SlotRef, loaded: bool) -> int:
        return travel_time(layout, a, b, loaded, h)

    # Delta streams for the derived families: (effective time, amount).
    b_delta: dict[tuple[SlotRef, int], list[tuple[int, int]]] = {}
    c_delta: dict[tuple[SlotRef, int], list[tuple[int, int]]] = {}
    s_delta: dict[int, list[tuple[int, int]]] = {}
    g_delta: dict[int, list[tuple[int, int]]] = {}

    for u in instance.loads:
        if u.pre_stored:
            b_delta.setdefault((u.initial_slot, u.id), []).append((1, 1))
            s_delta.setdefault(u.id, []).append((1, 1))
    for v0 in range(instance.fleet_size):
        c_delta.setdefault((instance.vehicle_starts[v0], v0 + 1), []).append((1, 1))

    per_vehicle: dict[int, list] = {v: [] for v in range(instance.fleet_size)}
    for e in schedule.entries:
        per_vehicle[e.vehicle].append(e)

    for v0, entries in per_vehicle.items():
        entries.sort(key=lambda e: (e.start, e.end))
        v = v0 + 1
        pos = instance.vehicle_starts[v0]
        for e in entries:
            move = e.move
            t = e.start
            if pos != move.origin:
                leg = tau(pos, move.origin, False)
                t_e = t - leg
                if t_e < 1:
                    raise InstanceError(
                        f"vehicle {v0} cannot reach {move.origin} by t={t}")
                assign[space.empty_drive(pos, move.origin, t_e, v)] = 1
                c_delta.setdefault((pos, v), []).append((t_e + 1, -1))
                c_delta.setdefault((move.origin, v), []).append((t_e + leg, 1))
            dur = tau(move.origin, move.dest, move.loaded)
            if move.kind == MOVE_STORE:
                assign[space.store(move.dest, move.load, t, v)] = 1
                s_delta.setdefault(move.load, []).append((t + dur, 1))
                b_delta.setdefault((move.dest, move.load), []).append((t + dur, 1))
            elif move.kind in (MOVE_RETRIEVE, MOVE_DIRECT):
                assign[space.retrieve(move.origin, move.load, t, v)] = 1
                g_delta.setdefault(move.load, []).append((t + 1, 1))
                if move.kind == MOVE_RETRIEVE:
                    b_delta.setdefault((move.origin, move.load), []).append((t + 1, -1))
            elif move.kind == MOVE_RESHUFFLE:
                assign[space.reshuffle(move.origin, move.dest, move.load, t, v)] = 1
                b_delta.setdefault((move.origin, move.load), []).append((t + 1, -1))
                b_delta.setdefault((move.dest, move.load), []).append((t + dur, 1))
            else:
                assign[space.empty_drive(move.origin, move.dest, t, v)] = 1
            c_delta.setdefault((move.origin, v), []).append((t + 1, -1))
            c_delta.setdefault((move.dest, v), []).append((t + dur, 1))
            pos = move.dest

    def unroll(deltas: list[tuple[int, int]], namer) -> None:
        deltas.sort()
        level = 0
        idx = 0
        for t in range(1, T + 1):
            while idx < len(deltas) and deltas[idx][0] <= t:
                level += deltas[idx][1]
                idx += 1
            if level:
                assign[namer(t)] = level

    for (slot, n), deltas in b_delta.items():
        unroll(deltas, lambda t, slot=slot, n=n: space.occupancy(slot, n, t))
    for (slot, v), deltas in c_delta.items():
        unroll(deltas, lambda t, slot=slot, v=v: space.presence(slot, t, v))
    for n, deltas in s_delta.items():
        unroll(deltas, lambda t, n=n: space.stored(n, t))
    for n, deltas in g_delta.items():
        unroll(deltas, lambda t, n=n: space.delivered(n, t))
    return assign

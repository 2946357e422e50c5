"""Ground-truth optimal solver for desk-size instances.

Uniform-cost search over the exact time-expanded state: buffer stacks, per
load phase, vehicle positions and busy times, and a single-occupant lock per
buffer lane.  Transitions either jump the clock to the next enabling event
or start one legal action for one idle vehicle, so every interleaving of
the fleet is reachable.  Costs are travel distances only, matching the
objective, with an admissible remaining-distance bound for guidance.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from ..model import (
    Instance,
    LANE_BUFFER,
    MOVE_DIRECT,
    MOVE_EMPTY,
    MOVE_RESHUFFLE,
    MOVE_RETRIEVE,
    MOVE_STORE,
    Move,
    Schedule,
    ScheduleEntry,
    SlotRef,
    TIME_MODEL_UNIT_MOVE,
    action_duration,
    distance,
    empty_distance,
    retrieval_start_window,
)

_PARKED = -1   # lane lock release marker: occupant stays until it leaves


@dataclass(frozen=True)
class OracleCaps:
    max_loads: int = 3
    max_buffer_lanes: int = 4
    max_vehicles: int = 2
    max_horizon: int = 40


@dataclass(frozen=True)
class OracleResult:
    status: str                    # "optimal" | "infeasible"
    z_lb: float | None
    schedule: Schedule | None
    expanded: int = 0


def optimality_gap(z_heur: float, z_lb: float) -> float:
    """True gap in percent between a heuristic value and the exact bound."""
    if z_heur <= 0:
        raise ValueError(f"nonpositive heuristic objective {z_heur}")
    if z_lb <= 0:
        raise ValueError(f"nonpositive exact bound {z_lb}")
    if z_heur < z_lb - 1e-9:
        raise ValueError(f"heuristic {z_heur} beats the exact bound {z_lb}")
    return 100.0 * (z_heur - z_lb) / z_heur


# Load phases: ("w",) waiting or at source; ("b", lane, depth) buffered;
# ("f", arrival, lane, depth) in flight; ("d",) delivered.  Sink flights use
# lane = -1.

def brute_force_optimal(instance: Instance, caps: OracleCaps | None = None,
                        expansion_limit: int = 2_000_000) -> OracleResult:
    caps = caps or OracleCaps()
    layout = instance.layout
    buffer_lanes = [l for l in layout.lanes if l.kind == LANE_BUFFER]
    horizon = instance.horizon
    problems = []
    if len(instance.loads) > caps.max_loads:
        problems.append(f"{len(instance.loads)} loads > {caps.max_loads}")
    if len(buffer_lanes) > caps.max_buffer_lanes:
        problems.append(f"{len(buffer_lanes)} buffer lanes > {caps.max_buffer_lanes}")
    if instance.fleet_size > caps.max_vehicles:
        problems.append(f"{instance.fleet_size} vehicles > {caps.max_vehicles}")
    if horizon > caps.max_horizon:
        problems.append(f"horizon {horizon} > {caps.max_horizon}")
    if problems:
        raise ValueError("instance too large for the oracle: " + "; ".join(problems))

    lane_ids = [l.id for l in buffer_lanes]
    lane_pos = {lid: k for k, lid in enumerate(lane_ids)}
    capacity = {l.id: l.capacity for l in buffer_lanes}
    src = layout.source_slot
    snk = layout.sink_slot
    load_ids = sorted(u.id for u in instance.loads)
    load_pos = {n: k for k, n in enumerate(load_ids)}
    by_id = instance.load_by_id

    def tau(a: SlotRef, b: SlotRef, loaded: bool) -> int:
        kind = MOVE_STORE if loaded else MOVE_EMPTY
        return action_duration(instance, kind, a, b)

    d_to_sink = {}
    d_from_src = {}
    for lid in lane_ids:
        for depth in range(1, capacity[lid] + 1):
            s = SlotRef(lid, depth)
            d_to_sink[s] = distance(layout, s, snk)
            d_from_src[s] = distance(layout, src, s)
    d_direct = distance(layout, src, snk)
    via_slot = min((d_from_src[s] + d_to_sink[s] for s in d_to_sink),
                   default=d_direct)
    # Waiting loads that can never ship straight through must pay a stopover.
    w_lb = {}
    for u in instance.loads:
        if u.pre_stored:
            continue
        lo, hi = retrieval_start_window(instance, u, src)
        direct_ok = max(lo, u.arrival_open) <= min(hi, u.arrival_close)
        w_lb[u.id] = d_direct if direct_ok else via_slot
    # Buffered loads whose window at the current slot already closed must
    # relocate at least once before shipping.
    move_on = {}
    for s in d_to_sink:
        best = None
        for s2 in d_to_sink:
            if s2.lane == s.lane:
                continue
            c = distance(layout, s, s2) + d_to_sink[s2]
            if best is None or c < best:
                best = c
        move_on[s] = best if best is not None else d_to_sink[s]

    def heuristic(t: int, statuses: tuple) -> float:
        total = 0.0
        for k, st in enumerate(statuses):
            if st[0] == "w":
                total += w_lb[load_ids[k]]
            elif st[0] == "b":
                slot = SlotRef(st[1], st[2])
                u = by_id[load_ids[k]]
                _, hi = retrieval_start_window(instance, u, slot)
                total += move_on[slot] if t > hi else d_to_sink[slot]
            elif st[0] == "f" and st[1] >= 0 and st[2] >= 0:
                total += d_to_sink[SlotRef(st[2], st[3])]
        return total

    def hopeless(t: int, statuses: tuple) -> bool:
        for k, st in enumerate(statuses):
            u = by_id[load_ids[k]]
            if st[0] == "b":
                lo, hi = retrieval_start_window(instance, u, SlotRef(st[1], st[2]))
                best_hi = hi
                for lid in lane_ids:
                    for depth in range(1, capacity[lid] + 1):
                        _, other = retrieval_start_window(instance, u, SlotRef(lid, depth))
                        best_hi = max(best_hi, other)
                if t > best_hi:
                    return True
            elif st[0] == "w" and t > u.arrival_close:
                return True
        return False

    # Initial state.
    stacks0 = {lid: [] for lid in lane_ids}
    statuses0: list[tuple] = []
    for n in load_ids:
        u = by_id[n]
        if u.pre_stored:
            stacks0[u.initial_slot.lane].append((u.initial_slot.depth, n))
            statuses0.append(("b", u.initial_slot.lane, u.initial_slot.depth))
        else:
            statuses0.append(("w",))
    for lid in lane_ids:
        stacks0[lid].sort()
    stacks_t = tuple(tuple(n for _, n in stacks0[lid]) for lid in lane_ids)
    vehicles0 = tuple((1, s.lane, s.depth) for s in instance.vehicle_starts)
    locks0 = []
    for lid in lane_ids:
        owner = 0
        for v, s in enumerate(instance.vehicle_starts):
            if s.lane == lid:
                owner = v + 1
        locks0.append((owner, _PARKED if owner else 0))
    state0 = (1, stacks_t, tuple(statuses0), vehicles0, tuple(locks0))

    def lane_ok(locks: tuple, lid: int, v: int, t: int) -> bool:
        owner, release = locks[lane_pos[lid]]
        if owner == 0 or owner == v + 1:
            return True
        return release != _PARKED and release < t

    def set_lock(locks: list, lid: int, owner: int, release: int) -> None:
        locks[lane_pos[lid]] = (owner, release)

    def out_release(slot: SlotRef, t: int, loaded: bool) -> int:
        if instance.time_model == TIME_MODEL_UNIT_MOVE:
            return t
        span = layout.traversal_time(slot) + (instance.handling_time if loaded else 0)
        return t + span - 1

    counter = 0
    start_h = heuristic(state0[0], state0[2])
    # Ties on f break toward larger g: zero-cost waits form wide plateaus
    # and depth-first progress across them reaches goals far sooner.
    open_heap = [(start_h, -0.0, counter, state0, None, None)]
    best_g: dict = {state0: 0.0}
    parents: dict = {}
    expanded = 0
    goal_key = None

    while open_heap:
        f, neg_g, _, state, parent, action = heapq.heappop(open_heap)
        g = -neg_g
        if g > best_g.get(state, float("inf")):
            continue
        if state not in parents:
            parents[state] = (parent, action)
        t, stacks, statuses, vehicles, locks = state
        if all(st[0] == "d" for st in statuses):
            goal_key = state
            break
        expanded += 1
        if expanded > expansion_limit:
            raise RuntimeError(f"oracle expansion limit {expansion_limit} hit")
        if hopeless(t, statuses):
            continue

        succs: list[tuple[float, tuple, tuple | None]] = []

        # Advance the clock straight to the next enabling event.  Action
        # legality only switches on at such times (windows opening, locks
        # releasing, vehicles or flights landing), and with a pure distance
        # objective any schedule left-shifts onto them, so intermediate
        # steps never need their own states.
        nt = None

        def note(c: int) -> None:
            nonlocal nt
            if c > t and (nt is None or c < nt):
                nt = c

        for free_at, _, _ in vehicles:
            note(free_at)
        for owner, rel in locks:
            if owner and rel != _PARKED:
                note(rel + 1)
        for k, st in enumerate(statuses):
            u = by_id[load_ids[k]]
            if st[0] == "w":
                note(u.arrival_open)
                lo, _ = retrieval_start_window(instance, u, src)
                note(max(lo, u.arrival_open))
            elif st[0] == "b":
                lo, _ = retrieval_start_window(instance, u, SlotRef(st[1], st[2]))
                note(lo)
            elif st[0] == "f":
                note(st[1])
        if nt is not None and nt <= horizon:
            new_statuses = list(statuses)
            for k, st in enumerate(new_statuses):
                if st[0] == "f" and st[1] <= nt:
                    new_statuses[k] = ("d",) if st[2] < 0 else ("b", st[2], st[3])
            new_locks = tuple((0, 0) if owner and rel != _PARKED and rel < nt else
                              (owner, rel) for owner, rel in locks)
            # Clamping past free times to the new clock merges states that
            # differ only in when a vehicle finished its previous move.
            new_vehicles = tuple((max(fa, nt), lv, dv) for fa, lv, dv in vehicles)
            succs.append((0.0, (nt, stacks, tuple(new_statuses), new_vehicles,
                                new_locks), None))

        for v, (free_at, vl, vd) in enumerate(vehicles):
            if free_at > t:
                continue
            pos = SlotRef(vl, vd)

            def with_vehicle(arrive: int, dest: SlotRef) -> tuple:
                out = list(vehicles)
                out[v] = (arrive, dest.lane, dest.depth)
                return tuple(out)

            if pos == src:
                for k, st in enumerate(statuses):
                    if st[0] != "w":
                        continue
                    u = by_id[load_ids[k]]
                    if not (u.arrival_open <= t <= u.arrival_close):
                        continue
                    # Store into the shallowest free slot of each lane.
                    for li, lid in enumerate(lane_ids):
                        depth = len(stacks[li]) + 1
                        if depth > capacity[lid] or not lane_ok(locks, lid, v, t):
                            continue
                        dest = SlotRef(lid, depth)
                        move_tau = tau(src, dest, True)
                        new_stacks = list(stacks)
                        new_stacks[li] = stacks[li] + (load_ids[k],)
                        new_statuses = list(statuses)
                        new_statuses[k] = ("f", t + move_tau, lid, depth)
                        new_locks = list(locks)
                        set_lock(new_locks, lid, v + 1, _PARKED)
                        succs.append((
                            distance(layout, src, dest),
                            (t, tuple(new_stacks), tuple(new_statuses),
                             with_vehicle(t + move_tau, dest), tuple(new_locks)),
                            (MOVE_STORE, load_ids[k], src, dest, t, v, move_tau)))
                    lo, hi = retrieval_start_window(instance, u, src)
                    if max(lo, u.arrival_open) <= t <= min(hi, u.arrival_close):
                        move_tau = tau(src, snk, True)
                        new_statuses = list(statuses)
                        new_statuses[k] = ("f", t + move_tau, -1, -1)
                        succs.append((
                            d_direct,
                            (t, stacks, tuple(new_statuses),
                             with_vehicle(t + move_tau, snk), locks),
                            (MOVE_DIRECT, load_ids[k], src, snk, t, v, move_tau)))
            elif vl in lane_pos:
                li = lane_pos[vl]
                stack = stacks[li]
                if stack and vd == len(stack):
                    n = stack[-1]
                    k = load_pos[n]
                    if statuses[k][0] == "b":
                        u = by_id[n]
                        origin = SlotRef(vl, vd)
                        lo, hi = retrieval_start_window(instance, u, origin)
                        if lo <= t <= hi:
                            move_tau = tau(origin, snk, True)
                            new_stacks = list(stacks)
                            new_stacks[li] = stack[:-1]
                            new_statuses = list(statuses)
                            new_statuses[k] = ("f", t + move_tau, -1, -1)
                            new_locks = list(locks)
                            set_lock(new_locks, vl, v + 1, out_release(origin, t, True))
                            succs.append((
                                d_to_sink[origin],
                                (t, tuple(new_stacks), tuple(new_statuses),
                                 with_vehicle(t + move_tau, snk), tuple(new_locks)),
                                (MOVE_RETRIEVE, n, origin, snk, t, v, move_tau)))
                        for lj, lid2 in enumerate(lane_ids):
                            if lid2 == vl:
                                continue
                            depth2 = len(stacks[lj]) + 1
                            if depth2 > capacity[lid2] or not lane_ok(locks, lid2, v, t):
                                continue
                            dest = SlotRef(lid2, depth2)
                            move_tau = tau(origin, dest, True)
                            new_stacks = list(stacks)
                            new_stacks[li] = stack[:-1]
                            new_stacks[lj] = stacks[lj] + (n,)
                            new_statuses = list(statuses)
                            new_statuses[k] = ("f", t + move_tau, lid2, depth2)
                            new_locks = list(locks)
                            set_lock(new_locks, vl, v + 1, out_release(origin, t, True))
                            set_lock(new_locks, lid2, v + 1, _PARKED)
                            succs.append((
                                distance(layout, origin, dest),
                                (t, tuple(new_stacks), tuple(new_statuses),
                                 with_vehicle(t + move_tau, dest), tuple(new_locks)),
                                (MOVE_RESHUFFLE, n, origin, dest, t, v, move_tau)))

            # Empty repositioning.  Pickup points are always worth reaching;
            # refuge spots (sink, free slots) only pay off when the vehicle
            # currently blocks a lane, since a vehicle at the source or sink
            # blocks nothing and a later direct drive is never longer.
            in_lane = vl in lane_pos
            targets: list[SlotRef] = []
            if any(st[0] == "w" for st in statuses):
                targets.append(src)
            if in_lane:
                targets.append(snk)
            for li, lid in enumerate(lane_ids):
                depth = len(stacks[li])
                if depth and statuses[load_pos[stacks[li][-1]]][0] == "b":
                    targets.append(SlotRef(lid, depth))
                if in_lane and depth < capacity[lid]:
                    targets.append(SlotRef(lid, depth + 1))
            for dest in targets:
                if dest == pos:
                    continue
                if dest.lane in lane_pos and not lane_ok(locks, dest.lane, v, t):
                    continue
                move_tau = tau(pos, dest, False)
                new_locks = list(locks)
                if vl in lane_pos:
                    set_lock(new_locks, vl, v + 1, out_release(pos, t, False))
                if dest.lane in lane_pos:
                    set_lock(new_locks, dest.lane, v + 1, _PARKED)
                succs.append((
                    empty_distance(layout, pos, dest),
                    (t, stacks, statuses, with_vehicle(t + move_tau, dest),
                     tuple(new_locks)),
                    (MOVE_EMPTY, None, pos, dest, t, v, move_tau)))

        for cost, succ, act in succs:
            ng = g + cost
            if ng < best_g.get(succ, float("inf")) - 1e-12:
                best_g[succ] = ng
                counter += 1
                nh = heuristic(succ[0], succ[2])
                heapq.heappush(open_heap, (ng + nh, -ng, counter, succ, state, act))

    if goal_key is None:
        return OracleResult("infeasible", None, None, expanded)

    # Rebuild the action sequence.
    actions = []
    cursor = goal_key
    while cursor is not None:
        parent, action = parents[cursor]
        if action is not None:
            actions.append(action)
        cursor = parent
    actions.reverse()
    entries = []
    for kind, load, origin, dest, start, v, move_tau in actions:
        move = Move(kind, load, origin, dest, move_tau)
        entries.append(ScheduleEntry(move=move, vehicle=v, start=start,
                                     end=start + move_tau))
    entries.sort(key=lambda e: (e.start, e.vehicle))
    z = best_g[goal_key]
    schedule = Schedule(entries=tuple(entries), objective_distance=z,
                        total_tardiness=0)
    return OracleResult("optimal", z, schedule, expanded)

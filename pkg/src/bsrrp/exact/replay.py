"""Replays a schedule against the discrete flow model, family by family.

Every schedule entry is simulated on the time grid: loads leave their origin
one step after an action starts and reach the destination with the action's
travel time; vehicles do the same and then sit at the destination lane until
their next start.  Each constraint family is evaluated independently so a
report names the first offending step per family.

Strict mode enforces both bounds of every window.  Relaxed mode keeps the
physical bounds hard (nothing is picked up before it arrives, nothing reaches
the sink after its deadline) but tolerates and counts internal flexibility:
storage starts after the arrival window closes and deliveries that reach the
sink before the retrieval window opens.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any

from ..model import (
    Instance,
    InstanceError,
    LANE_BUFFER,
    LANE_SINK,
    LANE_SOURCE,
    MOVE_DIRECT,
    MOVE_RESHUFFLE,
    MOVE_RETRIEVE,
    MOVE_STORE,
    Schedule,
    ScheduleEntry,
    SlotRef,
    TIME_MODEL_UNIT_MOVE,
    action_duration,
    retrieval_start_window,
)

FAMILY_SLOT_CAPACITY = "slot-capacity"
FAMILY_DENSE = "dense-storage"
FAMILY_AVAILABILITY = "availability"
FAMILY_PRESENCE = "presence"
FAMILY_RETRIEVAL_WINDOW = "retrieval-window"
FAMILY_ARRIVAL_WINDOW = "arrival-window"
FAMILY_MONOPOLY = "lane-monopoly"
FAMILY_LIFO = "lifo"

ALL_FAMILIES = (
    FAMILY_SLOT_CAPACITY,
    FAMILY_DENSE,
    FAMILY_AVAILABILITY,
    FAMILY_PRESENCE,
    FAMILY_RETRIEVAL_WINDOW,
    FAMILY_ARRIVAL_WINDOW,
    FAMILY_MONOPOLY,
    FAMILY_LIFO,
)


@dataclass(frozen=True)
class Violation:
    family: str
    t: int
    indices: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "t": self.t, "indices": dict(self.indices)}


@dataclass(frozen=True)
class FeasibilityReport:
    status: str                      # "feasible" | "infeasible"
    violations: tuple[Violation, ...]
    relaxed_task_count: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "feasible"

    def families(self) -> set[str]:
        return {v.family for v in self.violations}

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "violations": [v.to_dict() for v in self.violations],
            "relaxed_task_count": self.relaxed_task_count,
        }


@dataclass
class ReplayState:
    """Mutable world state while stepping through the entries."""

    stacks: dict[int, list[int]]                 # buffer lane -> loads, deep first
    load_at: dict[int, SlotRef | None]           # slot, or None when not in a slot
    picked: set[int]                             # loads currently carried
    delivered: set[int]
    stored_once: dict[int, int]                  # load -> count of storage starts
    retrieved_once: dict[int, int]               # load -> count of delivery starts


def _structural_check(instance: Instance, schedule: Schedule) -> None:
    slots = set(instance.layout.slots)
    for e in schedule.entries:
        if e.move.load is not None and e.move.load not in instance.load_by_id:
            raise InstanceError(f"schedule references unknown load {e.move.load}")
        if e.move.origin not in slots or e.move.dest not in slots:
            raise InstanceError(f"schedule references unknown slot in {e.move}")
        if not 0 <= e.vehicle < instance.fleet_size:
            raise InstanceError(f"schedule references unknown vehicle {e.vehicle}")
        if e.end < e.start:
            raise InstanceError(f"entry ends before it starts: {e}")


def _entry_tau(instance: Instance, entry: ScheduleEntry) -> int:
    return action_duration(instance, entry.move.kind, entry.move.origin, entry.move.dest)


def _sim_horizon(instance: Instance, schedule: Schedule) -> int:
    last = max((e.end for e in schedule.entries), default=1)
    deepest = max((l.capacity for l in instance.layout.lanes), default=1)
    return last + deepest + instance.handling_time + 1


def _window_steps(instance: Instance, slot: SlotRef, t: int, loaded: bool,
                  incoming: bool) -> range:
    """Lane-blocking steps charged to an action touching ``slot`` at ``t``.

    An action holds the lane from its start for the lane traversal time plus
    handling when loaded; an outgoing action's start step is already covered
    by the vehicle's presence, so it is excluded.  Under the unit-move model
    empty drives are instantaneous and loaded moves hold only their start.
    """
    if instance.time_model == TIME_MODEL_UNIT_MOVE:
        if loaded and incoming:
            return range(t, t + 1)
        return range(t, t)
    span = instance.layout.traversal_time(slot)
    if loaded:
        span += instance.handling_time
    if incoming:
        return range(t, t + span)
    return range(t + 1, t + span)


def _vehicle_lane_steps(instance: Instance, schedule: Schedule,
                        horizon: int) -> dict[int, dict[int, set[int]]]:
    """Buffer-lane steps each vehicle occupies: parked presence plus windows."""
    layout = instance.layout
    buffer_ids = {l.id for l in layout.lanes if l.kind == LANE_BUFFER}
    usage: dict[int, dict[int, set[int]]] = {v: {} for v in range(instance.fleet_size)}

    def charge(vehicle: int, lane: int, steps: range) -> None:
        if lane in buffer_ids and len(steps):
            usage[vehicle].setdefault(lane, set()).update(steps)

    per_vehicle: dict[int, list[ScheduleEntry]] = {v: [] for v in range(instance.fleet_size)}
    for e in schedule.entries:
        per_vehicle[e.vehicle].append(e)
    for vehicle, entries in per_vehicle.items():
        entries.sort(key=lambda e: (e.start, e.end))
        pos = instance.vehicle_starts[vehicle]
        arrived = 1
        for e in entries:
            charge(vehicle, pos.lane, range(arrived, min(e.start, horizon) + 1))
            charge(vehicle, e.move.origin.lane,
                   _window_steps(instance, e.move.origin, e.start, e.move.loaded, False))
            charge(vehicle, e.move.dest.lane,
                   _window_steps(instance, e.move.dest, e.start, e.move.loaded, True))
            pos = e.move.dest
            arrived = e.start + _entry_tau(instance, e)
        charge(vehicle, pos.lane, range(arrived, horizon + 1))
    return usage


def lane_usage_windows(instance: Instance, schedule: Schedule) -> dict[tuple[int, int], frozenset[int]]:
    """(lane, t) -> vehicles occupying it, from closed-form window ranges."""
    horizon = _sim_horizon(instance, schedule)
    out: dict[tuple[int, int], set[int]] = {}
    for vehicle, lanes in _vehicle_lane_steps(instance, schedule, horizon).items():
        for lane, steps in lanes.items():
            for t in steps:
                out.setdefault((lane, t), set()).add(vehicle)
    return {k: frozenset(v) for k, v in out.items()}


def lane_usage_scan(instance: Instance, schedule: Schedule) -> dict[tuple[int, int], frozenset[int]]:
    """Same map as :func:`lane_usage_windows`, by brute per-step predicate scan."""
    layout = instance.layout
    buffer_ids = {l.id for l in layout.lanes if l.kind == LANE_BUFFER}
    horizon = _sim_horizon(instance, schedule)
    unit = instance.time_model == TIME_MODEL_UNIT_MOVE
    h = instance.handling_time

    per_vehicle: dict[int, list[ScheduleEntry]] = {v: [] for v in range(instance.fleet_size)}
    for e in schedule.entries:
        per_vehicle[e.vehicle].append(e)
    for entries in per_vehicle.values():
        entries.sort(key=lambda e: (e.start, e.end))

    out: dict[tuple[int, int], set[int]] = {}
    for t in range(1, horizon + 1):
        for vehicle, entries in per_vehicle.items():
            lanes_here: set[int] = set()
            pos = instance.vehicle_starts[vehicle]
            arrived = 1
            for e in entries:
                if arrived <= t <= e.start and pos.lane in buffer_ids:
                    lanes_here.add(pos.lane)
                o, d = e.move.origin, e.move.dest
                if e.move.loaded:
                    if not unit:
                        if o.lane in buffer_ids and \
                                e.start < t < e.start + layout.traversal_time(o) + h:
                            lanes_here.add(o.lane)
                        if d.lane in buffer_ids and \
                                e.start <= t < e.start + layout.traversal_time(d) + h:
                            lanes_here.add(d.lane)
                    elif d.lane in buffer_ids and t == e.start:
                        lanes_here.add(d.lane)
                elif not unit:
                    if o.lane in buffer_ids and \
                            e.start < t < e.start + layout.traversal_time(o):
                        lanes_here.add(o.lane)
                    if d.lane in buffer_ids and \
                            e.start <= t < e.start + layout.traversal_time(d):
                        lanes_here.add(d.lane)
                pos = e.move.dest
                arrived = e.start + _entry_tau(instance, e)
            if entries:
                if arrived <= t and pos.lane in buffer_ids:
                    lanes_here.add(pos.lane)
            elif pos.lane in buffer_ids:
                lanes_here.add(pos.lane)
            for lane in lanes_here:
                out.setdefault((lane, t), set()).add(vehicle)
    return {k: frozenset(v) for k, v in out.items()}


def replay_validate(instance: Instance, schedule: Schedule,
                    mode: str = "strict") -> FeasibilityReport:
    if mode not in ("strict", "relaxed"):
        raise ValueError(f"unknown replay mode {mode!r}")
    relaxed = mode == "relaxed"
    _structural_check(instance, schedule)
    layout = instance.layout
    violations: list[Violation] = []
    relaxed_count = 0

    def flag(family: str, t: int, **indices: int) -> None:
        violations.append(Violation(family, t, dict(indices)))

    # -- vehicle presence (timing of implicit repositioning) ---------------
    per_vehicle: dict[int, list[ScheduleEntry]] = {v: [] for v in range(instance.fleet_size)}
    for e in schedule.entries:
        per_vehicle[e.vehicle].append(e)
    for vehicle, entries in per_vehicle.items():
        entries.sort(key=lambda e: (e.start, e.end))
        pos = instance.vehicle_starts[vehicle]
        free = 1
        for e in entries:
            gap = 0 if pos == e.move.origin else \
                action_duration(instance, "empty", pos, e.move.origin)
            if e.start < free + gap:
                flag(FAMILY_PRESENCE, e.start, vehicle=vehicle,
                     lane=e.move.origin.lane, depth=e.move.origin.depth)
            pos = e.move.dest
            free = e.start + _entry_tau(instance, e)

    # -- load flow, stacking, windows ---------------------------------------
    state = ReplayState(
        stacks={l.id: [] for l in layout.lanes if l.kind == LANE_BUFFER},
        load_at={},
        picked=set(),
        delivered=set(),
        stored_once={u.id: 0 for u in instance.loads},
        retrieved_once={u.id: 0 for u in instance.loads},
    )
    for u in instance.loads:
        if u.pre_stored:
            state.stacks[u.initial_slot.lane].append((u.initial_slot.depth, u.id))
            state.load_at[u.id] = u.initial_slot
    for lane, items in state.stacks.items():
        items.sort()
        state.stacks[lane] = [load for _, load in items]

    # Start events interleaved with arrival events, in time order.  At the
    # same step an arrival lands before any start: an inbound load or vehicle
    # becomes usable at exactly its arrival step.
    pending: list[tuple[int, int, int, str, ScheduleEntry]] = []
    for i, e in enumerate(sorted(schedule.entries, key=lambda e: (e.start, e.end))):
        pending.append((e.start, 1, i, "start", e))
    heapq.heapify(pending)
    counter = len(pending)

    def lane_of(slot: SlotRef) -> str:
        return layout.lane_by_id[slot.lane].kind

    def accessible(slot: SlotRef) -> bool:
        return len(state.stacks[slot.lane]) <= slot.depth

    while pending:
        t, _, _, what, e = heapq.heappop(pending)
        move = e.move
        load = move.load
        if what == "arrive":
            if move.kind in (MOVE_STORE, MOVE_RESHUFFLE):
                stack = state.stacks[move.dest.lane]
                cap = layout.lane_by_id[move.dest.lane].capacity
                if len(stack) >= cap or move.dest.depth <= len(stack):
                    flag(FAMILY_SLOT_CAPACITY, t, lane=move.dest.lane,
                         depth=move.dest.depth, load=load)
                else:
                    if move.dest.depth != len(stack) + 1:
                        flag(FAMILY_DENSE, t, lane=move.dest.lane,
                             depth=move.dest.depth, load=load)
                    stack.append(load)
                    state.load_at[load] = move.dest
                state.picked.discard(load)
            elif move.kind in (MOVE_RETRIEVE, MOVE_DIRECT):
                state.picked.discard(load)
                state.delivered.add(load)
            continue

        # A start event.
        if not move.loaded:
            # Empty repositioning: lane access legality only.
            for slot in (move.origin, move.dest):
                if lane_of(slot) == LANE_BUFFER and not accessible(slot):
                    flag(FAMILY_LIFO, t, lane=slot.lane, depth=slot.depth)
            continue

        u = instance.load_by_id[load]
        tau = _entry_tau(instance, e)
        if move.kind in (MOVE_STORE, MOVE_DIRECT):
            taken = (u.pre_stored or state.load_at.get(load) is not None
                     or load in state.picked or load in state.delivered
                     or state.stored_once[load] + state.retrieved_once[load] > 0)
            if lane_of(move.origin) != LANE_SOURCE or taken:
                flag(FAMILY_AVAILABILITY, t, load=load, lane=move.origin.lane)
            if t < u.arrival_open:
                flag(FAMILY_ARRIVAL_WINDOW, t, load=load)
            elif t > u.arrival_close:
                if relaxed:
                    relaxed_count += 1
                else:
                    flag(FAMILY_ARRIVAL_WINDOW, t, load=load)
            state.picked.add(load)
            arrive_ok = True
            if move.kind == MOVE_STORE:
                state.stored_once[load] += 1
                if lane_of(move.dest) != LANE_BUFFER:
                    flag(FAMILY_AVAILABILITY, t, load=load, lane=move.dest.lane)
                    arrive_ok = False
            else:
                state.retrieved_once[load] += 1
                lo, hi = retrieval_start_window(instance, u, move.origin)
                if t > hi:
                    flag(FAMILY_RETRIEVAL_WINDOW, t, load=load)
                elif t < lo:
                    if relaxed:
                        relaxed_count += 1
                    else:
                        flag(FAMILY_RETRIEVAL_WINDOW, t, load=load)
                if lane_of(move.dest) != LANE_SINK:
                    flag(FAMILY_AVAILABILITY, t, load=load, lane=move.dest.lane)
            if arrive_ok:
                heapq.heappush(pending, (t + tau, 0, counter, "arrive", e))
                counter += 1
        elif move.kind in (MOVE_RETRIEVE, MOVE_RESHUFFLE):
            here = state.load_at.get(load)
            if here != move.origin or lane_of(move.origin) != LANE_BUFFER:
                flag(FAMILY_AVAILABILITY, t, load=load,
                     lane=move.origin.lane, depth=move.origin.depth)
            else:
                stack = state.stacks[move.origin.lane]
                if stack and stack[-1] != load:
                    flag(FAMILY_LIFO, t, lane=move.origin.lane,
                         depth=move.origin.depth, load=load)
                stack.remove(load)
                state.load_at[load] = None
            state.picked.add(load)
            arrive_ok = True
            if move.kind == MOVE_RETRIEVE:
                state.retrieved_once[load] += 1
                lo, hi = retrieval_start_window(instance, u, move.origin)
                if t > hi:
                    flag(FAMILY_RETRIEVAL_WINDOW, t, load=load)
                elif t < lo:
                    if relaxed:
                        relaxed_count += 1
                    else:
                        flag(FAMILY_RETRIEVAL_WINDOW, t, load=load)
                if lane_of(move.dest) != LANE_SINK:
                    flag(FAMILY_AVAILABILITY, t, load=load, lane=move.dest.lane)
            elif lane_of(move.dest) != LANE_BUFFER:
                flag(FAMILY_AVAILABILITY, t, load=load, lane=move.dest.lane)
                arrive_ok = False
            if arrive_ok:
                heapq.heappush(pending, (t + tau, 0, counter, "arrive", e))
                counter += 1
        else:
            raise InstanceError(f"unknown move kind {move.kind!r}")

    # -- service completeness ------------------------------------------------
    for u in instance.loads:
        if state.retrieved_once[u.id] != 1:
            flag(FAMILY_RETRIEVAL_WINDOW, u.deadline, load=u.id)
        if not u.pre_stored and state.stored_once[u.id] + state.retrieved_once[u.id] < 1:
            flag(FAMILY_ARRIVAL_WINDOW, u.arrival_close, load=u.id)
        if state.stored_once[u.id] > 1:
            flag(FAMILY_AVAILABILITY, u.arrival_open, load=u.id)

    # -- lane monopoly --------------------------------------------------------
    first_clash: dict[int, tuple[int, tuple[int, ...]]] = {}
    for (lane, t), vehicles in lane_usage_windows(instance, schedule).items():
        if len(vehicles) > 1 and (lane not in first_clash or t < first_clash[lane][0]):
            first_clash[lane] = (t, tuple(sorted(vehicles)))
    for lane, (t, vs) in sorted(first_clash.items()):
        flag(FAMILY_MONOPOLY, t, lane=lane, vehicle=vs[0], other=vs[1])

    # First violation per family.
    first: dict[str, Violation] = {}
    for v in sorted(violations, key=lambda v: (v.t, v.family)):
        first.setdefault(v.family, v)
    ordered = tuple(sorted(first.values(), key=lambda v: (v.t, v.family)))
    status = "feasible" if not ordered else "infeasible"
    return FeasibilityReport(status=status, violations=ordered,
                             relaxed_task_count=relaxed_count)

"""Post-scheduling collision repair at lane granularity.

A vehicle is parked at its last destination lane from a task's end until its
next start; two vehicles may never occupy one buffer lane at the same time.
Conflicts are resolved in ascending order of the incoming task's start by
(1) shifting the parked vehicle's next departure earlier, (2) evicting the
parked vehicle, preferring its next start location, then a free lane, then
the sink, (3) delaying the incoming task and propagating downstream.
Symmetric head-on pairs are dissolved first by swapping the two future
schedules, which is cost neutral for a homogeneous fleet.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .model import (
    Instance,
    LANE_BUFFER,
    MOVE_DIRECT,
    MOVE_EVICT,
    MOVE_RETRIEVE,
    MOVE_STORE,
    Move,
    Schedule,
    ScheduleEntry,
    SlotRef,
    travel_time,
)
from .scheduler import schedule_distance

_FOREVER = None  # open parked interval


class RepairError(RuntimeError):
    """Conflict that cannot be resolved without breaking a hard window."""


@dataclass(frozen=True)
class SpatialConflict:
    lane: int
    parked_vehicle: int
    incoming_vehicle: int
    parked_from: int
    parked_until: int | None
    incoming_start: int
    incoming_end: int
    kind: str   # "parked-task", "parked-parked", "task-task", "head-on"


@dataclass(frozen=True)
class RepairAction:
    kind: str   # "reschedule", "evict", "delay", "swap"
    vehicle: int
    detail: str


@dataclass
class _Rec:
    seq: float
    move: Move
    vehicle: int
    start: int
    end: int


@dataclass
class _Parked:
    vehicle: int
    lane: int
    slot: SlotRef
    from_t: int
    until: int | None      # next task start, or None when parked forever
    next_i: int | None     # index of the vehicle's next record
    prev_i: int | None


def _buffer_ids(instance: Instance) -> set[int]:
    return {l.id for l in instance.layout.lanes if l.kind == LANE_BUFFER}


def _lane_spans(rec: _Rec, instance: Instance, buffer_ids: set[int]) -> list[tuple[int, int, int]]:
    """Buffer-lane occupancy of one entry as (lane, start, end) spans.

    Loaded tasks block both endpoints for their whole interval.  Empty
    drives only pass through: they block each lane for its traversal time
    from the drive's start, mirroring the occupancy windows the exact
    replay charges for explicit repositioning.
    """
    spans = []
    layout = instance.layout
    if rec.move.loaded:
        for lane in dict.fromkeys((rec.move.origin.lane, rec.move.dest.lane)):
            if lane in buffer_ids:
                spans.append((lane, rec.start, rec.end))
    else:
        if rec.move.origin.lane in buffer_ids:
            spans.append((rec.move.origin.lane, rec.start,
                          rec.start + layout.traversal_time(rec.move.origin)))
        if rec.move.dest.lane in buffer_ids and rec.move.dest.lane != rec.move.origin.lane:
            spans.append((rec.move.dest.lane, rec.start,
                          rec.start + layout.traversal_time(rec.move.dest)))
    return spans


def _parked_intervals(recs: list[_Rec], instance: Instance,
                      buffer_ids: set[int]) -> list[_Parked]:
    out: list[_Parked] = []
    by_vehicle: dict[int, list[int]] = {}
    for i, r in enumerate(recs):
        by_vehicle.setdefault(r.vehicle, []).append(i)
    for vehicle in range(instance.fleet_size):
        idxs = sorted(by_vehicle.get(vehicle, []), key=lambda i: recs[i].seq)
        start_slot = instance.vehicle_starts[vehicle]
        if not idxs:
            if start_slot.lane in buffer_ids:
                out.append(_Parked(vehicle, start_slot.lane, start_slot, 1, _FOREVER, None, None))
            continue
        # A parked vehicle still occupies its lane on the step its next task
        # starts, so intervals stay half-open at next start + 1.
        first = recs[idxs[0]]
        if start_slot.lane in buffer_ids:
            out.append(_Parked(vehicle, start_slot.lane, start_slot, 1,
                               first.start + 1, idxs[0], None))
        for a, b in zip(idxs, idxs[1:]):
            ra, rb = recs[a], recs[b]
            if ra.move.dest.lane in buffer_ids:
                out.append(_Parked(vehicle, ra.move.dest.lane, ra.move.dest,
                                   ra.end, rb.start + 1, b, a))
        last = recs[idxs[-1]]
        if last.move.dest.lane in buffer_ids:
            out.append(_Parked(vehicle, last.move.dest.lane, last.move.dest,
                               last.end, _FOREVER, None, idxs[-1]))
    return out


def _overlap(a0: int, a1: int | None, b0: int, b1: int | None) -> bool:
    hi_a = float("inf") if a1 is None else a1
    hi_b = float("inf") if b1 is None else b1
    return a0 < hi_b and b0 < hi_a


def _find_conflicts(recs: list[_Rec], instance: Instance) -> list[SpatialConflict]:
    buffer_ids = _buffer_ids(instance)
    parked = _parked_intervals(recs, instance, buffer_ids)
    conflicts: list[SpatialConflict] = []
    spans = [(i, lane, s, e) for i, r in enumerate(recs)
             for lane, s, e in _lane_spans(r, instance, buffer_ids)]
    for p in parked:
        for i, lane, s, e in spans:
            r = recs[i]
            if lane != p.lane or r.vehicle == p.vehicle:
                continue
            if _overlap(p.from_t, p.until, s, e):
                conflicts.append(SpatialConflict(
                    lane=lane, parked_vehicle=p.vehicle, incoming_vehicle=r.vehicle,
                    parked_from=p.from_t, parked_until=p.until,
                    incoming_start=r.start, incoming_end=e, kind="parked-task"))
    for x in range(len(parked)):
        for y in range(x + 1, len(parked)):
            a, b = parked[x], parked[y]
            if a.lane == b.lane and a.vehicle != b.vehicle and \
                    _overlap(a.from_t, a.until, b.from_t, b.until):
                late = a if a.from_t >= b.from_t else b
                early = b if late is a else a
                conflicts.append(SpatialConflict(
                    lane=a.lane, parked_vehicle=early.vehicle, incoming_vehicle=late.vehicle,
                    parked_from=early.from_t, parked_until=early.until,
                    incoming_start=late.from_t,
                    incoming_end=late.until if late.until is not None else late.from_t,
                    kind="parked-parked"))
    for ix in range(len(spans)):
        for iy in range(ix + 1, len(spans)):
            i, lane_i, s_i, e_i = spans[ix]
            j, lane_j, s_j, e_j = spans[iy]
            if lane_i != lane_j or recs[i].vehicle == recs[j].vehicle:
                continue
            if _overlap(s_i, e_i, s_j, e_j):
                late = (j, s_j, e_j) if s_j >= s_i else (i, s_i, e_i)
                early = (i, s_i, e_i) if late[0] == j else (j, s_j, e_j)
                conflicts.append(SpatialConflict(
                    lane=lane_i, parked_vehicle=recs[early[0]].vehicle,
                    incoming_vehicle=recs[late[0]].vehicle,
                    parked_from=early[1], parked_until=early[2],
                    incoming_start=late[1], incoming_end=late[2], kind="task-task"))
    conflicts.sort(key=lambda c: (c.incoming_start, c.lane, c.parked_vehicle,
                                  c.incoming_vehicle, c.kind))
    return conflicts


def verify_collision_free(schedule: Schedule, instance: Instance) -> list[SpatialConflict]:
    """All lane co-occupancy findings, head-on pairs marked as such."""
    recs = _to_recs(schedule)
    conflicts = _find_conflicts(recs, instance)
    pairs = _head_on_pairs(recs, instance)
    if pairs:
        marked = []
        swap_members = {(a.vehicle, b.vehicle) for a, b in pairs} | \
                       {(b.vehicle, a.vehicle) for a, b in pairs}
        for c in conflicts:
            if (c.parked_vehicle, c.incoming_vehicle) in swap_members and \
                    c.kind == "parked-task":
                c = replace(c, kind="head-on")
            marked.append(c)
        conflicts = marked
    return conflicts


def _head_on_pairs(recs: list[_Rec], instance: Instance) -> list[tuple[_Parked, _Parked]]:
    """Mutual blocks: v1 parked in A must enter B, v2 parked in B must enter A."""
    buffer_ids = _buffer_ids(instance)
    parked = _parked_intervals(recs, instance, buffer_ids)
    pairs = []
    for x in range(len(parked)):
        for y in range(len(parked)):
            a, b = parked[x], parked[y]
            if x >= y or a.vehicle == b.vehicle:
                continue
            if a.next_i is None or b.next_i is None:
                continue
            na, nb = recs[a.next_i], recs[b.next_i]
            if na.move.origin.lane != b.lane or nb.move.origin.lane != a.lane:
                continue
            # Each next task starts while the other vehicle still sits there.
            if _overlap(b.from_t, b.until, na.start, na.end) and \
                    _overlap(a.from_t, a.until, nb.start, nb.end):
                pairs.append((a, b))
    return pairs


def _to_recs(schedule: Schedule) -> list[_Rec]:
    return [_Rec(seq=float(i), move=e.move, vehicle=e.vehicle, start=e.start, end=e.end)
            for i, e in enumerate(schedule.entries)]


def _hard_earliest(move: Move, instance: Instance) -> int:
    if move.load is not None and move.kind in (MOVE_STORE, MOVE_DIRECT):
        return max(1, instance.load_by_id[move.load].arrival_open)
    return 1


def _gap(instance: Instance, a: SlotRef, b: SlotRef) -> int:
    if a == b:
        return 0
    return travel_time(instance.layout, a, b, False, instance.handling_time)


def _retime(recs: list[_Rec], instance: Instance, floors: dict[float, int]) -> None:
    """Recompute starts in seq order from the given floors upward.

    Constraints pushed through: vehicle chains with empty transitions, load
    flow (a load is placed before it is removed), lane mutual exclusion
    against already retimed entries, and storage arrival openings.
    """
    buffer_ids = _buffer_ids(instance)
    order = sorted(range(len(recs)), key=lambda i: recs[i].seq)
    last_of_vehicle: dict[int, int] = {}
    last_of_load: dict[int, int] = {}
    intervals: dict[int, list[tuple[int, int]]] = {}
    for i in order:
        r = recs[i]
        dur = r.end - r.start
        s = max(floors.get(r.seq, r.start), _hard_earliest(r.move, instance))
        prev_i = last_of_vehicle.get(r.vehicle)
        if prev_i is None:
            s = max(s, 1 + _gap(instance, instance.vehicle_starts[r.vehicle], r.move.origin))
        else:
            prev = recs[prev_i]
            s = max(s, prev.end + _gap(instance, prev.move.dest, r.move.origin))
        if r.move.load is not None:
            flow_i = last_of_load.get(r.move.load)
            if flow_i is not None:
                s = max(s, recs[flow_i].end)
        lanes = [lane for lane, _, _ in _lane_spans(r, instance, buffer_ids)]
        moved = True
        while moved:
            moved = False
            probe = _Rec(r.seq, r.move, r.vehicle, s, s + dur)
            for lane, a, b in _lane_spans(probe, instance, buffer_ids):
                for c, d in intervals.get(lane, ()):
                    if a < d and c < b:
                        s = s + (d - a)
                        moved = True
        r.start = s
        r.end = s + dur
        last_of_vehicle[r.vehicle] = i
        if r.move.load is not None:
            last_of_load[r.move.load] = i
        for lane, a, b in _lane_spans(r, instance, buffer_ids):
            intervals.setdefault(lane, []).append((a, b))


def _hard_breaches(recs: list[_Rec], instance: Instance) -> list[tuple[float, int, int, int]]:
    out = []
    for r in recs:
        if r.move.load is not None and r.move.kind in (MOVE_RETRIEVE, MOVE_DIRECT):
            deadline = instance.load_by_id[r.move.load].deadline
            if r.end > deadline:
                out.append((r.seq, r.move.load, r.end, deadline))
    return out


def _snapshot(recs: list[_Rec]) -> list[_Rec]:
    return [_Rec(r.seq, r.move, r.vehicle, r.start, r.end) for r in recs]


def _free_lane_targets(recs: list[_Rec], instance: Instance,
                       from_slot: SlotRef) -> list[SlotRef]:
    """Buffer lanes no load or task ever touches, nearest first; then sink."""
    buffer_ids = _buffer_ids(instance)
    touched = {u.initial_slot.lane for u in instance.loads if u.initial_slot is not None}
    for r in recs:
        touched.add(r.move.origin.lane)
        touched.add(r.move.dest.lane)
    candidates = []
    for lane in sorted(buffer_ids - touched):
        cap = instance.layout.lane_by_id[lane].capacity
        target = SlotRef(lane, cap)
        candidates.append((travel_time(instance.layout, from_slot, target, False,
                                       instance.handling_time), lane, target))
    out = [target for _, _, target in sorted(candidates)]
    out.append(instance.layout.sink_slot)
    return out


def repair_verbose(schedule: Schedule, instance: Instance,
                   max_rounds: int | None = None) -> tuple[Schedule, list[RepairAction]]:
    recs = _to_recs(schedule)
    actions: list[RepairAction] = []
    rounds = max_rounds if max_rounds is not None else 20 + 10 * len(recs)
    buffer_ids = _buffer_ids(instance)

    for _ in range(rounds):
        swapped = False
        for a, b in _head_on_pairs(recs, instance):
            na, nb = recs[a.next_i], recs[b.next_i]
            for r in recs:
                if r.vehicle == a.vehicle and r.seq >= na.seq:
                    r.vehicle = b.vehicle
                elif r.vehicle == b.vehicle and r.seq >= nb.seq:
                    r.vehicle = a.vehicle
            _retime(recs, instance, {})
            actions.append(RepairAction("swap", a.vehicle,
                                        f"exchanged future schedules with vehicle {b.vehicle} "
                                        f"(lanes {a.lane} and {b.lane})"))
            swapped = True
            break
        if swapped:
            continue

        found = _find_conflicts(recs, instance)
        conflicts = [c for c in found if c.kind in ("parked-task", "parked-parked")]
        task_conflicts = [c for c in found if c.kind == "task-task"]
        if not conflicts and not task_conflicts:
            break
        if not conflicts and task_conflicts:
            # Overlapping tasks from earlier shifts: push the later one back.
            c = task_conflicts[0]
            target = _rec_at(recs, c.incoming_vehicle, c.incoming_start)
            _retime(recs, instance, {target.seq: c.parked_until})
            breaches = _hard_breaches(recs, instance)
            if breaches:
                raise RepairError(_breach_message(breaches, c))
            actions.append(RepairAction("delay", c.incoming_vehicle,
                                        f"task in lane {c.lane} pushed to {c.parked_until}"))
            continue
        c = conflicts[0]
        parked = _parked_for_conflict(recs, instance, c)
        if parked is None:
            raise RepairError(f"lane {c.lane}: conflict at t={c.incoming_start} "
                              f"has no parked interval to resolve")

        resolved = False
        # Priority 1: leave earlier, when the next task has slack.
        if parked.next_i is not None:
            nxt = recs[parked.next_i]
            saved = _snapshot(recs)
            _retime(recs, instance, {nxt.seq: 0})
            if recs[parked.next_i].start + 1 <= c.incoming_start and \
                    not _hard_breaches(recs, instance):
                actions.append(RepairAction(
                    "reschedule", parked.vehicle,
                    f"departure from lane {c.lane} moved to {recs[parked.next_i].start}"))
                resolved = True
            else:
                _restore(recs, saved)
        if not resolved:
            resolved = _try_evictions(recs, instance, c, parked, actions)
        if not resolved:
            # Priority 3: delay the incoming task until the parked vehicle leaves.
            if parked.until is None:
                raise RepairError(f"lane {c.lane}: vehicle {parked.vehicle} parked for good "
                                  f"and cannot be evicted; incoming task at "
                                  f"t={c.incoming_start} is stuck")
            target = _rec_at(recs, c.incoming_vehicle, c.incoming_start)
            saved = _snapshot(recs)
            _retime(recs, instance, {target.seq: parked.until})
            breaches = _hard_breaches(recs, instance)
            if breaches:
                _restore(recs, saved)
                raise RepairError(_breach_message(breaches, c))
            actions.append(RepairAction("delay", c.incoming_vehicle,
                                        f"task in lane {c.lane} delayed to {parked.until}"))
    else:
        raise RepairError("conflict resolution did not converge")

    # Final pass: a load may never be removed before its placement finished.
    _retime(recs, instance, {})
    if _hard_breaches(recs, instance):
        seq, load, end, deadline = _hard_breaches(recs, instance)[0]
        raise RepairError(f"load {load}: retrieval ends at {end}, after its deadline {deadline}")
    if _find_conflicts(recs, instance):
        raise RepairError("residual lane conflict after resolution rounds")
    return _to_schedule(recs, instance), actions


def repair(schedule: Schedule, instance: Instance) -> Schedule:
    fixed, _ = repair_verbose(schedule, instance)
    return fixed


def _try_evictions(recs, instance, c, parked, actions) -> bool:
    targets: list[tuple[str, SlotRef]] = []
    if parked.next_i is not None:
        origin = recs[parked.next_i].move.origin
        if origin.lane != parked.lane:
            targets.append(("smart", origin))
    targets.extend(("standard", t)
                   for t in _free_lane_targets(recs, instance, parked.slot))
    for label, target in targets:
        if target.lane == parked.lane:
            continue
        saved = _snapshot(recs)
        dur = max(1, _gap(instance, parked.slot, target))
        # Insert right after the parked vehicle's previous entry and ahead of
        # every later record, so retiming lets the eviction leave first.
        prev_seq = recs[parked.prev_i].seq if parked.prev_i is not None else -1.0
        later = [r.seq for r in recs if r.seq > prev_seq]
        evict_seq = (prev_seq + min(later)) / 2.0 if later else prev_seq + 1.0
        taken = {r.seq for r in recs}
        while evict_seq in taken:
            evict_seq = (prev_seq + evict_seq) / 2.0
        move = Move(MOVE_EVICT, None, parked.slot, target, dur)
        recs.append(_Rec(seq=evict_seq, move=move, vehicle=parked.vehicle,
                         start=parked.from_t, end=parked.from_t + dur))
        _retime(recs, instance, {evict_seq: parked.from_t})
        still = [x for x in _find_conflicts(recs, instance)
                 if x.lane == c.lane and x.incoming_start == c.incoming_start
                 and x.parked_vehicle == c.parked_vehicle
                 and x.incoming_vehicle == c.incoming_vehicle]
        if not still and not _hard_breaches(recs, instance):
            actions.append(RepairAction(
                "evict", parked.vehicle,
                f"{label} eviction from lane {parked.lane} to lane {target.lane} "
                f"at t={parked.from_t}"))
            return True
        recs.pop()
        _restore(recs, saved)
    return False


def _parked_for_conflict(recs, instance, c) -> _Parked | None:
    buffer_ids = _buffer_ids(instance)
    for p in _parked_intervals(recs, instance, buffer_ids):
        if p.vehicle == c.parked_vehicle and p.lane == c.lane and p.from_t == c.parked_from:
            return p
    return None


def _rec_at(recs: list[_Rec], vehicle: int, start: int) -> _Rec:
    for r in sorted(recs, key=lambda r: r.seq):
        if r.vehicle == vehicle and r.start >= start:
            return r
    return sorted((r for r in recs if r.vehicle == vehicle), key=lambda r: r.seq)[-1]


def _restore(recs: list[_Rec], saved: list[_Rec]) -> None:
    recs.clear()
    recs.extend(saved)


def _breach_message(breaches, c) -> str:
    seq, load, end, deadline = breaches[0]
    return (f"lane {c.lane}: delaying the task at t={c.incoming_start} pushes load {load} "
            f"past its deadline ({end} > {deadline})")


def _to_schedule(recs: list[_Rec], instance: Instance) -> Schedule:
    ordered = sorted(recs, key=lambda r: (r.start, r.vehicle, r.seq))
    entries = tuple(ScheduleEntry(move=replace(r.move, duration=r.end - r.start),
                                  vehicle=r.vehicle, start=r.start, end=r.end)
                    for r in ordered)
    tardiness = 0
    for e in entries:
        if e.move.load is not None and e.move.kind in (MOVE_RETRIEVE, MOVE_DIRECT):
            tardiness += max(0, e.end - instance.load_by_id[e.move.load].deadline)
    return Schedule(entries=entries,
                    objective_distance=schedule_distance(list(entries), instance),
                    total_tardiness=tardiness)

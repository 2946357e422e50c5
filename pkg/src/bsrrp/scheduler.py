"""Fleet scheduling: move sequence plus precedence edges in, timetable out.

The constructive list scheduler assigns each task to the vehicle that can
start it earliest, honoring precedence edges, per-lane mutual exclusion and
sequence-dependent empty transitions.  A branch-and-bound twin solves small
task sets exactly for calibration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import (
    Instance,
    LANE_BUFFER,
    MOVE_DIRECT,
    MOVE_RETRIEVE,
    MOVE_STORE,
    Move,
    Schedule,
    ScheduleEntry,
    SlotRef,
    action_duration,
    distance,
    empty_distance,
    travel_time,
)
from .sequencer import MoveSequence

TARDINESS_WEIGHT = 10000.0


@dataclass(frozen=True)
class Task:
    id: int
    move: Move
    duration: int
    hard_earliest: int = 1
    hard_latest_end: int | None = None
    soft_due: int | None = None
    preds: tuple[int, ...] = ()


@dataclass
class ScheduleSolution:
    schedule: Schedule
    objective: float
    window_violations: list[tuple[int, int | None, int, int]] = field(default_factory=list)
    # (task id, load, end, hard latest end) for every hard deadline breach


def build_tasks(sequence: MoveSequence, instance: Instance) -> list[Task]:
    """One task per move; durations follow the instance's time model."""
    preds: dict[int, list[int]] = {}
    for a, b, _reason in sequence.precedences:
        preds.setdefault(b, []).append(a)
    tasks: list[Task] = []
    for idx, move in enumerate(sequence.moves):
        dur = max(1, action_duration(instance, move.kind, move.origin, move.dest))
        hard_earliest = 1
        hard_latest_end: int | None = None
        soft_due: int | None = None
        if move.load is not None:
            u = instance.load_by_id[move.load]
            if move.kind in (MOVE_STORE, MOVE_DIRECT):
                hard_earliest = max(1, u.arrival_open)
            if move.kind in (MOVE_RETRIEVE, MOVE_DIRECT):
                hard_latest_end = u.deadline
                soft_due = u.deadline
        tasks.append(Task(id=idx, move=move, duration=dur, hard_earliest=hard_earliest,
                          hard_latest_end=hard_latest_end, soft_due=soft_due,
                          preds=tuple(sorted(preds.get(idx, [])))))
    return tasks


def _touched_buffer_lanes(move: Move, buffer_ids: set[int]) -> list[int]:
    lanes = []
    for lane in (move.origin.lane, move.dest.lane):
        if lane in buffer_ids and lane not in lanes:
            lanes.append(lane)
    return lanes


def _bump_past_lane_intervals(start: int, dur: int, lanes: list[int],
                              intervals: dict[int, list[tuple[int, int]]]) -> int:
    """Smallest start >= ``start`` so [start, start+dur) avoids every interval."""
    moved = True
    while moved:
        moved = False
        for lane in lanes:
            for a, b in intervals.get(lane, ()):
                if start < b and a < start + dur:
                    start = b
                    moved = True
    return start


def _transition(instance: Instance, a: SlotRef, b: SlotRef) -> int:
    return travel_time(instance.layout, a, b, False, instance.handling_time)


def _initial_gap(instance: Instance, start_slot: SlotRef, origin: SlotRef) -> int:
    if start_slot == origin:
        return 0
    return _transition(instance, start_slot, origin)


class _FleetState:
    def __init__(self, instance: Instance):
        self.instance = instance
        self.avail = [1] * instance.fleet_size
        self.pos = list(instance.vehicle_starts)
        self.fresh = [True] * instance.fleet_size
        self.lane_intervals: dict[int, list[tuple[int, int]]] = {}
        self.ends: dict[int, int] = {}
        self.buffer_ids = {l.id for l in instance.layout.lanes if l.kind == LANE_BUFFER}

    def earliest_start(self, task: Task, vehicle: int) -> int:
        if self.fresh[vehicle]:
            ready = self.avail[vehicle] + _initial_gap(self.instance, self.pos[vehicle],
                                                       task.move.origin)
        else:
            ready = self.avail[vehicle] + _transition(self.instance, self.pos[vehicle],
                                                      task.move.origin)
        start = max(ready, task.hard_earliest,
                    max((self.ends[p] for p in task.preds), default=0))
        lanes = _touched_buffer_lanes(task.move, self.buffer_ids)
        return _bump_past_lane_intervals(start, task.duration, lanes, self.lane_intervals)

    def place(self, task: Task, vehicle: int, start: int) -> int:
        end = start + task.duration
        self.avail[vehicle] = end
        self.pos[vehicle] = task.move.dest
        self.fresh[vehicle] = False
        self.ends[task.id] = end
        for lane in _touched_buffer_lanes(task.move, self.buffer_ids):
            self.lane_intervals.setdefault(lane, []).append((start, end))
        return end


def list_schedule(tasks: list[Task], instance: Instance) -> ScheduleSolution:
    """Greedy earliest-start assignment in sequence order.

    Hard latest-end breaches are reported in the solution, never silently
    dropped; the schedule itself is still produced.
    """
    state = _FleetState(instance)
    entries: list[ScheduleEntry] = []
    violations: list[tuple[int, int | None, int, int]] = []
    for task in tasks:
        options = [(state.earliest_start(task, v), v) for v in range(instance.fleet_size)]
        start, vehicle = min(options)
        end = state.place(task, vehicle, start)
        if task.hard_latest_end is not None and end > task.hard_latest_end:
            violations.append((task.id, task.move.load, end, task.hard_latest_end))
        entries.append(ScheduleEntry(move=replace(task.move, duration=task.duration),
                                     vehicle=vehicle, start=start, end=end))
    schedule = _finish(entries, tasks, instance)
    return ScheduleSolution(schedule=schedule,
                            objective=objective(schedule, instance),
                            window_violations=violations)


def exact_schedule(tasks: list[Task], instance: Instance, cap: int = 10) -> ScheduleSolution:
    """Optimal assignment and ordering by branch and bound (small task sets).

    Enumerates precedence-respecting placement orders and vehicle choices,
    placing each task at its earliest feasible start; the objective is
    regular, so some earliest-start placement order is optimal.
    """
    if len(tasks) > cap:
        raise ValueError(f"exact scheduler capped at {cap} tasks, got {len(tasks)}")
    by_id = {t.id: t for t in tasks}
    best: dict[str, object] = {"value": float("inf"), "plan": None}

    def lower_bound(done: set[int], partial: float) -> float:
        rest = 0.0
        for t in tasks:
            if t.id not in done:
                rest += t.hard_earliest + t.duration
        return partial + rest

    def recurse(state: _FleetState, done: set[int], partial: float,
                plan: list[tuple[int, int, int]]) -> None:
        if len(done) == len(tasks):
            if partial < best["value"]:
                best["value"] = partial
                best["plan"] = list(plan)
            return
        if lower_bound(done, partial) >= best["value"]:
            return
        for t in tasks:
            if t.id in done or any(p not in done for p in t.preds):
                continue
            seen_states = set()
            for v in range(instance.fleet_size):
                sig = (state.avail[v], state.pos[v], state.fresh[v])
                if sig in seen_states:
                    continue
                seen_states.add(sig)
                start = state.earliest_start(t, v)
                end = start + t.duration
                cost = end + (TARDINESS_WEIGHT * max(0, end - t.soft_due)
                              if t.soft_due is not None else 0.0)
                saved = (state.avail[v], state.pos[v], state.fresh[v],
                         {k: list(vv) for k, vv in state.lane_intervals.items()},
                         dict(state.ends))
                state.place(t, v, start)
                plan.append((t.id, v, start))
                recurse(state, done | {t.id}, partial + cost, plan)
                plan.pop()
                state.avail[v], state.pos[v], state.fresh[v] = saved[0], saved[1], saved[2]
                state.lane_intervals = saved[3]
                state.ends = saved[4]

    recurse(_FleetState(instance), set(), 0.0, [])
    if best["plan"] is None:
        raise ValueError("no feasible plan found")
    entries = []
    violations = []
    for task_id, vehicle, start in sorted(best["plan"], key=lambda p: (p[2], p[0])):
        t = by_id[task_id]
        end = start + t.duration
        if t.hard_latest_end is not None and end > t.hard_latest_end:
            violations.append((t.id, t.move.load, end, t.hard_latest_end))
        entries.append(ScheduleEntry(move=replace(t.move, duration=t.duration),
                                     vehicle=vehicle, start=start, end=end))
    schedule = _finish(entries, tasks, instance)
    return ScheduleSolution(schedule=schedule, objective=objective(schedule, instance),
                            window_violations=violations)


def _finish(entries: list[ScheduleEntry], tasks: list[Task], instance: Instance) -> Schedule:
    # Tardiness against soft due dates carried by the originating tasks.
    tardiness = 0
    task_by_move = {}
    for t in tasks:
        task_by_move.setdefault((t.move.kind, t.move.load, t.move.origin, t.move.dest), t)
    for e in entries:
        t = task_by_move.get((e.move.kind, e.move.load, e.move.origin, e.move.dest))
        if t is not None and t.soft_due is not None:
            tardiness += max(0, e.end - t.soft_due)
    return Schedule(entries=tuple(entries),
                    objective_distance=schedule_distance(entries, instance),
                    total_tardiness=tardiness)


def schedule_distance(entries: list[ScheduleEntry] | tuple[ScheduleEntry, ...],
                      instance: Instance) -> float:
    """Total distance driven: every leg a real fleet would cover.

    Loaded legs per entry, explicit empty legs, implicit empty transitions
    between a vehicle's consecutive tasks, and the initial leg from each
    vehicle's start slot to its first origin.
    """
    layout = instance.layout
    total = 0.0
    per_vehicle: dict[int, list[ScheduleEntry]] = {}
    for e in entries:
        if e.move.loaded:
            total += distance(layout, e.move.origin, e.move.dest)
        else:
            total += empty_distance(layout, e.move.origin, e.move.dest)
        per_vehicle.setdefault(e.vehicle, []).append(e)
    for vehicle, items in per_vehicle.items():
        items = sorted(items, key=lambda e: (e.start, e.end))
        pos = instance.vehicle_starts[vehicle]
        for e in items:
            total += empty_distance(layout, pos, e.move.origin)
            pos = e.move.dest
    return total


def objective(schedule: Schedule, instance: Instance,
              weight: float = TARDINESS_WEIGHT) -> float:
    """Weighted tardiness plus total completion time over all entries."""
    value = 0.0
    for e in schedule.entries:
        value += e.end
        if e.move.kind in (MOVE_RETRIEVE, MOVE_DIRECT) and e.move.load is not None:
            deadline = instance.load_by_id[e.move.load].deadline
            value += weight * max(0, e.end - deadline)
    return value

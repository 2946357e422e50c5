"""Domain model for LIFO lane buffers served by mobile robots.

A layout is a set of lanes: one source lane, one sink lane and any number
of buffer lanes in between.  Buffer lane slots are indexed by depth, where
depth 1 is the innermost slot and depth J the slot next to the aisle.
Loads enter at the source, may be stored in buffer lanes (dense, LIFO) and
leave through the sink within their retrieval windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

LANE_SOURCE = "source"
LANE_SINK = "sink"
LANE_BUFFER = "buffer"

MOVE_STORE = "store"
MOVE_RETRIEVE = "retrieve"
MOVE_RESHUFFLE = "reshuffle"
MOVE_DIRECT = "direct"
MOVE_EMPTY = "empty"
MOVE_EVICT = "evict"

# Kinds that carry a unit load.
LOADED_KINDS = frozenset({MOVE_STORE, MOVE_RETRIEVE, MOVE_RESHUFFLE, MOVE_DIRECT})

TIME_MODEL_TRAVEL = "travel"
TIME_MODEL_UNIT_MOVE = "unit-move"


class InstanceError(ValueError):
    """Raised when an instance document violates a structural invariant."""


@dataclass(frozen=True, order=True)
class SlotRef:
    """Position of a single slot: (lane id, depth within the lane)."""

    lane: int
    depth: int


@dataclass(frozen=True)
class Lane:
    id: int
    kind: str
    access_point: tuple[float, float] | None
    slot_coords: tuple[tuple[float, float], ...] | None
    capacity: int

    def slot(self, depth: int) -> SlotRef:
        return SlotRef(self.id, depth)


@dataclass(frozen=True)
class DistanceTable:
    """Explicit all-pairs slot distances, overriding coordinate Manhattan.

    ``loaded`` applies to moves carrying a load, ``empty`` to repositioning
    drives; ``empty`` defaults to ``loaded``.  Matrices may be asymmetric
    but must be non-negative with a zero diagonal.
    """

    slots: tuple[SlotRef, ...]
    loaded: tuple[tuple[float, ...], ...]
    empty: tuple[tuple[float, ...], ...] | None = None

    @cached_property
    def index(self) -> dict[SlotRef, int]:
        return {s: i for i, s in enumerate(self.slots)}

    def loaded_distance(self, a: SlotRef, b: SlotRef) -> float:
        return self.loaded[self.index[a]][self.index[b]]

    def empty_distance(self, a: SlotRef, b: SlotRef) -> float:
        rows = self.empty if self.empty is not None else self.loaded
        return rows[self.index[a]][self.index[b]]


@dataclass(frozen=True)
class Layout:
    lanes: tuple[Lane, ...]
    distance_table: DistanceTable | None = None
    # Optional per-lane override of the in-lane traversal time per depth.
    lane_traversal: tuple[tuple[int, tuple[int, ...]], ...] | None = None

    @cached_property
    def lane_by_id(self) -> dict[int, Lane]:
        return {lane.id: lane for lane in self.lanes}

    @cached_property
    def source(self) -> Lane:
        return next(l for l in self.lanes if l.kind == LANE_SOURCE)

    @cached_property
    def sink(self) -> Lane:
        return next(l for l in self.lanes if l.kind == LANE_SINK)

    @cached_property
    def source_slot(self) -> SlotRef:
        return SlotRef(self.source.id, 1)

    @cached_property
    def sink_slot(self) -> SlotRef:
        return SlotRef(self.sink.id, 1)

    @cached_property
    def buffer_lanes(self) -> tuple[Lane, ...]:
        return tuple(l for l in self.lanes if l.kind == LANE_BUFFER)

    @cached_property
    def slots(self) -> tuple[SlotRef, ...]:
        out = []
        for lane in self.lanes:
            out.extend(SlotRef(lane.id, j) for j in range(1, lane.capacity + 1))
        return tuple(out)

    @cached_property
    def _traversal_map(self) -> dict[int, tuple[int, ...]]:
        return dict(self.lane_traversal) if self.lane_traversal else {}

    def slot_coord(self, ref: SlotRef) -> tuple[float, float]:
        lane = self.lane_by_id[ref.lane]
        if lane.slot_coords is None:
            raise InstanceError(f"lane {lane.id} has no slot coordinates")
        return lane.slot_coords[ref.depth - 1]

    def traversal_time(self, ref: SlotRef) -> int:
        """Time to traverse the lane from the aisle to ``ref`` (depth steps)."""
        override = self._traversal_map.get(ref.lane)
        if override is not None:
            return override[ref.depth - 1]
        lane = self.lane_by_id[ref.lane]
        return lane.capacity - ref.depth + 1


@dataclass(frozen=True)
class UnitLoad:
    id: int
    arrival: tuple[int, int]        # (a, alpha): available at source in [a, a+alpha]
    retrieval: tuple[int, int]      # (r, rho): due at sink in [r, r+rho]
    initial_slot: SlotRef | None = None

    @property
    def pre_stored(self) -> bool:
        return self.initial_slot is not None

    @property
    def arrival_open(self) -> int:
        return self.arrival[0]

    @property
    def arrival_close(self) -> int:
        return self.arrival[0] + self.arrival[1]

    @property
    def due_open(self) -> int:
        return self.retrieval[0]

    @property
    def deadline(self) -> int:
        return self.retrieval[0] + self.retrieval[1]


@dataclass(frozen=True)
class Instance:
    layout: Layout
    loads: tuple[UnitLoad, ...]
    fleet_size: int
    vehicle_starts: tuple[SlotRef, ...]
    handling_time: int = 1
    time_model: str = TIME_MODEL_TRAVEL

    @cached_property
    def load_by_id(self) -> dict[int, UnitLoad]:
        return {u.id: u for u in self.loads}

    @cached_property
    def horizon(self) -> int:
        return horizon(self)


@dataclass(frozen=True)
class Move:
    kind: str
    load: int | None
    origin: SlotRef
    dest: SlotRef
    duration: int

    @property
    def loaded(self) -> bool:
        return self.kind in LOADED_KINDS


@dataclass(frozen=True)
class ScheduleEntry:
    move: Move
    vehicle: int
    start: int
    end: int


@dataclass(frozen=True)
class Schedule:
    entries: tuple[ScheduleEntry, ...]
    objective_distance: float = 0.0
    total_tardiness: int = 0


def distance(layout: Layout, a: SlotRef, b: SlotRef) -> float:
    """Distance for a loaded drive from slot ``a`` to slot ``b``."""
    if a == b:
        return 0
    if layout.distance_table is not None:
        return layout.distance_table.loaded_distance(a, b)
    xa, ya = layout.slot_coord(a)
    xb, yb = layout.slot_coord(b)
    return abs(xa - xb) + abs(ya - yb)


def empty_distance(layout: Layout, a: SlotRef, b: SlotRef) -> float:
    """Distance for an empty repositioning drive from ``a`` to ``b``."""
    if a == b:
        return 0
    if layout.distance_table is not None:
        return layout.distance_table.empty_distance(a, b)
    return distance(layout, a, b)


def travel_time(layout: Layout, a: SlotRef, b: SlotRef, loaded: bool, handling: int) -> int:
    """Discrete travel time of one drive; never below one time step.

    Loaded drives include a pickup and a drop handling term on top of the
    distance; empty drives are distance only.
    """
    if loaded:
        d = distance(layout, a, b)
        return max(1, int(math.ceil(d)) + 2 * handling)
    d = empty_distance(layout, a, b)
    return max(1, int(math.ceil(d)))


def action_duration(instance: Instance, kind: str, origin: SlotRef, dest: SlotRef) -> int:
    """Duration of one elementary action under the instance's time model.

    The unit-move model (used by the stacking-problem reduction) makes
    empty repositioning instantaneous; loaded moves keep their travel time.
    """
    loaded = kind in LOADED_KINDS
    if not loaded and instance.time_model == TIME_MODEL_UNIT_MOVE:
        return 0
    return travel_time(instance.layout, origin, dest, loaded, instance.handling_time)


def retrieval_start_window(instance: Instance, load: UnitLoad, origin: SlotRef) -> tuple[int, int]:
    """Admissible start steps for the retrieval of ``load`` from ``origin``."""
    if instance.time_model == TIME_MODEL_UNIT_MOVE:
        return load.due_open, load.deadline
    tau = travel_time(instance.layout, origin, instance.layout.sink_slot, True,
                      instance.handling_time)
    return load.due_open - tau, load.deadline - tau


def horizon(instance: Instance) -> int:
    """Planning horizon: latest window end over all loads."""
    latest = 0
    for u in instance.loads:
        latest = max(latest, u.arrival_close, u.deadline)
    return latest


def occupied_by_lane(loads: tuple[UnitLoad, ...]) -> dict[int, dict[int, int]]:
    """Map lane id -> {depth -> load id} over the pre-stored loads."""
    out: dict[int, dict[int, int]] = {}
    for u in loads:
        if u.initial_slot is not None:
            out.setdefault(u.initial_slot.lane, {})[u.initial_slot.depth] = u.id
    return out


def validate_instance(instance: Instance) -> None:
    """Check structural invariants; raise InstanceError naming the breach."""
    layout = instance.layout
    ids = [lane.id for lane in layout.lanes]
    if sorted(ids) != list(range(len(ids))):
        raise InstanceError("lane ids must be 0..I without gaps")
    sources = [l for l in layout.lanes if l.kind == LANE_SOURCE]
    sinks = [l for l in layout.lanes if l.kind == LANE_SINK]
    if len(sources) != 1 or sources[0].id != 0 or sources[0].capacity != 1:
        raise InstanceError("exactly one source lane with id 0 and a single slot required")
    if len(sinks) != 1 or sinks[0].id != max(ids) or sinks[0].capacity != 1:
        raise InstanceError("exactly one sink lane with the highest id and a single slot required")
    for lane in layout.lanes:
        if lane.kind not in (LANE_SOURCE, LANE_SINK, LANE_BUFFER):
            raise InstanceError(f"unknown lane kind {lane.kind!r}")
        if lane.capacity < 1:
            raise InstanceError(f"lane {lane.id} has capacity below 1")
        if lane.slot_coords is not None and len(lane.slot_coords) != lane.capacity:
            raise InstanceError(f"lane {lane.id} slot coordinate count differs from capacity")
        if lane.slot_coords is None and layout.distance_table is None:
            raise InstanceError(f"lane {lane.id} needs slot coordinates or a distance table")
    if layout.distance_table is not None:
        table = layout.distance_table
        if set(table.slots) != set(layout.slots):
            raise InstanceError("distance table must cover exactly the layout slots")
        n = len(table.slots)
        for rows in (table.loaded, table.empty):
            if rows is None:
                continue
            if len(rows) != n or any(len(r) != n for r in rows):
                raise InstanceError("distance matrix shape mismatch")
            for i in range(n):
                if rows[i][i] != 0:
                    raise InstanceError("distance matrix diagonal must be zero")
                if any(v < 0 for v in rows[i]):
                    raise InstanceError("distances must be non-negative")

    if instance.fleet_size < 1:
        raise InstanceError("fleet size must be at least 1")
    if len(instance.vehicle_starts) != instance.fleet_size:
        raise InstanceError("one start slot per vehicle required")
    valid_slots = set(layout.slots)
    for ref in instance.vehicle_starts:
        if ref not in valid_slots:
            raise InstanceError(f"vehicle start slot {ref} does not exist")
    if instance.handling_time < 0:
        raise InstanceError("handling time must be non-negative")
    if instance.time_model not in (TIME_MODEL_TRAVEL, TIME_MODEL_UNIT_MOVE):
        raise InstanceError(f"unknown time model {instance.time_model!r}")

    seen_ids: set[int] = set()
    seen_slots: set[SlotRef] = set()
    for u in instance.loads:
        if u.id in seen_ids:
            raise InstanceError(f"load id {u.id} appears twice")
        seen_ids.add(u.id)
        a, alpha = u.arrival
        r, rho = u.retrieval
        if alpha < 0 or rho < 0:
            raise InstanceError(f"load {u.id} has a negative window width")
        if r < 1:
            raise InstanceError(f"load {u.id} retrieval window must start at 1 or later")
        if (u.initial_slot is not None) != (a <= 0):
            raise InstanceError(
                f"load {u.id}: initial slot exactly when the arrival time is at or before 0")
        if u.initial_slot is not None:
            lane = layout.lane_by_id.get(u.initial_slot.lane)
            if lane is None or lane.kind != LANE_BUFFER:
                raise InstanceError(f"load {u.id} pre-stored outside a buffer lane")
            if not (1 <= u.initial_slot.depth <= lane.capacity):
                raise InstanceError(f"load {u.id} pre-stored at an invalid depth")
            if u.initial_slot in seen_slots:
                raise InstanceError(f"slot occupied twice: {u.initial_slot}")
            seen_slots.add(u.initial_slot)
    # Dense storage: no gap behind an occupied slot.
    for lane_id, stack in occupied_by_lane(instance.loads).items():
        depths = sorted(stack)
        if depths != list(range(1, len(depths) + 1)):
            raise InstanceError(f"lane {lane_id} pre-stored loads leave a gap behind an occupied slot")

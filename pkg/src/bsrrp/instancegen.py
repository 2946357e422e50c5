"""Instance factories: stochastic small grids and a constructive simulator.

Both generators lay static lanes over a rectangular cell grid.  Every cell
belongs to the lane of its nearest enabled access side, so lanes run
perpendicular to the edges and meet at the midlines.  The small generator
draws loads and windows from per-load random substreams; the large one
forward-simulates an idealized two-robot warehouse and wraps each simulated
task in a fixed-slack window, which makes the emitted stream feasible by
construction.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .model import (
    Instance,
    LANE_BUFFER,
    LANE_SINK,
    LANE_SOURCE,
    Lane,
    Layout,
    SlotRef,
    UnitLoad,
    validate_instance,
)

SIDE_ORDER = "SNEW"    # tie-break priority for cells equidistant to two sides


@dataclass(frozen=True)
class SmallGenParams:
    grid: tuple[int, int] = (3, 3)          # rows x cols
    access_sides: int = 1
    fleet: int = 2
    load_ratio: float = 0.7
    window_overlap: float = 0.5
    seed: int = 0
    frame_steps: int | None = None          # override the temporal frame

    def validate(self) -> None:
        rows, cols = self.grid
        if rows < 1 or cols < 1:
            raise ValueError("grid must have positive extent")
        if self.access_sides not in (1, 2, 3, 4):
            raise ValueError("access_sides must be 1..4")
        if self.load_ratio <= 0:
            raise ValueError("load ratio must be positive")
        if self.fleet < 1:
            raise ValueError("fleet must be at least 1")


@dataclass(frozen=True)
class LargeGenParams:
    grid: tuple[int, int] = (5, 5)
    access_sides: int = 2
    target_fill: float = 0.8
    slack: int = 15
    sim_fleet: int = 2
    time_scale: float = 2.0
    handling: int = 1
    num_loads: int = 40
    seed: int = 0

    def validate(self) -> None:
        if not 0 < self.target_fill <= 1:
            raise ValueError("target_fill must be in (0, 1]")
        if self.slack < 0:
            raise ValueError("slack must be non-negative")
        if self.sim_fleet < 1 or self.num_loads < 1:
            raise ValueError("sim_fleet and num_loads must be positive")


def _side_of_cell(r: int, c: int, rows: int, cols: int, sides: str) -> str:
    dist = {"S": r, "N": rows - 1 - r, "E": cols - 1 - c, "W": c}
    best = min(sides, key=lambda s: (dist[s], SIDE_ORDER.index(s)))
    return best


def build_lane_layout(rows: int, cols: int, access_sides: int) -> Layout:
    """Partition a rows x cols cell grid into access lanes plus source/sink.

    Cells sit at integer coordinates (col, row); the source parks west of the
    grid and the sink east of it, on the surrounding travel aisle.
    """
    sides = SIDE_ORDER[:access_sides]
    cells: dict[str, dict[int, list[tuple[int, int]]]] = {s: {} for s in sides}
    for r in range(rows):
        for c in range(cols):
            s = _side_of_cell(r, c, rows, cols, sides)
            key = c if s in "SN" else r
            cells[s].setdefault(key, []).append((r, c))

    lanes = [Lane(0, LANE_SOURCE, None, ((-1.0, 0.0),), 1)]
    lane_id = 1
    for s in sides:
        for key in sorted(cells[s]):
            run = cells[s][key]
            # Deepest slot first: the cell farthest from the access edge.
            if s == "S":
                run.sort(key=lambda rc: -rc[0])
            elif s == "N":
                run.sort(key=lambda rc: rc[0])
            elif s == "E":
                run.sort(key=lambda rc: rc[1])
            else:
                run.sort(key=lambda rc: -rc[1])
            coords = tuple((float(c), float(r)) for r, c in run)
            lanes.append(Lane(lane_id, LANE_BUFFER, None, coords, len(run)))
            lane_id += 1
    lanes.append(Lane(lane_id, LANE_SINK, None,
                      ((float(cols), float(rows - 1)),), 1))
    return Layout(tuple(lanes))


def _stream(seed: int, *tags) -> random.Random:
    return random.Random("|".join(str(x) for x in (seed, *tags)))


def gen_small(params: SmallGenParams) -> Instance:
    """Stochastic small instance; deterministic per params (incl. seed).

    Each load draws its windows from a substream keyed by (seed, index) and
    its placement from one keyed by (seed, topology, index), so the load
    stream is a stable prefix across ratios and identical across topologies.
    """
    params.validate()
    rows, cols = params.grid
    layout = build_lane_layout(rows, cols, params.access_sides)
    buffer_lanes = layout.buffer_lanes
    n_slots = rows * cols
    n_loads = math.ceil(params.load_ratio * n_slots)
    topo = f"{rows}x{cols}x{params.access_sides}"
    # Fixed temporal frame per topology: load ratio then governs saturation.
    # An explicit frame_steps keeps tiny benchmark instances short enough
    # for exhaustive solving.
    frame = params.frame_steps if params.frame_steps is not None else 20 + 12 * n_slots
    lead = rows + cols + 4
    overlap = max(0.0, params.window_overlap)

    occupancy = {lane.id: 0 for lane in buffer_lanes}
    loads = []
    for i in range(1, n_loads + 1):
        wrng = _stream(params.seed, "small-load", i)
        pre = wrng.random() < 0.4
        alpha = wrng.randint(4, 4 + round(6 * overlap))
        rho = wrng.randint(6, 6 + round(10 * overlap))
        a = wrng.randint(1, max(1, frame // 2))
        r_slack = wrng.randint(0, max(4, frame // 2 - lead))
        slot = None
        if pre:
            prng = _stream(params.seed, "small-place", topo, i)
            open_lanes = [l for l in buffer_lanes if occupancy[l.id] < l.capacity]
            if open_lanes:
                lane = open_lanes[prng.randrange(len(open_lanes))]
                occupancy[lane.id] += 1
                slot = SlotRef(lane.id, occupancy[lane.id])
        if slot is not None:
            r = lead + wrng.randint(0, max(4, frame - 2 * lead))
            loads.append(UnitLoad(i, (0, 0), (r, rho), initial_slot=slot))
        else:
            loads.append(UnitLoad(i, (a, alpha), (a + alpha + lead + r_slack, rho)))

    starts = tuple(layout.source_slot if v % 2 == 0 else layout.sink_slot
                   for v in range(params.fleet))
    instance = Instance(layout=layout, loads=tuple(loads), fleet_size=params.fleet,
                        vehicle_starts=starts, handling_time=1)
    validate_instance(instance)
    return instance


@dataclass
class _SimRobot:
    free_at: float
    pos: SlotRef


@dataclass(frozen=True)
class SimEvent:
    """One simulated task of the constructive generator's idealized replay."""

    kind: str
    load: int
    origin: SlotRef
    dest: SlotRef
    start: int
    end: int


def _sim_duration(layout: Layout, a: SlotRef, b: SlotRef, scale: float,
                  handling: int) -> int:
    xa, ya = layout.slot_coord(a)
    xb, yb = layout.slot_coord(b)
    d = abs(xa - xb) + abs(ya - yb)
    return max(1, int(math.ceil(scale * d)) + handling)


def gen_large_trace(params: LargeGenParams) -> tuple[Instance, tuple[SimEvent, ...]]:
    """Constructive simulation that alternates stores and retrievals.

    The simulator keeps the buffer near ``target_fill``, fills the fullest
    lane first, relocates blockers ahead of a buried retrieval, and assigns
    each task to the earliest-free simulated robot.  Emitted windows are the
    simulated start times padded by +-slack, so the simulator's own stream
    hits every window at its center.
    """
    params.validate()
    rows, cols = params.grid
    layout = build_lane_layout(rows, cols, params.access_sides)
    rng = _stream(params.seed, "large")
    src, snk = layout.source_slot, layout.sink_slot
    lanes = {l.id: l for l in layout.buffer_lanes}
    stacks: dict[int, list[int]] = {lid: [] for lid in lanes}
    robots = [_SimRobot(free_at=float(params.slack + 1), pos=src)
              for _ in range(params.sim_fleet)]
    target = params.target_fill * rows * cols
    trace: list[SimEvent] = []

    def slot_of(load: int) -> SlotRef:
        for lid, stack in stacks.items():
            if load in stack:
                return SlotRef(lid, stack.index(load) + 1)
        raise LookupError(f"load {load} not stored")

    def run_task(kind: str, load: int, origin: SlotRef, dest: SlotRef) -> None:
        robot = min(robots, key=lambda rb: rb.free_at)
        approach = 0
        if robot.pos != origin:
            approach = _sim_duration(layout, robot.pos, origin, params.time_scale, 0)
        start = int(math.ceil(robot.free_at)) + approach
        dur = _sim_duration(layout, origin, dest, params.time_scale, params.handling)
        robot.free_at = float(start + dur)
        robot.pos = dest
        trace.append(SimEvent(kind, load, origin, dest, start, start + dur))

    def fullest_open(exclude: int | None = None) -> int | None:
        spots = [lid for lid, st in stacks.items()
                 if lid != exclude and len(st) < lanes[lid].capacity]
        if not spots:
            return None
        # Back to front: the fullest lane keeps filling first.
        return max(spots, key=lambda l: (len(stacks[l]), -l))

    def store(load: int) -> None:
        lid = fullest_open()
        stacks[lid].append(load)
        run_task("store", load, src, SlotRef(lid, len(stacks[lid])))

    def retrieve(load: int) -> None:
        origin = slot_of(load)
        stack = stacks[origin.lane]
        while stack[-1] != load:
            blocker = stack.pop()
            lid = fullest_open(exclude=origin.lane)
            from_slot = SlotRef(origin.lane, len(stack) + 1)
            stacks[lid].append(blocker)
            run_task("reshuffle", blocker, from_slot, SlotRef(lid, len(stacks[lid])))
        stack.pop()
        run_task("retrieve", load, origin, snk)

    def pick_retrieval(stored: list[int]) -> int:
        i = rng.randrange(len(stored))
        load = stored[i]
        depth_from_top = len(stacks[slot_of(load).lane]) - slot_of(load).depth
        if depth_from_top == 0 or fullest_open(exclude=slot_of(load).lane) is not None:
            return stored.pop(i)
        # Everything else is full: only an unburied load can leave.
        for j, cand in enumerate(stored):
            s = slot_of(cand)
            if s.depth == len(stacks[s.lane]):
                return stored.pop(j)
        raise RuntimeError("simulator wedged: buffer full of buried loads")

    stored_order: list[int] = []
    next_load = 1
    emitted = 0
    while emitted < params.num_loads or stored_order:
        occ = sum(len(s) for s in stacks.values())
        can_store = emitted < params.num_loads and fullest_open() is not None
        if can_store and (occ < target or not stored_order):
            store(next_load)
            stored_order.append(next_load)
            next_load += 1
            emitted += 1
        else:
            retrieve(pick_retrieval(stored_order))

    windows: dict[int, dict[str, SimEvent]] = {}
    for ev in trace:
        if ev.kind in ("store", "retrieve"):
            windows.setdefault(ev.load, {})[ev.kind] = ev
    loads = []
    for load_id in sorted(windows):
        s, r = windows[load_id]["store"], windows[load_id]["retrieve"]
        loads.append(UnitLoad(
            load_id,
            arrival=(s.start - params.slack, 2 * params.slack),
            retrieval=(r.start - params.slack, 2 * params.slack)))
    instance = Instance(layout=layout, loads=tuple(loads),
                        fleet_size=params.sim_fleet,
                        vehicle_starts=tuple(src for _ in range(params.sim_fleet)),
                        handling_time=params.handling)
    validate_instance(instance)
    return instance, tuple(trace)


def gen_large(params: LargeGenParams) -> Instance:
    return gen_large_trace(params)[0]

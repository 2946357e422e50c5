"""Block-stacking retrieval problems and their encoding as lane instances.

A stacking problem asks for the minimum number of crane relocations needed
to retrieve containers 1..N from a set of stacks in priority order.  The
encoding maps stacks to buffer lanes, gives every loaded drive distance one
and every empty drive distance zero, and spaces the retrieval windows so
that between two retrievals there is room for every relocation that could
ever be needed.  The optimal travel distance of the encoded instance then
equals the optimal relocation count plus one drive per retrieval.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from ..model import (
    DistanceTable,
    Instance,
    LANE_BUFFER,
    LANE_SINK,
    LANE_SOURCE,
    Lane,
    Layout,
    SlotRef,
    TIME_MODEL_UNIT_MOVE,
    UnitLoad,
)

_BRUTE_MAX = 5


class UnsolvableError(ValueError):
    """The priority order cannot be completed from this configuration."""


@dataclass(frozen=True)
class BRPInstance:
    """Stacks of container priorities, listed bottom to top."""

    stacks: tuple[tuple[int, ...], ...]
    height: int

    @property
    def n_containers(self) -> int:
        return sum(len(s) for s in self.stacks)

    def validate(self) -> None:
        seen = sorted(c for s in self.stacks for c in s)
        if seen != list(range(1, len(seen) + 1)):
            raise ValueError("container priorities must be exactly 1..N")
        for i, s in enumerate(self.stacks):
            if len(s) > self.height:
                raise ValueError(f"stack {i} exceeds height {self.height}")
        if len(self.stacks) < 2 and any(len(s) > 1 for s in self.stacks):
            raise ValueError("relocations need at least two stacks")


def max_relocations(n: int) -> int:
    """Worst-case relocation budget for n containers."""
    return n * (n - 1) // 2


def _blocking_count(stacks: tuple[tuple[int, ...], ...]) -> int:
    # A container must move at least once iff something below it leaves first.
    count = 0
    for s in stacks:
        for pos, c in enumerate(s):
            if any(below < c for below in s[:pos]):
                count += 1
    return count


def _settle(stacks: tuple[tuple[int, ...], ...]) -> tuple[tuple[int, ...], ...]:
    """Apply every currently forced retrieval (free moves, always optimal)."""
    work = [list(s) for s in stacks]
    remaining = sorted(c for s in work for c in s)
    while remaining:
        target = remaining[0]
        spot = next((i for i, s in enumerate(work) if s and s[-1] == target), None)
        if spot is None:
            break
        work[spot].pop()
        remaining.pop(0)
    return tuple(tuple(s) for s in work)


def brp_brute_force(brp: BRPInstance) -> int:
    """Minimum relocation count, by best-first search over stack states."""
    brp.validate()
    if brp.n_containers > _BRUTE_MAX:
        raise ValueError(f"more than {_BRUTE_MAX} containers; "
                         "use the encoded instance and a larger solver")
    start = _settle(tuple(sorted(brp.stacks)))
    best: dict[tuple, int] = {start: 0}
    heap = [(_blocking_count(start), 0, start)]
    while heap:
        f, g, stacks = heapq.heappop(heap)
        if g > best.get(stacks, -1):
            continue
        if not any(stacks):
            return g
        for i, s in enumerate(stacks):
            if not s:
                continue
            for j, d in enumerate(stacks):
                if j == i or len(d) >= brp.height:
                    continue
                moved = list(stacks)
                moved[i] = s[:-1]
                moved[j] = d + (s[-1],)
                succ = _settle(tuple(sorted(moved)))
                ng = g + 1
                if ng < best.get(succ, ng + 1):
                    best[succ] = ng
                    heapq.heappush(heap, (ng + _blocking_count(succ), ng, succ))
    raise UnsolvableError("stacks jammed: no relocation sequence empties them")


def reduce_brp(brp: BRPInstance) -> Instance:
    """Encode a stacking problem as a single-vehicle lane instance."""
    brp.validate()
    n = brp.n_containers
    budget = max_relocations(n) + 1
    lanes = [Lane(0, LANE_SOURCE, None, None, 1)]
    for i in range(len(brp.stacks)):
        lanes.append(Lane(i + 1, LANE_BUFFER, None, None, brp.height))
    lanes.append(Lane(len(brp.stacks) + 1, LANE_SINK, None, None, 1))
    layout_slots = []
    for lane in lanes:
        layout_slots.extend(SlotRef(lane.id, j) for j in range(1, lane.capacity + 1))
    m = len(layout_slots)
    loaded = tuple(tuple(0.0 if a == b else 1.0 for b in range(m)) for a in range(m))
    empty = tuple(tuple(0.0 for _ in range(m)) for _ in range(m))
    table = DistanceTable(tuple(layout_slots), loaded, empty)
    layout = Layout(tuple(lanes), distance_table=table)

    loads = []
    for i, s in enumerate(brp.stacks):
        for pos, c in enumerate(s):
            open_at = (c - 1) * budget + 1
            close_at = c * budget
            loads.append(UnitLoad(
                id=c, arrival=(0, 0), retrieval=(open_at, close_at - open_at),
                initial_slot=SlotRef(i + 1, pos + 1)))
    loads.sort(key=lambda u: u.id)
    return Instance(
        layout=layout, loads=tuple(loads), fleet_size=1,
        vehicle_starts=(layout.source_slot,), handling_time=0,
        time_model=TIME_MODEL_UNIT_MOVE)

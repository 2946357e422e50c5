"""Best-first search that turns an order queue into a feasible move sequence.

A single virtual vehicle executes store, retrieve and reshuffle actions on
the buffer state.  The search minimizes elapsed time and is steered by soft
penalties (blocking clean-up cost, priority inversions, premature storage)
rather than hard pruning, so congested states stay reachable.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, replace

from .model import (
    Instance,
    LANE_BUFFER,
    MOVE_DIRECT,
    MOVE_RESHUFFLE,
    MOVE_RETRIEVE,
    MOVE_STORE,
    Move,
    SlotRef,
    action_duration,
    distance,
    travel_time,
)
from .priority import Order, RETRIEVAL, STORAGE, orders_from_instance

_KIND_RANK = {MOVE_STORE: 0, MOVE_RETRIEVE: 1, MOVE_RESHUFFLE: 2}


class SearchFailure(RuntimeError):
    """No goal state found within the configured limits."""


class SearchTimeout(SearchFailure):
    """Wall-clock limit hit before a goal state was found."""


@dataclass(frozen=True)
class SearchParams:
    beam_k: int = 8
    open_limit: int = 5000
    tabu_tenure: int = 1
    block_weight: float = 5.0        # gamma on the blocking clean-up estimate
    priority_penalty: float = 1000.0
    time_limit: float = 300.0
    trace_file: str | None = None


@dataclass(frozen=True)
class CostBreakdown:
    ops: float
    block: float
    prio: float
    pre_store: float

    @property
    def total(self) -> float:
        return self.ops + self.block + self.prio + self.pre_store


@dataclass(frozen=True)
class SearchState:
    """Immutable search state: buffer stacks, source backlog, vehicle spot."""

    buffer: tuple[tuple[int, ...], ...]      # one stack per buffer lane, deep to shallow
    pending_storage: frozenset[int]
    delivered: frozenset[int]
    v_pos: SlotRef
    tabu: tuple[tuple[int, int], ...]        # (lane id, remaining tenure)
    elapsed: int


@dataclass(frozen=True)
class MoveSequence:
    moves: tuple[Move, ...]
    precedences: tuple[tuple[int, int, str], ...]
    g_time: int | None = None
    expansions: int = 0


class SequencerContext:
    """Per-instance data shared by successor generation and the heuristic."""

    def __init__(self, instance: Instance, priorities: dict[int, int],
                 tabu_tenure: int = 1):
        self.instance = instance
        self.layout = instance.layout
        self.priorities = priorities
        self.tabu_tenure = tabu_tenure
        self.buffer_lanes = tuple(l for l in self.layout.lanes if l.kind == LANE_BUFFER)
        self.lane_order = tuple(l.id for l in self.buffer_lanes)
        self.lane_pos = {l.id: i for i, l in enumerate(self.buffer_lanes)}
        self.capacity = {l.id: l.capacity for l in self.buffer_lanes}
        self.source = self.layout.source_slot
        self.sink = self.layout.sink_slot
        self.avg_reshuffle = _avg_reshuffle_cost(instance)
        self.pre_stored = frozenset(u.id for u in instance.loads if u.pre_stored)
        self._mean_slot_cost = None
        self._loaded: dict[tuple[SlotRef, SlotRef], int] = {}
        self._empty: dict[tuple[SlotRef, SlotRef], int] = {}
        # Per-slot tables keep the heuristic off the geometry math.
        self.to_sink = {}
        self.slot_cost = {}
        self.sink_prefix: dict[int, list[float]] = {}
        for lane in self.buffer_lanes:
            prefix = [0.0]
            for j in range(1, lane.capacity + 1):
                s = SlotRef(lane.id, j)
                self.to_sink[(lane.id, j)] = self.loaded_time(s, self.sink)
                self.slot_cost[(lane.id, j)] = (self.loaded_time(self.source, s)
                                                + self.to_sink[(lane.id, j)])
                prefix.append(prefix[-1] + self.to_sink[(lane.id, j)])
            self.sink_prefix[lane.id] = prefix

    def loaded_time(self, a: SlotRef, b: SlotRef) -> int:
        got = self._loaded.get((a, b))
        if got is None:
            got = travel_time(self.layout, a, b, True, self.instance.handling_time)
            self._loaded[(a, b)] = got
        return got

    def empty_leg(self, a: SlotRef, b: SlotRef) -> int:
        if a == b:
            return 0
        got = self._empty.get((a, b))
        if got is None:
            got = action_duration(self.instance, "empty", a, b)
            self._empty[(a, b)] = got
        return got

    def mean_slot_cost(self) -> float:
        """Mean source->slot->sink loaded time over all buffer slots."""
        if self._mean_slot_cost is None:
            costs = []
            for lane in self.buffer_lanes:
                for j in range(1, lane.capacity + 1):
                    s = SlotRef(lane.id, j)
                    costs.append(self.loaded_time(self.source, s) + self.loaded_time(s, self.sink))
            self._mean_slot_cost = sum(costs) / len(costs) if costs else 0.0
        return self._mean_slot_cost


def _avg_reshuffle_cost(instance: Instance) -> float:
    """Mean loaded travel time over ordered pairs of buffer lane access points."""
    lanes = [l for l in instance.layout.lanes if l.kind == LANE_BUFFER]
    if len(lanes) < 2:
        return 0.0
    h = instance.handling_time
    total = 0.0
    count = 0
    for a in lanes:
        for b in lanes:
            if a.id == b.id:
                continue
            if a.access_point is not None and b.access_point is not None:
                d = abs(a.access_point[0] - b.access_point[0]) + \
                    abs(a.access_point[1] - b.access_point[1])
            else:
                # Matrix layouts: outermost slots stand in for the access points.
                d = distance(instance.layout, SlotRef(a.id, a.capacity), SlotRef(b.id, b.capacity))
            total += max(1, int(math.ceil(d)) + 2 * h)
            count += 1
    return total / count


def prune_direct_retrievals(instance: Instance) -> tuple[list[Move], list[Order]]:
    """Split loads that can cross-dock straight to the sink out of the order set.

    A non-pre-stored load goes direct when its earliest possible sink arrival
    (pick up at a_n, drive loaded) still meets the deadline.
    """
    layout = instance.layout
    tau = travel_time(layout, layout.source_slot, layout.sink_slot, True, instance.handling_time)
    direct_moves: list[Move] = []
    direct_loads: set[int] = set()
    for u in instance.loads:
        if u.pre_stored:
            continue
        if u.arrival_open + tau <= u.deadline:
            direct_loads.add(u.id)
            direct_moves.append(Move(MOVE_DIRECT, u.id, layout.source_slot, layout.sink_slot,
                                     action_duration(instance, MOVE_DIRECT,
                                                     layout.source_slot, layout.sink_slot)))
    remaining = [o for o in orders_from_instance(instance) if o.load not in direct_loads]
    return direct_moves, remaining


def initial_state(instance: Instance, orders: list[Order],
                  start: SlotRef | None = None) -> SearchState:
    ctx_lanes = [l for l in instance.layout.lanes if l.kind == LANE_BUFFER]
    stacks: dict[int, dict[int, int]] = {l.id: {} for l in ctx_lanes}
    order_loads = {o.load for o in orders}
    for u in instance.loads:
        if u.initial_slot is not None and u.id in order_loads:
            stacks[u.initial_slot.lane][u.initial_slot.depth] = u.id
    buffer = tuple(tuple(stacks[l.id][j] for j in sorted(stacks[l.id])) for l in ctx_lanes)
    pending_storage = frozenset(o.load for o in orders if o.direction == STORAGE)
    if start is None:
        start = instance.vehicle_starts[0]
    return SearchState(buffer=buffer, pending_storage=pending_storage,
                       delivered=frozenset(), v_pos=start, tabu=(), elapsed=0)


def _tabu_lanes(state: SearchState) -> frozenset[int]:
    return frozenset(lane for lane, t in state.tabu if t > 0)


def _next_tabu(state: SearchState, vacated: int | None, tenure: int) -> tuple[tuple[int, int], ...]:
    aged = [(lane, t - 1) for lane, t in state.tabu if t - 1 > 0]
    if vacated is not None and tenure > 0:
        aged = [(l, t) for l, t in aged if l != vacated]
        aged.append((vacated, tenure))
    return tuple(sorted(aged))


def successors(ctx: SequencerContext, state: SearchState,
               arrivals: dict[int, int]) -> list[tuple[Move, SearchState]]:
    """All legal transitions from ``state``, deterministically ordered.

    ``arrivals`` maps load id to its earliest source availability a_o; the
    vehicle waits at the source when it gets there early.
    """
    out: list[tuple[Move, SearchState]] = []
    blocked = _tabu_lanes(state)
    fill = {lane_id: len(state.buffer[i]) for i, lane_id in enumerate(ctx.lane_order)}

    for load in sorted(state.pending_storage):
        for lane_id in ctx.lane_order:
            if lane_id in blocked or fill[lane_id] >= ctx.capacity[lane_id]:
                continue
            dest = SlotRef(lane_id, fill[lane_id] + 1)
            tau = ctx.loaded_time(ctx.source, dest)
            at_source = state.elapsed + ctx.empty_leg(state.v_pos, ctx.source)
            begin = max(at_source, arrivals[load])
            idx = ctx.lane_pos[lane_id]
            new_buffer = list(state.buffer)
            new_buffer[idx] = new_buffer[idx] + (load,)
            move = Move(MOVE_STORE, load, ctx.source, dest, tau)
            out.append((move, replace(
                state,
                buffer=tuple(new_buffer),
                pending_storage=state.pending_storage - {load},
                v_pos=dest,
                tabu=_next_tabu(state, None, ctx.tabu_tenure),
                elapsed=begin + tau)))

    for i, lane_id in enumerate(ctx.lane_order):
        stack = state.buffer[i]
        if not stack:
            continue
        top = stack[-1]
        origin = SlotRef(lane_id, len(stack))

        tau = ctx.loaded_time(origin, ctx.sink)
        new_buffer = list(state.buffer)
        new_buffer[i] = stack[:-1]
        move = Move(MOVE_RETRIEVE, top, origin, ctx.sink, tau)
        out.append((move, replace(
            state,
            buffer=tuple(new_buffer),
            delivered=state.delivered | {top},
            v_pos=ctx.sink,
            tabu=_next_tabu(state, lane_id, ctx.tabu_tenure),
            elapsed=state.elapsed + ctx.empty_leg(state.v_pos, origin) + tau)))

        if len(stack) >= 2:
            # Top load sits on another pending load: candidate for relocation.
            for k, dest_lane in enumerate(ctx.lane_order):
                if dest_lane == lane_id or dest_lane in blocked:
                    continue
                if fill[dest_lane] >= ctx.capacity[dest_lane]:
                    continue
                dest = SlotRef(dest_lane, fill[dest_lane] + 1)
                tau = ctx.loaded_time(origin, dest)
                shuffled = list(state.buffer)
                shuffled[i] = stack[:-1]
                shuffled[k] = shuffled[k] + (top,)
                move = Move(MOVE_RESHUFFLE, top, origin, dest, tau)
                out.append((move, replace(
                    state,
                    buffer=tuple(shuffled),
                    v_pos=dest,
                    tabu=_next_tabu(state, lane_id, ctx.tabu_tenure),
                    elapsed=state.elapsed + ctx.empty_leg(state.v_pos, origin) + tau)))

    out.sort(key=lambda pair: _move_rank(pair[0]))
    return out


def _move_rank(move: Move) -> tuple[int, int, int, int, int]:
    return (_KIND_RANK[move.kind], move.origin.lane, move.origin.depth,
            move.dest.lane, move.dest.depth)


def _is_goal(state: SearchState) -> bool:
    return not state.pending_storage and all(not s for s in state.buffer)


def heuristic_ops(ctx: SequencerContext, state: SearchState) -> float:
    """Remaining loaded-work estimate: greedy best-match storages + direct
    retrieval legs for everything already in the buffer."""
    total = 0.0
    for i, lane_id in enumerate(ctx.lane_order):
        total += ctx.sink_prefix[lane_id][len(state.buffer[i])]
    pending = len(state.pending_storage)
    if pending:
        # Per-slot cost is load independent, so cheapest-slot-first matching
        # in queue order equals the optimal assignment.
        slot_cost = ctx.slot_cost
        heap: list[tuple[float, int, int]] = []
        for i, lane_id in enumerate(ctx.lane_order):
            depth = len(state.buffer[i]) + 1
            if depth <= ctx.capacity[lane_id]:
                heapq.heappush(heap, (slot_cost[(lane_id, depth)], lane_id, depth))
        for _ in range(pending):
            if heap:
                cost, lane_id, depth = heapq.heappop(heap)
                total += cost
                if depth + 1 <= ctx.capacity[lane_id]:
                    heapq.heappush(heap, (slot_cost[(lane_id, depth + 1)],
                                          lane_id, depth + 1))
            else:
                total += ctx.mean_slot_cost()
    return total


def heuristic_cost(ctx: SequencerContext, state: SearchState,
                   params: SearchParams) -> CostBreakdown:
    """Full penalty-aware estimate for ``state`` (ops, block, prio, pre-store)."""
    ops = heuristic_ops(ctx, state)

    empty_lanes = [lane_id for i, lane_id in enumerate(ctx.lane_order) if not state.buffer[i]]
    block = 0.0
    for i, lane_id in enumerate(ctx.lane_order):
        stack = state.buffer[i]
        for j in range(2, len(stack) + 1):
            slot = SlotRef(lane_id, j)
            if empty_lanes:
                block += min(ctx.loaded_time(slot, SlotRef(e, 1)) for e in empty_lanes)
            else:
                block += 2.0 * ctx.avg_reshuffle
    block *= params.block_weight

    prio = 0.0
    pr = ctx.priorities
    pending_retrieval = [u for i in range(len(state.buffer)) for u in state.buffer[i]]
    pending_retrieval += [u for u in state.pending_storage]
    for done in state.delivered:
        for waiting in pending_retrieval:
            if pr.get(done, 0) > pr.get(waiting, 0):
                prio += params.priority_penalty
    for stack in state.buffer:
        for deep in range(len(stack)):
            for shallow in range(deep + 1, len(stack)):
                # Less urgent load parked in front of a more urgent one.
                if pr.get(stack[shallow], 0) > pr.get(stack[deep], 0):
                    prio += params.priority_penalty

    pre_store = 0.0
    stored_here = [u for stack in state.buffer for u in stack
                   if u not in ctx.pre_stored]
    for waiting_store in state.pending_storage:
        for buffered_load in stored_here:
            # We parked an arrival although a tighter one still waits.
            if pr.get(waiting_store, 0) < pr.get(buffered_load, 0):
                pre_store += params.priority_penalty

    return CostBreakdown(ops=ops, block=block, prio=prio, pre_store=pre_store)


class _Node:
    __slots__ = ("state", "g", "move", "parent", "cost", "full", "rank")

    def __init__(self, state, g, move, parent, cost, full, rank):
        self.state = state
        self.g = g
        self.move = move
        self.parent = parent
        self.cost = cost
        self.full = full
        self.rank = rank


def _state_key(state: SearchState) -> tuple:
    return (state.buffer, state.pending_storage, state.v_pos, state.tabu)


def astar_search(instance: Instance, orders: list[Order], priorities: dict[int, int],
                 params: SearchParams = SearchParams()) -> MoveSequence:
    """Search for a complete move sequence serving ``orders``.

    Beam-limited A* with a bounded open set and lazily evaluated penalty
    terms; raises SearchFailure/SearchTimeout when no goal state is reached.
    """
    ctx = SequencerContext(instance, priorities, params.tabu_tenure)
    arrivals = {u.id: u.arrival_open for u in instance.loads}
    root_state = initial_state(instance, orders)
    deadline = time.monotonic() + params.time_limit

    trace = open(params.trace_file, "w") if params.trace_file else None
    if trace:
        trace.write("expansion,state,g,h_ops,h_block,h_prio,h_pre_store,action\n")

    counter = 0
    root = _Node(root_state, 0, None, None,
                 CostBreakdown(heuristic_ops(ctx, root_state), 0.0, 0.0, 0.0),
                 False, (-1, 0, 0, 0, 0))
    open_heap: list[tuple[float, int, tuple, int, _Node]] = []
    heapq.heappush(open_heap, (root.g + root.cost.ops, root.g, root.rank, counter, root))
    best_g: dict[tuple, int] = {_state_key(root_state): 0}
    expansions = 0

    try:
        while open_heap:
            if time.monotonic() > deadline:
                raise SearchTimeout(f"sequencing exceeded {params.time_limit:.0f}s")
            f, g, rank, _, node = heapq.heappop(open_heap)
            key = _state_key(node.state)
            if g > best_g.get(key, g):
                continue
            if not node.full:
                # Deferred evaluation: complete the estimate, queue again.
                node.cost = heuristic_cost(ctx, node.state, params)
                node.full = True
                counter += 1
                heapq.heappush(open_heap, (node.g + node.cost.total, node.g, node.rank,
                                           counter, node))
                continue
            if _is_goal(node.state):
                moves = _path(node)
                return MoveSequence(moves=moves,
                                    precedences=derive_precedences(moves, instance),
                                    g_time=node.g, expansions=expansions)
            expansions += 1
            if trace:
                c = node.cost
                action = node.move.kind if node.move else "root"
                trace.write(f"{expansions},{hash(key) & 0xffffffff},{node.g},"
                            f"{c.ops},{c.block},{c.prio},{c.pre_store},{action}\n")

            batch = []
            for move, nxt in successors(ctx, node.state, arrivals):
                nkey = _state_key(nxt)
                if nxt.elapsed >= best_g.get(nkey, nxt.elapsed + 1):
                    continue
                child = _Node(nxt, nxt.elapsed, move, node,
                              CostBreakdown(heuristic_ops(ctx, nxt), 0.0, 0.0, 0.0),
                              False, _move_rank(move))
                batch.append((child.g + child.cost.ops, child.g, child.rank, child))
            batch.sort(key=lambda item: item[:3])
            for fval, gval, rnk, child in batch[:params.beam_k]:
                best_g[_state_key(child.state)] = child.g
                counter += 1
                heapq.heappush(open_heap, (fval, gval, rnk, counter, child))

            if len(open_heap) > params.open_limit:
                keep = heapq.nsmallest(len(open_heap) // 2, open_heap)
                open_heap = keep
                heapq.heapify(open_heap)
    finally:
        if trace:
            trace.close()

    raise SearchFailure("open set exhausted before all orders were served")


def _path(node: _Node) -> tuple[Move, ...]:
    moves = []
    while node.parent is not None:
        moves.append(node.move)
        node = node.parent
    return tuple(reversed(moves))


def derive_precedences(moves: tuple[Move, ...] | list[Move],
                       instance: Instance) -> tuple[tuple[int, int, str], ...]:
    """Edges (before, after, reason) the scheduler must honor.

    Load flow chains every load's own moves; LIFO orders removals of
    co-resident loads front before deep; lane order keeps all moves touching
    one buffer lane in sequence.  Load flow wins when reasons coincide.
    """
    buffer_ids = {l.id for l in instance.layout.lanes if l.kind == LANE_BUFFER}
    edges: dict[tuple[int, int], str] = {}
    rank = {"load-flow": 0, "lifo": 1, "lane-order": 2}

    def add(a: int, b: int, reason: str) -> None:
        cur = edges.get((a, b))
        if cur is None or rank[reason] < rank[cur]:
            edges[(a, b)] = reason

    last_move_of_load: dict[int, int] = {}
    for idx, move in enumerate(moves):
        if move.load is not None:
            if move.load in last_move_of_load:
                add(last_move_of_load[move.load], idx, "load-flow")
            last_move_of_load[move.load] = idx

    # Replay stacks to find co-residents at each removal.
    stacks: dict[int, list[int]] = {lane: [] for lane in buffer_ids}
    for u in instance.loads:
        if u.initial_slot is not None:
            stacks[u.initial_slot.lane].append((u.initial_slot.depth, u.id))
    for lane in stacks:
        stacks[lane] = [load for _, load in sorted(stacks[lane])]
    for idx, move in enumerate(moves):
        if move.origin.lane in buffer_ids and move.load is not None:
            stack = stacks[move.origin.lane]
            if stack and stack[-1] == move.load:
                stack.pop()
                for deeper in stack:
                    nxt = _next_removal(moves, idx + 1, deeper, buffer_ids)
                    if nxt is not None:
                        add(idx, nxt, "lifo")
        if move.dest.lane in buffer_ids and move.load is not None:
            stacks[move.dest.lane].append(move.load)

    last_touch: dict[int, int] = {}
    for idx, move in enumerate(moves):
        touched = [l for l in (move.origin.lane, move.dest.lane) if l in buffer_ids]
        for lane in dict.fromkeys(touched):
            if lane in last_touch:
                add(last_touch[lane], idx, "lane-order")
            last_touch[lane] = idx

    out = sorted(edges.items())
    for (a, b), _ in out:
        if a >= b:
            raise SearchFailure(f"precedence cycle: edge ({a}, {b}) against move order")
    return tuple((a, b, reason) for (a, b), reason in out)


def _next_removal(moves, start: int, load: int, buffer_ids: set[int]) -> int | None:
    for idx in range(start, len(moves)):
        m = moves[idx]
        if m.load == load and m.origin.lane in buffer_ids:
            return idx
    return None

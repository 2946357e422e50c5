"""Deadline-driven order queue with window-enclosure dependency groups.

Every unit load contributes a retrieval order, and a storage order unless it
is already stored when the plan starts.  Orders whose windows enclose each
other are mutually dependent and form groups; groups are sequenced by their
most urgent deadline, orders inside a group by their own deadline.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Instance

STORAGE = "storage"
RETRIEVAL = "retrieval"

_DIRECTION_RANK = {STORAGE: 0, RETRIEVAL: 1}


@dataclass(frozen=True)
class Order:
    load: int
    direction: str
    release: int    # earliest handling time (a_o)
    due: int        # latest handling time (d_o)


@dataclass(frozen=True)
class DependencyGroup:
    orders: tuple[Order, ...]

    @property
    def due(self) -> int:
        return min(o.due for o in self.orders)


@dataclass(frozen=True)
class PriorityQueue:
    orders: tuple[Order, ...]
    groups: tuple[DependencyGroup, ...]
    priority: dict[int, int]

    def priority_of(self, load: int) -> int:
        return self.priority[load]


def orders_from_instance(instance: Instance) -> list[Order]:
    out: list[Order] = []
    for u in instance.loads:
        if not u.pre_stored:
            out.append(Order(u.id, STORAGE, u.arrival_open, u.arrival_close))
        out.append(Order(u.id, RETRIEVAL, u.due_open, u.deadline))
    return out


def encloses(o: Order, p: Order) -> bool:
    """True when one order's window contains the other's (symmetric)."""
    return (o.release <= p.release and o.due >= p.due) or \
           (p.release <= o.release and p.due >= o.due)


def _order_key(o: Order) -> tuple:
    return (o.due, o.release, o.load, _DIRECTION_RANK[o.direction])


def build_queue(orders: list[Order]) -> PriorityQueue:
    """Group enclosing orders, sequence them and assign retrieval priorities.

    The result is independent of the input order: all ties are broken by
    (due, release, load id, direction).
    """
    items = sorted(orders, key=_order_key)
    n = len(items)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if encloses(items[i], items[j]):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri

    members: dict[int, list[Order]] = {}
    for i in range(n):
        members.setdefault(find(i), []).append(items[i])
    groups = [DependencyGroup(tuple(sorted(g, key=_order_key))) for g in members.values()]
    groups.sort(key=lambda g: (g.due,) + _order_key(g.orders[0]))

    queue: list[Order] = []
    for g in groups:
        queue.extend(g.orders)

    # Dense deadline rank over the final sequence; equal deadlines always end
    # up adjacent (two orders with equal due dates enclose each other).
    priority: dict[int, int] = {}
    rank = 0
    prev_due: int | None = None
    for o in queue:
        if prev_due is None or o.due != prev_due:
            rank += 1
            prev_due = o.due
        if o.direction == RETRIEVAL:
            priority[o.load] = rank

    return PriorityQueue(orders=tuple(queue), groups=tuple(groups), priority=priority)

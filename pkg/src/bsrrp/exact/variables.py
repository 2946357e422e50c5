"""Index sets and naming for the binary formulation's variables.

Eight families cover the model: reshuffles between buffer slots, retrievals,
storages, empty drives, slot occupancy, vehicle presence, and the cumulative
stored/delivered flags.  Every name encodes its indices with underscores and
decodes uniquely back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..model import Instance, LANE_BUFFER, LANE_SINK, SlotRef


@dataclass
class IPVariableSpace:
    """Enumerates and names every declared variable for one instance."""

    instance: Instance
    horizon: int = 0

    all_slots: tuple[SlotRef, ...] = field(init=False)
    buffer_slots: tuple[SlotRef, ...] = field(init=False)
    nonsink_slots: tuple[SlotRef, ...] = field(init=False)
    loads: tuple[int, ...] = field(init=False)
    vehicles: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        layout = self.instance.layout
        if self.horizon <= 0:
            self.horizon = self.instance.horizon
        self.all_slots = layout.slots
        self.buffer_slots = tuple(
            s for s in layout.slots
            if layout.lane_by_id[s.lane].kind == LANE_BUFFER)
        self.nonsink_slots = tuple(
            s for s in layout.slots
            if layout.lane_by_id[s.lane].kind != LANE_SINK)
        self.loads = tuple(u.id for u in self.instance.loads)
        self.vehicles = tuple(range(1, self.instance.fleet_size + 1))

    # -- naming ------------------------------------------------------------

    @staticmethod
    def reshuffle(a: SlotRef, b: SlotRef, n: int, t: int, v: int) -> str:
        return f"x_{a.lane}_{a.depth}_{b.lane}_{b.depth}_{n}_{t}_{v}"

    @staticmethod
    def retrieve(a: SlotRef, n: int, t: int, v: int) -> str:
        return f"y_{a.lane}_{a.depth}_{n}_{t}_{v}"

    @staticmethod
    def store(a: SlotRef, n: int, t: int, v: int) -> str:
        return f"z_{a.lane}_{a.depth}_{n}_{t}_{v}"

    @staticmethod
    def empty_drive(a: SlotRef, b: SlotRef, t: int, v: int) -> str:
        return f"e_{a.lane}_{a.depth}_{b.lane}_{b.depth}_{t}_{v}"

    @staticmethod
    def occupancy(a: SlotRef, n: int, t: int) -> str:
        return f"b_{a.lane}_{a.depth}_{n}_{t}"

    @staticmethod
    def presence(a: SlotRef, t: int, v: int) -> str:
        return f"c_{a.lane}_{a.depth}_{t}_{v}"

    @staticmethod
    def stored(n: int, t: int) -> str:
        return f"s_{n}_{t}"

    @staticmethod
    def delivered(n: int, t: int) -> str:
        return f"g_{n}_{t}"

    @staticmethod
    def decode(name: str) -> tuple[str, tuple[int, ...]]:
        head, *rest = name.split("_")
        return head, tuple(int(p) for p in rest)

    # -- enumeration -------------------------------------------------------

    def counts(self) -> dict[str, int]:
        t_steps = self.horizon
        n = len(self.loads)
        v = len(self.vehicles)
        nb = len(self.buffer_slots)
        na = len(self.all_slots)
        nns = len(self.nonsink_slots)
        return {
            "x": nb * nb * n * t_steps * v,
            "y": nns * n * t_steps * v,
            "z": nb * n * t_steps * v,
            "e": na * na * t_steps * v,
            "b": nb * n * t_steps,
            "c": na * t_steps * v,
            "s": n * t_steps,
            "g": n * t_steps,
        }

    def total(self) -> int:
        return sum(self.counts().values())

    def names(self) -> list[str]:
        """Every declared variable, family by family in index order."""
        out: list[str] = []
        ts = range(1, self.horizon + 1)
        for a in self.buffer_slots:
            for b in self.buffer_slots:
                for n in self.loads:
                    for t in ts:
                        for v in self.vehicles:
                            out.append(self.reshuffle(a, b, n, t, v))
        for a in self.nonsink_slots:
            for n in self.loads:
                for t in ts:
                    for v in self.vehicles:
                        out.append(self.retrieve(a, n, t, v))
        for a in self.buffer_slots:
            for n in self.loads:
                for t in ts:
                    for v in self.vehicles:
                        out.append(self.store(a, n, t, v))
        for a in self.all_slots:
            for b in self.all_slots:
                for t in ts:
                    for v in self.vehicles:
                        out.append(self.empty_drive(a, b, t, v))
        for a in self.buffer_slots:
            for n in self.loads:
                for t in ts:
                    out.append(self.occupancy(a, n, t))
        for a in self.all_slots:
            for t in ts:
                for v in self.vehicles:
                    out.append(self.presence(a, t, v))
        for n in self.loads:
            for t in ts:
                out.append(self.stored(n, t))
        for n in self.loads:
            for t in ts:
                out.append(self.delivered(n, t))
        return out

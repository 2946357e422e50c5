"""JSON (de)serialization for instances and schedules."""

from __future__ import annotations

import json
from typing import Any

from .model import (
    DistanceTable,
    Instance,
    Lane,
    Layout,
    Move,
    Schedule,
    ScheduleEntry,
    SlotRef,
    TIME_MODEL_TRAVEL,
    UnitLoad,
    validate_instance,
)


def _slot_to_dict(ref: SlotRef) -> dict[str, int]:
    return {"lane": ref.lane, "depth": ref.depth}


def _slot_from_dict(obj: dict[str, int]) -> SlotRef:
    return SlotRef(int(obj["lane"]), int(obj["depth"]))


def instance_to_dict(instance: Instance) -> dict[str, Any]:
    lanes = []
    for lane in instance.layout.lanes:
        lanes.append({
            "id": lane.id,
            "kind": lane.kind,
            "access": list(lane.access_point) if lane.access_point is not None else None,
            "slots": [list(c) for c in lane.slot_coords] if lane.slot_coords is not None else None,
        })
    doc: dict[str, Any] = {"lanes": lanes}
    table = instance.layout.distance_table
    if table is not None:
        entry: dict[str, Any] = {
            "slots": [[s.lane, s.depth] for s in table.slots],
            "loaded": [list(row) for row in table.loaded],
        }
        if table.empty is not None:
            entry["empty"] = [list(row) for row in table.empty]
        doc["distance_matrix"] = entry
    if instance.layout.lane_traversal is not None:
        doc["lane_traversal"] = [[lane_id, list(times)]
                                 for lane_id, times in instance.layout.lane_traversal]
    loads = []
    for u in instance.loads:
        item: dict[str, Any] = {
            "id": u.id,
            "arrival": list(u.arrival),
            "retrieval": list(u.retrieval),
        }
        if u.initial_slot is not None:
            item["initial_slot"] = _slot_to_dict(u.initial_slot)
        loads.append(item)
    doc["loads"] = loads
    doc["fleet"] = {
        "size": instance.fleet_size,
        "starts": [_slot_to_dict(s) for s in instance.vehicle_starts],
    }
    doc["handling_time"] = instance.handling_time
    if instance.time_model != TIME_MODEL_TRAVEL:
        doc["time_model"] = instance.time_model
    return doc


def instance_from_dict(doc: dict[str, Any]) -> Instance:
    lanes = []
    for item in doc["lanes"]:
        capacity = len(item["slots"]) if item.get("slots") is not None else int(item.get("capacity", 1))
        lanes.append(Lane(
            id=int(item["id"]),
            kind=item["kind"],
            access_point=tuple(item["access"]) if item.get("access") is not None else None,
            slot_coords=tuple(tuple(c) for c in item["slots"]) if item.get("slots") is not None else None,
            capacity=capacity,
        ))
    table = None
    if doc.get("distance_matrix") is not None:
        raw = doc["distance_matrix"]
        table = DistanceTable(
            slots=tuple(SlotRef(int(s[0]), int(s[1])) for s in raw["slots"]),
            loaded=tuple(tuple(row) for row in raw["loaded"]),
            empty=tuple(tuple(row) for row in raw["empty"]) if raw.get("empty") is not None else None,
        )
    traversal = None
    if doc.get("lane_traversal") is not None:
        traversal = tuple((int(lane_id), tuple(int(t) for t in times))
                          for lane_id, times in doc["lane_traversal"])
    layout = Layout(lanes=tuple(lanes), distance_table=table, lane_traversal=traversal)
    loads = []
    for item in doc["loads"]:
        loads.append(UnitLoad(
            id=int(item["id"]),
            arrival=(int(item["arrival"][0]), int(item["arrival"][1])),
            retrieval=(int(item["retrieval"][0]), int(item["retrieval"][1])),
            initial_slot=_slot_from_dict(item["initial_slot"]) if item.get("initial_slot") else None,
        ))
    fleet = doc["fleet"]
    return Instance(
        layout=layout,
        loads=tuple(loads),
        fleet_size=int(fleet["size"]),
        vehicle_starts=tuple(_slot_from_dict(s) for s in fleet["starts"]),
        handling_time=int(doc.get("handling_time", 1)),
        time_model=doc.get("time_model", TIME_MODEL_TRAVEL),
    )


def instance_to_json(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2) + "\n"


def load_instance(source: str | bytes | dict) -> Instance:
    """Parse and validate an instance document."""
    doc = source if isinstance(source, dict) else json.loads(source)
    instance = instance_from_dict(doc)
    validate_instance(instance)
    return instance


def schedule_to_dict(schedule: Schedule) -> dict[str, Any]:
    entries = []
    for e in schedule.entries:
        entries.append({
            "kind": e.move.kind,
            "load": e.move.load,
            "vehicle": e.vehicle,
            "origin": _slot_to_dict(e.move.origin),
            "dest": _slot_to_dict(e.move.dest),
            "start": e.start,
            "end": e.end,
        })
    return {
        "entries": entries,
        "objective_distance": schedule.objective_distance,
        "total_tardiness": schedule.total_tardiness,
    }


def schedule_from_dict(doc: dict[str, Any]) -> Schedule:
    entries = []
    for item in doc["entries"]:
        move = Move(
            kind=item["kind"],
            load=item["load"] if item["load"] is None else int(item["load"]),
            origin=_slot_from_dict(item["origin"]),
            dest=_slot_from_dict(item["dest"]),
            duration=int(item["end"]) - int(item["start"]),
        )
        entries.append(ScheduleEntry(move=move, vehicle=int(item["vehicle"]),
                                     start=int(item["start"]), end=int(item["end"])))
    return Schedule(
        entries=tuple(entries),
        objective_distance=doc.get("objective_distance", 0.0),
        total_tardiness=doc.get("total_tardiness", 0),
    )


def schedule_to_json(schedule: Schedule) -> str:
    return json.dumps(schedule_to_dict(schedule), indent=2) + "\n"


def load_schedule(source: str | bytes | dict) -> Schedule:
    doc = source if isinstance(source, dict) else json.loads(source)
    return schedule_from_dict(doc)

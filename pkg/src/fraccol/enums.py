"""Shared vocabularies: agent classes, conflict types and severity levels."""

from __future__ import annotations

from enum import Enum, IntEnum


class AgentClass(str, Enum):
    PASSENGER_VEHICLE = "passenger_vehicle"
    TRUCK = "truck"
    MOTORCYCLE = "motorcycle"
    CYCLIST = "cyclist"
    PEDESTRIAN = "pedestrian"

    @property
    def is_vru(self) -> bool:
        return self in (AgentClass.CYCLIST, AgentClass.PEDESTRIAN)


class ConflictType(str, Enum):
    REAR_END_LEAD_BRAKE = "rear_end_lead_brake"
    CUT_IN = "cut_in"
    PULLOUT = "pullout"
    CROSSING_STRAIGHT = "crossing_straight"
    LEFT_TURN_ACROSS_PATH = "left_turn_across_path"
    RIGHT_TURN_MERGE = "right_turn_merge"
    HEAD_ON = "head_on"
    VRU_CROSSING = "vru_crossing"


class SeverityLevel(IntEnum):
    """Loss severity. Integer value is the badness rank, so ``L0 > L1 > L2 > Lnone``."""

    Lnone = 0
    L2 = 1
    L1 = 2
    L0 = 3

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, name: str) -> SeverityLevel:
        try:
            return cls["Lnone" if name in ("NC", "none") else name]
        except KeyError:
            raise ValueError(f"unknown severity level {name!r}") from None

    @property
    def is_collision(self) -> bool:
        return self is not SeverityLevel.Lnone


# Report column order, most severe first.
SEVERITY_COLUMNS = (SeverityLevel.L0, SeverityLevel.L1, SeverityLevel.L2, SeverityLevel.Lnone)

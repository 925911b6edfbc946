from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple


class Arm(str, Enum):
    CONTROL = "control"
    CORRUPTED = "corrupted"


ARMS = (Arm.CONTROL, Arm.CORRUPTED)

# (region, arm)
Cell = Tuple[str, Arm]


@dataclass(frozen=True)
class ParticipantRecord:
    """One deployed honeypot.

    All timestamps are integer milliseconds since trial start. Once its stage
    has ended a participant carries exactly one of ``event_at`` and
    ``censored_at``.
    """

    id: str
    region: str
    arm: Arm
    stage: int
    deployed_at: int
    event_at: Optional[int] = None
    censored_at: Optional[int] = None

    @property
    def cell(self) -> Cell:
        return (self.region, self.arm)

    @property
    def evented(self) -> bool:
        return self.event_at is not None

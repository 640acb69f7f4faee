from __future__ import annotations

import numpy as np
import pytest

from fraccol.enums import AgentClass
from fraccol.scene import AgentTrack, Annotations, ConflictScene


def straight(
    agent_id="a",
    cls=AgentClass.PASSENGER_VEHICLE,
    *,
    x0=0.0,
    y0=0.0,
    heading=0.0,
    speed=10.0,
    duration=6.0,
    dt=0.05,
    length=4.8,
    width=1.9,
    mass=None,
) -> AgentTrack:
    t = dt * np.arange(int(round(duration / dt)) + 1)
    return AgentTrack(
        agent_id=agent_id,
        agent_class=cls,
        length=length,
        width=width,
        t=t,
        x=x0 + speed * t * np.cos(heading),
        y=y0 + speed * t * np.sin(heading),
        heading=np.full_like(t, heading),
        speed=np.full_like(t, speed),
        mass=mass,
    )


def scene_of(a: AgentTrack, b: AgentTrack, scene_id="s", **ann) -> ConflictScene:
    return ConflictScene(scene_id, a, b, Annotations(**ann))


@pytest.fixture(scope="session")
def default_model():
    from fraccol.behavior import default_behavior_model

    return default_behavior_model()


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

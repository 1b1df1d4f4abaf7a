"""Contact schedules for the takeoff phase."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownGait
from .srb import N_FEET

GAITS = ("static", "pronk", "trot", "bound")

# feet in contact during the first / second half of a gait cycle (FL, FR, HL, HR)
_HALF_CYCLE = {
    "pronk": ((1, 1, 1, 1), (0, 0, 0, 0)),
    "trot": ((1, 0, 0, 1), (0, 1, 1, 0)),
    "bound": ((1, 1, 0, 0), (0, 0, 1, 1)),
}


@dataclass(frozen=True)
class ContactSchedule:
    """Per-step, per-foot contact flags.

    Step ``k`` covers ``[k*dt, (k+1)*dt)``. The trajectory has ``n_t`` state
    knots and ``n_t - 1`` control intervals, so interval ``k`` uses row ``k``
    and the final row describes the liftoff knot.
    """

    dt: float
    contact: np.ndarray  # (n_t, 4) bool

    def __post_init__(self):
        c = np.asarray(self.contact, dtype=bool)
        if c.ndim != 2 or c.shape[1] != N_FEET or c.shape[0] < 2:
            raise ValueError(f"contact must be (n_t >= 2, {N_FEET}), got {c.shape}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "contact", c)

    @property
    def n_t(self) -> int:
        return self.contact.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.n_t - 1

    @property
    def stance_count(self) -> np.ndarray:
        return self.contact.sum(axis=1)

    @property
    def t_lo(self) -> float:
        return self.n_intervals * self.dt

    def interval_at(self, t: float) -> int:
        k = int(np.floor(t / self.dt + 1e-9))
        return min(max(k, 0), self.n_intervals - 1)

    def stance_phases(self, foot: int):
        """Contiguous stance intervals of ``foot`` as (first, last) interval indices."""
        flags = self.contact[: self.n_intervals, foot]
        phases, start = [], None
        for k, on in enumerate(flags):
            if on and start is None:
                start = k
            elif not on and start is not None:
                phases.append((start, k - 1))
                start = None
        if start is not None:
            phases.append((start, len(flags) - 1))
        return phases

    def to_dict(self):
        return {"dt": self.dt, "contact": self.contact.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(dt=float(d["dt"]), contact=np.asarray(d["contact"], dtype=bool))


def schedule_from_gait(gait: str, n_t: int, dt: float, initial_phase: float = 0.0) -> ContactSchedule:
    """One gait cycle split into ``n_t`` steps, sampled at step midpoints."""
    if n_t < 2:
        raise ValueError("n_t must be at least 2")
    if gait == "static":
        return ContactSchedule(dt, np.ones((n_t, N_FEET), dtype=bool))
    if gait not in _HALF_CYCLE:
        raise UnknownGait(f"unknown gait {gait!r}; expected one of {GAITS}")
    first, second = (np.array(h, dtype=bool) for h in _HALF_CYCLE[gait])
    phase = ((np.arange(n_t) + 0.5) / n_t + initial_phase) % 1.0
    contact = np.where((phase < 0.5)[:, None], first, second)
    return ContactSchedule(dt, contact)

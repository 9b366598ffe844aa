"""Discrete-time co-simulation scheduler.

Registered simulators advance in lockstep with two-phase semantics:
during a step every simulator sees only the signals published in the
*previous* step; all new outputs are published atomically afterwards.
This makes results independent of registration order.

End-of-step hooks run after publication in a fixed order; the network
transport and the capture recorder live there.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Any, Callable


class SchedulerError(Exception):
    pass


class DuplicateIdError(SchedulerError):
    pass


class SignalConflictError(SchedulerError):
    pass


class LifecycleError(SchedulerError):
    pass


class SimulatorStepError(SchedulerError):
    """A simulator raised during its step; carries the simulator id."""

    def __init__(self, sim_id: str, step: int, cause: BaseException):
        super().__init__(f"simulator {sim_id!r} failed at step {step}: {cause}")
        self.sim_id = sim_id
        self.step = step


@dataclass
class SimClock:
    epoch_s: float          # scenario start, seconds since midnight
    step_s: float = 1.0
    now: int = 0            # current step index

    def __post_init__(self):
        if self.step_s <= 0:
            raise SchedulerError(f"step_s must be > 0, got {self.step_s}")

    def time_s(self, step: int | None = None) -> float:
        """Wall-clock seconds since midnight at the given step."""
        n = self.now if step is None else step
        return self.epoch_s + n * self.step_s


@dataclass(frozen=True)
class ExchangeRecord:
    step: int
    signal: str
    value: Any


@dataclass(frozen=True)
class RunSummary:
    steps: int
    wall_s: float


class StepContext:
    """What one simulator sees during its compute phase."""

    def __init__(self, clock: SimClock, board: dict, staged: dict, outputs):
        self.clock = clock
        self._board = board
        self._staged = staged
        self._outputs = outputs

    @property
    def step(self) -> int:
        return self.clock.now

    @property
    def t_s(self) -> float:
        return self.clock.time_s()

    def get(self, signal: str, default=None):
        """Value published in the previous step (or default)."""
        return self._board.get(signal, default)

    def publish(self, signal: str, value) -> None:
        if signal not in self._outputs:
            raise SignalConflictError(f"undeclared output signal {signal!r}")
        self._staged[signal] = value


@dataclass
class SimulatorHandle:
    id: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    behavior: Callable[[StepContext], None] = lambda ctx: None


class Scheduler:
    def __init__(self, clock: SimClock):
        self.clock = clock
        self._sims: list[SimulatorHandle] = []
        self._producers: dict[str, str] = {}
        self._hooks: list[Callable[[int], None]] = []
        self._board: dict[str, Any] = {}
        self._started = False
        self.transcript: list[ExchangeRecord] = []

    def register(self, handle: SimulatorHandle) -> str:
        if self._started:
            raise LifecycleError("cannot register after the run has started")
        if any(s.id == handle.id for s in self._sims):
            raise DuplicateIdError(f"duplicate simulator id {handle.id!r}")
        for sig in handle.outputs:
            if sig in self._producers:
                raise SignalConflictError(
                    f"signal {sig!r} already produced by {self._producers[sig]!r}")
            self._producers[sig] = handle.id
        self._sims.append(handle)
        return handle.id

    def value(self, signal: str, default=None):
        """Most recently published value of a signal (for hooks/inspection)."""
        return self._board.get(signal, default)

    def add_hook(self, fn: Callable[[int], None]) -> None:
        """End-of-step hook, run after publication in registration order."""
        if self._started:
            raise LifecycleError("cannot add hooks after the run has started")
        self._hooks.append(fn)

    def _check_inputs(self) -> None:
        for sim in self._sims:
            for sig in sim.inputs:
                if sig not in self._producers:
                    raise SignalConflictError(
                        f"simulator {sim.id!r} consumes {sig!r}, which has no producer")

    def step_all(self) -> list[ExchangeRecord]:
        if not self._started:
            self._check_inputs()
            self._started = True
        staged: dict[str, Any] = {}
        for sim in self._sims:
            ctx = StepContext(self.clock, self._board, staged, sim.outputs)
            try:
                sim.behavior(ctx)
            except SchedulerError:
                raise
            except Exception as exc:  # noqa: BLE001 - diagnostic wrapper
                raise SimulatorStepError(sim.id, self.clock.now, exc) from exc
        records = [ExchangeRecord(self.clock.now, sig, staged[sig])
                   for sig in sorted(staged)]
        self._board.update(staged)
        self.transcript.extend(records)
        for hook in self._hooks:
            hook(self.clock.now)
        self.clock.now += 1
        return records

    def steps_until(self, until_s: float) -> int:
        return max(0, math.ceil((until_s - self.clock.epoch_s) / self.clock.step_s))

    def run(self, until_s: float, realtime: bool = False) -> RunSummary:
        """Advance until the given time-of-day (seconds since midnight)."""
        n = self.steps_until(until_s)
        t0 = time.monotonic()
        start = self.clock.now
        while self.clock.now < n:
            self.step_all()
            if realtime:
                ahead = (self.clock.now - start) * self.clock.step_s \
                    - (time.monotonic() - t0)
                if ahead > 0:
                    time.sleep(ahead)
        return RunSummary(steps=self.clock.now - start,
                          wall_s=time.monotonic() - t0)

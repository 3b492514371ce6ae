"""Terminal types, inner states and their single-slot evolution.

Three kinds of terminals share the channel:

* ``AOI``:    status-update source, inner state ``(a, h)``: age of the
  buffered packet (``None`` when the buffer is empty) and the age of
  information at the destination.
* ``IDT_EH``: saturated energy-harvesting source, inner state ``(d, e)``:
  slots since the last delivery and the energy buffer level.
* ``QUEUE``:  throughput source, inner state ``q``: FCFS queue length.

All states are immutable values and every step function is pure.  Within a
slot, data arrivals are applied first, then the terminal may contend
(:func:`can_transmit` is evaluated on the post-arrival state), then the
delivery outcome updates the state.  Harvested energy becomes usable from
the following slot.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional, Union


class TerminalKind(enum.IntEnum):
    AOI = 0
    IDT_EH = 1
    QUEUE = 2

    @classmethod
    def parse(cls, value: Union[str, int, "TerminalKind"]) -> "TerminalKind":
        if isinstance(value, cls):
            return value
        if isinstance(value, int):
            return cls(value)
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"aoi": cls.AOI, "idt_eh": cls.IDT_EH, "idteh": cls.IDT_EH,
                   "queue": cls.QUEUE}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown terminal kind {value!r}") from None

    @property
    def label(self) -> str:
        return {0: "aoi", 1: "idt_eh", 2: "queue"}[int(self)]


@dataclass(frozen=True)
class AoiState:
    buffered_age: Optional[int]
    destination_aoi: int


@dataclass(frozen=True)
class IdtEhState:
    elapsed_since_delivery: int
    energy_level: int
    energy_capacity: int


@dataclass(frozen=True)
class QueueState:
    queue_length: int


InnerState = Union[AoiState, IdtEhState, QueueState]


@dataclass(frozen=True)
class TerminalConfig:
    """Static description of one terminal.

    ``energy_arrival_rate`` and ``energy_capacity`` must be given for
    ``IDT_EH`` terminals and left as ``None`` otherwise.  ``IDT_EH``
    terminals are saturated, so their ``data_arrival_rate`` is not used.
    """

    kind: TerminalKind
    data_arrival_rate: float = 1.0
    energy_arrival_rate: Optional[float] = None
    energy_capacity: Optional[int] = None
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", TerminalKind.parse(self.kind))
        if not 0.0 <= self.data_arrival_rate <= 1.0:
            raise ValueError(f"data_arrival_rate must be in [0, 1], got {self.data_arrival_rate}")
        if self.weight < 0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")
        has_energy = self.energy_arrival_rate is not None or self.energy_capacity is not None
        if self.kind is TerminalKind.IDT_EH:
            for name in ("energy_arrival_rate", "energy_capacity"):
                if getattr(self, name) is None:
                    raise ValueError(f"{name} is required for idt_eh terminals")
            if not 0.0 <= self.energy_arrival_rate <= 1.0:
                raise ValueError(
                    f"energy_arrival_rate must be in [0, 1], got {self.energy_arrival_rate}")
            if int(self.energy_capacity) != self.energy_capacity or self.energy_capacity < 1:
                raise ValueError(
                    f"energy_capacity must be a positive integer, got {self.energy_capacity}")
        elif has_energy:
            raise ValueError(f"energy fields are only valid for idt_eh terminals, not {self.kind.label}")

    @property
    def input_dim(self) -> int:
        return 1 if self.kind is TerminalKind.QUEUE else 2


def initial_state(config: TerminalConfig) -> InnerState:
    if config.kind is TerminalKind.AOI:
        return AoiState(buffered_age=None, destination_aoi=1)
    if config.kind is TerminalKind.IDT_EH:
        return IdtEhState(elapsed_since_delivery=1, energy_level=0,
                          energy_capacity=int(config.energy_capacity))
    return QueueState(queue_length=0)


def receive_arrival(s: InnerState, new_arrival: bool) -> InnerState:
    """Apply the start-of-slot data arrival (no-op for IDT_EH terminals)."""
    if not new_arrival:
        return s
    if isinstance(s, AoiState):
        # keep only the freshest packet
        return replace(s, buffered_age=1)
    if isinstance(s, QueueState):
        return QueueState(s.queue_length + 1)
    return s


def step_aoi(s: AoiState, new_arrival: bool, delivered: bool) -> AoiState:
    s = receive_arrival(s, new_arrival)
    if delivered:
        if s.buffered_age is None:
            raise ValueError("AoI terminal delivered with an empty buffer")
        return AoiState(buffered_age=None, destination_aoi=s.buffered_age + 1)
    age = None if s.buffered_age is None else s.buffered_age + 1
    return AoiState(buffered_age=age, destination_aoi=s.destination_aoi + 1)


def step_idt_eh(s: IdtEhState, energy_arrival: bool, delivered: bool,
                transmitted: Optional[bool] = None) -> IdtEhState:
    """Advance an energy-harvesting terminal by one slot.

    ``transmitted`` defaults to ``delivered``; pass it explicitly for a
    collided transmission, which still spends one energy unit.
    """
    if transmitted is None:
        transmitted = delivered
    if delivered and not transmitted:
        raise ValueError("delivered without transmitting")
    if transmitted and s.energy_level < 1:
        raise ValueError("IDT-EH terminal transmitted with an empty energy buffer")
    d = 1 if delivered else s.elapsed_since_delivery + 1
    e = min(s.energy_level + int(energy_arrival) - int(transmitted), s.energy_capacity)
    return IdtEhState(elapsed_since_delivery=d, energy_level=e, energy_capacity=s.energy_capacity)


def step_queue(s: QueueState, new_arrival: bool, delivered: bool) -> QueueState:
    if delivered and s.queue_length + int(new_arrival) < 1:
        raise ValueError("queue terminal delivered with an empty queue")
    return QueueState(max(s.queue_length + int(new_arrival) - int(delivered), 0))


def instantaneous_cost(s: InnerState) -> float:
    if isinstance(s, AoiState):
        return float(s.destination_aoi)
    if isinstance(s, IdtEhState):
        return float(s.elapsed_since_delivery)
    return float(s.queue_length)


def can_transmit(s: InnerState) -> bool:
    if isinstance(s, AoiState):
        return s.buffered_age is not None
    if isinstance(s, IdtEhState):
        return s.energy_level >= 1
    return s.queue_length >= 1

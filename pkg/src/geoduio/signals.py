"""Deterministic input signal generators built from named primitives."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

KINDS = ("sin", "cos", "step", "constant", "gaussian-noise")


@dataclass(frozen=True)
class Primitive:
    """One additive term of an input channel.

    ``sin``/``cos``: ``amplitude * f(frequency * t + phase)``;
    ``step``: ``amplitude`` for ``t >= start``;
    ``constant``: ``amplitude``;
    ``gaussian-noise``: ``amplitude * N(0, 1)``, held for ``period`` seconds
    and seeded by ``seed`` so every evaluation is reproducible.
    """

    kind: str
    amplitude: float = 1.0
    frequency: float = 0.0
    phase: float = 0.0
    start: float = 0.0
    period: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown signal kind {self.kind!r}")

    def __call__(self, t):
        k = self.kind
        if k == "sin":
            return self.amplitude * np.sin(self.frequency * t + self.phase)
        if k == "cos":
            return self.amplitude * np.cos(self.frequency * t + self.phase)
        if k == "step":
            return self.amplitude if t >= self.start else 0.0
        if k == "constant":
            return self.amplitude
        idx = int(np.floor(t / self.period + 1e-9))
        return self.amplitude * np.random.default_rng(
            [self.seed, max(idx, 0)]).standard_normal()


@dataclass(frozen=True)
class InputSignal:
    """Vector signal; channel ``j`` is the sum of ``channels[j]``."""

    channels: tuple = field(default_factory=tuple)

    @property
    def m(self):
        return len(self.channels)

    def __call__(self, t):
        return np.array([sum((p(t) for p in ch), 0.0) for ch in self.channels],
                        dtype=float)

    def to_list(self):
        return [[asdict(p) for p in ch] for ch in self.channels]

    @classmethod
    def from_list(cls, data):
        try:
            return cls(tuple(tuple(Primitive(**p) for p in ch) for ch in data))
        except TypeError as exc:
            raise ConfigError(f"bad signal primitive: {exc}") from exc


def sinusoid(amplitude, frequency, phase=0.0):
    return Primitive("sin", amplitude, frequency, phase)


def cosine(amplitude, frequency, phase=0.0):
    return Primitive("cos", amplitude, frequency, phase)


def constant(value):
    return Primitive("constant", value)


def step(amplitude, start):
    return Primitive("step", amplitude, start=start)

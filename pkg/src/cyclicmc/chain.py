"""Cyclic-sampler abstraction and chain runner.

A cyclic sampler rotates through k transition kernels; the runner applies
them in order, evaluates the output function f after every step, and stores
only the n x d matrix of f values plus cycle metadata. Kernel phase p of
sample t follows the convention that step number t (1-based, counting from
the very first kernel application) was produced by kernel ((t-1) mod k) + 1.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

__all__ = [
    "StepFailure",
    "EmptySelection",
    "CyclicSampler",
    "SampleMatrix",
    "ChainRunner",
    "run_chain",
    "subchain_view",
]

_MAGIC = b"SMX1"


class StepFailure(Exception):
    """A kernel failed mid-run; carries the phase and 1-based step index."""

    def __init__(self, phase: int, index: int, cause: BaseException):
        super().__init__(f"kernel phase {phase} failed at step {index}: {cause}")
        self.phase = phase
        self.index = index


class EmptySelection(Exception):
    """A subchain view matched no rows."""


@dataclass(frozen=True)
class CyclicSampler:
    """k kernels applied in rotation over an opaque state space.

    step(state, phase, rng) must apply kernel number `phase` (1..k) and
    return the new state; f maps a state to a length-d output vector
    (a float is accepted when d == 1). init is the default starting state.
    """

    k: int
    d: int
    step: Callable[[Any, int, np.random.Generator], Any]
    f: Callable[[Any], Any]
    init: Any
    name: str = "sampler"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"cycle length k must be >= 1, got {self.k}")
        if self.d < 1:
            raise ValueError(f"output dimension d must be >= 1, got {self.d}")


@dataclass
class SampleMatrix:
    """n x d matrix of f outputs with cycle metadata.

    phase_offset is the kernel phase of the first recorded row; row t
    (1-based) has phase ((phase_offset + t - 2) mod k) + 1.
    """

    values: np.ndarray
    k: int = 1
    phase_offset: int = 1

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sample values must be finite")
        if not 1 <= self.phase_offset <= self.k:
            raise ValueError(
                f"phase_offset {self.phase_offset} outside 1..k={self.k}"
            )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def phase_of(self, t: int) -> int:
        """Kernel phase of row t (1-based)."""
        if not 1 <= t <= self.n:
            raise IndexError(f"row {t} outside 1..{self.n}")
        return (self.phase_offset + t - 2) % self.k + 1

    def phases(self) -> np.ndarray:
        """Kernel phase of every row, shape (n,)."""
        t = np.arange(self.n)
        return (self.phase_offset - 1 + t) % self.k + 1

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def head(self, m: int) -> "SampleMatrix":
        """First m rows, same metadata."""
        if not 1 <= m <= self.n:
            raise ValueError(f"cannot take {m} of {self.n} rows")
        return SampleMatrix(self.values[:m].copy(), k=self.k,
                            phase_offset=self.phase_offset)

    # -- serialization ------------------------------------------------------

    def to_csv(self, path_or_buf) -> None:
        """Write `t,phase,f1,...,fd` rows (full float precision)."""
        close = False
        if isinstance(path_or_buf, (str, bytes, os.PathLike)):
            buf = open(path_or_buf, "w")
            close = True
        else:
            buf = path_or_buf
        try:
            cols = ",".join(f"f{j + 1}" for j in range(self.d))
            buf.write(f"t,phase,{cols}\n")
            phases = self.phases()
            for t in range(self.n):
                row = ",".join(repr(float(v)) for v in self.values[t])
                buf.write(f"{t + 1},{phases[t]},{row}\n")
        finally:
            if close:
                buf.close()

    @classmethod
    def from_csv(cls, path_or_buf, k: int = 1, phase_offset: int = 1) -> "SampleMatrix":
        close = False
        if isinstance(path_or_buf, (str, bytes, os.PathLike)):
            buf = open(path_or_buf)
            close = True
        else:
            buf = path_or_buf
        try:
            header = buf.readline().strip().split(",")
            if header[:2] != ["t", "phase"]:
                raise ValueError(f"unexpected CSV header {header}")
            rows = []
            first_phase = None
            for line in buf:
                if not line.strip():
                    continue
                parts = line.strip().split(",")
                if first_phase is None:
                    first_phase = int(parts[1])
                rows.append([float(v) for v in parts[2:]])
        finally:
            if close:
                buf.close()
        if first_phase is None:
            raise ValueError("CSV contains no sample rows")
        return cls(np.array(rows), k=k,
                   phase_offset=first_phase if k > 1 else phase_offset)

    def to_binary(self, path_or_buf) -> None:
        """Little-endian binary: magic SMX1, n/d/k/phase_offset as int64, rows as float64."""
        payload = struct.pack("<4sqqqq", _MAGIC, self.n, self.d, self.k,
                              self.phase_offset)
        body = np.ascontiguousarray(self.values, dtype="<f8").tobytes()
        if isinstance(path_or_buf, (str, bytes, os.PathLike)):
            with open(path_or_buf, "wb") as fh:
                fh.write(payload)
                fh.write(body)
        else:
            path_or_buf.write(payload)
            path_or_buf.write(body)

    @classmethod
    def from_binary(cls, path_or_buf) -> "SampleMatrix":
        if isinstance(path_or_buf, (str, bytes, os.PathLike)):
            with open(path_or_buf, "rb") as fh:
                raw = fh.read()
        else:
            raw = path_or_buf.read()
        head = struct.calcsize("<4sqqqq")
        magic, n, d, k, off = struct.unpack("<4sqqqq", raw[:head])
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        values = np.frombuffer(raw[head:], dtype="<f8", count=n * d).reshape(n, d)
        return cls(values.copy(), k=int(k), phase_offset=int(off))


class ChainRunner:
    """Stateful runner: advances a cyclic chain in segments without restarting.

    Keeps the current state, the next kernel phase, and the rng, so a run
    split across several advance() calls is bit-identical to a single run.
    """

    def __init__(self, sampler: CyclicSampler, rng: np.random.Generator,
                 init: Any = None, burn_in: int = 0):
        if burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {burn_in}")
        self.sampler = sampler
        self.rng = rng
        self.state = sampler.init if init is None else init
        self._step_count = 0  # kernel applications performed so far
        self.phase_offset = burn_in % sampler.k + 1
        self._buf = np.empty((256, sampler.d), dtype=float)
        self._n = 0
        if burn_in:
            self._advance(burn_in, record=False)

    @property
    def n(self) -> int:
        return self._n

    def _advance(self, m: int, record: bool) -> None:
        sampler = self.sampler
        step, f, k, rng = sampler.step, sampler.f, sampler.k, self.rng
        state = self.state
        phase = self._step_count % k + 1
        if record and self._n + m > self._buf.shape[0]:
            cap = max(2 * self._buf.shape[0], self._n + m)
            buf = np.empty((cap, sampler.d), dtype=float)
            buf[: self._n] = self._buf[: self._n]
            self._buf = buf
        buf = self._buf
        i = self._n
        t = 0
        try:
            for t in range(m):
                state = step(state, phase, rng)
                if record:
                    buf[i] = f(state)
                    i += 1
                phase = phase + 1 if phase < k else 1
        except Exception as exc:
            self.state = state
            raise StepFailure(phase, self._step_count + t + 1, exc) from exc
        self.state = state
        self._step_count += m
        self._n = i

    def advance(self, m: int) -> None:
        """Run m more kernel applications, recording f after each."""
        if m < 0:
            raise ValueError(f"cannot advance by {m}")
        if m:
            self._advance(m, record=True)

    def samples(self) -> SampleMatrix:
        if self._n == 0:
            raise ValueError("no samples recorded yet")
        return SampleMatrix(self._buf[: self._n].copy(), k=self.sampler.k,
                            phase_offset=self.phase_offset)


def run_chain(sampler: CyclicSampler, n: int, rng: np.random.Generator,
              init: Any = None, burn_in: int = 0) -> SampleMatrix:
    """Run the cyclic chain for burn_in + n kernel applications.

    Phases cycle 1..k starting from 1; f is recorded after each of the n
    post-burn-in steps. The initial state itself is never recorded.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    runner = ChainRunner(sampler, rng, init=init, burn_in=burn_in)
    runner.advance(n)
    return runner.samples()


def subchain_view(s: SampleMatrix, phase: int) -> SampleMatrix:
    """Rows of s produced by the given kernel phase, as a k=1 SampleMatrix."""
    if not 1 <= phase <= s.k:
        raise ValueError(f"phase {phase} outside 1..{s.k}")
    mask = s.phases() == phase
    if not mask.any():
        raise EmptySelection(f"no rows with phase {phase}")
    return SampleMatrix(s.values[mask].copy(), k=1, phase_offset=1)

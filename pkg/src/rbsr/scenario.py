"""Deterministic scenario generation for the benchmark families.

The generator is SplitMix64 (Steele, Lea & Flood), frozen here so that the
scenario bytes for a given (family, i, seed) never change:

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)                          (all mod 2**64)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

from .model import ID_LEN, encode_key, ItemKey

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_ID_WORDS = struct.Struct(f">{ID_LEN // 8}Q")

SLICE_LO = 1_000_000
SLICE_HI = 2_000_000
CONTEXT_SPAN = 1_000_000  # out-of-slice ticks live in [0, 1e6) and [2e6, 3e6)


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next() % n

    def id_bytes(self) -> bytes:
        """Four consecutive outputs, big-endian; inlined because scenarios need millions."""
        s = self.state
        words = []
        for _ in range(ID_LEN // 8):
            s = (s + GOLDEN_GAMMA) & MASK64
            z = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
            words.append(z ^ (z >> 31))
        self.state = s
        return _ID_WORDS.pack(*words)

    def split(self) -> "SplitMix64":
        return SplitMix64(self.next())


@dataclass(frozen=True)
class Counts:
    in_common: int
    in_x_only: int
    in_y_only: int
    out_common: int
    out_x_only: int
    out_y_only: int


def _family(common_in: Callable[[int], int], diff_in: Callable[[int], int],
            common_out: Callable[[int], int], diff_out: Callable[[int], int]) -> Callable[[int], Counts]:
    def counts(i: int) -> Counts:
        d_in, d_out = diff_in(i), diff_out(i)
        return Counts(common_in(i), d_in, d_in, common_out(i), d_out, d_out)

    return counts


FAMILIES: dict[str, Callable[[int], Counts]] = {
    "base_dense": _family(lambda i: 64 * i, lambda i: 4 * i, lambda i: 1000 * i, lambda i: 200 * i),
    "base_sparse": _family(lambda i: 128 * i, lambda i: 6 * i, lambda i: 2000 * i, lambda i: 400 * i),
    "scale_dense": _family(lambda i: 256 * i * i, lambda i: 8 * i, lambda i: 4000 * i, lambda i: 800 * i),
    "scale_sparse": _family(lambda i: 512 * i, lambda i: 16 * i, lambda i: 6000 * i, lambda i: 1200 * i),
    "stress": _family(lambda i: 1024 * i * i, lambda i: 64 * i, lambda i: 8000 * i, lambda i: 1600 * i),
    "stress_dyn": _family(lambda i: 4096 * i * i, lambda i: 1024 * i * i,
                          lambda i: 4000 * i * i, lambda i: 800 * i * i),
}


@dataclass(frozen=True)
class ScenarioSpec:
    family: str
    i: int
    seed: int = 42

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {sorted(FAMILIES)}")
        if not 1 <= self.i <= 8:
            raise ValueError("instance index must be in 1..8")

    @property
    def counts(self) -> Counts:
        return FAMILIES[self.family](self.i)

    @property
    def slice(self) -> tuple[bytes, bytes]:
        zero = bytes(ID_LEN)
        return encode_key(ItemKey(SLICE_LO, zero)), encode_key(ItemKey(SLICE_HI, zero))


@dataclass
class Scenario:
    spec: ScenarioSpec
    items_x: list[bytes]  # sorted encoded keys
    items_y: list[bytes]
    outer: tuple[bytes, bytes]
    planted_have: set[bytes]  # in-slice X-only
    planted_need: set[bytes]  # in-slice Y-only


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    rng = SplitMix64(spec.seed)
    c = spec.counts
    seen: set[bytes] = set()

    def draw(count: int, inside: bool) -> list[bytes]:
        out = []
        for k in range(count):
            while True:
                if inside:
                    ts = SLICE_LO + rng.below(SLICE_HI - SLICE_LO)
                elif k % 2 == 0:
                    ts = rng.below(CONTEXT_SPAN)
                else:
                    ts = SLICE_HI + rng.below(CONTEXT_SPAN)
                kb = ts.to_bytes(8, "big") + rng.id_bytes()
                if kb not in seen:
                    break
            seen.add(kb)
            out.append(kb)
        return out

    in_common = draw(c.in_common, True)
    in_x = draw(c.in_x_only, True)
    in_y = draw(c.in_y_only, True)
    out_common = draw(c.out_common, False)
    out_x = draw(c.out_x_only, False)
    out_y = draw(c.out_y_only, False)
    items_x = sorted(in_common + in_x + out_common + out_x)
    items_y = sorted(in_common + in_y + out_common + out_y)
    return Scenario(spec, items_x, items_y, spec.slice, set(in_x), set(in_y))

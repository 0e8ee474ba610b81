"""Deterministic 64-bit seed derivation (splitmix64 finalizer chain)."""
import zlib

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

DESCRIPTION = "h0=0x9E3779B97F4A7C15; h=splitmix64(h ^ part) for part in (seed, config_index, repetition)"


def splitmix64(x: int) -> int:
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix(*parts: int) -> int:
    h = GOLDEN
    for part in parts:
        h = splitmix64(h ^ (part & MASK64))
    return h


def run_seed(seed: int, config_index: int, repetition: int) -> int:
    return mix(seed, config_index, repetition)


def node_seed(seed_run: int, node_id: str) -> int:
    return mix(seed_run, zlib.crc32(node_id.encode("utf-8")))

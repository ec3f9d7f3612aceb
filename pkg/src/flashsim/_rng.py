"""Counter-based random streams, one per agent.

Each stream is keyed by ``(seed, stream_id)`` and advanced by a counter, so
the draws an agent sees never depend on how many draws other agents made.
The mixer is the SplitMix64 finalizer.
"""
import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, stream_id):
    s = _mix64(np.uint64(seed) * _GOLDEN + np.uint64(0x2545F4914F6CDD1D))
    return _mix64(s ^ _mix64(np.uint64(stream_id) + _GOLDEN))


@njit(cache=True)
def make_keys(seed, n):
    keys = np.empty(n, dtype=np.uint64)
    for i in range(n):
        keys[i] = stream_key(seed, i)
    return keys


@njit(cache=True)
def uniform(keys, counters, i):
    """Next U[0, 1) draw from stream ``i``."""
    c = counters[i]
    counters[i] = c + 1
    z = _mix64(keys[i] + np.uint64(c + 1) * _GOLDEN)
    return np.float64(z >> np.uint64(11)) * _INV_2_53


@njit(cache=True)
def normal(keys, counters, i):
    # Box-Muller, one output per pair of uniforms
    u1 = uniform(keys, counters, i)
    u2 = uniform(keys, counters, i)
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)


class AgentStream:
    """Python handle on a single agent stream, for driving agent rules directly."""

    def __init__(self, seed, agent_id=0):
        self.seed = int(seed)
        self.agent_id = int(agent_id)
        self.keys = np.array([stream_key(self.seed, self.agent_id)], dtype=np.uint64)
        self.counters = np.zeros(1, dtype=np.int64)

    def random(self):
        return uniform(self.keys, self.counters, 0)

    def __repr__(self):
        return f"AgentStream(seed={self.seed}, agent_id={self.agent_id}, draws={self.counters[0]})"

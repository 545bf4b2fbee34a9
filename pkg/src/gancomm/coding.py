"""Block and convolutional coding: Hamming(7,4) + MLD, RSC + soft Viterbi.

The Viterbi decoder is maximum-likelihood sequence detection over the
4-state trellis; an exhaustive-search decoder over all info sequences
is kept alongside as the test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import FramingError

# Systematic generator [I4 | P]; parity columns chosen so every pair of
# columns is distinct -> minimum distance 3.
_P = np.array(
    [
        [1, 1, 0],
        [1, 0, 1],
        [0, 1, 1],
        [1, 1, 1],
    ],
    dtype=np.int64,
)
_G = np.hstack([np.eye(4, dtype=np.int64), _P])

# All 16 codewords and their BPSK images, enumerated once.
_INFOS = np.array(list(product([0, 1], repeat=4)), dtype=np.int64)
_CODEBOOK = (_INFOS @ _G) % 2
_CODEBOOK_BPSK = 1.0 - 2.0 * _CODEBOOK


def hamming74_encode(info) -> np.ndarray:
    """Systematic Hamming(7,4): info bits followed by three parity bits.

    >>> hamming74_encode([1, 0, 0, 0])
    array([1, 0, 0, 0, 1, 1, 0])
    """
    u = np.asarray(info, dtype=np.int64)
    if u.shape != (4,):
        raise FramingError("hamming74_encode takes exactly 4 bits")
    return (u @ _G) % 2


def hamming74_mld(y, gains=None) -> np.ndarray:
    """Exhaustive max-likelihood decode of 7 soft values to 4 info bits.

    ``y`` holds soft observations of the BPSK-mapped codeword (bit 0 ->
    +1).  Optional real ``gains`` weight each position, as after fading
    with known channel state.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (7,):
        raise FramingError("hamming74_mld takes exactly 7 soft values")
    ref = _CODEBOOK_BPSK if gains is None else _CODEBOOK_BPSK * np.asarray(gains)
    return _INFOS[int(np.argmax(ref @ y))].copy()


@dataclass(frozen=True)
class TrellisSpec:
    """Rate-1/2 recursive systematic code (1, 5/7 octal), 4 states."""

    constraint_length: int = 3
    feedback_octal: int = 7
    feedforward_octal: int = 5
    tail_steps: int = 2

    @property
    def n_states(self) -> int:
        return 1 << (self.constraint_length - 1)


DEFAULT_TRELLIS = TrellisSpec()


def _rsc_step(state: int, u: int) -> tuple[int, int]:
    """One encoder step: (next_state, parity) for input bit u from state.

    State packs the two registers as (d1 << 1) | d2.  Feedback 7 octal:
    a = u ^ d1 ^ d2; feedforward 5 octal: parity = a ^ d2; the new
    register pair is (a, d1).
    """
    d1, d2 = (state >> 1) & 1, state & 1
    a = u ^ d1 ^ d2
    return ((a << 1) | d1, a ^ d2)


def _termination_bit(state: int) -> int:
    # choose u so the feedback input a becomes 0
    d1, d2 = (state >> 1) & 1, state & 1
    return d1 ^ d2


def rsc_encode(info, trellis: TrellisSpec = DEFAULT_TRELLIS) -> np.ndarray:
    """Encode to interleaved (systematic, parity) pairs, zero-terminated.

    Output length is 2*(N + 2): two tail steps drive the encoder back to
    state 0 and their systematic/parity bits are emitted too.
    """
    u = np.asarray(info, dtype=np.int64).ravel()
    out = np.empty(2 * (u.size + trellis.tail_steps), dtype=np.int64)
    state = 0
    for t, bit in enumerate(u):
        state, parity = _rsc_step(state, int(bit))
        out[2 * t] = bit
        out[2 * t + 1] = parity
    for t in range(trellis.tail_steps):
        bit = _termination_bit(state)
        state, parity = _rsc_step(state, bit)
        out[2 * (u.size + t)] = bit
        out[2 * (u.size + t) + 1] = parity
    assert state == 0
    return out


def _branch_table(trellis: TrellisSpec):
    """(next_state, sys_bit, parity_bit) for every (state, input)."""
    table = np.zeros((trellis.n_states, 2, 3), dtype=np.int64)
    for s in range(trellis.n_states):
        for u in (0, 1):
            ns, p = _rsc_step(s, u)
            table[s, u] = (ns, u, p)
    return table


def viterbi_decode(llrs, trellis: TrellisSpec = DEFAULT_TRELLIS) -> np.ndarray:
    """ML sequence decode from per-bit LLRs (positive favors bit 0).

    Path metric is the correlation sum of llr * (1 - 2*bit); survivors
    tie-break toward the lower-indexed predecessor state.  Traceback
    starts from state 0 (terminated encoding); the two tail steps are
    decoded but not returned.
    """
    llrs = np.asarray(llrs, dtype=np.float64).ravel()
    if llrs.size % 2:
        raise FramingError("llr count must be even (systematic, parity pairs)")
    steps = llrs.size // 2
    n_info = steps - trellis.tail_steps
    if n_info < 0:
        raise FramingError("block shorter than the termination tail")
    table = _branch_table(trellis)
    n_s = trellis.n_states

    metric = np.full(n_s, -np.inf)
    metric[0] = 0.0
    prev_state = np.zeros((steps, n_s), dtype=np.int64)
    prev_input = np.zeros((steps, n_s), dtype=np.int64)
    for t in range(steps):
        ls, lp = llrs[2 * t], llrs[2 * t + 1]
        new = np.full(n_s, -np.inf)
        for s in range(n_s):  # ascending s: ties keep the earlier predecessor
            if metric[s] == -np.inf:
                continue
            for u in (0, 1):
                ns, sys_b, par_b = table[s, u]
                m = metric[s] + ls * (1 - 2 * sys_b) + lp * (1 - 2 * par_b)
                if m > new[ns]:
                    new[ns] = m
                    prev_state[t, ns] = s
                    prev_input[t, ns] = u
        metric = new

    state = 0
    bits = np.empty(steps, dtype=np.int64)
    for t in range(steps - 1, -1, -1):
        bits[t] = prev_input[t, state]
        state = prev_state[t, state]
    return bits[:n_info]


def ml_decode_exhaustive(llrs, n_info: int, trellis: TrellisSpec = DEFAULT_TRELLIS) -> np.ndarray:
    """Brute-force ML over all 2^n_info sequences (test oracle, n small)."""
    llrs = np.asarray(llrs, dtype=np.float64).ravel()
    best, best_bits = -np.inf, None
    for bits in product([0, 1], repeat=n_info):
        code = rsc_encode(np.array(bits), trellis)
        m = float(np.sum(llrs * (1.0 - 2.0 * code)))
        if m > best:
            best, best_bits = m, np.array(bits, dtype=np.int64)
    return best_bits

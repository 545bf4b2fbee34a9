"""Reference vectors computed by deliberately naive routines.

Each writer below recomputes its values from definitions (direct DFT
sums, literal mapping tables, a transparent shift-register walk,
exhaustive codebook searches) rather than calling the optimized
implementations, so the emitted CSVs work as independent oracles for
the test suite.  All output is deterministic, byte for byte.
"""

from __future__ import annotations

import cmath
import math
import os

import numpy as np

# Gray 4-QAM: bit 0 -> +1 on each axis, unit average energy
QAM4_TABLE = [
    # b0, b1, re, im
    (0, 0, 1 / math.sqrt(2), 1 / math.sqrt(2)),
    (0, 1, 1 / math.sqrt(2), -1 / math.sqrt(2)),
    (1, 0, -1 / math.sqrt(2), 1 / math.sqrt(2)),
    (1, 1, -1 / math.sqrt(2), -1 / math.sqrt(2)),
]

# per-dimension Gray levels for 16-QAM: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
_GRAY16 = {(0, 0): -3.0, (0, 1): -1.0, (1, 1): 1.0, (1, 0): 3.0}

# systematic Hamming(7,4) generator matrix, parity columns (110,101,011,111)
HAMMING_G = [
    [1, 0, 0, 0, 1, 1, 0],
    [0, 1, 0, 0, 1, 0, 1],
    [0, 0, 1, 0, 0, 1, 1],
    [0, 0, 0, 1, 1, 1, 1],
]


def naive_dft(x: list[complex]) -> list[complex]:
    n = len(x)
    return [
        sum(x[k] * cmath.exp(-2j * cmath.pi * j * k / n) for k in range(n))
        for j in range(n)
    ]


def naive_rsc_encode(bits: list[int]) -> list[int]:
    """Rate-1/2 systematic recursive encoder (1, 5/7 octal) with tail.

    Shift registers d1 (newest) and d2; feedback a = u + d1 + d2, parity
    a + d2; two tail inputs u = d1 + d2 drive the state back to zero.
    """
    d1 = d2 = 0
    out = []

    def step(u: int):
        nonlocal d1, d2
        a = u ^ d1 ^ d2
        out.append(u)
        out.append(a ^ d2)
        d2 = d1
        d1 = a
    for u in bits:
        step(int(u))
    for _ in range(2):
        step(d1 ^ d2)
    assert d1 == 0 and d2 == 0
    return out


def naive_hamming_codebook() -> list[tuple[list[int], list[int]]]:
    rows = []
    for idx in range(16):
        info = [(idx >> (3 - i)) & 1 for i in range(4)]
        code = [
            sum(info[i] * HAMMING_G[i][j] for i in range(4)) % 2 for j in range(7)
        ]
        rows.append((info, code))
    return rows


def naive_ml_sequence(llrs: list[float], n_info: int) -> list[int]:
    """Exhaustive max of sum(llr * (1 - 2 bit)) over all info sequences."""
    best, best_metric = None, -math.inf
    for idx in range(2 ** n_info):
        info = [(idx >> (n_info - 1 - i)) & 1 for i in range(n_info)]
        coded = naive_rsc_encode(info)
        metric = sum(l * (1 - 2 * c) for l, c in zip(llrs, coded))
        if metric > best_metric:
            best, best_metric = info, metric
    return best


def qam16_table() -> list[tuple[int, int, int, int, float, float]]:
    scale = math.sqrt(10.0)
    rows = []
    for idx in range(16):
        b = [(idx >> (3 - i)) & 1 for i in range(4)]
        re = _GRAY16[(b[0], b[1])] / scale
        im = _GRAY16[(b[2], b[3])] / scale
        rows.append((b[0], b[1], b[2], b[3], re, im))
    return rows


def _write(path: str, lines: list[str]):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_goldens(out_dir: str) -> list[str]:
    """Regenerate every golden CSV; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    lines = ["b0,b1,re,im"]
    for b0, b1, re, im in QAM4_TABLE:
        lines.append(f"{b0},{b1},{re:.10f},{im:.10f}")
    p = os.path.join(out_dir, "qam4_map.csv")
    _write(p, lines)
    paths.append(p)

    lines = ["b0,b1,b2,b3,re,im"]
    for row in qam16_table():
        lines.append(",".join(str(v) for v in row[:4])
                     + f",{row[4]:.10f},{row[5]:.10f}")
    p = os.path.join(out_dir, "qam16_map.csv")
    _write(p, lines)
    paths.append(p)

    lines = ["i0,i1,i2,i3,c0,c1,c2,c3,c4,c5,c6"]
    for info, code in naive_hamming_codebook():
        lines.append(",".join(str(v) for v in info + code))
    p = os.path.join(out_dir, "hamming_codebook.csv")
    _write(p, lines)
    paths.append(p)

    rng = np.random.default_rng(20240811)
    lines = ["info,coded"]
    for _ in range(12):
        info = rng.integers(0, 2, 12).tolist()
        coded = naive_rsc_encode(info)
        lines.append("".join(map(str, info)) + "," + "".join(map(str, coded)))
    p = os.path.join(out_dir, "rsc_encode.csv")
    _write(p, lines)
    paths.append(p)

    # direct-DFT reference of a fixed length-16 vector
    rng = np.random.default_rng(20240812)
    x = [complex(a, b) for a, b in rng.normal(size=(16, 2))]
    y = naive_dft(x)
    lines = ["idx,re_in,im_in,re_out,im_out"]
    for j in range(16):
        lines.append(f"{j},{x[j].real:.10f},{x[j].imag:.10f},"
                     f"{y[j].real:.10f},{y[j].imag:.10f}")
    p = os.path.join(out_dir, "dft16.csv")
    _write(p, lines)
    paths.append(p)

    # exhaustive ML decisions for noisy rate-1/2 blocks, 8 info bits
    rng = np.random.default_rng(20240813)
    lines = ["llrs,info_hat"]
    for _ in range(24):
        info = rng.integers(0, 2, 8).tolist()
        coded = naive_rsc_encode(info)
        clean = [1.0 - 2.0 * c for c in coded]
        llrs = [2.2 * c + rng.normal(0.0, 1.1) for c in clean]
        hat = naive_ml_sequence(llrs, 8)
        lines.append(";".join(f"{l:.6f}" for l in llrs)
                     + "," + "".join(map(str, hat)))
    p = os.path.join(out_dir, "viterbi_ml.csv")
    _write(p, lines)
    paths.append(p)

    return paths

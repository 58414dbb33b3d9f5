"""Binary head checkpoints.

Layout: a 16-byte little-endian header ``<4sIII`` holding the magic
``b"SYMH"``, a kind code, the class count n and the input dimension d,
followed by one flat float64 little-endian array:

=========== ====================================================
kind (code)  payload
=========== ====================================================
symmetric 1  v1 (d), v2 (d), sigma
fc 2         W (n*d, row-major), bias (n)
arcface 3    W (n*d), sigma, m
sphereface 4 W (n*d), m, lambda0, lambda_min, gamma, iteration
=========== ====================================================
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .head import ArcFaceHead, FCHead, SphereFaceHead, SymmetricalHead

MAGIC = b"SYMH"
HEADER = struct.Struct("<4sIII")
KIND_CODES = {"symmetric": 1, "fc": 2, "arcface": 3, "sphereface": 4}
_LE = np.dtype("<f8")


def _payload(head):
    if head.kind == "symmetric":
        parts = [head.v1, head.v2, [head.sigma]]
    elif head.kind == "fc":
        parts = [head.W.ravel(), head.bias]
    elif head.kind == "arcface":
        parts = [head.W.ravel(), [head.sigma, head.m]]
    else:
        parts = [head.W.ravel(), [head.m, head.lambda0, head.lambda_min, head.gamma, head.iteration]]
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def dumps(head):
    return HEADER.pack(MAGIC, KIND_CODES[head.kind], head.n, head.d) + _payload(head).astype(_LE).tobytes()


def loads(buf):
    if len(buf) < HEADER.size:
        raise FormatError(f"checkpoint truncated: {len(buf)} bytes")
    magic, code, n, d = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    kinds = {v: k for k, v in KIND_CODES.items()}
    if code not in kinds:
        raise FormatError(f"unknown head kind code {code}")
    kind = kinds[code]
    sizes = {"symmetric": 2 * d + 1, "fc": n * d + n, "arcface": n * d + 2, "sphereface": n * d + 5}
    body = buf[HEADER.size:]
    if len(body) != 8 * sizes[kind]:
        raise FormatError(f"{kind} checkpoint needs {8 * sizes[kind]} payload bytes, found {len(body)}")
    flat = np.frombuffer(body, dtype=_LE).astype(np.float64)
    if kind == "symmetric":
        return SymmetricalHead(flat[:d].copy(), flat[d:2 * d].copy(), float(flat[-1]), n)
    W = flat[: n * d].reshape(n, d).copy()
    rest = flat[n * d:]
    if kind == "fc":
        return FCHead(W, rest.copy())
    if kind == "arcface":
        return ArcFaceHead(W, float(rest[0]), float(rest[1]))
    m, lambda0, lambda_min, gamma, iteration = rest
    return SphereFaceHead(W, int(m), float(lambda0), float(lambda_min), float(gamma), int(iteration))


def save_head(head, path):
    Path(path).write_bytes(dumps(head))


def load_head(path):
    return loads(Path(path).read_bytes())

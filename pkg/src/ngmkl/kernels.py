"""Base kernels, Gram matrices and the fixed 17-kernel bank."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Polynomial:
    """Homogeneous polynomial kernel ``(x^T y)^degree``."""

    degree: int

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError(f"degree must be a positive integer, got {self.degree}")

    def __str__(self):
        return f"poly(d={self.degree})"


@dataclass(frozen=True)
class Gaussian:
    """Gaussian kernel ``exp(-||x - y||^2 / (2 sigma^2))``."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def __str__(self):
        return f"gauss(sigma={self.sigma:g})"


KernelSpec = Polynomial | Gaussian


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def kernel_eval(spec, x, y):
    x, y = _check_pair(x, y)
    if isinstance(spec, Polynomial):
        return float(np.dot(x, y) ** spec.degree)
    if isinstance(spec, Gaussian):
        diff = x - y
        return float(np.exp(-np.dot(diff, diff) / (2.0 * spec.sigma ** 2)))
    raise TypeError(f"unknown kernel spec {spec!r}")


def sq_distances(queries, anchors):
    """Squared Euclidean distances via the dot-product expansion, clipped at 0."""
    qq = np.einsum("ij,ij->i", queries, queries)
    aa = np.einsum("ij,ij->i", anchors, anchors)
    d2 = qq[:, None] + aa[None, :] - 2.0 * (queries @ anchors.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def gram(spec, queries, anchors, sq_dist=None):
    """Kernel matrix ``K[i, j] = k(queries[i], anchors[j])``.

    ``sq_dist`` may carry precomputed squared distances so a bank of
    Gaussians shares one distance computation.
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    A = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    if Q.shape[1] != A.shape[1]:
        raise ValueError(f"dimension mismatch: {Q.shape[1]} vs {A.shape[1]}")
    if isinstance(spec, Polynomial):
        return (Q @ A.T) ** spec.degree
    if isinstance(spec, Gaussian):
        d2 = sq_distances(Q, A) if sq_dist is None else sq_dist
        return np.exp(d2 * (-1.0 / (2.0 * spec.sigma ** 2)))
    raise TypeError(f"unknown kernel spec {spec!r}")


def gram_bank(specs, queries, anchors):
    """List of Gram matrices, one per spec, sharing the distance computation."""
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    A = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    d2 = None
    out = []
    for spec in specs:
        if isinstance(spec, Gaussian) and d2 is None:
            d2 = sq_distances(Q, A)
        out.append(gram(spec, Q, A, sq_dist=d2))
    return out


def base_kernel_bank():
    """Polynomials of degree 1..3, then Gaussians with sigma = 2**-6 .. 2**7."""
    return [Polynomial(1), Polynomial(2), Polynomial(3)] + [
        Gaussian(2.0 ** k) for k in range(-6, 8)
    ]


def spec_from_string(text):
    """Inverse of ``str(spec)``; also accepts ``poly:2`` / ``gauss:0.5``."""
    text = text.strip()
    for prefix, cls, cast in (("poly", Polynomial, int), ("gauss", Gaussian, float)):
        if text.startswith(prefix):
            body = text[len(prefix):].strip("():=")
            body = body.split("=")[-1].rstrip(")")
            return cls(cast(body))
    raise ValueError(f"cannot parse kernel spec {text!r}")


# ---------------------------------------------------------------------------
# Binary Gram cache
#
# Layout (little-endian): magic b"NGKG", u32 version, u8 kind (0 poly,
# 1 gauss), f64 parameter, u64 m, u64 n, then m*n row-major f64 values.

_GRAM_MAGIC = b"NGKG"
_GRAM_VERSION = 1
_GRAM_HEADER = struct.Struct("<4sIBdQQ")


def encode_spec(spec):
    if isinstance(spec, Polynomial):
        return 0, float(spec.degree)
    if isinstance(spec, Gaussian):
        return 1, float(spec.sigma)
    raise TypeError(f"unknown kernel spec {spec!r}")


def decode_spec(kind, param):
    if kind == 0:
        return Polynomial(int(param))
    if kind == 1:
        return Gaussian(param)
    raise ValueError(f"unknown kernel kind {kind}")


def write_gram(path, spec, values):
    values = np.ascontiguousarray(values, dtype="<f8")
    m, n = values.shape
    kind, param = encode_spec(spec)
    with open(path, "wb") as fh:
        fh.write(_GRAM_HEADER.pack(_GRAM_MAGIC, _GRAM_VERSION, kind, param, m, n))
        fh.write(values.tobytes())


def read_gram(path):
    """Return ``(spec, values)`` from a Gram cache file."""
    raw = Path(path).read_bytes()
    if len(raw) < _GRAM_HEADER.size:
        raise ValueError("truncated Gram cache header")
    magic, version, kind, param, m, n = _GRAM_HEADER.unpack_from(raw)
    if magic != _GRAM_MAGIC or version != _GRAM_VERSION:
        raise ValueError(f"not a Gram cache file (magic={magic!r}, version={version})")
    body = raw[_GRAM_HEADER.size:]
    if len(body) != 8 * m * n:
        raise ValueError(f"Gram cache body has {len(body)} bytes, expected {8 * m * n}")
    values = np.frombuffer(body, dtype="<f8").reshape(m, n).astype(np.float64)
    return decode_spec(kind, param), values

"""Compression operators, their bit accounting, and empirical validation
of the contraction contract E||C(x)/r - x||^2 <= (1 - phi)||x||^2.

Four kinds are provided:

- ``identity``: exact pass-through, the uncompressed baseline.
- ``topk``: keep the k largest-magnitude coordinates, zero the rest;
  magnitude ties broken by lower index for determinism.
- ``bbit``: biased b-bit dithered quantizer
  (||x||/xi) * sign(x) * 2^-(b-1) * floor(2^(b-1)|x|/||x|| + u) with
  u ~ U[0,1)^d and xi = 1 + min(d/2^(2(b-1)), sqrt(d)/2^(b-1)).
- ``normsign``: (||x||_inf / 2) * sign(x) with sign(0) = 0.

The (r, phi) constants are configurable because published values do not
exist for every kind; ``validate_contraction`` is the gatekeeper that
confirms a configured pair empirically before a run may start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dpcopt.errors import ConfigInvalid, SpecDimensionMismatch

__all__ = [
    "IDENTITY",
    "TOPK",
    "BBIT",
    "NORMSIGN",
    "KINDS",
    "CompressorSpec",
    "CompressedMessage",
    "ContractionReport",
    "make_spec",
    "xi_factor",
    "compress",
    "encode_decode",
    "bit_cost",
    "r0_constant",
    "validate_contraction",
]

IDENTITY = "identity"
TOPK = "topk"
BBIT = "bbit"
NORMSIGN = "normsign"
KINDS = (IDENTITY, TOPK, BBIT, NORMSIGN)

# Bits for one IEEE double scalar (norms, uncompressed coordinates).
FLOAT_BITS = 64


@dataclass(frozen=True)
class CompressorSpec:
    """Tagged compressor description plus its contraction constants."""

    kind: str
    k: int | None = None
    b: int | None = None
    r: float = 1.0
    phi: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigInvalid(f"compressor.kind: unknown kind {self.kind!r}")
        if not (self.r > 0):
            raise ConfigInvalid("compressor.r: must be positive")
        if not (0 < self.phi <= 1):
            raise ConfigInvalid("compressor.phi: must lie in (0, 1]")
        if self.kind == TOPK:
            if self.k is None or self.k < 1:
                raise ConfigInvalid("compressor.k: top-k needs k >= 1")
        elif self.k is not None:
            raise ConfigInvalid(f"compressor.k: not a parameter of {self.kind}")
        if self.kind == BBIT:
            if self.b is None or self.b < 1:
                raise ConfigInvalid("compressor.b: quantizer needs b >= 1")
        elif self.b is not None:
            raise ConfigInvalid(f"compressor.b: not a parameter of {self.kind}")
        if self.kind == IDENTITY and (self.r != 1.0 or self.phi != 1.0):
            raise ConfigInvalid("compressor: identity is fixed at r=1, phi=1")


@dataclass(frozen=True)
class CompressedMessage:
    """Decoded compressor output plus the payload size a real transport
    would need for it."""

    vector: np.ndarray
    bit_cost: int


@dataclass(frozen=True)
class ContractionReport:
    """Result of the empirical contraction check."""

    empirical_ratio: float
    threshold: float
    passes: bool


def xi_factor(d: int, b: int) -> float:
    """Normalization xi = 1 + min(d/2^(2(b-1)), sqrt(d)/2^(b-1))."""
    half_levels = 2.0 ** (b - 1)
    return 1.0 + min(d / half_levels**2, math.sqrt(d) / half_levels)


def make_spec(
    kind: str,
    d: int,
    k: int | None = None,
    b: int | None = None,
    r: float | None = None,
    phi: float | None = None,
) -> CompressorSpec:
    """Build a CompressorSpec for dimension d, filling default (r, phi).

    Defaults: identity (1, 1); topk (1, k/d); normsign (1, 1/(4d));
    bbit (1, 1/xi). Explicit r/phi override the defaults and are then
    subject to the validate_contraction gate.
    """
    if d < 1:
        raise ConfigInvalid("objective.d: dimension must be >= 1")
    if kind == TOPK:
        if k is None:
            raise ConfigInvalid("compressor.k: required for topk")
        if k > d:
            raise SpecDimensionMismatch(f"top-k with k={k} exceeds d={d}")
        default_r, default_phi = 1.0, k / d
    elif kind == BBIT:
        if b is None:
            raise ConfigInvalid("compressor.b: required for bbit")
        default_r, default_phi = 1.0, 1.0 / xi_factor(d, b)
    elif kind == NORMSIGN:
        default_r, default_phi = 1.0, 1.0 / (4.0 * d)
    elif kind == IDENTITY:
        default_r, default_phi = 1.0, 1.0
    else:
        raise ConfigInvalid(f"compressor.kind: unknown kind {kind!r}")
    return CompressorSpec(
        kind=kind,
        k=k,
        b=b,
        r=default_r if r is None else float(r),
        phi=default_phi if phi is None else float(phi),
    )


def compress(
    spec: CompressorSpec, x: np.ndarray, rng: np.random.Generator | None = None
) -> CompressedMessage:
    """Apply the compressor once. Only the bbit kind consumes rng."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    if spec.kind == TOPK and spec.k is not None and spec.k > d:
        raise SpecDimensionMismatch(f"top-k with k={spec.k} exceeds d={d}")
    cost = bit_cost(spec, d)

    if spec.kind == IDENTITY:
        return CompressedMessage(vector=x.copy(), bit_cost=cost)

    if spec.kind == TOPK:
        # Stable sort on -|x| keeps the lower index first among ties.
        order = np.argsort(-np.abs(x), kind="stable")
        out = np.zeros_like(x)
        keep = order[: spec.k]
        out[keep] = x[keep]
        return CompressedMessage(vector=out, bit_cost=cost)

    if spec.kind == NORMSIGN:
        amax = float(np.max(np.abs(x)))
        return CompressedMessage(vector=(amax / 2.0) * np.sign(x), bit_cost=cost)

    # bbit
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return CompressedMessage(vector=np.zeros_like(x), bit_cost=cost)
    if rng is None:
        raise ConfigInvalid("compressor.bbit: dithering requires a random stream")
    assert spec.b is not None
    half_levels = 2.0 ** (spec.b - 1)
    u = rng.random(d)
    levels = np.floor(half_levels * np.abs(x) / norm + u)
    vector = (norm / xi_factor(d, spec.b)) * np.sign(x) * (levels / half_levels)
    return CompressedMessage(vector=vector, bit_cost=cost)


def encode_decode(
    spec: CompressorSpec,
    target: np.ndarray,
    reference: np.ndarray,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Shared decoded estimate: reference + C(target - reference).

    The identity kind passes the target through untouched so the decoded
    estimate equals the broadcast vector exactly, with no rounding from
    the subtract/add pair.
    """
    if spec.kind == IDENTITY:
        return target.copy()
    return reference + compress(spec, target - reference, rng).vector


def bit_cost(spec: CompressorSpec, d: int) -> int:
    """Payload bits for one compressed vector of dimension d.

    identity: 64d; topk: k*(64 + ceil(log2 d)) (value plus index);
    bbit: 64 + d*b (norm plus b bits per signed coordinate);
    normsign: 64 + d (norm plus one sign bit per coordinate).
    """
    if d < 1:
        raise ConfigInvalid("bit_cost: dimension must be >= 1")
    if spec.kind == IDENTITY:
        return FLOAT_BITS * d
    if spec.kind == TOPK:
        assert spec.k is not None
        if spec.k > d:
            raise SpecDimensionMismatch(f"top-k with k={spec.k} exceeds d={d}")
        index_bits = (d - 1).bit_length()  # exact ceil(log2 d)
        return spec.k * (FLOAT_BITS + index_bits)
    if spec.kind == BBIT:
        assert spec.b is not None
        return FLOAT_BITS + d * spec.b
    return FLOAT_BITS + d  # normsign


def r0_constant(spec: CompressorSpec) -> float:
    """Raw-error constant r0 = 2r^2(1 - phi) + 2(1 - r)^2 bounding
    E||C(x) - x||^2 / ||x||^2."""
    return 2.0 * spec.r**2 * (1.0 - spec.phi) + 2.0 * (1.0 - spec.r) ** 2


def validate_contraction(
    spec: CompressorSpec, d: int, trials: int, rng: np.random.Generator
) -> ContractionReport:
    """Estimate E||C(x)/r - x||^2 / ||x||^2 over standard Gaussian
    vectors and compare against (1 - phi) with Monte-Carlo slack.

    Fresh compressor randomness per trial. Passes iff the estimate is
    at most (1 - phi) * (1 + 3/sqrt(trials)).
    """
    if trials < 1000:
        raise ConfigInvalid("contraction_trials: need at least 1000 trials")
    total = 0.0
    for _ in range(trials):
        x = rng.standard_normal(d)
        sq = float(x @ x)
        if sq == 0.0:
            continue
        err = compress(spec, x, rng).vector / spec.r - x
        total += float(err @ err) / sq
    ratio = total / trials
    threshold = (1.0 - spec.phi) * (1.0 + 3.0 / math.sqrt(trials))
    return ContractionReport(
        empirical_ratio=ratio, threshold=threshold, passes=ratio <= threshold
    )

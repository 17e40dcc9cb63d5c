"""Four-step construction of a threshold network memorizing a separated dataset.

Pipeline, for a dataset of n points in d dimensions separated by delta:

1. A real Gaussian layer of ~ (1/delta) * log(n) hyperplanes turns each
   point into a distinct binary code.
2. Random GF(2) masks compress those codes to ~ log(n) bits; the parity
   computations are compiled into sparse integer layers of two-neuron XOR
   gadgets arranged as balanced binary trees.
3. The compressed codes are partitioned by a binary trie into prefix-keyed
   subsets of at most ceil(sqrt(n)) members; one layer appends subset
   indicator bits and copies the code through.
4. An expansion layer scatters each code into its subset's chunk, a bank of
   at most ceil(sqrt(n)) neurons memorizes one member per subset each, and
   a final OR neuron sums them up.

Every probabilistic step enforces its postcondition by resampling; after
three consecutive failures at a given width the width doubles, and a global
retry cap turns persistent failure into a loud error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import DEFAULT_TOL, Dataset, SeparationMode, check_separation
from .netcore import (
    ThresholdLayer,
    ThresholdNetwork,
    evaluate_layers,
    forward_batch,
)

#: Consecutive failures of a probabilistic step at one width before the
#: width doubles.
FAILURES_BEFORE_WIDEN = 3


class DatasetNotSeparatedError(ValueError):
    """The dataset violates the separation precondition of the builder."""

    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict


class ConstructionRetryError(RuntimeError):
    """A probabilistic step exhausted its retry budget."""

    def __init__(self, message, worst_pair=None, worst_value=None):
        super().__init__(message)
        self.worst_pair = worst_pair
        self.worst_value = worst_value


class MemorizationCheckError(RuntimeError):
    """The finished network failed its own recall check; this is a bug."""


def ceil_sqrt(n: int) -> int:
    r = math.isqrt(n)
    return r if r * r == n else r + 1


def as_code_matrix(codes) -> np.ndarray:
    """Validate a stack of equal-length bit vectors; returns uint8 (n, bits)."""
    arr = np.asarray(codes)
    if arr.ndim != 2:
        raise ValueError("codes must form a 2-D array, one code per row")
    if arr.shape[1] < 1:
        raise ValueError("codes must have positive length")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("codes may contain only bits 0 and 1")
    return arr.astype(np.uint8)


@dataclass(frozen=True)
class ConstructionConfig:
    """Knobs of the builder.

    eps1/eps2 are the nominal failure budgets sizing the first layer and
    the compression mask count; failures are retried regardless, so they
    only pad widths. c_dist is the distance-mode width constant (the
    angular constant is pinned at 4*pi). The seed fixes every random draw;
    step k consumes the stream seeded by SeedSequence(seed, spawn_key=(k,)),
    first layer k=0, compression k=1.
    """

    mode: SeparationMode
    eps1: float = 0.1
    eps2: float = 0.1
    seed: int = 0
    max_retries: int = 20
    c_dist: float = 13.0

    def __post_init__(self):
        if not (0 < self.eps1 < 1 and 0 < self.eps2 < 1):
            raise ValueError("eps1 and eps2 must lie in (0, 1)")
        if self.max_retries < 1:
            raise ValueError("max_retries must be at least 1")
        if self.c_dist <= 0:
            raise ValueError("c_dist must be positive")

    def first_layer_width(self, n: int) -> int:
        """Starting hyperplane count before any retry-driven doubling."""
        delta = self.mode.delta
        const = 4 * math.pi if self.mode.is_angular else self.c_dist
        return math.ceil((const / delta) * math.log(n / self.eps1))

    def compression_width(self, n: int) -> int:
        """Starting mask count; log base 2 closes the 2^-m union bound."""
        return math.ceil(3 * math.log2(n / self.eps2))

    def step_rng(self, step: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(step,)))


# ---------------------------------------------------------------------------
# Step 1: Gaussian coding layer


@dataclass(frozen=True)
class FirstLayerResult:
    layer: ThresholdLayer
    codes: np.ndarray  # (n, m_used) uint8, pairwise distinct rows
    m_used: int
    retries: int


def _duplicate_groups(codes: np.ndarray) -> list[list[int]]:
    seen: dict[bytes, list[int]] = {}
    for i in range(codes.shape[0]):
        seen.setdefault(codes[i].tobytes(), []).append(i)
    return [g for g in seen.values() if len(g) > 1]


def _closest_colliding_pair(ds: Dataset, groups, mode: SeparationMode):
    worst_pair, worst_value = None, math.inf
    for group in groups:
        for a in range(len(group)):
            for b in range(a + 1, len(group)):
                i, j = group[a], group[b]
                xi, xj = ds.features[i], ds.features[j]
                if mode.is_angular:
                    denom = np.linalg.norm(xi) * np.linalg.norm(xj)
                    value = float(np.arccos(np.clip(xi @ xj / denom, -1, 1)))
                else:
                    value = float(np.linalg.norm(xi - xj))
                if value < worst_value:
                    worst_pair, worst_value = (i, j), value
    return worst_pair, worst_value


def build_first_layer(ds: Dataset, cfg: ConstructionConfig) -> FirstLayerResult:
    """Random-hyperplane coding layer with distinct codes enforced by retry.

    Angular mode draws homogeneous hyperplanes (zero biases); distance mode
    draws Gaussian biases as well. Codes are computed through the shared
    evaluation path so they match later network forwards bit for bit.
    """
    rng = cfg.step_rng(0)
    m = cfg.first_layer_width(ds.n)
    retries = 0
    failures_at_width = 0
    while True:
        W = rng.standard_normal((m, ds.dim))
        if cfg.mode.is_angular:
            b = np.zeros(m)
        else:
            b = rng.standard_normal(m)
        layer = ThresholdLayer.real(W, b)
        codes = evaluate_layers([layer], ds.features).astype(np.uint8)
        groups = _duplicate_groups(codes)
        if not groups:
            return FirstLayerResult(layer, codes, m, retries)
        retries += 1
        failures_at_width += 1
        if retries >= cfg.max_retries:
            pair, value = _closest_colliding_pair(ds, groups, cfg.mode)
            raise ConstructionRetryError(
                f"first layer failed to separate all pairs after {retries} retries "
                f"(width reached {m}); worst colliding pair {pair} at "
                f"{cfg.mode.kind} separation {value:.6g} vs required {cfg.mode.delta}",
                worst_pair=pair,
                worst_value=value,
            )
        if failures_at_width >= FAILURES_BEFORE_WIDEN:
            m *= 2
            failures_at_width = 0


# ---------------------------------------------------------------------------
# Step 2: GF(2) compression


def gf2_inner_product(z, mask) -> int:
    """Parity of the bitwise AND of two equal-length bit vectors."""
    z = np.asarray(z)
    mask = np.asarray(mask)
    if z.shape != mask.shape or z.ndim != 1:
        raise ValueError(f"length mismatch: {z.shape} vs {mask.shape}")
    if not (np.isin(z, (0, 1)).all() and np.isin(mask, (0, 1)).all()):
        raise ValueError("inputs must be bit vectors")
    return int(np.bitwise_and(z.astype(np.uint8), mask.astype(np.uint8)).sum()) & 1


@dataclass(frozen=True)
class CompressionPlan:
    """The Bernoulli(0.5) masks whose parities compress the stage-1 codes."""

    masks: np.ndarray  # (m, d1) uint8

    def __post_init__(self):
        object.__setattr__(self, "masks", as_code_matrix(self.masks))

    @property
    def m(self) -> int:
        return self.masks.shape[0]

    @property
    def input_length(self) -> int:
        return self.masks.shape[1]


@dataclass(frozen=True)
class CompressionResult:
    plan: CompressionPlan
    compressed: np.ndarray  # (n, m) uint8, pairwise distinct rows
    retries: int


def apply_compression(codes: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """All mask parities of all codes at once; float64 keeps counts exact."""
    counts = codes.astype(np.float64) @ masks.T.astype(np.float64)
    return (counts % 2).astype(np.uint8)


def plan_compression(codes, cfg: ConstructionConfig) -> CompressionResult:
    """Draw masks until the compressed codes are pairwise distinct."""
    codes = as_code_matrix(codes)
    n, d1 = codes.shape
    if _duplicate_groups(codes):
        raise ValueError("input codes must be pairwise distinct")
    rng = cfg.step_rng(1)
    m = cfg.compression_width(n)
    retries = 0
    failures_at_width = 0
    while True:
        masks = rng.integers(0, 2, size=(m, d1), dtype=np.uint8)
        compressed = apply_compression(codes, masks)
        if not _duplicate_groups(compressed):
            return CompressionResult(CompressionPlan(masks), compressed, retries)
        retries += 1
        failures_at_width += 1
        if retries >= cfg.max_retries:
            raise ConstructionRetryError(
                f"mask compression failed to stay injective after {retries} retries "
                f"(width reached {m}); this signals a configuration error"
            )
        if failures_at_width >= FAILURES_BEFORE_WIDEN:
            m *= 2
            failures_at_width = 0


# ---------------------------------------------------------------------------
# Step 2, threshold compilation: XOR gadget trees
#
# One XOR node costs three neurons: u = sigma(a - b - 1), v = sigma(b - a - 1),
# then sigma(u + v - 1). (The outer -1 bias is required for the (0,0) case
# under the ties-activate convention.) Mask zeros contribute nothing and are
# folded away; pass-through neurons sigma(2z - 1) carry finished trees and
# odd leftovers forward so all m parities land in a single output layer.


@dataclass(frozen=True)
class XorSubnetwork:
    layers: list
    output_dim: int
    gadget_neurons: int
    padding_neurons: int
    gadget_weights: int  # entries plus biases, 9 per gadget
    padding_weights: int  # 2 per pass-through, 1 per constant-zero neuron

    @property
    def neurons(self) -> int:
        return self.gadget_neurons + self.padding_neurons


class _LayerSink:
    """Accumulates sparse rows for one layer under construction."""

    def __init__(self, in_dim: int):
        self.in_dim = in_dim
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[int] = []
        self.biases: list[int] = []

    def add_row(self, entries, bias: int) -> int:
        idx = len(self.biases)
        for col, val in entries:
            if val != 0:
                self.rows.append(idx)
                self.cols.append(col)
                self.vals.append(val)
        self.biases.append(bias)
        return idx

    def build(self) -> ThresholdLayer:
        return ThresholdLayer.integer_from_entries(
            len(self.biases), self.in_dim, self.rows, self.cols, self.vals,
            np.array(self.biases, dtype=np.int64),
        )


def build_xor_subnetwork(plan: CompressionPlan, d1: int) -> XorSubnetwork:
    """Integer layers mapping z in {0,1}^d1 to its m mask parities."""
    masks = plan.masks
    if plan.input_length != d1:
        raise ValueError(f"masks expect input length {plan.input_length}, got d1={d1}")
    m = plan.m
    signals = [list(np.flatnonzero(masks[k])) for k in range(m)]
    levels = max(((len(s) - 1).bit_length() if s else 0) for s in signals)

    layers = []
    gadget_neurons = padding_neurons = 0
    gadget_weights = padding_weights = 0

    if levels == 0:
        # every mask has at most one live bit: a single copy/constant layer
        sink = _LayerSink(d1)
        for s in signals:
            if s:
                sink.add_row([(s[0], 2)], -1)
                padding_weights += 2
            else:
                sink.add_row([], -1)
                padding_weights += 1
            padding_neurons += 1
        layers.append(sink.build())
        return XorSubnetwork(layers, m, 0, padding_neurons, 0, padding_weights)

    in_dim = d1
    for level in range(levels):
        half = _LayerSink(in_dim)
        plan_rows = []  # per tree: list of ("xor", u, v) / ("copy", idx)
        for s in signals:
            ops = []
            if not s:
                # empty mask: materialize a constant zero once, then copy it
                idx = half.add_row([], -1)
                padding_neurons += 1
                padding_weights += 1
                ops.append(("copy", idx))
            else:
                for p in range(len(s) // 2):
                    a, b = s[2 * p], s[2 * p + 1]
                    u = half.add_row([(a, 1), (b, -1)], -1)
                    v = half.add_row([(b, 1), (a, -1)], -1)
                    gadget_neurons += 2
                    gadget_weights += 6
                    ops.append(("xor", u, v))
                if len(s) % 2 == 1:
                    idx = half.add_row([(s[-1], 2)], -1)
                    padding_neurons += 1
                    padding_weights += 2
                    ops.append(("copy", idx))
            plan_rows.append(ops)
        layers.append(half.build())

        combine = _LayerSink(len(half.biases))
        new_signals = []
        for ops in plan_rows:
            outs = []
            for op in ops:
                if op[0] == "xor":
                    outs.append(combine.add_row([(op[1], 1), (op[2], 1)], -1))
                    gadget_neurons += 1
                    gadget_weights += 3
                else:
                    outs.append(combine.add_row([(op[1], 2)], -1))
                    padding_neurons += 1
                    padding_weights += 2
            new_signals.append(outs)
        layers.append(combine.build())
        signals = new_signals
        in_dim = len(combine.biases)

    assert all(len(s) == 1 for s in signals)
    # after the last level each tree holds one signal emitted in tree order,
    # so row k of the final layer is exactly parity k
    return XorSubnetwork(layers, m, gadget_neurons, padding_neurons,
                         gadget_weights, padding_weights)


# ---------------------------------------------------------------------------
# Step 3: prefix-trie partition and the selector layer


@dataclass(frozen=True)
class PrefixSubset:
    prefix: str  # string over "0"/"1"; empty allowed for the root
    member_indices: np.ndarray


@dataclass(frozen=True)
class PrefixPartition:
    subsets: list[PrefixSubset]
    code_length: int
    n: int

    @property
    def K(self) -> int:
        return len(self.subsets)

    @property
    def max_subset_size(self) -> int:
        return max(len(s.member_indices) for s in self.subsets)


def prefix_partition(codes) -> PrefixPartition:
    """Trie-derived subsets of size at most ceil(sqrt(n)).

    A trie node becomes a subset exactly when its subtree holds at most
    ceil(sqrt(n)) codes while every proper ancestor holds more; the node's
    root path is the subset's prefix. Distinct codes guarantee the
    recursion bottoms out by full depth.
    """
    codes = as_code_matrix(codes)
    n, length = codes.shape
    if _duplicate_groups(codes):
        raise ValueError("codes must be pairwise distinct")
    cap = ceil_sqrt(n)
    subsets: list[PrefixSubset] = []

    def visit(indices: np.ndarray, depth: int, prefix: str):
        if len(indices) <= cap:
            subsets.append(PrefixSubset(prefix, indices.copy()))
            return
        bits = codes[indices, depth]
        zeros = indices[bits == 0]
        ones = indices[bits == 1]
        if zeros.size:
            visit(zeros, depth + 1, prefix + "0")
        if ones.size:
            visit(ones, depth + 1, prefix + "1")

    visit(np.arange(n), 0, "")
    return PrefixPartition(subsets, length, n)


def build_selector_layer(part: PrefixPartition, d2: int) -> ThresholdLayer:
    """K prefix indicators stacked above d2 copy neurons.

    Indicator i fires iff the input code starts with prefix i: weights
    2b-1 on the prefix positions and bias -popcount(prefix). Copy neuron j
    is sigma(2 z_j - 1). Output layout is [s(z); z].
    """
    sink = _LayerSink(d2)
    for sub in part.subsets:
        if len(sub.prefix) > d2:
            raise ValueError(f"prefix {sub.prefix!r} longer than code length {d2}")
        entries = [(j, 2 * int(bit) - 1) for j, bit in enumerate(sub.prefix)]
        sink.add_row(entries, -sub.prefix.count("1"))
    for j in range(d2):
        sink.add_row([(j, 2)], -1)
    return sink.build()


# ---------------------------------------------------------------------------
# Step 4: expansion, memorization, output


def build_expansion_layer(part: PrefixPartition, d2: int) -> ThresholdLayer:
    """Scatter (s, z) into K chunks of width d2+1.

    Chunk i starts with sigma(s_i - 1) and continues with
    sigma(s_i + z_j - 2); with s one-hot at i the chunk reads (1, z) and
    every other chunk is all zero.
    """
    K = part.K
    sink = _LayerSink(K + d2)
    for i in range(K):
        sink.add_row([(i, 1)], -1)
        for j in range(d2):
            sink.add_row([(i, 1), (K + j, 1)], -2)
    return sink.build()


def build_memorization_layer(part: PrefixPartition, codes, labels) -> ThresholdLayer:
    """One neuron per within-subset rank; neuron i recalls the i-th member
    of every subset.

    For subset j's i-th member with code z and label y the chunk reads
    (-popcount(z) + y - 1, 2z - 1), which scores y - 1 on the member's own
    expanded code and at most y - 2 on any other code of that subset.
    Subsets with fewer than i members get the sentinel chunk (-1, 0, ..., 0)
    so their codes can never activate the neuron. All biases are zero.
    """
    codes = as_code_matrix(codes)
    labels = np.asarray(labels)
    if labels.shape != (codes.shape[0],):
        raise ValueError("labels must align with codes")
    d2 = codes.shape[1]
    R = part.max_subset_size
    sink = _LayerSink(part.K * (d2 + 1))
    for i in range(R):
        entries = []
        for j, sub in enumerate(part.subsets):
            base = j * (d2 + 1)
            if i < len(sub.member_indices):
                idx = int(sub.member_indices[i])
                z = codes[idx]
                y = int(labels[idx])
                t = int(z.sum())
                entries.append((base, -t + y - 1))
                entries.extend((base + 1 + jj, 2 * int(z[jj]) - 1) for jj in range(d2))
            else:
                entries.append((base, -1))
        sink.add_row(entries, 0)
    return sink.build()


def build_output_layer(width: int) -> ThresholdLayer:
    """OR over the memorization bank: sigma(2 q_1 + ... + 2 q_width - 1)."""
    if width < 1:
        raise ValueError("width must be positive")
    sink = _LayerSink(width)
    sink.add_row([(j, 2) for j in range(width)], -1)
    return sink.build()


# ---------------------------------------------------------------------------
# End-to-end construction


@dataclass(frozen=True)
class StepRecord:
    step: str
    neurons: int
    weight_entries: int
    biases: int
    max_abs_integer_weight: Optional[int]
    layer_span: tuple[int, int]  # [start, end) into the network's layer list


@dataclass(frozen=True)
class ConstructionReport:
    """Per-step size accounting against the closed-form budget."""

    n: int
    input_dim: int
    mode_kind: str
    delta: float
    seed: int
    eps1: float
    eps2: float
    c_dist: float
    max_retries: int
    d1: int
    d2: int
    d3: int
    K: int
    max_subset_size: int
    xor_gadget_neurons: int
    xor_padding_neurons: int
    retries: dict
    steps: list
    total_neurons: int
    total_weight_entries: int
    total_biases: int
    neuron_bound: int
    compression_log_base: int = 2

    @property
    def total_weights(self) -> int:
        """Structural nonzeros plus biases, the connection-count convention."""
        return self.total_weight_entries + self.total_biases

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "input_dim": self.input_dim,
            "mode": self.mode_kind,
            "delta": self.delta,
            "seed": self.seed,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "c_dist": self.c_dist,
            "max_retries": self.max_retries,
            "dims": {"d1": self.d1, "d2": self.d2, "d3": self.d3, "K": self.K,
                     "max_subset_size": self.max_subset_size},
            "compression_log_base": self.compression_log_base,
            "xor_gadget_neurons": self.xor_gadget_neurons,
            "xor_padding_neurons": self.xor_padding_neurons,
            "retries": dict(self.retries),
            "steps": [
                {
                    "step": s.step,
                    "neurons": s.neurons,
                    "weight_entries": s.weight_entries,
                    "biases": s.biases,
                    "max_abs_integer_weight": s.max_abs_integer_weight,
                    "layer_span": list(s.layer_span),
                }
                for s in self.steps
            ],
            "totals": {
                "neurons": self.total_neurons,
                "weight_entries": self.total_weight_entries,
                "biases": self.total_biases,
                "weights": self.total_weights,
            },
            "neuron_bound": self.neuron_bound,
        }


def _step_record(name: str, layers: Sequence[ThresholdLayer], span) -> StepRecord:
    neurons = sum(l.out_dim for l in layers)
    entries = sum(l.weight_entries() for l in layers)
    biases = sum(l.out_dim for l in layers)
    int_max = [int(l.max_abs_weight()) for l in layers if l.is_integer]
    return StepRecord(name, neurons, entries, biases,
                      max(int_max) if int_max else None, span)


def construct_memorizer(ds: Dataset, cfg: ConstructionConfig):
    """Build a network with forward(net, x_i) = y_i for every sample.

    Returns (net, report). The recall guarantee is verified internally by a
    full batch forward before returning; a violation raises
    MemorizationCheckError and means a bug, not an input problem.
    """
    verdict = check_separation(ds, cfg.mode, tol=DEFAULT_TOL)
    if not verdict.holds:
        raise DatasetNotSeparatedError(
            f"dataset is not {cfg.mode.kind}-separated at delta={cfg.mode.delta}: "
            f"worst pair {verdict.worst_pair} at {verdict.worst_value:.6g}"
            + ("" if verdict.max_norm is None else f", max norm {verdict.max_norm:.6g}"),
            verdict=verdict,
        )

    first = build_first_layer(ds, cfg)
    d1 = first.m_used
    comp = plan_compression(first.codes, cfg)
    d2 = comp.plan.m
    xor = build_xor_subnetwork(comp.plan, d1)
    part = prefix_partition(comp.compressed)
    selector = build_selector_layer(part, d2)
    expansion = build_expansion_layer(part, d2)
    memor = build_memorization_layer(part, comp.compressed, ds.labels)
    output = build_output_layer(part.max_subset_size)

    layers = [first.layer, *xor.layers, selector, expansion, memor, output]
    net = ThresholdNetwork(layers, ds.dim)

    preds = forward_batch(net, ds.features)
    if not np.array_equal(preds, ds.labels):
        bad = int(np.flatnonzero(preds != ds.labels)[0])
        raise MemorizationCheckError(
            f"constructed network mislabels sample {bad}: "
            f"got {int(preds[bad])}, expected {int(ds.labels[bad])}"
        )

    xor_end = 1 + len(xor.layers)
    steps = [
        _step_record("first_layer", [first.layer], (0, 1)),
        _step_record("xor_compression", xor.layers, (1, xor_end)),
        _step_record("selector", [selector], (xor_end, xor_end + 1)),
        _step_record("expansion", [expansion], (xor_end + 1, xor_end + 2)),
        _step_record("memorization", [memor], (xor_end + 2, xor_end + 3)),
        _step_record("output", [output], (xor_end + 3, xor_end + 4)),
    ]
    root_n = ceil_sqrt(ds.n)
    bound = (d1 + 3 * (d1 - 1) * d2 + xor.padding_neurons
             + (part.K + d2) + part.K * (d2 + 1) + root_n + 1)
    report = ConstructionReport(
        n=ds.n,
        input_dim=ds.dim,
        mode_kind=cfg.mode.kind,
        delta=cfg.mode.delta,
        seed=cfg.seed,
        eps1=cfg.eps1,
        eps2=cfg.eps2,
        c_dist=cfg.c_dist,
        max_retries=cfg.max_retries,
        d1=d1,
        d2=d2,
        d3=part.K * (d2 + 1),
        K=part.K,
        max_subset_size=part.max_subset_size,
        xor_gadget_neurons=xor.gadget_neurons,
        xor_padding_neurons=xor.padding_neurons,
        retries={"first_layer": first.retries, "compression": comp.retries},
        steps=steps,
        total_neurons=sum(s.neurons for s in steps),
        total_weight_entries=sum(s.weight_entries for s in steps),
        total_biases=sum(s.biases for s in steps),
        neuron_bound=bound,
    )
    net.metadata = report
    return net, report

"""Threshold-network data model: exact forward evaluation, size audits, JSON I/O.

A network is a stack of affine layers followed by the Heaviside step
sigma(z) = 1 iff z >= 0 (ties activate). The first layer may carry real
weights; all other layers built by this package carry bounded integers
stored sparsely, and their evaluation on {0,1} inputs is exact integer
arithmetic with no rounding.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

REAL = "real"
INTEGER = "integer"

#: A real-layer pre-activation closer to zero than this is considered a
#: fragile tie and triggers ThresholdTieWarning during evaluation.
TIE_TOLERANCE = 1e-12

#: Batch evaluation processes inputs in column blocks of this size; the
#: block size is fixed so that results never depend on caller batching.
EVAL_CHUNK = 256


class ThresholdTieWarning(UserWarning):
    """A real layer produced a pre-activation within TIE_TOLERANCE of zero."""


class SerializationError(ValueError):
    """Malformed network document; the message names the offending location."""


class ThresholdLayer:
    """One affine map plus Heaviside activation.

    Real layers hold a dense float64 matrix; integer layers hold an int64
    CSR matrix whose structural nonzeros are exactly the connections the
    layer owns. Both are frozen after construction.
    """

    __slots__ = ("weights", "biases", "domain", "_eval_cache")

    def __init__(self, weights, biases, domain: str):
        if domain not in (REAL, INTEGER):
            raise ValueError(f"unknown weight domain {domain!r}")
        if domain == REAL:
            weights = np.array(weights, dtype=np.float64)
            biases = np.array(biases, dtype=np.float64)
            if weights.ndim != 2:
                raise ValueError("real weights must be a 2-D array")
            weights.flags.writeable = False
            biases.flags.writeable = False
        else:
            if not sparse.issparse(weights):
                weights = sparse.csr_array(np.asarray(weights))
            weights = sparse.csr_array(weights)
            if not np.issubdtype(weights.dtype, np.integer):
                data = weights.data
                if not np.all(data == np.round(data)):
                    raise ValueError("integer layer contains non-integer weights")
            weights = weights.astype(np.int64)
            weights.eliminate_zeros()
            weights.sum_duplicates()
            biases = np.asarray(biases)
            if not np.all(biases == np.round(biases)):
                raise ValueError("integer layer contains non-integer biases")
            biases = biases.astype(np.int64)
            biases.flags.writeable = False
            weights.data.flags.writeable = False
        if biases.ndim != 1 or weights.shape[0] != biases.shape[0]:
            raise ValueError(
                f"bias length {biases.shape} does not match weight rows {weights.shape}"
            )
        self.weights = weights
        self.biases = biases
        self.domain = domain
        self._eval_cache = None

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def is_integer(self) -> bool:
        return self.domain == INTEGER

    def _eval_arrays(self):
        """(weights, -biases) in the narrowest exact dtype for evaluation.

        On {0,1} inputs the pre-activation of a row is bounded by the sum
        of its absolute weights, so int32 is exact whenever that bound plus
        the bias stays below 2^31; otherwise the original int64 is used.
        The fastest representation is derived once and cached.
        """
        if self._eval_cache is None:
            row_bound = np.abs(self.weights).sum(axis=1) + np.abs(self.biases)
            if row_bound.size == 0 or row_bound.max() < np.iinfo(np.int32).max:
                self._eval_cache = (self.weights.astype(np.int32), (-self.biases).astype(np.int32))
            else:
                self._eval_cache = (self.weights, -self.biases)
        return self._eval_cache

    @classmethod
    def real(cls, weights, biases) -> "ThresholdLayer":
        return cls(weights, biases, REAL)

    @classmethod
    def integer(cls, weights, biases) -> "ThresholdLayer":
        return cls(weights, biases, INTEGER)

    @classmethod
    def integer_from_entries(cls, out_dim, in_dim, rows, cols, vals, biases) -> "ThresholdLayer":
        """Integer layer from parallel (row, col, value) entry arrays."""
        mat = sparse.coo_array(
            (np.asarray(vals, dtype=np.int64), (np.asarray(rows), np.asarray(cols))),
            shape=(out_dim, in_dim),
        ).tocsr()
        return cls(mat, biases, INTEGER)

    def weight_entries(self) -> int:
        """Structural nonzero count: all entries for dense real layers."""
        if self.domain == REAL:
            return int(self.weights.size)
        return int(self.weights.nnz)

    def max_abs_weight(self):
        """Largest |weight or bias|; int for integer layers, float for real."""
        if self.is_integer:
            m = int(np.abs(self.biases).max()) if self.biases.size else 0
            if self.weights.nnz:
                m = max(m, int(np.abs(self.weights.data).max()))
            return m
        m = float(np.abs(self.biases).max()) if self.biases.size else 0.0
        if self.weights.size:
            m = max(m, float(np.abs(self.weights).max()))
        return m

    def __eq__(self, other) -> bool:
        if not isinstance(other, ThresholdLayer):
            return NotImplemented
        if self.domain != other.domain or self.weights.shape != other.weights.shape:
            return False
        if not np.array_equal(self.biases, other.biases):
            return False
        if self.domain == REAL:
            return np.array_equal(self.weights, other.weights)
        a, b = self.weights, other.weights
        return (
            np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )


class ThresholdNetwork:
    """Composed threshold layers mapping R^input_dim to one output bit."""

    def __init__(self, layers: Sequence[ThresholdLayer], input_dim: int, metadata=None):
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        if layers[0].in_dim != input_dim:
            raise ValueError(
                f"first layer expects {layers[0].in_dim} inputs, network declares {input_dim}"
            )
        for k in range(1, len(layers)):
            if layers[k].in_dim != layers[k - 1].out_dim:
                raise ValueError(
                    f"layer {k} input dim {layers[k].in_dim} != layer {k - 1} "
                    f"output dim {layers[k - 1].out_dim}"
                )
        if layers[-1].out_dim != 1:
            raise ValueError("final layer must have exactly one output neuron")
        self.layers = layers
        self.input_dim = input_dim
        self.metadata = metadata

    def __eq__(self, other) -> bool:
        if not isinstance(other, ThresholdNetwork):
            return NotImplemented
        return (
            self.input_dim == other.input_dim
            and len(self.layers) == len(other.layers)
            and all(a == b for a, b in zip(self.layers, other.layers))
        )


def _apply_layer(layer: ThresholdLayer, Z: np.ndarray) -> np.ndarray:
    """One layer on a (in_dim, B) block; returns (out_dim, B) bits as bool."""
    if layer.domain == REAL:
        P = layer.weights @ Z.astype(np.float64, copy=False)
        P += layer.biases[:, None]
        if np.any(np.abs(P) <= TIE_TOLERANCE):
            warnings.warn(
                "real-layer pre-activation within tie tolerance of zero; "
                "the resulting bit is numerically fragile",
                ThresholdTieWarning,
                stacklevel=3,
            )
        return P >= 0
    W, neg_bias = layer._eval_arrays()
    P = W @ Z.astype(W.dtype, copy=False)
    return P >= neg_bias[:, None]


def evaluate_layers(layers: Sequence[ThresholdLayer], xs, chunk: int = EVAL_CHUNK) -> np.ndarray:
    """Bits produced by a layer stack on a batch of inputs.

    xs has shape (N, in_dim); the result has shape (N, out_dim) with int8
    entries in {0, 1}. Inputs are processed in fixed-size column blocks so
    the output is identical however the caller splits the batch.
    """
    X = np.asarray(xs)
    if X.ndim != 2 or X.shape[1] != layers[0].in_dim:
        raise ValueError(
            f"batch shape {X.shape} incompatible with layer input dim {layers[0].in_dim}"
        )
    out_blocks = []
    for start in range(0, X.shape[0], chunk):
        Z = np.ascontiguousarray(X[start : start + chunk].T)
        for layer in layers:
            Z = _apply_layer(layer, Z)
        out_blocks.append(Z.T.astype(np.int8))
    return np.concatenate(out_blocks, axis=0)


def forward(net: ThresholdNetwork, x) -> int:
    """Single-input evaluation; returns the output bit."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input shape {x.shape} != ({net.input_dim},)")
    return int(evaluate_layers(net.layers, x[None, :])[0, 0])


def forward_batch(net: ThresholdNetwork, xs) -> np.ndarray:
    """Elementwise forward over a batch; order-preserving."""
    return evaluate_layers(net.layers, np.asarray(xs, dtype=np.float64))[:, 0]


# ---------------------------------------------------------------------------
# Audits


@dataclass(frozen=True)
class LayerAudit:
    domain: str
    neurons: int
    weight_entries: int
    biases: int
    max_abs_integer_weight: Optional[int]


@dataclass(frozen=True)
class NetworkAudit:
    """Structural size accounting.

    `weights` counts structural nonzero weight entries plus biases, the
    convention under which connection budgets are stated. The integer
    maximum covers weights and biases of integer layers only.
    """

    neurons: int
    weight_entries: int
    bias_count: int
    weights: int
    max_abs_integer_weight: Optional[int]
    layers: tuple[LayerAudit, ...]


def audit(net: ThresholdNetwork) -> NetworkAudit:
    per_layer = []
    for layer in net.layers:
        max_int = None
        if layer.is_integer:
            max_int = int(layer.max_abs_weight())
        per_layer.append(
            LayerAudit(
                domain=layer.domain,
                neurons=layer.out_dim,
                weight_entries=layer.weight_entries(),
                biases=layer.out_dim,
                max_abs_integer_weight=max_int,
            )
        )
    neurons = sum(a.neurons for a in per_layer)
    entries = sum(a.weight_entries for a in per_layer)
    biases = sum(a.biases for a in per_layer)
    int_maxes = [a.max_abs_integer_weight for a in per_layer if a.max_abs_integer_weight is not None]
    return NetworkAudit(
        neurons=neurons,
        weight_entries=entries,
        bias_count=biases,
        weights=entries + biases,
        max_abs_integer_weight=max(int_maxes) if int_maxes else None,
        layers=tuple(per_layer),
    )


# ---------------------------------------------------------------------------
# JSON serialization
#
# Document shape:
#   {"input_dim": d,
#    "layers": [{"domain": "real"|"integer", "rows": r, "cols": c,
#                "entries": [[row, col, value], ...], "bias": [...]}]}
#
# Entries are sorted by (row, col); zero-valued entries are omitted.
# Integer values serialize as JSON ints (bit-exact round trip); real values
# serialize as shortest round-trip decimals.


def serialize(net: ThresholdNetwork) -> bytes:
    doc = {"input_dim": net.input_dim, "layers": []}
    for layer in net.layers:
        if layer.domain == REAL:
            rows, cols = np.nonzero(layer.weights)
            vals = [float(v) for v in layer.weights[rows, cols]]
            bias = [float(b) for b in layer.biases]
        else:
            coo = layer.weights.tocoo()
            order = np.lexsort((coo.col, coo.row))
            rows, cols = coo.row[order], coo.col[order]
            vals = [int(v) for v in coo.data[order]]
            bias = [int(b) for b in layer.biases]
        doc["layers"].append(
            {
                "domain": layer.domain,
                "rows": int(layer.out_dim),
                "cols": int(layer.in_dim),
                "entries": [[int(r), int(c), v] for r, c, v in zip(rows, cols, vals)],
                "bias": bias,
            }
        )
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def _expect(cond: bool, where: str, what: str):
    if not cond:
        raise SerializationError(f"{where}: {what}")


def deserialize(data: bytes) -> ThresholdNetwork:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SerializationError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    _expect(isinstance(doc, dict), "$", "document must be an object")
    _expect(isinstance(doc.get("input_dim"), int), "$.input_dim", "missing or non-integer")
    raw_layers = doc.get("layers")
    _expect(isinstance(raw_layers, list) and raw_layers, "$.layers", "missing or empty list")
    layers = []
    for li, entry in enumerate(raw_layers):
        where = f"$.layers[{li}]"
        _expect(isinstance(entry, dict), where, "layer must be an object")
        domain = entry.get("domain")
        _expect(domain in (REAL, INTEGER), f"{where}.domain", f"must be 'real' or 'integer', got {domain!r}")
        rows_n = entry.get("rows")
        cols_n = entry.get("cols")
        _expect(isinstance(rows_n, int) and rows_n >= 1, f"{where}.rows", "must be a positive integer")
        _expect(isinstance(cols_n, int) and cols_n >= 1, f"{where}.cols", "must be a positive integer")
        bias = entry.get("bias")
        _expect(isinstance(bias, list) and len(bias) == rows_n, f"{where}.bias", f"must be a list of length {rows_n}")
        entries = entry.get("entries")
        _expect(isinstance(entries, list), f"{where}.entries", "must be a list")
        rr, cc, vv = [], [], []
        seen = set()
        for ei, e in enumerate(entries):
            ew = f"{where}.entries[{ei}]"
            _expect(isinstance(e, list) and len(e) == 3, ew, "must be [row, col, value]")
            r, c, v = e
            _expect(isinstance(r, int) and 0 <= r < rows_n, ew, f"row {r!r} out of range")
            _expect(isinstance(c, int) and 0 <= c < cols_n, ew, f"col {c!r} out of range")
            _expect((r, c) not in seen, ew, f"duplicate entry at ({r}, {c})")
            seen.add((r, c))
            if domain == INTEGER:
                _expect(isinstance(v, int), ew, f"integer layer value must be an int, got {v!r}")
                _expect(v != 0, ew, "structural zero not allowed in integer layer")
            else:
                _expect(isinstance(v, (int, float)), ew, f"value must be a number, got {v!r}")
            rr.append(r)
            cc.append(c)
            vv.append(v)
        if domain == REAL:
            _expect(all(isinstance(b, (int, float)) for b in bias), f"{where}.bias", "must be numbers")
            W = np.zeros((rows_n, cols_n))
            if rr:
                W[rr, cc] = vv
            layers.append(ThresholdLayer.real(W, np.array(bias, dtype=np.float64)))
        else:
            _expect(all(isinstance(b, int) for b in bias), f"{where}.bias", "must be integers")
            layers.append(
                ThresholdLayer.integer_from_entries(rows_n, cols_n, rr, cc, vv, np.array(bias, dtype=np.int64))
            )
    try:
        return ThresholdNetwork(layers, input_dim=doc["input_dim"])
    except ValueError as exc:
        raise SerializationError(f"$.layers: {exc}") from exc


def save_network(net: ThresholdNetwork, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(net))


def load_network(path) -> ThresholdNetwork:
    with open(path, "rb") as fh:
        return deserialize(fh.read())

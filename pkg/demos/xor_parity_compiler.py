"""Compile GF(2) parities into threshold gates and watch them agree.

The compression stage needs XOR, which a single threshold neuron cannot
express. The compiler spends three neurons per XOR node,

    a XOR b = sigma( sigma(a - b - 1) + sigma(b - a - 1) - 1 ),

and arranges the masked input bits of each parity into a balanced binary
tree of such nodes.

Run: python demos/xor_parity_compiler.py
"""

import itertools

import numpy as np

from threshmem import build_xor_subnetwork, evaluate_layers, gf2_inner_product
from threshmem.construct import CompressionPlan

print("Truth table of the two-layer XOR gadget:")
gadget = build_xor_subnetwork(CompressionPlan(np.array([[1, 1]], dtype=np.uint8)), 2)
for a, b in itertools.product((0, 1), repeat=2):
    out = evaluate_layers(gadget.layers, np.array([[a, b]]))[0, 0]
    print(f"  {a} XOR {b} = {out}")

print()
d1, m = 9, 3
rng = np.random.default_rng(5)
masks = rng.integers(0, 2, (m, d1), dtype=np.uint8)
print(f"Compiling {m} random parities over {d1} bits:")
for mask in masks:
    print(f"  mask {''.join(map(str, mask))}")

sub = build_xor_subnetwork(CompressionPlan(masks), d1)
print(f"  -> {len(sub.layers)} layers, {sub.gadget_neurons} gadget neurons "
      f"(budget 3(d1-1)m = {3 * (d1 - 1) * m}), {sub.padding_neurons} pass-through neurons")

inputs = np.array(list(itertools.product((0, 1), repeat=d1)), dtype=np.uint8)
network_bits = evaluate_layers(sub.layers, inputs)
oracle_bits = np.array([[gf2_inner_product(z, mk) for mk in masks] for z in inputs])
agree = np.array_equal(network_bits, oracle_bits)
print(f"Exhaustive agreement with the parity oracle over all {len(inputs)} inputs: {agree}")

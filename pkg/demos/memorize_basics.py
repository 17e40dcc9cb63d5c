"""Build a threshold network that memorizes a random labeled point cloud.

Walks the full pipeline: generate a separated dataset, construct the
memorizer, inspect the size report, check recall, and round-trip the
network through its JSON form.

Run: python demos/memorize_basics.py
"""

import numpy as np

from threshmem import (
    ConstructionConfig,
    SeparationMode,
    audit,
    construct_memorizer,
    deserialize,
    forward_batch,
    generate_separated_dataset,
    serialize,
)

N, D, DELTA = 256, 16, 0.2

print(f"Generating {N} points in R^{D} with pairwise distance >= {DELTA} ...")
mode = SeparationMode.distance(DELTA)
ds = generate_separated_dataset(N, D, mode, seed=7)
print(f"  got {ds.n} points, {int(ds.labels.sum())} labeled 1")

print("Constructing the memorizer ...")
cfg = ConstructionConfig(mode=mode, seed=42)
net, report = construct_memorizer(ds, cfg)

print(f"  stage-1 hyperplanes (d1): {report.d1}")
print(f"  compressed code length (d2): {report.d2}")
print(f"  prefix subsets (K): {report.K}, largest subset: {report.max_subset_size}")
print(f"  expanded width (d3 = K(d2+1)): {report.d3}")
print(f"  layers: {len(net.layers)}")
for step in report.steps:
    print(f"    {step.step:<16} {step.neurons:>7} neurons  {step.weight_entries:>9} weights")
print(f"  total neurons {report.total_neurons} (closed-form budget {report.neuron_bound})")
print(f"  retries: {report.retries}")

preds = forward_batch(net, ds.features)
print(f"Recall: {int((preds == ds.labels).sum())}/{ds.n}")

totals = audit(net)
print(f"Audit: {totals.neurons} neurons, {totals.weights} weights incl. biases, "
      f"max |integer weight| = {totals.max_abs_integer_weight} (bound d2+1 = {report.d2 + 1})")

blob = serialize(net)
assert deserialize(blob) == net
print(f"Serialized round trip OK ({len(blob) / 1e6:.1f} MB of JSON)")

# the same points are memorizable under any other labeling
flipped = ds.relabeled(1 - ds.labels)
net2, _ = construct_memorizer(flipped, cfg)
assert np.array_equal(forward_batch(net2, ds.features), flipped.labels)
print("Flipped labeling memorized as well - the point set, not the labels, is the input.")

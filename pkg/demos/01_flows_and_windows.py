"""
Flow logs, day instances, and flow windows
==========================================

The unit of logging is a network flow: one client talked to one domain at some
time, for some duration, moving some bytes. The unit of classification is a
window of 2k+1 consecutive flows of one client, and the unit of alarming is an
instance — one client (or domain) within one 24-hour UTC day.

This script generates a small synthetic log, round-trips it through the JSONL
format, and inspects windows and their features.
"""

import numpy as np

from sluiceflow.featurize import featurize_window
from sluiceflow.flowstore import (
    EntityKind,
    bucket_instances,
    build_windows,
    parse_flow_log,
    write_flow_log,
)
from sluiceflow.synthgen import SynthConfig, generate

# A deterministic toy log: 10 clients over 2 days, 30% infected.
cfg = SynthConfig(
    n_clients=10, n_days=2, infection_rate=0.3,
    n_benign_domains=30, n_malicious_domains=5,
    benign_flows_per_day=12.0, malware_flows_per_day=8.0, seed=1,
)
flows, truth = generate(cfg)
print(f"{len(flows)} flows, {len(truth.infected_clients)} infected clients,"
      f" {len(truth.malicious_domains)} malicious domains")
print("first flow:", flows[0])

# Write and re-parse: the log format is line-delimited JSON.
write_flow_log("/tmp/demo_flows.jsonl", flows)
reparsed = parse_flow_log("/tmp/demo_flows.jsonl")
assert reparsed == flows
print("JSONL round-trip: OK")

# Instances: one (entity, day) pair per alarm decision, for both entity kinds.
instances = bucket_instances(flows)
n_client = sum(1 for key in instances if key.kind is EntityKind.CLIENT)
days = sorted({key.day for key in instances})
print(f"{n_client} client-day and {len(instances) - n_client} domain-day "
      f"instances over days {days}")

# Windows: 2k+1 flows of the same client centered on the classified flow.
windows = build_windows(flows, k=2)
w = windows[len(windows) // 2]
print("center flow domain:", w.center.domain)
print("padding mask:", w.pad_mask)

# Each window featurizes into a one-hot domain tensor and numeric features
# (log durations/volumes and inter-flow gaps); padding slots are all zero.
domains_onehot, numeric = featurize_window(w)
print("one-hot domain tensor:", domains_onehot.shape)  # (2k+1, 40, 40)
print("numeric features per flow:", numeric.shape)     # (2k+1, 5)
center = len(w.flows) // 2
print("numeric row of the center flow:", np.round(numeric[center], 3))

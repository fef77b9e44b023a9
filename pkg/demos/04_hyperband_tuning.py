"""
Hyperband hyperparameter search
===============================

Hyperband trades breadth against depth: early brackets try many random
configurations with a tiny epoch budget and successively halve the field,
later brackets try few configurations at full budget. The resource unit here
is training epochs and the validation metric is flow-level ROC AUC.

To keep this demo fast we use a synthetic evaluator (a known function of the
configuration) instead of real training — the search machinery is identical,
and with a deterministic evaluator the whole trace is reproducible.
"""

import collections
import math

from sluiceflow.hyperband import (
    SearchSpace,
    hyperband_search,
    plan_brackets,
    planned_epochs,
)

# The published schedule for R=27, eta=3: brackets s=3..0.
plan = plan_brackets(R=27, eta=3)
print(f"s_max={plan.s_max}")
for b in plan.brackets:
    print(f"  bracket s={b.s}: start with {b.n_configs:2d} configs "
          f"at {b.resource:2d} epochs each")
print("planned epochs per bracket:", planned_epochs(plan))


# Pretend the best model has kernel_width 9 and 64 filters; more epochs help
# slightly. Any deterministic function works.
def evaluator(config, epochs):
    return (
        -abs(config["kernel_width"] - 9)
        - abs(math.log2(config["n_filters"]) - 6)
        + 0.01 * epochs
    )


best, score, trace = hyperband_search(
    SearchSpace(), evaluator, R=27, eta=3, seed=0,
    trace_path="/tmp/demo_search_trace.jsonl",
)
print(f"\nbest config (score {score:.3f}): {best}")

# The trace records every (bracket, round, config, epochs, score, kept) step.
rounds = collections.Counter((e.bracket, e.round) for e in trace)
print("evaluations per (bracket, round):")
for (bracket, rnd), n in sorted(rounds.items(), reverse=True):
    print(f"  bracket {bracket} round {rnd}: {n} configs")
print("full trace written to /tmp/demo_search_trace.jsonl")

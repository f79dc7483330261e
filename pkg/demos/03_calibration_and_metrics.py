"""
Calibrating judge weights and scoring predictions
=================================================
"""

import random

from malfam.calibration import calibrate_weights
from malfam.corpus import GoldRecord
from malfam.metrics import cohen_kappa, evaluate, format_rows
from malfam.taxonomy import FAMILIES, FamilyLabel

# Weights are each judge's gold-set accuracy divided by the total.
accuracy = {"qwen": 0.695, "codellama": 0.420, "gpt-4.1": 0.710, "gpt-5.1": 0.675}
weights = calibrate_weights(accuracy)
for model, w in weights.weights.items():
    print(f"{model:<10} accuracy {accuracy[model]:.3f} -> weight {w:.3f}")

# %%
# Scoring. Trojan and Backdoor/RAT share one evaluation class by default,
# and macro averages run over classes present in the gold set.
rng = random.Random(1)
gold = [GoldRecord(f"s{i}", rng.choice(FAMILIES)) for i in range(60)]
noisy = {g.sample_id: g.label if rng.random() < 0.7 else rng.choice(FAMILIES) for g in gold}
swapped = {g.sample_id: FamilyLabel.TROJAN if g.label is FamilyLabel.BACKDOOR else g.label for g in gold}

rows = [(("noisy",), evaluate(noisy, gold)),
        (("trojan-for-backdoor, merged",), evaluate(swapped, gold)),
        (("trojan-for-backdoor, unmerged",), evaluate(swapped, gold, merge_equivalent=False))]
print(format_rows(rows))

# %%
# Agreement between two annotators, corrected for chance.
a = [g.label for g in gold]
b = [noisy[g.sample_id] for g in gold]
print(f"kappa(gold, noisy) = {cohen_kappa(a, b):.3f}")

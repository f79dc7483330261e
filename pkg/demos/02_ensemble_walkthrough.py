"""
Three-stage weighted hierarchical voting
========================================

Four judges vote; the decision falls through family majority, group
consensus and the specificity tie-break in turn.
"""

from malfam.ensemble import WeightVector, decide_flat, decide_hierarchical
from malfam.taxonomy import FamilyLabel as F

weights = WeightVector.uniform(["qwen", "codellama", "gpt-4.1", "gpt-5.1"])


def show(title, labels, w=weights):
    preds = list(zip(w.weights, labels))
    d = decide_hierarchical(preds, w)
    print(f"{title}: {d.label.display if d.label else 'UNRESOLVED'} [{d.stage.value}]")
    for line in d.trace:
        print(f"    {line}")


# A clear majority wins outright.
show("majority", [F.TROJAN, F.TROJAN, F.TROJAN, F.WORM])

# No family has more than half the weight, but three votes share the
# trojan-like group. Inside it every family has one vote, so the most
# specific one is chosen.
show("group", [F.TROJAN, F.BACKDOOR, F.SPYWARE, F.DOWNLOADER])

# Neither families nor groups reach a majority: the globally tied
# families are ranked by specificity.
show("global tie", [F.WORM, F.WORM, F.RANSOMWARE, F.RANSOMWARE])

# Calibrated weights change the outcome. Two accurate judges outvote two
# weaker ones even though the raw vote count is split.
calibrated = WeightVector({"qwen": 0.278, "codellama": 0.168, "gpt-4.1": 0.284, "gpt-5.1": 0.270})
show("weighted", [F.TROJAN, F.TROJAN, F.WORM, F.WORM], calibrated)

# The flat modes skip the hierarchy and take the plurality.
d = decide_flat(list(zip(weights.weights, [F.TROJAN, F.WORM, None, None])), mode="uniform")
print(f"flat uniform: {d.label.display} [{d.stage.value}]")

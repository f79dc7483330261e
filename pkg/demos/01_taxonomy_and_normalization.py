"""
Families, behavior groups and answer normalization
==================================================

Every judge answer is mapped onto one of ten malware families, or
rejected with an explicit reason.
"""

from malfam.normalizer import normalize
from malfam.taxonomy import DEFAULT_SPECIFICITY, FAMILIES, behavior_group_of

# The ten families, their behavior group and their specificity rank
# (lower rank = more informative label, preferred when breaking ties).
for family in sorted(FAMILIES, key=DEFAULT_SPECIFICITY.rank):
    print(f"{DEFAULT_SPECIFICITY.rank(family):>2}  {family.display:<32} {behavior_group_of(family).name}")

# Raw model output is rarely clean. Fences, synonyms, echoes of the prompt
# suffix and short explanations are all accepted; answers naming two
# families are not.
answers = [
    "```\nTrojan\n```",
    "RAT",
    "Family: keylogger",
    "This is most likely a Worm, given the share enumeration.",
    "Trojan or Worm",
    "",
    "Adware",
]
for raw in answers:
    print(f"{raw!r:<64} -> {normalize(raw).outcome()}")

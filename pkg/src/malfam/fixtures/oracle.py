"""Deliberately naive restatement of the hierarchical decision procedure,
kept free of any import from ``malfam.ensemble``.

Scores are accumulated in exact rational arithmetic, so ties are exact.
Pass ``fractions.Fraction`` weights to get exact-tie semantics for
weights that are ratios of integers.
"""

from fractions import Fraction

# Group membership by canonical display string, written out independently.
GROUP_MEMBERS = {
    "TROJAN_LIKE": ["Trojan", "Backdoor / Remote Access Trojan", "Spyware / Infostealer", "Bot / Botnet Client"],
    "INSTALLER": ["Dropper", "Downloader"],
    "SELF_REPLICATING": ["Worm", "Virus"],
    "RANSOMWARE": ["Ransomware"],
    "OBFUSCATED": ["Packed / Obfuscated Malware"],
}

ALL_FAMILIES = [name for members in GROUP_MEMBERS.values() for name in members]


def _name(label):
    if label is None:
        return None
    label = getattr(label, "label", label)  # NormalizedPrediction -> label
    if label is None:
        return None
    return getattr(label, "value", label)


def oracle_decide(preds, weights, spec, all_models_denominator=False):
    """Return the winning family's display string, or None when unresolved.

    preds   -- list of (model_id, label-or-None)
    weights -- mapping model_id -> weight (float or Fraction)
    spec    -- object with a ``ranks`` mapping, or a plain mapping,
               keyed by family (enum or display string)
    """
    ranks = getattr(spec, "ranks", spec)
    rank_of = {}
    for fam, r in ranks.items():
        rank_of[_name(fam)] = r

    # steps 1-2: keep only valid predictions
    kept = []
    for model_id, label in preds:
        name = _name(label)
        if name is not None:
            kept.append((model_id, name))
    if len(kept) == 0:
        return None

    # step 3: family scores
    score = {}
    for fam in ALL_FAMILIES:
        score[fam] = Fraction(0)
    for model_id, name in kept:
        score[name] = score[name] + Fraction(weights[model_id])

    if all_models_denominator:
        total = Fraction(0)
        for model_id, _ in preds:
            total = total + Fraction(weights[model_id])
    else:
        total = Fraction(0)
        for model_id, _ in kept:
            total = total + Fraction(weights[model_id])
    half = total / 2

    # step 4: strict family majority
    for fam in ALL_FAMILIES:
        if score[fam] > half:
            return fam

    # step 5: group scores
    group_score = {}
    for group, members in GROUP_MEMBERS.items():
        s = Fraction(0)
        for fam in members:
            s = s + score[fam]
        group_score[group] = s

    # step 6: strict group majority
    for group, members in GROUP_MEMBERS.items():
        if group_score[group] > half:
            predicted_here = []
            for fam in members:
                for _, name in kept:
                    if name == fam and fam not in predicted_here:
                        predicted_here.append(fam)
            best = None
            for fam in predicted_here:
                if best is None or score[fam] > best:
                    best = score[fam]
            tied = [fam for fam in predicted_here if score[fam] == best]
            winner = tied[0]
            for fam in tied:
                if rank_of[fam] < rank_of[winner]:
                    winner = fam
            return winner

    # step 7: global tie-break among the top-scoring predicted families
    predicted = []
    for _, name in kept:
        if name not in predicted:
            predicted.append(name)
    best = None
    for fam in predicted:
        if best is None or score[fam] > best:
            best = score[fam]
    tied = [fam for fam in predicted if score[fam] == best]
    winner = tied[0]
    for fam in tied:
        if rank_of[fam] < rank_of[winner]:
            winner = fam
    return winner

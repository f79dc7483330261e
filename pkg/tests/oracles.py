"""Independent reference implementations shared by the test modules."""

from malfam.taxonomy import FamilyLabel as F


def naive_metrics(preds, gold, merge=True):
    """Per-class counting oracle written without numpy or the confusion matrix."""

    def cls(label):
        if label is None:
            return None
        if merge and label in (F.TROJAN, F.BACKDOOR):
            return "T"
        return label.value

    pairs = [(cls(preds.get(g.sample_id)), cls(g.label)) for g in gold]
    classes = sorted({c for _, c in pairs})
    stats = {}
    for c in classes:
        tp = sum(1 for p, t in pairs if p == c and t == c)
        fp = sum(1 for p, t in pairs if p == c and t != c)
        fn = sum(1 for p, t in pairs if p != c and t == c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        stats[c] = (prec, rec, f1)
    n = len(classes)
    return {
        "accuracy": sum(1 for p, t in pairs if p == t) / len(pairs),
        "macro_precision": sum(s[0] for s in stats.values()) / n,
        "macro_recall": sum(s[1] for s in stats.values()) / n,
        "macro_f1": sum(s[2] for s in stats.values()) / n,
    }

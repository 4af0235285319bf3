"""
Literal per-point reference for the fine-grained metrics.

Every counter is obtained by looping over points and every mean is written
out by hand, so it shares no code with the vectorized implementation.
"""

NO_INSTANCE = 0xFFFFFFFF


def _counts(gt, pred, ignore_id, c):
    tp = fp = fn = tn = 0
    for g, p in zip(gt, pred):
        if g == ignore_id:
            continue
        if g == c and p == c:
            tp += 1
        elif g != c and p == c:
            fp += 1
        elif g == c and p != c:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def _value(kind, tp, fp, fn, tn, null_mode, acc_mode):
    if null_mode == "gt-absent":
        if tp + fn == 0:
            return None
    elif tp + fp + fn == 0:
        return None
    if kind == "IoU":
        return tp / (tp + fp + fn)
    if acc_mode == "paper":
        return (tp + tn) / (tp + fp + fn + tn)
    if tp + fn == 0:
        return None
    return tp / (tp + fn)


def _mean(values):
    present = [v for v in values if v is not None]
    if not present:
        return None
    return sum(present) / len(present)


def _instances(gt, pred, inst, ignore_id, c):
    """{instance id: [tp, fn]} for category c, ascending by id"""
    found = {}
    for g, p, i in zip(gt, pred, inst):
        if g == ignore_id or g != c or i == NO_INSTANCE:
            continue
        entry = found.setdefault(i, [0, 0])
        if p == c:
            entry[0] += 1
        else:
            entry[1] += 1
    return dict(sorted(found.items()))


def oracle_metrics(clouds, num_categories, ignore_id=255, null_mode="gt-absent",
                   acc_mode="paper", instance_tn_mode="cloud-level"):
    """clouds: list of (cloud_id, gt, pred, inst or None); returns summaries, OA and
    per-level constituents under "levels" as {key: (per_category, per_cloud)}"""
    clouds = sorted(clouds, key=lambda cloud: cloud[0])
    C = num_categories
    cells = [
        [_counts(gt, pred, ignore_id, c) for c in range(C)]
        for _, gt, pred, _ in clouds
    ]

    result = {}
    levels = {}
    for kind in ("IoU", "Acc"):
        # dataset level
        dataset = []
        for c in range(C):
            summed = [sum(cells[p][c][k] for p in range(len(clouds))) for k in range(4)]
            dataset.append(_value(kind, *summed, null_mode, acc_mode))
        result[f"m{kind}^D"] = _mean(dataset)
        levels[f"m{kind}^D"] = (dataset, None)

        # cloud first
        per_cloud = [
            _mean([_value(kind, *cells[p][c], null_mode, acc_mode) for c in range(C)])
            for p in range(len(clouds))
        ]
        result[f"m{kind}^P"] = _mean(per_cloud)
        levels[f"m{kind}^P"] = (None, per_cloud)

        # category first
        per_category = [
            _mean([_value(kind, *cells[p][c], null_mode, acc_mode) for p in range(len(clouds))])
            for c in range(C)
        ]
        result[f"m{kind}^C"] = _mean(per_category)
        levels[f"m{kind}^C"] = (per_category, None)

        # instance level
        pooled = []
        for c in range(C):
            values = []
            for p, (_, gt, pred, inst) in enumerate(clouds):
                if inst is None:
                    continue
                instances = _instances(gt, pred, inst, ignore_id, c)
                if not instances:
                    continue
                _, fp_pc, _, tn_pc = cells[p][c]
                total = sum(tp + fn for tp, fn in instances.values())
                for tp, fn in instances.values():
                    size = tp + fn
                    share = size / total * fp_pc
                    if kind == "IoU":
                        values.append(tp / (tp + fn + share))
                    elif acc_mode == "recall":
                        values.append(tp / (tp + fn))
                    else:
                        tn = tn_pc if instance_tn_mode == "cloud-level" else size / total * tn_pc
                        values.append((tp + tn) / (tp + fn + tn + share))
            pooled.append(sum(values) / len(values) if values else None)
        result[f"m{kind}^I"] = _mean(pooled)
        levels[f"m{kind}^I"] = (pooled, None)

    valid = sum(1 for _, gt, _, _ in clouds for g in gt if g != ignore_id)
    correct = sum(
        1 for _, gt, pred, _ in clouds for g, p in zip(gt, pred) if g != ignore_id and g == p
    )
    result["OA"] = correct / valid if valid else None
    result["levels"] = levels
    return result

"""Cross-validation protocol, accuracy aggregation and significance tests."""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import f as f_dist
from scipy.stats import studentized_range

from . import nn


def median_mad(values):
    """Median and (unscaled) median absolute deviation."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("median_mad of an empty list")
    med = float(np.median(values))
    mad = float(np.median(np.abs(values - med)))
    return med, mad


def confusion_matrix(preds, labels, n_classes):
    """Counts matrix: entry (i, j) = true class i predicted as j."""
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must have equal length")
    if np.any(labels < 0) or np.any(labels >= n_classes) or \
            np.any(preds < 0) or np.any(preds >= n_classes):
        raise ValueError("label out of range")
    mat = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(mat, (labels, preds), 1)
    return mat


@dataclass
class AnovaTukeyResult:
    f_stat: float
    p_value: float
    reject: bool
    q_critical: float
    pairwise_q: dict          # (i, j) -> |q| statistic
    significant_pairs: set    # pairs with a significant difference
    top_group: int            # index of the best-mean group
    tied_top: list            # groups statistically tied with the best


def anova_tukey(groups, alpha=0.05):
    """One-way ANOVA followed by Tukey HSD pairwise comparisons.

    Returns the set of statistically tied top performers: when the ANOVA
    null hypothesis is not rejected every group is tied top; otherwise the
    best-mean group plus every group not significantly different from it.
    Critical values come from the studentized range distribution.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2 or any(len(g) < 2 for g in groups):
        raise ValueError("need at least 2 groups of at least 2 values")
    k = len(groups)
    sizes = np.array([len(g) for g in groups])
    means = np.array([g.mean() for g in groups])
    n_total = int(sizes.sum())
    grand = np.concatenate(groups).mean()

    ss_between = float(np.sum(sizes * (means - grand) ** 2))
    ss_within = float(sum(np.sum((g - m) ** 2)
                          for g, m in zip(groups, means)))
    df_between = k - 1
    df_within = n_total - k

    if ss_within == 0.0:
        # Degenerate zero-variance data: any between-group difference is
        # declared significant, identical groups cannot be rejected.
        if ss_between == 0.0:
            return AnovaTukeyResult(0.0, 1.0, False, np.inf, {}, set(),
                                    int(np.argmax(means)), list(range(k)))
        f_stat, p_value, reject = np.inf, 0.0, True
        ms_within = 0.0
    else:
        ms_within = ss_within / df_within
        f_stat = (ss_between / df_between) / ms_within
        p_value = float(f_dist.sf(f_stat, df_between, df_within))
        reject = p_value < alpha

    if not reject:
        return AnovaTukeyResult(f_stat, p_value, False, np.nan, {}, set(),
                                int(np.argmax(means)), list(range(k)))

    q_crit = float(studentized_range.ppf(1.0 - alpha, k, df_within))
    pairwise_q = {}
    significant = set()
    for i in range(k):
        for j in range(i + 1, k):
            # Tukey-Kramer standard error for unequal group sizes
            se = np.sqrt(ms_within / 2.0 * (1.0 / sizes[i] + 1.0 / sizes[j]))
            q = np.inf if se == 0.0 else abs(means[i] - means[j]) / se
            pairwise_q[(i, j)] = float(q)
            if q > q_crit:
                significant.add((i, j))

    top = int(np.argmax(means))
    tied = [g for g in range(k)
            if g == top or (min(g, top), max(g, top)) not in significant]
    return AnovaTukeyResult(f_stat, p_value, True, q_crit, pairwise_q,
                            significant, top, sorted(tied))


@dataclass
class EvalReport:
    """Cross-validation outcome in the shape of the benchmark tables."""

    accuracies: dict = field(default_factory=dict)  # (run, fold) -> accuracy
    median: float = 0.0
    mad: float = 0.0
    confusion: np.ndarray = None
    best_key: tuple = None       # (run, fold) of the best accuracy
    best_epoch: int = -1
    n_classes: int = 0
    epoch_curves: dict = field(default_factory=dict)

    def accuracy_list(self):
        return [self.accuracies[k] for k in sorted(self.accuracies)]

    def to_json(self):
        payload = {
            "accuracies": {f"run{r}_fold{f}": acc
                           for (r, f), acc in sorted(self.accuracies.items())},
            "median": self.median,
            "mad": self.mad,
            "best": {"run": self.best_key[0], "fold": self.best_key[1],
                     "epoch": self.best_epoch},
            "confusion_matrix": self.confusion.tolist(),
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def confusion_csv(self):
        lines = [",".join(str(v) for v in row) for row in self.confusion]
        return "\n".join(lines) + "\n"


def _train_one(features, labels, train_idx, test_idx, model_cfg, train_cfg,
               seed_seq, collect_curve=False):
    """Train on one fold split; track the best held-out epoch."""
    init_seed, shuffle_seed, dropout_seed = seed_seq.spawn(3)
    net = nn.Network(model_cfg, features.shape[1:],
                     seed=init_seed, init_std=train_cfg.init_std)
    opt = nn.Adam(net.params, lr=train_cfg.learning_rate,
                  beta1=train_cfg.beta1, beta2=train_cfg.beta2,
                  eps=train_cfg.eps)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    dropout_rng = np.random.default_rng(dropout_seed)

    x_test = features[test_idx]
    y_test = labels[test_idx]
    best_acc = -1.0
    best_preds = None
    best_epoch = -1
    curve = []
    for epoch in range(train_cfg.epochs):
        order = shuffle_rng.permutation(len(train_idx))
        idx = train_idx[order]
        for start in range(0, len(idx), train_cfg.batch_size):
            batch = idx[start:start + train_cfg.batch_size]
            _, grads = net.loss_and_grads(features[batch], labels[batch],
                                          rng=dropout_rng)
            opt.step(net.params, grads)
        preds = net.predict(x_test)
        acc = float(np.mean(preds == y_test))
        curve.append(acc)
        if acc > best_acc:
            best_acc, best_preds, best_epoch = acc, preds, epoch
    return best_acc, best_preds, best_epoch, (curve if collect_curve else None), net


def run_cv(features, labels, fold_ids, model_cfg, train_cfg, k_folds,
           n_runs=1, collect_curves=False, on_result=None):
    """K-fold cross validation repeated over several runs.

    For each run and each held-out fold, trains on the remaining folds
    with per-epoch shuffling, records the best-epoch test accuracy, and
    aggregates all (run, fold) accuracies by median/MAD.  The confusion
    matrix comes from the best epoch of the best (run, fold).
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    fold_ids = np.asarray(fold_ids, dtype=int)
    n_classes = model_cfg.n_classes
    folds = list(range(1, k_folds + 1))
    for f in folds:
        if not np.any(fold_ids == f):
            raise ValueError(f"fold {f} has no samples")

    report = EvalReport(n_classes=n_classes)
    best = (-1.0, None, None, None)
    root = np.random.SeedSequence(train_cfg.seed)
    run_seqs = root.spawn(n_runs)
    for run, run_seq in enumerate(run_seqs):
        fold_seqs = run_seq.spawn(k_folds)
        for fold, fold_seq in zip(folds, fold_seqs):
            test_idx = np.flatnonzero(fold_ids == fold)
            train_idx = np.flatnonzero(fold_ids != fold)
            acc, preds, epoch, curve, net = _train_one(
                features, labels, train_idx, test_idx, model_cfg, train_cfg,
                fold_seq, collect_curve=collect_curves)
            report.accuracies[(run, fold)] = acc
            if collect_curves:
                report.epoch_curves[(run, fold)] = curve
            if acc > best[0]:
                cm = confusion_matrix(preds, labels[test_idx], n_classes)
                best = (acc, (run, fold), epoch, cm)
            if on_result is not None:
                on_result(run, fold, acc, net)

    report.median, report.mad = median_mad(report.accuracy_list())
    report.best_key = best[1]
    report.best_epoch = best[2]
    report.confusion = best[3]
    return report

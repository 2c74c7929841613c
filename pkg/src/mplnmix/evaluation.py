"""External-validity metrics and parameter-recovery summaries."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import InvalidInputError


def _codes(labels):
    # Integer codes in first-appearance order.
    seen: dict = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, v in enumerate(labels):
        key = v.item() if hasattr(v, "item") else v
        if key not in seen:
            seen[key] = len(seen)
        out[i] = seen[key]
    return out, len(seen)


def confusion(labels_pred, labels_true) -> np.ndarray:
    """Cross-tabulation of two labelings, rows/columns in first-appearance order."""
    a = np.asarray(labels_pred).ravel()
    b = np.asarray(labels_true).ravel()
    if a.shape != b.shape:
        raise InvalidInputError("labelings must have equal length")
    ai, ka = _codes(a)
    bi, kb = _codes(b)
    table = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index via pair counting on the contingency table.

    1 iff the partitions coincide up to relabeling, 0 expected under random
    labeling, negative for worse-than-chance agreement. Both partitions
    single-class is defined as 1 (total agreement).
    """
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise InvalidInputError("labelings must have equal length")
    n = a.shape[0]
    if n < 2:
        raise InvalidInputError("ARI needs at least two observations")
    table = confusion(a, b)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(table.astype(float)).sum()
    sum_a = comb2(table.sum(axis=1).astype(float)).sum()
    sum_b = comb2(table.sum(axis=0).astype(float)).sum()
    total = comb2(float(n))
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0  # both partitions single-class
    return float((sum_ij - expected) / (max_index - expected))


def align_components(labels_pred, labels_true, G: int) -> np.ndarray:
    """Hungarian matching of predicted to true components on the confusion table.

    Returns perm with perm[g_true] = matched predicted index.
    """
    pred = np.asarray(labels_pred).ravel()
    true = np.asarray(labels_true).ravel()
    table = np.zeros((G, G))
    for p, t in zip(pred, true):
        if p < G and t < G:
            table[p, t] += 1
    rows, cols = linear_sum_assignment(-table)
    perm = np.empty(G, dtype=int)
    perm[cols] = rows
    return perm


def recovery_summary(fits, truth, true_labels_list) -> dict:
    """Mean and standard error of fitted parameters across replicate fits.

    Components of each fit are aligned to the truth by maximizing the trace
    of the matched confusion matrix. Fits whose G differs from the truth are
    excluded and listed under ``skipped``.
    """
    G, d = truth.G, truth.d
    mus, sigmas, pis, lams = [], [], [], []
    skipped = []
    for k, (fit, true_labels) in enumerate(zip(fits, true_labels_list)):
        if fit.params.G != G:
            skipped.append((k, f"fit has G={fit.params.G}, truth has G={G}"))
            continue
        perm = align_components(fit.labels, true_labels, G)
        mus.append(fit.params.mus[perm])
        sg = fit.params.sigmas[perm]
        sigmas.append(sg)
        pis.append(fit.params.weights[perm])
        lams.append([np.exp(np.mean(np.log(np.linalg.eigvalsh(s)))) for s in sg])
    if not mus:
        return {"count": 0, "skipped": skipped}

    def mean_se(stack):
        arr = np.stack(stack)
        se = arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0]) if arr.shape[0] > 1 \
            else np.zeros(arr.shape[1:])
        return arr.mean(axis=0), se

    mu_mean, mu_se = mean_se(mus)
    sigma_mean, sigma_se = mean_se(sigmas)
    pi_mean, pi_se = mean_se(pis)
    lam_mean, lam_se = mean_se(lams)
    return {
        "count": len(mus),
        "skipped": skipped,
        "mu_mean": mu_mean, "mu_se": mu_se,
        "sigma_mean": sigma_mean, "sigma_se": sigma_se,
        "pi_mean": pi_mean, "pi_se": pi_se,
        "lambda_mean": lam_mean, "lambda_se": lam_se,
    }

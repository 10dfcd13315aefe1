"""Regenerates exact_tiny.json by brute-force enumeration of (w, z)."""
import itertools
import json

import numpy as np
from scipy.special import gammaln, logsumexp

ATTEMPTS = np.array([[5, 0], [4, 1], [0, 5]], dtype=float)
MAKES = np.array([[4, 0], [1, 1], [0, 5]], dtype=float)
L = J = 2
ALPHA = BETA = GAMMA = 5.0


def label_prior(labels, clusters, conc):
    counts = np.bincount(labels, minlength=clusters)
    return gammaln(clusters * conc) - gammaln(clusters * conc + len(labels)) + np.sum(gammaln(conc + counts) - gammaln(conc))


def main():
    n, k = ATTEMPTS.shape
    configs, logs = [], []
    for w in itertools.product(range(L), repeat=n):
        for z in itertools.product(range(J), repeat=n):
            w_a, z_a = np.array(w), np.array(z)
            lp = label_prior(w_a, L, BETA) + label_prior(z_a, J, GAMMA)
            for c in range(L):
                s = ATTEMPTS[w_a == c].sum(axis=0)
                lp += gammaln(k * ALPHA) - gammaln(k * ALPHA + s.sum()) + np.sum(gammaln(ALPHA + s) - gammaln(ALPHA))
            for c in range(J):
                made = MAKES[z_a == c].sum(axis=0)
                missed = (ATTEMPTS - MAKES)[z_a == c].sum(axis=0)
                lp += np.sum(gammaln(1 + made) + gammaln(1 + missed) - gammaln(2 + made + missed))
            configs.append((w_a, z_a))
            logs.append(lp)
    logs = np.array(logs)
    probs = np.exp(logs - logsumexp(logs))
    sel = np.zeros((n, L)); acc = np.zeros((n, J))
    sel_co = np.zeros((n, n)); acc_co = np.zeros((n, n))
    p_mean = np.zeros((L, k)); q_mean = np.zeros((J, k))
    for (w, z), pr in zip(configs, probs):
        sel[np.arange(n), w] += pr
        acc[np.arange(n), z] += pr
        sel_co += pr * (w[:, None] == w[None, :])
        acc_co += pr * (z[:, None] == z[None, :])
        for c in range(L):
            s = ATTEMPTS[w == c].sum(axis=0)
            p_mean[c] += pr * (ALPHA + s) / (k * ALPHA + s.sum())
        for c in range(J):
            made = MAKES[z == c].sum(axis=0)
            tot = ATTEMPTS[z == c].sum(axis=0)
            q_mean[c] += pr * (1 + made) / (2 + tot)
    out = {
        "attempts": ATTEMPTS.astype(int).tolist(),
        "makes": MAKES.astype(int).tolist(),
        "clusters": [L, J],
        "concentrations": [ALPHA, BETA, GAMMA],
        "selection": sel.tolist(),
        "accuracy": acc.tolist(),
        "selection_coclustering": sel_co.tolist(),
        "accuracy_coclustering": acc_co.tolist(),
        "p_mean": p_mean.tolist(),
        "q_mean": q_mean.tolist(),
    }
    with open("exact_tiny.json", "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()

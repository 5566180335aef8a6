"""Slow, independent reference implementations used only by the tests.

None of these import from the package under test: each one recomputes a
quantity directly from its definition (plain loops or quadrature) so
that agreement with the fast implementation is meaningful.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize, stats


def pava_minmax(y, w):
    """Isotonic least-squares fit via the min-max formula over block means.

    ``fit_i = max_{a <= i} min_{b >= i} mean_w(y[a..b])``; O(n^3) with exactly
    rounded sums.
    """
    y = [float(v) for v in y]
    w = [float(v) for v in w]
    n = len(y)

    def block(a, b):
        return math.fsum(w[k] * y[k] for k in range(a, b + 1)) / math.fsum(w[a:b + 1])

    return np.array([max(min(block(a, b) for b in range(i, n)) for a in range(i + 1))
                     for i in range(n)])


def isotonic_sse_bruteforce(y, grid):
    """Smallest SSE over non-decreasing sequences drawn from ``grid`` (tiny inputs only)."""
    best = (math.inf, None)

    def rec(i, lo, acc, path):
        nonlocal best
        if acc >= best[0]:
            return
        if i == len(y):
            best = (acc, list(path))
            return
        for g in grid:
            if g >= lo:
                path.append(g)
                rec(i + 1, g, acc + (y[i] - g) ** 2, path)
                path.pop()

    rec(0, -math.inf, 0.0, [])
    return best


def crps_quadrature(mu, sigma, y):
    """CRPS as the integral of ``(F(x) - H(x - y))^2`` over the real line."""
    f = stats.norm(mu, sigma).cdf
    lo, hi = mu - 12 * sigma, mu + 12 * sigma
    left, _ = integrate.quad(lambda x: f(x) ** 2, min(lo, y) - 1.0, y, epsabs=1e-13, epsrel=1e-12, limit=200)
    right, _ = integrate.quad(lambda x: (1 - f(x)) ** 2, y, max(hi, y) + 1.0, epsabs=1e-13, epsrel=1e-12,
                              limit=200)
    return left + right


def ece_loop(probs, labels, bins):
    """Equal-width top-label ECE written as an explicit loop over records."""
    sums = [[0, 0.0, 0.0] for _ in range(bins)]
    for p, y in zip(probs, labels):
        c = max(p)
        # count the interior edges at or below c; an edge value belongs to the upper bin
        b = sum(1 for k in range(1, bins) if k / bins <= c)
        sums[b][0] += 1
        sums[b][1] += c
        sums[b][2] += float(int(np.argmax(p)) == y)
    n = len(labels)
    return sum(cnt / n * abs(acc / cnt - conf / cnt) for cnt, conf, acc in sums if cnt)


def smece_direct(f, y, sigma, grid=2048, images=8):
    """Reflected-Gaussian smoothed residual integrated on a grid, by direct summation."""
    f = np.asarray(f, dtype=float)
    r = np.asarray(y, dtype=float) - f
    t = np.linspace(0.0, 1.0, grid)
    k = np.zeros((grid, f.size))
    for j in range(-images, images + 1):
        for centre in (f + 2 * j, -f + 2 * j):
            k += stats.norm.pdf(t[:, None], loc=centre[None, :], scale=sigma)
    h = (k * r).mean(axis=1)
    return float(np.trapezoid(np.abs(h), t))


def smece_fixed_point(f, y, tol=1e-4):
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if smece_direct(f, y, mid) > mid:
            lo = mid
        else:
            hi = mid
    return smece_direct(f, y, 0.5 * (lo + hi))


def venn_abers_naive(cal_scores, cal_labels, s):
    """(p0, p1) by refitting scipy's isotonic regression on each augmented set."""
    out = []
    for label in (0.0, 1.0):
        x = np.append(np.asarray(cal_scores, dtype=float), s)
        y = np.append(np.asarray(cal_labels, dtype=float), label)
        ux, inv = np.unique(x, return_inverse=True)
        w = np.bincount(inv).astype(float)
        ym = np.bincount(inv, y) / w
        fit = optimize.isotonic_regression(ym, weights=w).x
        out.append(float(fit[np.searchsorted(ux, s)]))
    return tuple(out)


def auc_pairs(scores, labels):
    """AUC by counting positive/negative pairs (ties count one half)."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def temperature_grid(logits, labels, lo=-4.0, hi=4.0, n=16001):
    """Temperature minimising NLL over a fine grid of log T."""
    z = np.asarray(logits, dtype=float)
    idx = np.arange(len(labels))
    best = (math.inf, None)
    for lt in np.linspace(lo, hi, n):
        zt = z / math.exp(lt)
        m = zt.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(zt - m).sum(axis=1))
        val = float(np.mean(lse - zt[idx, labels]))
        if val < best[0]:
            best = (val, math.exp(lt))
    return best[1]


def conformal_quantile(scores, level):
    """Order statistic ``ceil((n + 1) * level)`` of the scores, by sorting a Python list."""
    s = sorted(float(v) for v in scores)
    k = math.ceil((len(s) + 1) * level - 1e-9)
    return s[k - 1]

"""Tightness analysis of lifted solutions.

The rank-1 quality of a lifted triple (pr, m, gamma) is scored by the log10
ratio of the eigenvalues of [[pr, m], [m, gamma]].  Raw SI triples mix units
(Pa vs kg/s), which skews the eigenvalues, so :func:`aggregate` first
rescales each triple by alpha = sqrt(gamma/pr), which preserves the matrix
determinant sign and cone membership while balancing the diagonal; the
resulting ratio is a unit-free measure of the relative cone slack
(approximately log10(4/slack)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .transient import TransientSolution

CAP = 16.0  # ~ double precision decimal digits


def eig2x2(pr: float, m: float, gamma: float) -> tuple:
    """Eigenvalues of [[pr, m], [m, gamma]], largest first, closed form."""
    half_tr = 0.5 * (pr + gamma)
    disc = 0.5 * math.hypot(pr - gamma, 2.0 * m)
    return (half_tr + disc, half_tr - disc)


def tightness_ratio(lam1: float, lam2: float, cap: float = CAP) -> float:
    """log10(lam1/lam2) capped; tiny negative lam2 from round-off is clipped.

    A zero (or numerically rank-deficient) matrix counts as fully tight.
    """
    if lam1 < lam2:
        raise ValueError("lam1 must be the largest eigenvalue")
    if lam2 < -1e-12:
        lam2 = 0.0  # outside round-off: not PSD, but rank-deficient for scoring
    lam2 = max(lam2, 0.0)
    if lam1 <= 0.0:
        return cap
    if lam2 <= lam1 * 10.0 ** (-cap):
        return cap
    return min(math.log10(lam1 / lam2), cap)


def triple_ratio(pr: float, m: float, gamma: float, cap: float = CAP) -> float:
    """Unit-free tightness of one lifted triple via diagonal balancing."""
    if pr <= 0.0 or gamma < 0.0:
        return 0.0
    g = math.sqrt(pr * gamma)
    lam1, lam2 = eig2x2(g, m, g)
    return tightness_ratio(lam1, lam2, cap)


@dataclass
class TightnessReport:
    ratio: dict  # pipe id -> np.ndarray (n_seg-1, T)
    pipe_mean: dict  # pipe id -> float
    network_mean: float
    capped_count: int
    n_entries: int
    cap: float = CAP
    meta: dict = field(default_factory=dict)


def aggregate(sol: TransientSolution, cap: float = CAP) -> TightnessReport:
    """Score every lifted (p, s, t) instance and average per pipe and
    network-wide (compensated sums, order-independent)."""
    if sol.gamma is None:
        raise ValueError("solution carries no lifted variables")
    ratio, pipe_mean = {}, {}
    all_vals = []
    capped = 0
    for pid, gam in sol.gamma.items():
        n1, T = gam.shape
        out = np.empty((n1, T))
        for s in range(n1):
            for t in range(T):
                r = triple_ratio(float(sol.pr[pid][s, t]),
                                 float(sol.m[pid][s, t]),
                                 float(gam[s, t]), cap)
                out[s, t] = r
                if r >= cap:
                    capped += 1
        ratio[pid] = out
        vals = out.ravel().tolist()
        pipe_mean[pid] = math.fsum(vals) / len(vals) if vals else cap
        all_vals.extend(vals)
    network = math.fsum(all_vals) / len(all_vals) if all_vals else cap
    return TightnessReport(ratio=ratio, pipe_mean=pipe_mean,
                           network_mean=network, capped_count=capped,
                           n_entries=len(all_vals), cap=cap)


def surface_csv(report: TightnessReport, dt_s: float,
                start_minute: float = 0.0) -> str:
    """Per-(pipe, segment, minute) ratio surface for plotting."""
    lines = ["pipe,segment,minute,ratio"]
    for pid in sorted(report.ratio):
        arr = report.ratio[pid]
        for s in range(arr.shape[0]):
            for t in range(arr.shape[1]):
                minute = start_minute + t * dt_s / 60.0
                lines.append(f"{pid},{s + 1},{minute:.2f},{arr[s, t]:.4f}")
    return "\n".join(lines) + "\n"

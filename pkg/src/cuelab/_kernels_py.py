"""Pure-Python/numpy implementations of the hot kernels.

These are the reference semantics; ``_kernels.pyx`` must agree with them
bit for bit. Class masses are integer counts scaled by class weights, so
tie order inside a sort never changes a cumulative sum.
"""
from __future__ import annotations

import math

import numpy as np


def best_split(X, y, mult, idx, features, w0, w1, min_leaf):
    """Lowest weighted-Gini split of the node holding rows ``idx``.

    Every row in ``idx`` must have positive multiplicity. Returns
    ``(feature, threshold, score)``; feature is -1 when no split
    satisfies ``min_leaf``. Score is the sum over children of
    ``2*a*b/(a+b)`` with ``a``, ``b`` the weighted class masses.
    """
    m = idx.shape[0]
    best_f, best_t, best_s = -1, 0.0, math.inf
    if m < 2:
        return best_f, best_t, best_s
    mm = mult[idx]
    c1 = mm * y[idx]
    c0 = mm - c1
    tot0 = int(c0.sum())
    tot1 = int(c1.sum())
    pos = np.arange(1, m)
    room = (pos >= min_leaf) & (m - pos >= min_leaf)
    for f in features:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        valid = room & (vs[:-1] < vs[1:])
        if not valid.any():
            continue
        n0l = np.cumsum(c0[order])[:-1]
        n1l = np.cumsum(c1[order])[:-1]
        al = w0 * n0l.astype(np.float64)
        bl = w1 * n1l.astype(np.float64)
        ar = w0 * (tot0 - n0l).astype(np.float64)
        br = w1 * (tot1 - n1l).astype(np.float64)
        score = 2.0 * al * bl / (al + bl) + 2.0 * ar * br / (ar + br)
        score = np.where(valid, score, math.inf)
        i = int(np.argmin(score))
        s = float(score[i])
        if s < best_s:
            t = (float(vs[i]) + float(vs[i + 1])) * 0.5
            if t >= vs[i + 1]:
                t = float(vs[i])
            best_f, best_t, best_s = int(f), t, s
    return best_f, best_t, best_s


def cue_transition(armed, consec, has_last, last_cue, t, p,
                   theta_on, theta_off, refractory, min_consec):
    """One step of the cue state machine.

    Returns ``(fire, armed, consec, has_last, last_cue)``.
    """
    if p < theta_off:
        armed = True
        consec = 0
    elif p >= theta_on:
        consec += 1
    else:
        consec = 0
    fire = (armed and consec >= min_consec
            and (not has_last or t - last_cue >= refractory))
    if fire:
        armed = False
        consec = 0
        has_last = True
        last_cue = t
    return fire, armed, consec, has_last, last_cue


def scan_cues(t, p, theta_on, theta_off, refractory, min_consec, state):
    """Run the state machine over one stream.

    ``state`` is ``(armed, consec, has_last, last_cue, has_t, last_t)``.
    Returns ``(cue_indices, state, bad_index)``; ``bad_index`` is the first
    sample whose time does not increase (scanning stops there) or -1.
    """
    armed, consec, has_last, last_cue, has_t, last_t = state
    cues = []
    bad = -1
    for i in range(len(t)):
        ti = int(t[i])
        if has_t and ti <= last_t:
            bad = i
            break
        has_t, last_t = True, ti
        fire, armed, consec, has_last, last_cue = cue_transition(
            armed, consec, has_last, last_cue, ti, float(p[i]),
            theta_on, theta_off, refractory, min_consec)
        if fire:
            cues.append(i)
    state = (armed, consec, has_last, last_cue, has_t, last_t)
    return np.asarray(cues, dtype=np.int64), state, bad


def scan_cue_batch(t, p, offsets, theta_on, theta_off, refractory, min_consec):
    """Fresh state machine per stream; stream ``s`` is ``offsets[s]:offsets[s+1]``.

    Config arrays are per stream. Returns a uint8 mask of cue samples.
    """
    out = np.zeros(len(t), dtype=np.uint8)
    for s in range(len(offsets) - 1):
        a, b = int(offsets[s]), int(offsets[s + 1])
        armed, consec, has_last, last_cue = True, 0, False, 0
        on, off = float(theta_on[s]), float(theta_off[s])
        refr, k = int(refractory[s]), int(min_consec[s])
        for i in range(a, b):
            fire, armed, consec, has_last, last_cue = cue_transition(
                armed, consec, has_last, last_cue, int(t[i]), float(p[i]),
                on, off, refr, k)
            if fire:
                out[i] = 1
    return out

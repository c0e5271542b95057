"""Birth/death/resize Metropolis-Hastings kernels.

Both kernels consume the same pre-drawn proposal stream, so the compiled
kernel can be checked step for step against the pure Python one.
Counters layout: ``[proposed_birth, proposed_death, proposed_resize,
accepted_birth, accepted_death, accepted_resize]``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _radial(r, edges, values):
    for i in range(edges.shape[0]):
        if r <= edges[i]:
            return values[i]
    return 0.0


@njit(cache=True)
def _field(x, pos, marks, n, skip, edges, values):
    d = pos.shape[1]
    rmax = edges[edges.shape[0] - 1]
    acc = 0.0
    for j in range(n):
        if j == skip:
            continue
        r2 = 0.0
        for a in range(d):
            t = x[a] - pos[j, a]
            r2 += t * t
        r = math.sqrt(r2)
        if r <= rmax:
            acc += _radial(r, edges, values) * marks[j]
    return acc


@njit(cache=True)
def run_radial(pos, marks, n, energy, u_move, xs, ss, u_pick, u_acc, start, stop,
               p_birth, p_bd, log_nu, log_d_over_b, bpos, bmarks, nb, edges, values,
               diag, counters):
    """Advance the chain over proposals ``start..stop-1``.

    Returns ``(n, energy, t)`` where ``t < stop`` only when the atom arrays
    are full and must be grown before continuing at step ``t``.
    """
    cap = marks.shape[0]
    for t in range(start, stop):
        u = u_move[t]
        if u < p_birth:
            counters[0] += 1
            if n == cap:
                counters[0] -= 1
                return n, energy, t
            x = xs[t]
            s = ss[t]
            dh = diag * s * s + 2.0 * s * (_field(x, pos, marks, n, -1, edges, values)
                                          + _field(x, bpos, bmarks, nb, -1, edges, values))
            log_ratio = log_nu - math.log(n + 1.0) + log_d_over_b - dh
            if math.log(u_acc[t]) < log_ratio:
                for a in range(pos.shape[1]):
                    pos[n, a] = x[a]
                marks[n] = s
                n += 1
                energy += dh
                counters[3] += 1
        elif u < p_bd:
            counters[1] += 1
            if n == 0:
                continue
            i = min(int(u_pick[t] * n), n - 1)
            si = marks[i]
            local = (_field(pos[i], pos, marks, n, i, edges, values)
                     + _field(pos[i], bpos, bmarks, nb, -1, edges, values))
            dh = -(diag * si * si + 2.0 * si * local)
            log_ratio = math.log(n) - log_nu - log_d_over_b - dh
            if math.log(u_acc[t]) < log_ratio:
                n -= 1
                for a in range(pos.shape[1]):
                    pos[i, a] = pos[n, a]
                marks[i] = marks[n]
                energy += dh
                counters[4] += 1
        else:
            counters[2] += 1
            if n == 0:
                continue
            i = min(int(u_pick[t] * n), n - 1)
            si = marks[i]
            s = ss[t]
            local = (_field(pos[i], pos, marks, n, i, edges, values)
                     + _field(pos[i], bpos, bmarks, nb, -1, edges, values))
            dh = diag * (s * s - si * si) + 2.0 * (s - si) * local
            if math.log(u_acc[t]) < -dh:
                marks[i] = s
                energy += dh
                counters[5] += 1
    return n, energy, stop


def run_python(pos, marks, n, energy, u_move, xs, ss, u_pick, u_acc, start, stop,
               p_birth, p_bd, log_nu, log_d_over_b, bpos, bmarks, nb, spec, counters):
    """Reference kernel for arbitrary potentials; same decisions as :func:`run_radial`."""
    cap = marks.shape[0]

    def field(x, P, S, m, skip):
        if m == 0:
            return 0.0
        row = spec.matrix(x.reshape(1, -1), P[:m])[0] * S[:m]
        if skip >= 0:
            row[skip] = 0.0
        return float(row.sum())

    def diag_at(x):
        return float(spec.diagonal(x.reshape(1, -1))[0])

    for t in range(start, stop):
        u = u_move[t]
        if u < p_birth:
            counters[0] += 1
            if n == cap:
                counters[0] -= 1
                return n, energy, t
            x, s = xs[t], ss[t]
            dh = diag_at(x) * s * s + 2.0 * s * (field(x, pos, marks, n, -1)
                                                 + field(x, bpos, bmarks, nb, -1))
            if math.log(u_acc[t]) < log_nu - math.log(n + 1.0) + log_d_over_b - dh:
                pos[n] = x
                marks[n] = s
                n += 1
                energy += dh
                counters[3] += 1
        elif u < p_bd:
            counters[1] += 1
            if n == 0:
                continue
            i = min(int(u_pick[t] * n), n - 1)
            si = marks[i]
            local = field(pos[i], pos, marks, n, i) + field(pos[i], bpos, bmarks, nb, -1)
            dh = -(diag_at(pos[i]) * si * si + 2.0 * si * local)
            if math.log(u_acc[t]) < math.log(n) - log_nu - log_d_over_b - dh:
                n -= 1
                pos[i] = pos[n]
                marks[i] = marks[n]
                energy += dh
                counters[4] += 1
        else:
            counters[2] += 1
            if n == 0:
                continue
            i = min(int(u_pick[t] * n), n - 1)
            si, s = marks[i], ss[t]
            local = field(pos[i], pos, marks, n, i) + field(pos[i], bpos, bmarks, nb, -1)
            dh = diag_at(pos[i]) * (s * s - si * si) + 2.0 * (s - si) * local
            if math.log(u_acc[t]) < -dh:
                marks[i] = s
                energy += dh
                counters[5] += 1
    return n, energy, stop


@njit(cache=True)
def batch_energy_radial(pos, marks, offsets, bpos, bmarks, edges, values, diag):
    """Relative energy of every sample of a flat batch (one shared boundary)."""
    n_samples = offsets.shape[0] - 1
    out = np.zeros(n_samples)
    nb = bmarks.shape[0]
    for k in range(n_samples):
        lo = offsets[k]
        hi = offsets[k + 1]
        e = 0.0
        for i in range(lo, hi):
            si = marks[i]
            e += diag * si * si
            acc = 0.0
            for j in range(i + 1, hi):
                r2 = 0.0
                for a in range(pos.shape[1]):
                    t = pos[i, a] - pos[j, a]
                    r2 += t * t
                acc += _radial(math.sqrt(r2), edges, values) * marks[j]
            e += 2.0 * si * acc
            if nb:
                e += 2.0 * si * _field(pos[i], bpos, bmarks, nb, -1, edges, values)
        out[k] = e
    return out

"""Compiled inner loops for maximal functions and the smoothness modulus."""
from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def _crossing(la, ya, lb, yb, r, sigma):
    # Position x > yb where the weighted log-profiles of candidates a (older,
    # larger) and b (newer, smaller) meet.
    e = math.exp((la - lb) / sigma)
    return (e * (1.0 + r * (-yb)) - (1.0 + r * (-ya))) / (r * (1.0 - e))


@numba.njit(cache=True, nogil=True)
def envelope_pass(logv, pos, r, sigma, out):
    """One-sided upper envelope ``max_{j<=i} logv[j] - sigma log(1 + r (pos[i]-pos[j]))``.

    A stack keeps the candidates that can still win at some later position;
    their values strictly decrease from the bottom to the top of the stack.
    Runs in amortized linear time.
    """
    n = logv.shape[0]
    stack = np.empty(n, np.int64)
    top = -1
    for i in range(n):
        x = pos[i]
        while top >= 1:
            a = stack[top - 1]
            b = stack[top]
            fa = logv[a] - sigma * math.log(1.0 + r * (x - pos[a]))
            fb = logv[b] - sigma * math.log(1.0 + r * (x - pos[b]))
            if fa >= fb:
                top -= 1
            else:
                break
        if logv[i] > -np.inf:
            while top >= 0:
                b = stack[top]
                if logv[i] >= logv[b]:
                    top -= 1
                    continue
                fb = logv[b] - sigma * math.log(1.0 + r * (x - pos[b]))
                if fb >= logv[i]:
                    break
                if top >= 1:
                    a = stack[top - 1]
                    cab = _crossing(logv[a], pos[a], logv[b], pos[b], r, sigma)
                    cbi = _crossing(logv[b], pos[b], logv[i], pos[i], r, sigma)
                    if cbi >= cab:
                        top -= 1
                        continue
                break
            if top < 0:
                top += 1
                stack[top] = i
            else:
                b = stack[top]
                if logv[b] - sigma * math.log(1.0 + r * (x - pos[b])) < logv[i]:
                    top += 1
                    stack[top] = i
        if top >= 0:
            b = stack[top]
            out[i] = logv[b] - sigma * math.log(1.0 + r * (x - pos[b]))
        else:
            out[i] = -np.inf


def peetre_1d(values: np.ndarray, r: float, sigma: float) -> np.ndarray:
    """Exact ``max_y |g(x+y)| / (1 + r|y|)^sigma`` over all grid offsets (periodic distance)."""
    a = np.abs(np.asarray(values)).astype(np.float64)
    n = a.size
    if sigma == 0.0:
        return np.full(n, a.max())
    with np.errstate(divide="ignore"):
        lv = np.log(np.concatenate([a, a, a]))
    pos = (np.arange(3 * n, dtype=np.float64) - n) / n
    fwd = np.empty(3 * n)
    envelope_pass(lv, pos, float(r), float(sigma), fwd)
    bwd = np.empty(3 * n)
    envelope_pass(np.ascontiguousarray(lv[::-1]), np.ascontiguousarray(-pos[::-1]),
                  float(r), float(sigma), bwd)
    best = np.maximum(fwd[n:2 * n], bwd[::-1][n:2 * n])
    return np.exp(best)


@numba.njit(cache=True, nogil=True)
def peetre_2d_window(a, r, sigma, radius):
    """Brute-force Peetre maximal on a 2-D periodic grid over offsets within ``radius`` cells."""
    n = a.shape[0]
    out = np.zeros_like(a)
    h = 1.0 / n
    rad2 = radius * radius
    for i in range(n):
        for j in range(n):
            best = 0.0
            for di in range(-radius, radius + 1):
                for dj in range(-radius, radius + 1):
                    if di * di + dj * dj > rad2:
                        continue
                    v = a[(i + di) % n, (j + dj) % n]
                    if v <= best:
                        continue
                    dist = math.sqrt(di * di + dj * dj) * h
                    w = v / (1.0 + r * dist) ** sigma
                    if w > best:
                        best = w
            out[i, j] = best
    return out


@numba.njit(cache=True, nogil=True)
def modulus_1d(f, xs, shifts, weights, coeffs, q):
    """Weighted integral of the running max of ``|Delta_h^m f|^q`` over growing ``|h|``.

    ``shifts[s]`` is the cell offset of step ``s`` (both signs are taken) and
    ``weights[s]`` is the exact integral of ``t**(-1-sigma q)`` over the range of
    ``t`` during which the running max includes offsets up to ``shifts[s]``.
    """
    n = f.shape[0]
    m = coeffs.shape[0] - 1
    nx = xs.shape[0]
    cur = np.zeros(nx)
    acc = np.zeros(nx)
    for s in range(shifts.shape[0]):
        sh = shifts[s]
        w = weights[s]
        for t in range(nx):
            x = xs[t]
            vp = f[x] * coeffs[0]
            vm = f[x] * coeffs[0]
            for nu in range(1, m + 1):
                vp += coeffs[nu] * f[(x + nu * sh) % n]
                vm += coeffs[nu] * f[(x - nu * sh) % n]
            a = abs(vp)
            b = abs(vm)
            if b > a:
                a = b
            a = a ** q
            if a > cur[t]:
                cur[t] = a
            acc[t] += cur[t] * w
    return acc


@numba.njit(cache=True, nogil=True)
def modulus_2d(f, xs, ys, off_i, off_j, weights, coeffs, q):
    """2-D analogue of :func:`modulus_1d`; offsets are pre-sorted by length."""
    n = f.shape[0]
    m = coeffs.shape[0] - 1
    npts = xs.shape[0]
    cur = np.zeros(npts)
    acc = np.zeros(npts)
    for s in range(off_i.shape[0]):
        di = off_i[s]
        dj = off_j[s]
        w = weights[s]
        for t in range(npts):
            x = xs[t]
            y = ys[t]
            v = f[x, y] * coeffs[0]
            for nu in range(1, m + 1):
                v += coeffs[nu] * f[(x + nu * di) % n, (y + nu * dj) % n]
            a = abs(v) ** q
            if a > cur[t]:
                cur[t] = a
            acc[t] += cur[t] * w
    return acc

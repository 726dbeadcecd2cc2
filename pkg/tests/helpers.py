"""Shared oracles and generators for the test suite."""

from __future__ import annotations

import itertools

import numpy as np
from numba import njit

from opsphere import _kernels
from opsphere.engine import step
from opsphere.geometry import Configuration
from opsphere.update_rules import UpdateSpec


def random_unit(d, rng, size=None):
    shape = (d,) if size is None else (size, d)
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def orthogonal_unit(u, rng):
    """Random unit vectors orthogonal to the rows of u (batched)."""
    w = rng.standard_normal(u.shape)
    for _ in range(2):
        w -= np.sum(w * u, axis=-1, keepdims=True) * u
        w /= np.linalg.norm(w, axis=-1, keepdims=True)
    return w


def with_corr(u, a, rng):
    """Unit vectors v with <u, v> = a, rotated randomly around u."""
    a = np.asarray(a, dtype=float)[..., None]
    w = orthogonal_unit(u, rng)
    v = a * u + np.sqrt(np.clip(1.0 - a * a, 0.0, None)) * w
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_spec(rng, stable_only=False):
    families = ["linear", "asym-linear", "slerp"] if stable_only else ["linear", "asym-linear", "sign", "asym-sign", "slerp"]
    fam = families[rng.integers(len(families))]
    if fam == "linear":
        return UpdateSpec.linear(rng.uniform(0.01, 2.0))
    if fam == "asym-linear":
        return UpdateSpec.asym_linear(rng.uniform(0.01, 2.0), rng.uniform(0.01, 2.0))
    if fam == "sign":
        return UpdateSpec.sign(rng.uniform(0.01, 0.9))
    if fam == "asym-sign":
        return UpdateSpec.asym_sign(rng.uniform(0.01, 0.9), rng.uniform(0.01, 0.9), rng.uniform(-0.9, 0.9))
    return UpdateSpec.slerp(rng.uniform(0.01, 0.99))


def brute_force_convex(corr, c=0.0):
    """Exhaustive search over all 2^n sign vectors."""
    n = corr.shape[0]
    off = ~np.eye(n, dtype=bool)
    signs = np.array(list(itertools.product([-1.0, 1.0], repeat=n)))
    outer = signs[:, :, None] * signs[:, None, :]
    margins = np.where(off, outer * corr, np.inf).reshape(len(signs), -1).min(axis=1)
    return bool(np.any(margins > c))


def brute_force_separable(corr, tol):
    """Exhaustive search over all 2-partitions (agent n-1 fixed on the complement side)."""
    n = corr.shape[0]
    linked = (np.abs(corr) > tol).astype(np.int64)
    masks = np.arange(1, 2 ** (n - 1))
    inside = ((masks[:, None] >> np.arange(n)) & 1).astype(np.int64)
    crossing = ((inside @ linked) * (1 - inside)).sum(axis=1)
    return bool(np.any(crossing == 0))


@njit(cache=True)
def convex_run_violations(U, C, signs, pi, pj, code, eta, ep, em, thr, tol):
    """Replay pairs; count steps where the sign certificate fails or 1 - min|A| rises by more than tol."""
    n = U.shape[0]
    buf = np.empty(U.shape[1])
    cert_bad = 0
    pot_bad = 0
    prev = 1.0
    for a in range(n):
        for b in range(a + 1, n):
            prev = min(prev, abs(C[a, b]))
    for s in range(pi.shape[0]):
        if not _kernels.step_inplace(U, C, pi[s], pj[s], code, eta, ep, em, thr, buf):
            return -1, -1
        mn = 1.0
        for a in range(n):
            for b in range(a + 1, n):
                x = C[a, b]
                if signs[a] * signs[b] * x <= 0.0:
                    cert_bad += 1
                mn = min(mn, abs(x))
        if (1.0 - mn) > (1.0 - prev) + tol:
            pot_bad += 1
        prev = mn
    return cert_bad, pot_bad


def _signs(rng, n):
    return rng.choice([-1.0, 1.0], size=n)


def _frac(rng, n):
    # uniform on [0, 1] with extra mass exactly at the hypothesis boundary
    x = rng.random(n)
    x[rng.random(n) < 0.2] = 1.0
    return x


def lemma_violations(kind, count, rng, chunk=200_000):
    """Count counterexamples to one transitivity inequality on ``count`` constructed instances."""
    bad = 0
    done = 0
    while done < count:
        m = min(chunk, count - done)
        d = 2 if kind == "inactivity-planar" else int(rng.integers(2, 6))
        ui = random_unit(d, rng, m)
        if kind == "closeness":
            eps = rng.uniform(0, 0.25, m)
            s1, s2 = _signs(rng, m), _signs(rng, m)
            uj = with_corr(ui, s1 * (1 - eps * _frac(rng, m)), rng)
            uk = with_corr(ui, s2 * (1 - eps * _frac(rng, m)), rng)
            a = np.sum(uj * uk, axis=1)
            bad += int(np.count_nonzero((np.abs(a) < 1 - 4 * eps - 1e-12) | (np.sign(a) != s1 * s2)))
        elif kind == "inactivity":
            eps = 10 ** rng.uniform(-10, np.log10(1 / 64), m)
            uj = with_corr(ui, _signs(rng, m) * np.sqrt(eps) * _frac(rng, m), rng)
            uk = with_corr(ui, _signs(rng, m) * (1 - eps * _frac(rng, m)), rng)
            a = np.abs(np.sum(uj * uk, axis=1))
            bad += int(np.count_nonzero(a > 8 * np.sqrt(eps) + 1e-12))
        elif kind == "inactivity-planar":
            eps = rng.uniform(0, 0.25, m)
            uj = with_corr(ui, _signs(rng, m) * eps * _frac(rng, m), rng)
            uk = with_corr(ui, _signs(rng, m) * eps * _frac(rng, m), rng)
            a = np.abs(np.sum(uj * uk, axis=1))
            bad += int(np.count_nonzero(a < 1 - 2 * eps**2 - 1e-12))
        elif kind == "four-opinion":
            eps = 10 ** rng.uniform(-10, np.log10(1 / 4096), m)
            uj = with_corr(ui, _signs(rng, m) * np.sqrt(eps) * _frac(rng, m), rng)
            uk = with_corr(ui, _signs(rng, m) * (1 - eps * _frac(rng, m)), rng)
            ul = with_corr(uj, _signs(rng, m) * (1 - eps * _frac(rng, m)), rng)
            a = np.abs(np.sum(uk * ul, axis=1))
            bad += int(np.count_nonzero(a >= 64 * np.sqrt(eps)))
        elif kind == "activity":
            e1 = rng.uniform(0, 1, m)
            e2 = 10 ** rng.uniform(-10, 0, m)
            r1 = np.sqrt(e1)
            uj = with_corr(ui, _signs(rng, m) * (r1 + (1 - r1) * (1 - _frac(rng, m))), rng)
            uk = with_corr(ui, _signs(rng, m) * (1 - e2 * _frac(rng, m)), rng)
            a = np.abs(np.sum(uj * uk, axis=1))
            bad += int(np.count_nonzero(a < r1 - 3 * np.sqrt(e2) - 1e-12))
        else:
            raise ValueError(kind)
        done += m
    return bad


LEMMA_KINDS = ("closeness", "inactivity", "inactivity-planar", "four-opinion", "activity")


def mixed_convexity_config(rng, n):
    """Random configuration that is strictly convex about half the time."""
    d = int(rng.integers(2, 5))
    kind = rng.integers(4)
    if kind == 0:
        u = random_unit(d, rng, n)
    else:
        center = random_unit(d, rng)
        spread = [0.3, 0.8, 1.2][kind - 1]
        u = center + spread * rng.standard_normal((n, d)) / np.sqrt(d)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    u *= _signs(rng, n)[:, None]
    return u


def sparse_support_config(rng, n, d=6):
    """Opinions on random coordinate supports, so many correlations are exactly zero."""
    u = np.zeros((n, d))
    for k in range(n):
        size = int(rng.integers(1, 3))
        idx = rng.choice(d, size, replace=False)
        u[k, idx] = rng.standard_normal(size)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u


def inactive_by_brute_force(corr, eps):
    a = np.abs(corr[np.triu_indices(corr.shape[0], 1)])
    return bool(np.all((a <= eps) | (a >= 1 - eps)))


def count_close_components(corr, eps):
    """Union-find over |A| >= 1 - eps, written out independently of the library."""
    n = corr.shape[0]
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in range(n):
        for b in range(a + 1, n):
            if abs(corr[a, b]) >= 1 - eps:
                parent[find(a)] = find(b)
    return len({find(x) for x in range(n)})


def _planar(angles, rng):
    u = np.column_stack([np.cos(angles), np.sin(angles)])
    return u * _signs(rng, len(angles))[:, None]


def quadrant_input(rng):
    """Planar, 1/256-inactive, active, non-separable configuration (all three cases)."""
    n = int(rng.integers(3, 11))
    base = rng.uniform(0, 2 * np.pi)
    kind = rng.random()
    if kind < 0.1:
        # every opinion within a tight cluster
        return _planar(base + rng.uniform(-0.04, 0.04, n), rng)
    tilt = rng.uniform(1e-6, 0.0015) * rng.choice([-1, 1])
    if kind < 0.2:
        # opinions on two almost orthogonal lines
        side = rng.integers(0, 2, n)
        side[:2] = (0, 1)
        return _planar(base + side * (np.pi / 2 + tilt), rng)
    side = rng.integers(0, 2, n)
    side[:2] = (0, 1)
    jitter = rng.uniform(-0.0009, 0.0009, n)
    return _planar(base + side * (np.pi / 2 + tilt) + jitter, rng)


def active_input(rng):
    n = int(rng.integers(2, 11))
    d = int(rng.integers(2, 5))
    if rng.random() < 0.15:
        return np.eye(d)[rng.integers(0, d, n)] * _signs(rng, n)[:, None]
    return random_unit(d, rng, n)


def active_spec(rng):
    if rng.random() < 0.5:
        return UpdateSpec.sign(rng.uniform(0.05, 0.9))
    return UpdateSpec.asym_sign(rng.uniform(0.05, 0.9), rng.uniform(0.05, 0.9), rng.uniform(-0.9, 0.9))


def merge_input(rng):
    """(previous, current, witness, epsilon, spec): clusters that one step has made eps-active across."""
    eps = float(rng.choice([0.01, 0.02, 0.05, 0.1]))
    k = int(rng.integers(2, 4))
    d = 3
    axes = np.linalg.qr(rng.standard_normal((d, d)))[0].T[:k]
    spread = eps / 40
    # tilt cluster 1 toward cluster 0 so some cross correlation sits just below eps
    tilt = np.arcsin(eps * rng.uniform(0.45, 0.8))
    axes[1] = np.cos(tilt) * axes[1] + np.sin(tilt) * axes[0]
    sizes = rng.integers(1, 5, k)
    blocks = []
    for axis, size in zip(axes, sizes):
        pts = axis + spread * rng.uniform(-1, 1, (size, d))
        blocks.append(pts / np.linalg.norm(pts, axis=1, keepdims=True))
    u = np.concatenate(blocks)
    u *= _signs(rng, len(u))[:, None]
    spec = UpdateSpec.linear(rng.uniform(2.0, 3.0)) if rng.random() < 0.5 else UpdateSpec.asym_linear(
        rng.uniform(2.0, 3.0), rng.uniform(2.0, 3.0))
    prev = Configuration(u, renormalize=True)
    a = np.abs(prev.corr)
    a[a >= 1 - eps] = -1.0
    i, j = np.unravel_index(np.argmax(a), a.shape)
    cur = step(prev, (int(i), int(j)), spec)
    return prev, cur, (int(i), int(j)), eps, spec, k

"""Random initial configurations."""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidParams, StructureViolation
from .geometry import Configuration, rotation_to, sample_uniform_sphere

MAX_RESAMPLE_ROUNDS = 1000


def uniform_configuration(n: int, d: int, rng: np.random.Generator) -> Configuration:
    """n i.i.d. opinions, uniform on the sphere."""
    return Configuration(sample_uniform_sphere(d, rng, size=n))


def sample_cap(axis: np.ndarray, radius: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform samples from the spherical cap of angular ``radius`` around the unit ``axis``."""
    d = axis.shape[0]
    out = np.empty((size, d))
    filled = 0
    while filled < size:
        m = size - filled
        t = rng.uniform(0.0, radius, size=m)
        # the cap's area element in polar angle is sin(t)^(d-2)
        keep = rng.random(m) * math.sin(radius) ** (d - 2) <= np.sin(t) ** (d - 2)
        t = t[keep]
        g = rng.standard_normal((len(t), d))
        g -= np.outer(g @ axis, axis)
        w = g / np.linalg.norm(g, axis=1, keepdims=True)
        out[filled : filled + len(t)] = np.cos(t)[:, None] * axis + np.sin(t)[:, None] * w
        filled += len(t)
    return out


def almost_orthogonal_radius(low: float, high: float) -> float:
    """Largest cap radius for which any two opinions drawn near orthogonal axes satisfy the condition.

    Opinions within rho of the same line are at most 2 rho apart (need
    cos(2 rho) >= high); opinions near two orthogonal axes have |A| <= sin(2 rho)
    (need <= low).
    """
    return 0.5 * min(math.asin(low), math.acos(high))


def satisfies_almost_orthogonal(corr: np.ndarray, low: float, high: float) -> np.ndarray:
    """Per-agent flag: every correlation with another agent is <= low or >= high in absolute value."""
    a = np.abs(corr)
    ok = (a <= low) | (a >= high)
    return ok.all(axis=1)


def almost_orthogonal_configuration(
    n: int,
    d: int,
    rng: np.random.Generator,
    low: float = 0.1,
    high: float = 0.9,
    bundles: int = 3,
    radius: float | None = None,
) -> Configuration:
    """Tight bundles around ``bundles`` exactly orthogonal random axes.

    Each agent picks a uniformly random signed axis and lands uniformly in a
    cap around it. The cap radius defaults to the value that makes every pair
    satisfy |A| <= low or |A| >= high; agents involved in a violating pair are
    resampled until none remain.
    """
    if not 0 <= low < high <= 1:
        raise InvalidParams("need 0 <= low < high <= 1")
    if not 2 <= bundles <= d:
        raise InvalidParams(f"bundles must lie in [2, d], got {bundles}")
    if radius is None:
        radius = almost_orthogonal_radius(low, high)
    if not 0 < radius <= math.acos(high):
        raise InvalidParams("cap radius must lie in (0, arccos(high)]")
    axes = rotation_to(d, rng)[:, :bundles].T
    u = np.empty((n, d))
    todo = np.arange(n)
    for _ in range(MAX_RESAMPLE_ROUNDS):
        which = rng.integers(0, bundles, size=len(todo))
        signs = rng.choice([-1.0, 1.0], size=len(todo))
        for k, agent in enumerate(todo):
            u[agent] = signs[k] * sample_cap(axes[which[k]], radius, rng, 1)[0]
        cfg = Configuration(u, renormalize=True)
        bad = np.flatnonzero(~satisfies_almost_orthogonal(cfg.corr, low, high))
        if len(bad) == 0:
            return cfg
        todo = bad
    raise StructureViolation("could not satisfy the almost-orthogonal condition")


def strictly_convex_configuration(n: int, d: int, rng: np.random.Generator, radius: float | None = None,
                                  flip: bool = True) -> Configuration:
    """Opinions in a cap of radius < pi/4 (pairwise angles < pi/2), each negated with probability 1/2."""
    if radius is None:
        radius = rng.uniform(0.05, math.pi / 4 - 0.01)
    if not 0 < radius < math.pi / 4:
        raise InvalidParams("radius must lie in (0, pi/4)")
    center = sample_uniform_sphere(d, rng)
    u = sample_cap(center, radius, rng, n)
    if flip:
        u *= rng.choice([-1.0, 1.0], size=(n, 1))
    return Configuration(u, renormalize=True)


def clustered_configuration(axes, sizes, spread: float, rng: np.random.Generator, flip: bool = True) -> Configuration:
    """``sizes[k]`` opinions in a cap of radius ``spread`` around ``axes[k]``, optionally sign-flipped."""
    axes = np.asarray(axes, dtype=float)
    blocks = []
    for axis, size in zip(axes, sizes):
        axis = axis / np.linalg.norm(axis)
        blocks.append(sample_cap(axis, spread, rng, size) if spread > 0 else np.tile(axis, (size, 1)))
    u = np.concatenate(blocks)
    if flip:
        u *= rng.choice([-1.0, 1.0], size=(len(u), 1))
    return Configuration(u, renormalize=True)

"""Unit-sphere primitives: normalization, correlations, angles, sampling."""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch, InvalidParams, ZeroVector

NORM_FLOOR = 1e-12
UNIT_TOL = 1e-12


def normalize(v) -> np.ndarray:
    """Return ``v / ||v||`` as a float array."""
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if not norm > NORM_FLOOR:
        raise ZeroVector(f"cannot normalize vector of norm {norm:g}")
    return v / norm


def _check_dims(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape[-1] != v.shape[-1]:
        raise DimensionMismatch(f"dimension {u.shape[-1]} != {v.shape[-1]}")


def correlation(u, v):
    """Inner product of two opinions, clamped to [-1, 1].

    Broadcasts over leading axes, so batches of pairs work too.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_dims(u, v)
    a = np.clip(np.einsum("...k,...k->...", u, v), -1.0, 1.0)
    return float(a) if a.ndim == 0 else a


def angle_from_corr(a):
    return np.arccos(np.clip(a, -1.0, 1.0))


def effective_angle_from_corr(a):
    # arccos(|A|) equals min(alpha, pi - alpha) and avoids cancellation near pi
    return np.arccos(np.clip(np.abs(a), 0.0, 1.0))


def angle(u, v):
    """Great-circle angle in [0, pi].

    Uses 2 atan2(|u - v|, |u + v|), which keeps full precision near 0 and pi
    where arccos of the inner product loses about half the digits.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_dims(u, v)
    a = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=-1), np.linalg.norm(u + v, axis=-1))
    return float(a) if a.ndim == 0 else a


def effective_angle(u, v):
    """Angle between the lines through u and v, in [0, pi/2]."""
    a = angle(u, v)
    return np.minimum(a, math.pi - a) if isinstance(a, np.ndarray) else min(a, math.pi - a)


def sample_uniform_sphere(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform point(s) on S^{d-1} via normalized standard Gaussians."""
    if d < 2:
        raise InvalidParams("dimension must be at least 2")
    shape = (d,) if size is None else (size, d)
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def correlation_matrix(opinions) -> np.ndarray:
    """Symmetric matrix of pairwise correlations with an exact unit diagonal."""
    u = np.asarray(opinions, dtype=float)
    if u.ndim != 2:
        raise DimensionMismatch("expected an (n, d) array of opinions")
    a = np.clip(u @ u.T, -1.0, 1.0)
    # u @ u.T is not guaranteed bitwise symmetric; mirror the upper triangle
    iu = np.triu_indices(len(u), 1)
    a[(iu[1], iu[0])] = a[iu]
    np.fill_diagonal(a, 1.0)
    return a


class Configuration:
    """Ordered tuple of n unit opinions in R^d with a cached correlation matrix.

    ``opinions`` is an (n, d) float array; ``corr`` is the (n, n) matrix of
    pairwise correlations. Instances are treated as values: operations that
    move opinions return a new Configuration.
    """

    __slots__ = ("opinions", "corr")

    def __init__(self, opinions, corr=None, *, renormalize: bool = False, tol: float = 1e-9):
        u = np.array(opinions, dtype=float)
        if u.ndim != 2 or u.shape[0] < 1:
            raise DimensionMismatch("opinions must form an (n, d) array")
        if u.shape[1] < 2:
            raise InvalidParams("dimension must be at least 2")
        norms = np.linalg.norm(u, axis=1)
        if renormalize:
            if np.any(norms <= NORM_FLOOR):
                raise ZeroVector("configuration contains a zero vector")
            u = u / norms[:, None]
        elif np.any(np.abs(norms - 1.0) > tol):
            raise InvalidParams(f"opinions are not unit vectors (max deviation {np.max(np.abs(norms - 1.0)):.3g})")
        self.opinions = u
        self.corr = correlation_matrix(u) if corr is None else np.array(corr, dtype=float)

    @property
    def n(self) -> int:
        return self.opinions.shape[0]

    @property
    def d(self) -> int:
        return self.opinions.shape[1]

    def copy(self) -> "Configuration":
        new = object.__new__(Configuration)
        new.opinions = self.opinions.copy()
        new.corr = self.corr.copy()
        return new

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Configuration(n={self.n}, d={self.d})"


def as_configuration(config) -> Configuration:
    if isinstance(config, Configuration):
        return config
    return Configuration(config)


def off_diagonal_abs(corr: np.ndarray) -> np.ndarray:
    """|A_ij| for i < j, flattened."""
    iu = np.triu_indices(corr.shape[0], 1)
    return np.abs(corr[iu])


def rotation_to(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random orthogonal d x d matrix (QR of a Gaussian matrix with sign fix)."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def unit_in_plane(u: np.ndarray, w: np.ndarray, theta: float) -> np.ndarray:
    """cos(theta) u + sin(theta) w for orthonormal u, w."""
    return math.cos(theta) * u + math.sin(theta) * w

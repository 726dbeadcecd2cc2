"""Configuration predicates and potentials.

All predicates read the cached correlation matrix. Agents are indexed from 0.
Every threshold is an explicit argument because the underlying definitions
are stated over exact reals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NotInactive, StructureViolation, WrongArity
from .geometry import Configuration, as_configuration, effective_angle

TOL_ORTH = 1e-9
TOL_POLAR = 1e-6
EPS_CLUSTER = 1.0 / 256


def _corr(config) -> np.ndarray:
    return as_configuration(config).corr


@dataclass(frozen=True)
class ActivityVerdict:
    active: bool
    witness: tuple[int, int] | None = None

    def __bool__(self) -> bool:
        return self.active


def epsilon_activity(config, epsilon: float) -> ActivityVerdict:
    """Active iff some pair has epsilon < |A_ij| < 1 - epsilon.

    The witness is the lexicographically first such pair (i < j).
    """
    return _activity(_corr(config), epsilon)


def _activity(corr: np.ndarray, epsilon: float) -> ActivityVerdict:
    a = np.abs(corr)
    mask = np.triu((a > epsilon) & (a < 1.0 - epsilon), 1)
    hits = np.argwhere(mask)
    if len(hits) == 0:
        return ActivityVerdict(False)
    i, j = hits[0]
    return ActivityVerdict(True, (int(i), int(j)))


@dataclass(frozen=True)
class ClusterPartition:
    clusters: tuple[tuple[int, ...], ...]
    epsilon: float

    def __len__(self) -> int:
        return len(self.clusters)

    def label_of(self, agent: int) -> int:
        for k, members in enumerate(self.clusters):
            if agent in members:
                return k
        raise KeyError(agent)

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.clusters]


def closeness_components(corr: np.ndarray, epsilon: float) -> list[tuple[int, ...]]:
    """Connected components of the relation |A_ij| >= 1 - epsilon, ordered by smallest member."""
    adj = np.abs(corr) >= 1.0 - epsilon
    _, labels = connected_components(adj, directed=False)
    groups: dict[int, list[int]] = {}
    for agent, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(agent)
    return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])


def cluster_partition(config, epsilon: float = EPS_CLUSTER) -> ClusterPartition:
    """Partition an epsilon-inactive configuration into clusters.

    Clusters are the components of the closeness relation; each is then
    checked against the definition (pairwise |A| >= 1 - eps inside, |A| <=
    eps across). The at-most-d bound is checked when eps < 1/(d(d+1)).
    """
    config = as_configuration(config)
    corr = config.corr
    verdict = _activity(corr, epsilon)
    if verdict.active:
        raise NotInactive(f"pair {verdict.witness} is {epsilon}-active")
    comps = closeness_components(corr, epsilon)
    a = np.abs(corr)
    for c in comps:
        idx = np.array(c)
        inside = a[np.ix_(idx, idx)]
        if np.any(inside < 1.0 - epsilon):
            raise StructureViolation(f"component {c} is not pairwise close; epsilon={epsilon} too large")
    d = config.d
    if epsilon < 1.0 / (d * (d + 1)) and len(comps) > d:
        raise StructureViolation(f"{len(comps)} clusters exceed dimension {d}")
    return ClusterPartition(tuple(comps), epsilon)


@dataclass(frozen=True)
class SignAssignment:
    signs: tuple[int, ...]
    margin: float


@dataclass(frozen=True)
class ConvexityVerdict:
    certified: bool
    certificate: SignAssignment | None = None

    def __bool__(self) -> bool:
        return self.certified


def signed_margin(corr: np.ndarray, signs) -> float:
    """min over i != j of b_i b_j A_ij (inf for a single agent)."""
    b = np.asarray(signs, dtype=float)
    m = corr * np.outer(b, b)
    n = len(b)
    if n < 2:
        return math.inf
    return float(m[~np.eye(n, dtype=bool)].min())


def strict_convexity(config, c: float = 0.0, tol: float = 0.0) -> ConvexityVerdict:
    """Decide c-strict convexity: signs b with b_i b_j A_ij > c for all pairs.

    Any valid assignment must have b_j = b_0 sgn(A_0j), so fixing b_0 = +1
    leaves a single candidate to check. A correlation |A_0j| <= tol refutes.
    """
    return _convexity(_corr(config), c, tol)


def _convexity(corr: np.ndarray, c: float, tol: float) -> ConvexityVerdict:
    first = corr[0]
    if np.any(np.abs(first[1:]) <= tol):
        return ConvexityVerdict(False)
    signs = np.where(first >= 0, 1, -1)
    signs[0] = 1
    margin = signed_margin(corr, signs)
    if margin > c + tol:
        return ConvexityVerdict(True, SignAssignment(tuple(int(s) for s in signs), margin))
    return ConvexityVerdict(False)


@dataclass(frozen=True)
class SeparabilityVerdict:
    separable: bool
    parts: tuple[tuple[int, ...], tuple[int, ...]] | None = None

    def __bool__(self) -> bool:
        return self.separable


def separability(config, tol: float = TOL_ORTH) -> SeparabilityVerdict:
    """Separable iff the graph with edges |A_ij| > tol is disconnected.

    Returns the component containing agent 0 and its complement.
    """
    corr = _corr(config)
    adj = np.abs(corr) > tol
    ncomp, labels = connected_components(adj, directed=False)
    if ncomp < 2:
        return SeparabilityVerdict(False)
    s = tuple(int(k) for k in np.flatnonzero(labels == labels[0]))
    t = tuple(int(k) for k in np.flatnonzero(labels != labels[0]))
    return SeparabilityVerdict(True, (s, t))


@dataclass(frozen=True)
class PolarizationVerdict:
    polarized: bool
    sizes: tuple[int, int]

    def __bool__(self) -> bool:
        return self.polarized


def polarization_check(config, tol: float = TOL_POLAR) -> PolarizationVerdict:
    """Polarized iff min |A_ij| >= 1 - tol.

    Groups are agent 0 with everyone positively correlated to it, and the
    rest; sizes are reported whatever the verdict.
    """
    corr = _corr(config)
    n = corr.shape[0]
    first = int(np.count_nonzero(corr[0] >= 0))
    return PolarizationVerdict(bool(1.0 - _min_abs(corr) <= tol), (first, n - first))


def min_abs_corr(config) -> float:
    return _min_abs(_corr(config))


def _min_abs(corr: np.ndarray) -> float:
    n = corr.shape[0]
    if n < 2:
        return 1.0
    return float(np.abs(corr[np.triu_indices(n, 1)]).min())


def potential_min_corr(config) -> float:
    """1 - min over i != j of |A_ij|; zero exactly at polarized configurations."""
    return 1.0 - min_abs_corr(config)


def potential_triangle(config) -> float:
    """Sum of the three pairwise effective angles of a three-agent configuration."""
    u = as_configuration(config).opinions
    if u.shape[0] != 3:
        raise WrongArity(f"triangle potential needs exactly 3 opinions, got {u.shape[0]}")
    return float(effective_angle(u[[0, 0, 1]], u[[1, 2, 2]]).sum())


def summarize(config: Configuration, epsilon: float, *, tol_orth: float = TOL_ORTH, tol_polar: float = TOL_POLAR) -> dict:
    """All predicates and potentials as a JSON-ready dict."""
    config = as_configuration(config)
    act = epsilon_activity(config, epsilon)
    out: dict = {
        "n": config.n,
        "d": config.d,
        "epsilon": epsilon,
        "activity": {"active": act.active, "witness": list(act.witness) if act.witness else None},
    }
    try:
        part = cluster_partition(config, epsilon)
        out["clusters"] = [list(c) for c in part.clusters]
    except (NotInactive, StructureViolation) as exc:
        out["clusters"] = None
        out["clusters_error"] = f"{type(exc).__name__}: {exc}"
    conv = strict_convexity(config)
    out["strict_convexity"] = {
        "certified": conv.certified,
        "signs": list(conv.certificate.signs) if conv.certificate else None,
        "margin": conv.certificate.margin if conv.certificate else None,
    }
    sep = separability(config, tol_orth)
    out["separability"] = {"separable": sep.separable, "parts": [list(p) for p in sep.parts] if sep.parts else None}
    pol = polarization_check(config, tol_polar)
    out["polarization"] = {"polarized": pol.polarized, "sizes": list(pol.sizes), "tol": tol_polar}
    out["potential_min_corr"] = potential_min_corr(config)
    out["potential_triangle"] = potential_triangle(config) if config.n == 3 else None
    return out

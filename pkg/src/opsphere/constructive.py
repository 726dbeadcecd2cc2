"""Explicit intervention sequences that steer a configuration into a target state.

Every builder returns an :class:`InterventionScript` whose pairs follow the
engine convention: ``(i, j)`` means agent j influences agent i. Each builder
applies its own script before returning and raises
:class:`StructureViolation` if the promised postcondition does not hold, so a
returned script is always certified on the input it was built for.

Script lengths come from exact iteration of the one-step correlation map,
then a compiled replay of the same floating-point steps that
:func:`opsphere.engine.apply_sequence` will perform.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .analysis import (
    EPS_CLUSTER,
    TOL_ORTH,
    closeness_components,
    cluster_partition,
    epsilon_activity,
    separability,
    strict_convexity,
)
from .engine import apply_sequence
from .errors import (
    InvalidParams,
    NoProgress,
    NotActive,
    NotStable,
    PreconditionViolated,
    StructureViolation,
)
from .geometry import Configuration, as_configuration
from .update_rules import UpdateSpec, classify, predicted_correlation

MAX_SCRIPT_STEPS = 1_000_000
# |A| >= 1 - COLINEAR_TOL counts as "the same line" when classifying quadrant cases
COLINEAR_TOL = 1e-9


class Intent(str, enum.Enum):
    DRIVE_PAIR_CLOSE = "drive-pair-close"
    INACTIVATE = "inactivate"
    QUADRANT_2D = "quadrant-2d"
    ACTIVE_CONVEXIFY = "active-convexify"
    CLUSTER_MERGE = "cluster-merge"


@dataclass(frozen=True)
class InterventionScript:
    """A finite pair sequence plus the predicate it is certified to establish.

    ``params`` holds the thresholds the postcondition refers to, so
    :meth:`holds` can re-check it on any configuration.
    """

    pairs: np.ndarray
    intent: Intent
    certified_postcondition: str
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairs)

    def apply(self, config, spec: UpdateSpec) -> Configuration:
        return apply_sequence(config, self.pairs, spec)

    def holds(self, after) -> bool:
        return _POSTCONDITIONS[self.certified_postcondition](as_configuration(after), self.params)


def _pair_close(cfg: Configuration, p: dict) -> bool:
    i, j = p["i"], p["j"]
    if p.get("divide_factor") is not None:
        gamma = _kernels.effective_angle_vec(cfg.opinions[i], cfg.opinions[j])
        return gamma <= p["gamma_target"]
    return abs(cfg.corr[i, j]) >= 1.0 - p["target_eps"]


def _fewer_clusters(cfg: Configuration, p: dict) -> bool:
    if epsilon_activity(cfg, p["epsilon"]):
        return False
    return len(cluster_partition(cfg, p["epsilon"])) < p["clusters_before"]


_POSTCONDITIONS = {
    "pair-close": _pair_close,
    "epsilon-inactive": lambda cfg, p: not epsilon_activity(cfg, p["epsilon"]),
    "strictly-convex": lambda cfg, p: strict_convexity(cfg).certified,
    "c-strictly-convex": lambda cfg, p: strict_convexity(cfg, p["c"]).certified,
    "fewer-clusters": _fewer_clusters,
}


def _pairs_array(pairs) -> np.ndarray:
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _require_stable(spec: UpdateSpec) -> None:
    if not classify(spec).is_stable:
        raise NotStable(f"{spec} is not a stable update function")


def predicted_drive_length(a: float, spec: UpdateSpec, target_abs: float = -1.0, gamma_target: float = math.inf,
                           cap: int = MAX_SCRIPT_STEPS) -> int | None:
    """Steps of the one-step correlation map needed to reach the target, or None past ``cap``."""
    for s in range(cap + 1):
        if abs(a) >= target_abs and math.acos(min(1.0, abs(a))) <= gamma_target:
            return s
        a = predicted_correlation(a, spec)
    return None


def _drive_count(config: Configuration, i: int, j: int, spec: UpdateSpec, target_abs: float,
                 gamma_target: float) -> int:
    """Number of consecutive (i, j) steps until the target holds, replayed exactly."""
    c = config.corr[i, j]
    U = np.ascontiguousarray(config.opinions[[i, j]])
    C = np.array([[1.0, c], [c, 1.0]])
    k = _kernels.drive_steps(U, C, *spec.kernel_args(), target_abs, gamma_target, MAX_SCRIPT_STEPS)
    if k == -1:
        raise StructureViolation(f"driving pair ({i}, {j}) did not converge within {MAX_SCRIPT_STEPS} steps")
    if k == -2:
        raise StructureViolation(f"update vector vanished while driving pair ({i}, {j})")
    return int(k)


def drive_pair_close(config, i: int, j: int, spec: UpdateSpec, target_eps: float = EPS_CLUSTER,
                     divide_factor: float | None = None, tol_orth: float = TOL_ORTH) -> InterventionScript:
    """Repeat "agent j influences agent i" until |A_ij| >= 1 - target_eps.

    With ``divide_factor`` k the goal is instead to shrink the effective angle
    to at most a k-th of its current value.
    """
    _require_stable(spec)
    return _drive_script(as_configuration(config), i, j, spec, target_eps, divide_factor, tol_orth)


def _drive_script(cfg: Configuration, i: int, j: int, spec: UpdateSpec, target_eps: float,
                  divide_factor: float | None, tol_orth: float) -> InterventionScript:
    n = cfg.n
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise InvalidParams(f"invalid pair ({i}, {j}) for n={n}")
    a = float(cfg.corr[i, j])
    params: dict = {"i": i, "j": j, "target_eps": target_eps, "divide_factor": divide_factor}
    if divide_factor is not None:
        if not divide_factor >= 1:
            raise InvalidParams("divide_factor must be at least 1")
        gamma0 = _kernels.effective_angle_vec(cfg.opinions[i], cfg.opinions[j])
        target_abs, gamma_target = -1.0, gamma0 / divide_factor
        params["gamma_target"] = gamma_target
    else:
        if not 0 < target_eps < 1:
            raise InvalidParams("target_eps must lie in (0, 1)")
        target_abs, gamma_target = 1.0 - target_eps, math.inf
    already = abs(a) >= target_abs and (
        divide_factor is None or _kernels.effective_angle_vec(cfg.opinions[i], cfg.opinions[j]) <= gamma_target
    )
    if already:
        return InterventionScript(_pairs_array([]), Intent.DRIVE_PAIR_CLOSE, "pair-close", params)
    if classify(spec).is_stable and abs(a) <= tol_orth:
        raise NoProgress(f"|A_{i}{j}| = {abs(a):.3g} is orthogonal; stable updates cannot move it")
    params["predicted_length"] = predicted_drive_length(a, spec, target_abs, gamma_target)
    k = _drive_count(cfg, i, j, spec, target_abs, gamma_target)
    pairs = np.tile(np.array([[i, j]], dtype=np.int64), (k, 1))
    return InterventionScript(pairs, Intent.DRIVE_PAIR_CLOSE, "pair-close", params)


class _Builder:
    """Accumulates drives while keeping the configuration in sync."""

    def __init__(self, config: Configuration, spec: UpdateSpec):
        self.config = config.copy()
        self.spec = spec
        self.chunks: list[np.ndarray] = []
        self.total = 0

    def drive(self, i: int, j: int, target_eps: float | None = None, divide_factor: float | None = None):
        script = _drive_script(self.config, i, j, self.spec, target_eps or EPS_CLUSTER, divide_factor, TOL_ORTH)
        if len(script):
            self.config = apply_sequence(self.config, script.pairs, self.spec)
            self.chunks.append(script.pairs)
            self.total += len(script)
            if self.total > MAX_SCRIPT_STEPS:
                raise StructureViolation(f"script exceeded {MAX_SCRIPT_STEPS} steps")

    @property
    def pairs(self) -> np.ndarray:
        return np.concatenate(self.chunks) if self.chunks else _pairs_array([])


def _certify(script: InterventionScript, before: Configuration, spec: UpdateSpec) -> InterventionScript:
    after = script.apply(before, spec)
    if not script.holds(after):
        raise StructureViolation(f"{script.intent.value} script failed its postcondition {script.certified_postcondition}")
    return script


def greedy_inactivation(config, epsilon: float, spec: UpdateSpec) -> InterventionScript:
    """Script after which the configuration is epsilon-inactive.

    A maximal set of mutually eps0-orthogonal representatives is chosen
    greedily in index order, eps0 = (epsilon/64)^2; every other agent is then
    pulled by its most correlated representative until they are
    (1 - eps0)-close. Representatives never move.
    """
    _require_stable(spec)
    if not 0 < epsilon < 0.25:
        raise InvalidParams("epsilon must lie in (0, 1/4)")
    cfg = as_configuration(config)
    params = {"epsilon": epsilon}
    if not epsilon_activity(cfg, epsilon):
        return InterventionScript(_pairs_array([]), Intent.INACTIVATE, "epsilon-inactive", params)
    eps0 = (epsilon / 64.0) ** 2
    a = np.abs(cfg.corr)
    reps: list[int] = []
    for k in range(cfg.n):
        if all(a[k, r] <= eps0 for r in reps):
            reps.append(k)
    rep_arr = np.array(reps)
    owner = {}
    for k in range(cfg.n):
        if k in reps:
            continue
        # maximality guarantees some representative with |A| > eps0
        owner[k] = int(rep_arr[np.argmax(a[k, rep_arr])])
    build = _Builder(cfg, spec)
    for k, r in owner.items():
        build.drive(k, r, target_eps=eps0)
    params.update(eps0=eps0, representatives=tuple(reps))
    script = InterventionScript(build.pairs, Intent.INACTIVATE, "epsilon-inactive", params)
    _check_inactivation(build.config, reps, owner, eps0)
    return _certify(script, cfg, spec)


def _check_inactivation(after: Configuration, reps: list[int], owner: dict, eps0: float) -> None:
    a = np.abs(after.corr)
    r = np.array(reps)
    off = a[np.ix_(r, r)][~np.eye(len(r), dtype=bool)]
    if off.size and off.max() > eps0:
        raise StructureViolation("representatives moved")
    for k, rep in owner.items():
        if a[k, rep] < 1.0 - eps0:
            raise StructureViolation(f"agent {k} did not reach its representative {rep}")


def _active_at(corr: np.ndarray, tol: float) -> bool:
    a = np.abs(corr[np.triu_indices(corr.shape[0], 1)])
    return bool(np.any((a > tol) & (a < 1.0 - tol)))


def quadrant_2d(config, spec: UpdateSpec, epsilon: float = EPS_CLUSTER, tol_orth: float = TOL_ORTH) -> InterventionScript:
    """Script after which a planar, epsilon-inactive, non-separable configuration is strictly convex.

    If every opinion lies on one of two lines, or all opinions are mutually
    close, the configuration is already strictly convex and the script is
    empty. Otherwise the most correlated pair among the almost-orthogonal
    pairs (first in lexicographic order on ties) gives two representatives;
    every other agent is pulled by the representative of its cluster until
    their effective angle has shrunk by a factor 8.
    """
    _require_stable(spec)
    cfg = as_configuration(config)
    if cfg.d != 2:
        raise PreconditionViolated(f"planar construction needs d = 2, got d = {cfg.d}")
    act = epsilon_activity(cfg, epsilon)
    if act:
        raise PreconditionViolated(f"configuration is {epsilon}-active at pair {act.witness}")
    if not _active_at(cfg.corr, tol_orth):
        raise PreconditionViolated("configuration is not active: every pair is orthogonal or colinear")
    if separability(cfg, tol_orth):
        raise PreconditionViolated("configuration is separable")

    a = np.abs(cfg.corr)
    n = cfg.n
    empty = InterventionScript(_pairs_array([]), Intent.QUADRANT_2D, "strictly-convex", {"epsilon": epsilon})
    if np.all(a >= 1.0 - epsilon):
        return _certify(empty, cfg, spec)
    other = int(np.flatnonzero(a[0] < 1.0 - COLINEAR_TOL)[0])
    if np.all((a[0] >= 1.0 - COLINEAR_TOL) | (a[other] >= 1.0 - COLINEAR_TOL)):
        return _certify(empty, cfg, spec)

    iu = np.triu_indices(n, 1)
    vals = a[iu]
    far = vals <= epsilon
    best = vals[far].max()
    k = int(np.flatnonzero(far & (vals == best))[0])
    p, q = int(iu[0][k]), int(iu[1][k])
    c1 = set(np.flatnonzero(a[p] >= 1.0 - epsilon).tolist())
    c2 = set(np.flatnonzero(a[q] >= 1.0 - epsilon).tolist())
    if c1 & c2 or len(c1) + len(c2) != n:
        raise StructureViolation("opinions do not split into the two clusters of the representatives")
    build = _Builder(cfg, spec)
    for agent in range(n):
        if agent in (p, q):
            continue
        build.drive(agent, p if agent in c1 else q, divide_factor=8.0)
    script = InterventionScript(
        build.pairs, Intent.QUADRANT_2D, "strictly-convex", {"epsilon": epsilon, "representatives": (p, q)}
    )
    return _certify(script, cfg, spec)


def convexify_2d(config, spec: UpdateSpec, epsilon: float = EPS_CLUSTER) -> InterventionScript:
    """Greedy inactivation at ``epsilon`` followed by :func:`quadrant_2d`.

    Accepts any planar, active, non-separable configuration.
    """
    cfg = as_configuration(config)
    first = greedy_inactivation(cfg, epsilon, spec)
    mid = first.apply(cfg, spec)
    second = quadrant_2d(mid, spec, epsilon)
    pairs = np.concatenate([first.pairs, second.pairs])
    script = InterventionScript(pairs, Intent.QUADRANT_2D, "strictly-convex",
                                {"epsilon": epsilon, "inactivation_length": len(first)})
    return _certify(script, cfg, spec)


def active_convexify(config, spec: UpdateSpec) -> InterventionScript:
    """Script after which the configuration is c-strictly convex, c = |sign-change point|.

    Agent 0 influences every other agent until |A_0i| >= 1 - eps0 with
    eps0 = eps/4 and eps = min(1 - c, 1/256)/2; the closeness then carries
    over to all pairs.
    """
    cls = classify(spec)
    if not cls.is_active:
        raise NotActive(f"{spec} is not an active update function")
    cfg = as_configuration(config)
    c = abs(cls.sign_change_point)
    eps = min(1.0 - c, EPS_CLUSTER) / 2.0
    eps0 = eps / 4.0
    build = _Builder(cfg, spec)
    for agent in range(1, cfg.n):
        build.drive(agent, 0, target_eps=eps0)
    script = InterventionScript(build.pairs, Intent.ACTIVE_CONVEXIFY, "c-strictly-convex", {"c": c, "eps0": eps0})
    return _certify(script, cfg, spec)


def cluster_merge(config, pair: tuple[int, int], epsilon: float, spec: UpdateSpec,
                  previous=None) -> InterventionScript:
    """Merge the clusters of a newly active cross-cluster pair.

    Clusters are read from ``previous`` (the epsilon-inactive configuration
    one step earlier) when given, otherwise from the current configuration as
    components of |A| >= 1/2. With eps' = epsilon^2/16, members of i's cluster
    are pulled to i, each member of j's cluster is pulled to j and then hops to
    i, and finally j is pulled to i. If that activates a third cluster, the
    merge repeats with the new witness, at most n times. The result is
    epsilon-inactive with fewer clusters.
    """
    _require_stable(spec)
    if not 0 < epsilon < 0.25:
        raise InvalidParams("epsilon must lie in (0, 1/4)")
    cfg = as_configuration(config)
    n = cfg.n
    i, j = int(pair[0]), int(pair[1])
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise PreconditionViolated(f"invalid witness pair ({i}, {j})")
    if abs(cfg.corr[i, j]) <= epsilon:
        raise PreconditionViolated(f"|A_{i}{j}| = {abs(cfg.corr[i, j]):.3g} does not exceed epsilon")
    if previous is not None:
        prev = as_configuration(previous)
        if prev.n != n:
            raise PreconditionViolated("previous configuration has a different size")
        if epsilon_activity(prev, epsilon):
            raise PreconditionViolated("previous configuration is not epsilon-inactive")
        groups = closeness_components(prev.corr, epsilon)
    else:
        groups = closeness_components(cfg.corr, 0.5)
    label = np.empty(n, dtype=np.int64)
    for g, members in enumerate(groups):
        label[list(members)] = g
    if label[i] == label[j]:
        raise PreconditionViolated(f"agents {i} and {j} are in the same cluster")
    clusters_before = len(groups)
    eps_p = epsilon**2 / 16.0

    build = _Builder(cfg, spec)
    members = {g: set(m) for g, m in enumerate(groups)}
    a, b = i, j
    for _ in range(n):
        ga, gb = int(label[a]), int(label[b])
        for k in sorted(members[ga] - {a}):
            build.drive(k, a, target_eps=eps_p)
        for k in sorted(members[gb] - {b}):
            build.drive(k, b, target_eps=eps_p)
            build.drive(k, a, target_eps=eps_p)
        build.drive(b, a, target_eps=eps_p)
        members[ga] |= members.pop(gb)
        label[label == gb] = ga
        act = epsilon_activity(build.config, epsilon)
        if not act:
            break
        a, b = act.witness
        if label[a] == label[b]:
            raise StructureViolation(f"pair {act.witness} became active inside a merged cluster")
    else:
        raise StructureViolation("cluster merging did not terminate within n rounds")

    script = InterventionScript(
        build.pairs, Intent.CLUSTER_MERGE, "fewer-clusters",
        {"epsilon": epsilon, "clusters_before": clusters_before, "eps_prime": eps_p},
    )
    return _certify(script, cfg, spec)


# ---------------------------------------------------------------------------
# three-opinion configuration that no short sequence makes strictly convex


def counterexample_slack(epsilon: float, eta: float, T: int) -> float:
    """epsilon/2 minus the accumulated worst-case drift; non-negative iff admissible."""
    drift = epsilon**2 * (eta + (2 * eta + eta**2) / 2) * T * (1 + eta) ** (2 * T)
    return epsilon / 2 - drift


@dataclass(frozen=True)
class CounterexampleSpec:
    d: int
    eta: float
    T: int
    epsilon: float
    opinions: np.ndarray

    @property
    def configuration(self) -> Configuration:
        return Configuration(self.opinions)

    @property
    def admissible(self) -> bool:
        return counterexample_slack(self.epsilon, self.eta, self.T) >= 0

    @property
    def spec(self) -> UpdateSpec:
        return UpdateSpec.linear(self.eta)


def _realize(epsilon: float, d: int) -> np.ndarray:
    # Cholesky-style completion of the Gram matrix [[1, e, e], [e, 1, -e], [e, -e, 1]]
    e = epsilon
    s = math.sqrt(1 - e * e)
    y = (-e - e * e) / s
    z2 = 1 - e * e - y * y
    if z2 <= 0:
        raise InvalidParams(f"correlations ({e}, {e}, {-e}) are not realizable")
    u = np.zeros((3, d))
    u[0, 0] = 1.0
    u[1, :2] = (e, s)
    u[2, :3] = (e, y, math.sqrt(z2))
    return u


def counterexample(d: int, eta: float, T: int, epsilon: float | None = None, *, check: bool = True,
                   max_k: int = 400) -> CounterexampleSpec:
    """Three opinions with correlations (eps, eps, -eps) that stay non-convex for T linear steps.

    Without ``epsilon`` the largest admissible value 10^(-k/4), k >= 1, is used.
    An explicit ``epsilon`` violating the admissibility inequality raises
    InvalidParams unless ``check`` is False.
    """
    if d < 3:
        raise InvalidParams("the construction needs d >= 3")
    if not (eta > 0 and math.isfinite(eta)):
        raise InvalidParams("eta must be positive")
    if T < 1:
        raise InvalidParams("T must be a positive integer")
    if epsilon is None:
        for k in range(1, max_k + 1):
            epsilon = 10.0 ** (-k / 4)
            if counterexample_slack(epsilon, eta, T) >= 0:
                break
        else:
            raise InvalidParams("no admissible epsilon on the grid")
    elif not 0 < epsilon < 0.5:
        raise InvalidParams("epsilon must lie in (0, 1/2)")
    elif check and counterexample_slack(epsilon, eta, T) < 0:
        raise InvalidParams(f"epsilon={epsilon} violates the admissibility inequality for eta={eta}, T={T}")
    u = _realize(epsilon, d)
    cx = CounterexampleSpec(d, float(eta), int(T), float(epsilon), u)
    corr = cx.configuration.corr
    got = np.array([corr[0, 1], corr[0, 2], corr[1, 2]])
    if np.max(np.abs(got - np.array([epsilon, epsilon, -epsilon]))) > 1e-12:
        raise StructureViolation(f"realized correlations {got} miss the target")
    return cx

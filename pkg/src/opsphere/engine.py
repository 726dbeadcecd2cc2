"""The random pairwise-interaction process and scripted interaction sequences.

At each step an ordered pair (i, j), i != j, is drawn i.i.d. from an
intervention distribution and agent j influences agent i: only u_i moves and
only row/column i of the correlation matrix changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateUpdate, DimensionMismatch, IndexOutOfRange, InvalidParams
from .geometry import Configuration, as_configuration
from .rng import PAIR_BLOCK, philox
from .update_rules import UpdateSpec

log = logging.getLogger(__name__)

DEFAULT_POLAR_TOL = 1e-6
DEFAULT_RECORD_EVERY = 100


class InterventionDistribution:
    """Probability weights over ordered pairs (i, j) with i != j.

    ``weights[i, j]`` is the probability that j influences i; the diagonal is
    zero and the total mass is one.
    """

    def __init__(self, weights):
        w = np.array(weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 2:
            raise InvalidParams("weights must be an n x n matrix with n >= 2")
        if np.any(np.diag(w) != 0):
            raise InvalidParams("self-pairs must have zero weight")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidParams("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise InvalidParams("weights must have positive mass")
        self.weights = w / total
        self._uniform = False
        n = w.shape[0]
        off = ~np.eye(n, dtype=bool)
        self._pairs_i, self._pairs_j = np.nonzero(off)
        self._cdf = np.cumsum(self.weights[off])
        self._cdf[-1] = 1.0

    @classmethod
    def uniform(cls, n: int) -> "InterventionDistribution":
        dist = cls(1.0 - np.eye(n))
        dist._uniform = True
        return dist

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def is_uniform(self) -> bool:
        return self._uniform

    @property
    def p_min(self) -> float:
        return float(self.weights[~np.eye(self.n, dtype=bool)].min())

    def has_full_support(self, floor: float = 0.0) -> bool:
        return self.p_min > floor

    def sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        if self._uniform:
            idx = rng.integers(0, n * (n - 1), size=size, dtype=np.int64)
            i = idx // (n - 1)
            r = idx % (n - 1)
            j = r + (r >= i)
            return i, j
        k = np.searchsorted(self._cdf, rng.random(size), side="right")
        k = np.minimum(k, len(self._cdf) - 1)
        return self._pairs_i[k].astype(np.int64), self._pairs_j[k].astype(np.int64)


@dataclass(frozen=True)
class StopRule:
    """Stop when polarized (1 - min|A| <= polarized_tol) and/or epsilon-inactive.

    Leaving both as None runs to ``max_steps``; setting both gives a
    composite rule that fires on whichever holds first.
    """

    polarized_tol: float | None = DEFAULT_POLAR_TOL
    inactive_eps: float | None = None

    def __post_init__(self):
        if self.polarized_tol is not None and not 0 < self.polarized_tol < 1:
            raise InvalidParams("polarized tolerance must lie in (0, 1)")
        if self.inactive_eps is not None and not 0 <= self.inactive_eps < 0.5:
            raise InvalidParams("inactivity epsilon must lie in [0, 1/2)")

    @classmethod
    def max_steps(cls) -> "StopRule":
        return cls(None, None)

    @classmethod
    def polarized(cls, tol: float = DEFAULT_POLAR_TOL) -> "StopRule":
        return cls(tol, None)

    @classmethod
    def inactive(cls, eps: float) -> "StopRule":
        return cls(None, eps)


@dataclass
class SimulationParams:
    n: int
    d: int
    update: UpdateSpec
    max_steps: int
    seed: int = 0
    stream: int = 0
    distribution: InterventionDistribution | None = None
    stop: StopRule = field(default_factory=StopRule)
    record_every: int = DEFAULT_RECORD_EVERY
    snapshot_steps: tuple[int, ...] = ()
    keep_interactions: bool = True

    def __post_init__(self):
        if self.n < 2 or self.d < 2:
            raise InvalidParams("need n >= 2 agents and dimension d >= 2")
        if self.max_steps < 0:
            raise InvalidParams("max_steps must be non-negative")
        if self.record_every < 1:
            raise InvalidParams("record_every must be positive")
        if self.distribution is None:
            self.distribution = InterventionDistribution.uniform(self.n)
        elif self.distribution.n != self.n:
            raise InvalidParams("distribution size does not match n")

    @property
    def polarization_tol(self) -> float:
        tol = self.stop.polarized_tol
        return DEFAULT_POLAR_TOL if tol is None else tol


@dataclass
class RunTrace:
    """Sampled interactions, periodic metric records and the final state.

    Record arrays are aligned: ``record_steps[k]`` is the step after which the
    metrics in row k were taken (0 is the initial configuration), and
    ``record_pairs[k]`` is the pair applied at that step ((-1, -1) at step 0).
    ``max_activity`` is max over pairs of min(|A|, 1 - |A|): the
    configuration is epsilon-active exactly when it exceeds epsilon.
    """

    interactions: np.ndarray  # (T, 2) int64, row t-1 is the pair applied at step t
    record_steps: np.ndarray
    record_pairs: np.ndarray
    min_abs_corr: np.ndarray
    max_activity: np.ndarray
    potential_triangle: np.ndarray
    final: Configuration
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def potential_min_corr(self) -> np.ndarray:
        return 1.0 - self.min_abs_corr

    def became_active(self, eps: float) -> bool:
        """Whether any recorded configuration was eps-active."""
        return bool(np.any(self.max_activity > eps))


@dataclass
class RunSummary:
    polarized: bool
    steps: int
    stop_reason: str
    cluster_sizes: tuple[int, int]
    final_min_abs_corr: float
    seed: int
    stream: int = 0
    polarization_tol: float = DEFAULT_POLAR_TOL

    def to_json(self) -> dict:
        return {
            "polarized": bool(self.polarized),
            "steps": int(self.steps),
            "stop_reason": self.stop_reason,
            "cluster_sizes": [int(self.cluster_sizes[0]), int(self.cluster_sizes[1])],
            "final_min_abs_corr": float(self.final_min_abs_corr),
            "seed": int(self.seed),
            "stream": int(self.stream),
            "polarization_tol": float(self.polarization_tol),
            # the limit-based definition is replaced by a finite tolerance check
            "verdict_kind": "tolerance-surrogate",
        }


def _check_pair(n: int, i: int, j: int) -> None:
    if not (0 <= i < n and 0 <= j < n):
        raise IndexOutOfRange(f"pair ({i}, {j}) out of range for n={n}")
    if i == j:
        raise IndexOutOfRange(f"self-interaction ({i}, {i}) is not allowed")


def step(config, pair: tuple[int, int], spec: UpdateSpec) -> Configuration:
    """Configuration after agent ``pair[1]`` influences agent ``pair[0]``."""
    new = as_configuration(config).copy()
    i, j = int(pair[0]), int(pair[1])
    _check_pair(new.n, i, j)
    ok = _kernels.step_inplace(new.opinions, new.corr, i, j, *spec.kernel_args(), np.empty(new.d))
    if not ok:
        raise DegenerateUpdate(f"update vector vanished at pair ({i}, {j})")
    return new


def apply_sequence(config, pairs, spec: UpdateSpec) -> Configuration:
    """Fold :func:`step` over a finite sequence of pairs."""
    new = as_configuration(config).copy()
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(arr):
        bad = (arr < 0) | (arr >= new.n)
        if bad.any() or np.any(arr[:, 0] == arr[:, 1]):
            k = int(np.flatnonzero(bad.any(axis=1) | (arr[:, 0] == arr[:, 1]))[0])
            raise IndexOutOfRange(f"invalid pair {tuple(arr[k])} at position {k}")
        done = _kernels.apply_pairs(
            new.opinions, new.corr, np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1]), *spec.kernel_args()
        )
        if done != len(arr):
            raise DegenerateUpdate(f"update vector vanished at position {done}")
    return new


def sign_groups(corr: np.ndarray) -> tuple[int, int]:
    """Sizes of {agent 0} plus agents positively correlated with it, and the rest."""
    first = int(np.count_nonzero(corr[0] >= 0))
    return first, corr.shape[0] - first


_STOP_NAMES = {
    _kernels.STATUS_POLARIZED: "polarized",
    _kernels.STATUS_INACTIVE: "inactive",
}


def run(params: SimulationParams, initial_config) -> tuple[RunTrace, RunSummary]:
    """Simulate the process from ``initial_config`` under ``params``.

    Stop rules are evaluated at step 0 and at every recorded step. The run is a
    pure function of (params, initial configuration).
    """
    config = as_configuration(initial_config).copy()
    if config.n != params.n or config.d != params.d:
        raise DimensionMismatch(f"initial configuration is {config.n}x{config.d}, params say {params.n}x{params.d}")
    U, C = config.opinions, config.corr
    spec_args = params.update.kernel_args()
    polar_tol = -1.0 if params.stop.polarized_tol is None else params.stop.polarized_tol
    inactive_eps = -1.0 if params.stop.inactive_eps is None else params.stop.inactive_eps
    every = params.record_every
    rng = philox(params.seed, params.stream)
    dist = params.distribution

    mn, act, tri = _kernels.metrics(U, C)
    steps_l, pairs_l = [np.array([0])], [np.array([[-1, -1]])]
    mins_l, acts_l, tris_l = [np.array([mn])], [np.array([act])], [np.array([tri])]
    interactions = []
    snapshots: dict[int, np.ndarray] = {}
    pending_snaps = sorted(s for s in set(params.snapshot_steps) if s >= 0)
    if pending_snaps and pending_snaps[0] == 0:
        snapshots[0] = U.copy()
        pending_snaps.pop(0)

    status = _kernels.STATUS_EXHAUSTED
    if polar_tol >= 0 and 1.0 - mn <= polar_tol:
        status = _kernels.STATUS_POLARIZED
    elif inactive_eps >= 0 and act <= inactive_eps:
        status = _kernels.STATUS_INACTIVE

    t = 0
    block_i = block_j = None
    offset = PAIR_BLOCK
    while status == _kernels.STATUS_EXHAUSTED and t < params.max_steps:
        if offset == PAIR_BLOCK:
            block_i, block_j = dist.sample(rng, PAIR_BLOCK)
            offset = 0
        end = min(PAIR_BLOCK, offset + params.max_steps - t)
        if pending_snaps:
            end = min(end, offset + pending_snaps[0] - t)
        pi = block_i[offset:end]
        pj = block_j[offset:end]
        cap = len(pi) // every + 2
        rec_t = np.empty(cap, np.int64)
        rec_i = np.empty(cap, np.int64)
        rec_j = np.empty(cap, np.int64)
        rec_min = np.empty(cap)
        rec_act = np.empty(cap)
        rec_tri = np.empty(cap)
        done, nrec, status = _kernels.run_block(
            U, C, pi, pj, t, every, *spec_args, polar_tol, inactive_eps,
            rec_t, rec_i, rec_j, rec_min, rec_act, rec_tri,
        )
        if params.keep_interactions:
            interactions.append(np.stack([pi[:done], pj[:done]], axis=1))
        steps_l.append(rec_t[:nrec])
        pairs_l.append(np.stack([rec_i[:nrec], rec_j[:nrec]], axis=1))
        mins_l.append(rec_min[:nrec])
        acts_l.append(rec_act[:nrec])
        tris_l.append(rec_tri[:nrec])
        t += done
        offset += done
        if status == _kernels.STATUS_DEGENERATE:
            raise DegenerateUpdate(f"update vector vanished at step {t + 1}")
        if pending_snaps and t == pending_snaps[0]:
            snapshots[t] = U.copy()
            pending_snaps.pop(0)

    if t % every != 0:
        # always close the trace with the final state
        mn, act, tri = _kernels.metrics(U, C)
        last = interactions[-1][-1] if interactions and len(interactions[-1]) else np.array([-1, -1])
        steps_l.append(np.array([t]))
        pairs_l.append(np.array([last]))
        mins_l.append(np.array([mn]))
        acts_l.append(np.array([act]))
        tris_l.append(np.array([tri]))

    for s in pending_snaps:
        # the run stopped early; report the final state for later snapshot times
        log.debug("run stopped at step %d before snapshot %d", t, s)
        snapshots[s] = U.copy()

    trace = RunTrace(
        interactions=np.concatenate(interactions) if interactions else np.empty((0, 2), np.int64),
        record_steps=np.concatenate(steps_l).astype(np.int64),
        record_pairs=np.concatenate(pairs_l).astype(np.int64),
        min_abs_corr=np.concatenate(mins_l),
        max_activity=np.concatenate(acts_l),
        potential_triangle=np.concatenate(tris_l),
        final=config,
        snapshots=snapshots,
    )
    final_min = float(trace.min_abs_corr[-1])
    tol = params.polarization_tol
    summary = RunSummary(
        polarized=bool(1.0 - final_min <= tol),
        steps=t,
        stop_reason=_STOP_NAMES.get(status, "max_steps"),
        cluster_sizes=sign_groups(C),
        final_min_abs_corr=final_min,
        seed=params.seed,
        stream=params.stream,
        polarization_tol=tol,
    )
    return trace, summary

"""Isotropy-manipulating post-processing: zero-mean, clustering, direction removal.

All transforms keep the row count and row order of their input, so row ``i`` of the
output still belongs to the same token record.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from isoprobe.errors import ContractError, IsoprobeWarning
from isoprobe.geometry import spectral_decomposition
from isoprobe.store import as_matrix

DEFAULT_K = 27
DEFAULT_D = 12
DEFAULT_SEED = 42
MAX_ITER = 300
REL_TOL = 1e-6
SELECTORS = ("top", "least")


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    k: int
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    inertia_history: tuple[float, ...] = ()

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


@dataclass(frozen=True)
class DirectionRemovalSpec:
    count: int
    selector: str = "top"

    def __post_init__(self):
        if not isinstance(self.count, (int, np.integer)) or self.count < 0:
            raise ContractError(f"direction count must be an int >= 0, got {self.count!r}")
        if self.selector not in SELECTORS:
            raise ContractError(f"selector must be one of {SELECTORS}, got {self.selector!r}")


# -- k-means -----------------------------------------------------------------


def _sq_dists(x, x_sq, centroids):
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    d2 = x_sq[:, None] - 2.0 * (x @ centroids.T) + c_sq[None, :]
    return np.maximum(d2, 0.0)


def _point_costs(x, centroids, labels):
    diff = x - centroids[labels]
    return np.einsum("ij,ij->i", diff, diff)


def _kmeans_pp(x, x_sq, k, rng):
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(x, x_sq, x[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen centre; pick among the unchosen
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(x, x_sq, x[idx : idx + 1])[:, 0])
    return x[chosen].copy()


def _repair_empty(x, centroids, labels, k):
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        costs = _point_costs(x, centroids, labels)
        costs[counts[labels] <= 1] = -1.0
        far = int(np.argmax(costs))
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
        centroids[c] = x[far]
    return labels


def _means(x, labels, k):
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, labels, x)
    return sums / np.bincount(labels, minlength=k)[:, None]


def kmeans(m, k: int, seed: int = DEFAULT_SEED, max_iter: int = MAX_ITER, debug: bool = False):
    """Lloyd's k-means with k-means++ seeding, deterministic for a given seed.

    Stops when the relative inertia improvement drops below 1e-6 or after
    ``max_iter`` iterations. An iteration that would raise the inertia (possible only
    through float rounding) is rejected and ends the run, so the recorded inertia
    sequence never increases. ``debug`` re-checks that invariant.
    """
    x = as_matrix(m)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ContractError(f"k must satisfy 1 <= k <= N = {n}, got k = {k}")
    rng = np.random.default_rng(seed)
    x_sq = np.einsum("ij,ij->i", x, x)
    centroids = _kmeans_pp(x, x_sq, k, rng)
    labels = None
    history: list[float] = []
    iterations = 0
    for _ in range(max_iter):
        trial_centroids = centroids.copy()
        trial = np.argmin(_sq_dists(x, x_sq, trial_centroids), axis=1)
        trial = _repair_empty(x, trial_centroids, trial, k)
        inertia = float(_point_costs(x, trial_centroids, trial).sum())
        if history and inertia > history[-1]:
            break
        labels, centroids = trial, trial_centroids
        iterations += 1
        prev = history[-1] if history else None
        history.append(inertia)
        if debug and len(history) > 1:
            assert history[-1] <= history[-2], history
        if prev is not None and (prev == 0.0 or prev - inertia <= REL_TOL * prev):
            break
        centroids = _means(x, labels, k)
    final_centroids = _means(x, labels, k)
    final = float(_point_costs(x, final_centroids, labels).sum())
    if final > history[-1]:
        # rounding made the mean update worse; keep the centroids that were scored
        final_centroids = centroids
        final = history[-1]
    labels.setflags(write=False)
    final_centroids.setflags(write=False)
    return ClusterAssignment(k, labels, final_centroids, final, iterations, tuple(history))


# -- transforms --------------------------------------------------------------


def zero_mean(m) -> np.ndarray:
    m = as_matrix(m)
    return m - m.mean(axis=0)


def clustering_zm(m, k: int = DEFAULT_K, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Cluster with k-means, then center every cluster on its own mean."""
    m = as_matrix(m)
    assignment = kmeans(m, k, seed)
    out = np.empty_like(m)
    for c in range(k):
        idx = assignment.members(c)
        out[idx] = zero_mean(m[idx])
    return out


def remove_directions(m, spec: DirectionRemovalSpec) -> np.ndarray:
    """Center ``m`` and null its components along the selected principal axes."""
    m = as_matrix(m)
    n, d = m.shape
    if spec.count > d:
        raise ContractError(f"cannot remove {spec.count} directions from a {d}-dim space")
    centered = zero_mean(m)
    if spec.count == 0:
        return centered
    if n < 2:
        raise ContractError("direction removal needs at least 2 rows")
    dec = spectral_decomposition(m)
    if spec.selector == "top":
        u = dec.eigenvectors[: spec.count]
    else:
        u = dec.eigenvectors[d - spec.count :]
    return centered - (centered @ u.T) @ u


def global_abtt(m, D: int = DEFAULT_D) -> np.ndarray:
    """All-but-the-top: zero-mean, then drop the D leading principal directions."""
    return remove_directions(m, DirectionRemovalSpec(D, "top"))


def cluster_based(
    m, k: int = DEFAULT_K, D: int = DEFAULT_D, seed: int = DEFAULT_SEED, selector: str = "top"
) -> np.ndarray:
    """Per-cluster zero-mean and per-cluster removal of D principal directions.

    Directions are estimated inside each cluster. A singleton cluster has no
    principal axes and is only centered (its vector becomes zero).
    """
    m = as_matrix(m)
    spec = DirectionRemovalSpec(D, selector)
    if D > m.shape[1]:
        raise ContractError(f"cannot remove {D} directions from a {m.shape[1]}-dim space")
    assignment = kmeans(m, k, seed)
    out = np.empty_like(m)
    for c in range(k):
        idx = assignment.members(c)
        if idx.size < 2 and D > 0:
            warnings.warn(
                f"cluster {c} has a single member; centering only",
                IsoprobeWarning,
                stacklevel=2,
            )
            out[idx] = zero_mean(m[idx])
        else:
            out[idx] = remove_directions(m[idx], spec)
    return out


# -- pipelines ---------------------------------------------------------------

_OP_PARAMS = {
    "zero_mean": (),
    "clustering_zm": ("k",),
    "global_abtt": ("D",),
    "cluster_based": ("k", "D", "selector"),
    "remove_least": ("D",),
}


@dataclass(frozen=True)
class Step:
    op: str
    params: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED

    def to_dict(self) -> dict:
        return {"op": self.op, "params": dict(self.params), "seed": self.seed}


def _check_int(name, value, low):
    if isinstance(value, bool) or not isinstance(value, int) or value < low:
        raise ContractError(f"parameter {name} must be an integer >= {low}, got {value!r}")


def make_step(op: str, params: dict | None = None, seed=None, defaults=None) -> Step:
    """Validate one step; parameters it omits come from ``defaults``, then module defaults."""
    defaults = {"k": DEFAULT_K, "D": DEFAULT_D, "selector": "top", "seed": DEFAULT_SEED,
                **(defaults or {})}
    if seed is None:
        seed = defaults["seed"]
    if op not in _OP_PARAMS:
        raise ContractError(f"unknown op {op!r}; expected one of {sorted(_OP_PARAMS)}")
    params = dict(params or {})
    unknown = set(params) - set(_OP_PARAMS[op])
    if unknown:
        raise ContractError(f"op {op!r} does not take parameter(s) {sorted(unknown)}")
    if "k" in _OP_PARAMS[op]:
        params.setdefault("k", defaults["k"])
        _check_int("k", params["k"], 1)
    if "D" in _OP_PARAMS[op]:
        params.setdefault("D", defaults["D"])
        _check_int("D", params["D"], 0)
    if "selector" in _OP_PARAMS[op]:
        params.setdefault("selector", defaults["selector"])
        if params["selector"] not in SELECTORS:
            raise ContractError(f"selector must be one of {SELECTORS}, got {params['selector']!r}")
    _check_int("seed", seed, 0)
    return Step(op, params, seed)


def parse_pipeline(config, defaults=None) -> list[Step]:
    """Build steps from a JSON list (or ``{"steps": [...]}``), a path, or ``None``.

    ``defaults`` may supply ``k``, ``D``, ``selector`` and ``seed`` for steps that
    leave them out.
    """
    if config is None:
        return []
    if isinstance(config, (str, Path)):
        try:
            config = json.loads(Path(config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ContractError(f"pipeline is not valid JSON: {exc}") from None
    if isinstance(config, dict):
        config = config.get("steps")
    if not isinstance(config, list):
        raise ContractError("pipeline must be a list of steps")
    steps = []
    for i, raw in enumerate(config):
        if isinstance(raw, Step):
            steps.append(raw)
            continue
        if not isinstance(raw, dict) or "op" not in raw:
            raise ContractError(f"pipeline step {i} must be an object with an 'op' field")
        extra = set(raw) - {"op", "params", "seed"}
        if extra:
            raise ContractError(f"pipeline step {i} has unknown field(s) {sorted(extra)}")
        steps.append(make_step(raw["op"], raw.get("params"), raw.get("seed"), defaults))
    return steps


def apply_step(m, step: Step) -> np.ndarray:
    p = step.params
    if step.op == "zero_mean":
        return zero_mean(m)
    if step.op == "clustering_zm":
        return clustering_zm(m, p["k"], step.seed)
    if step.op == "global_abtt":
        return global_abtt(m, p["D"])
    if step.op == "cluster_based":
        return cluster_based(m, p["k"], p["D"], step.seed, p["selector"])
    if step.op == "remove_least":
        return remove_directions(m, DirectionRemovalSpec(p["D"], "least"))
    raise ContractError(f"unknown op {step.op!r}")


def apply_pipeline(m, pipeline) -> np.ndarray:
    out = as_matrix(m).copy()
    for step in parse_pipeline(pipeline):
        out = apply_step(out, step)
    return out

"""
Semi-supervised labeling: voltage-threshold seeds plus constrained k-means.

Seeds come from two unambiguous rules. An instance whose every bus voltage
stays at or above ``v_stable`` is stable; one whose voltages all sit at or
below ``v_unstable`` over the final part of the record, without recovering,
is unstable. Seeds become must-link / cannot-link constraints for a two
cluster COP k-means whose centers start at the lowest-id seed of each class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, Label
from .errors import (ConstraintError, EmptyClusterError, InfeasibleAssignmentError,
                     InsufficientSeedsError, RangeError, ShapeError)

RECOVERY_TOLERANCE_PU = 0.02


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class ConstraintSet:
    seed_stable: frozenset = frozenset()
    seed_unstable: frozenset = frozenset()
    must_links: frozenset = frozenset()
    cannot_links: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "seed_stable", frozenset(int(i) for i in self.seed_stable))
        object.__setattr__(self, "seed_unstable", frozenset(int(i) for i in self.seed_unstable))
        object.__setattr__(self, "must_links", frozenset(_pair(*p) for p in self.must_links))
        object.__setattr__(self, "cannot_links", frozenset(_pair(*p) for p in self.cannot_links))
        both = self.seed_stable & self.seed_unstable
        if both:
            raise ConstraintError(f"instances seeded as both classes: {sorted(both)}")
        clash = self.must_links & self.cannot_links
        if clash:
            raise ConstraintError(f"pairs both must- and cannot-linked: {sorted(clash)}")
        for a, b in self.cannot_links:
            if a == b:
                raise ConstraintError(f"instance {a} cannot-linked to itself")
        comp = self.components()
        for a, b in self.cannot_links:
            if comp.get(a, a) == comp.get(b, b):
                raise ConstraintError(
                    f"cannot-link ({a}, {b}) joins instances connected by must-links")

    def components(self) -> dict[int, int]:
        """Must-link connected component representative for every linked id."""
        parent: dict[int, int] = {}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.must_links:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        return {x: find(x) for x in list(parent)}

    def partners(self):
        """Adjacency maps ``(must, cannot)`` from id to the set of linked ids."""
        must: dict[int, set] = {}
        cannot: dict[int, set] = {}
        for a, b in self.must_links:
            must.setdefault(a, set()).add(b)
            must.setdefault(b, set()).add(a)
        for a, b in self.cannot_links:
            cannot.setdefault(a, set()).add(b)
            cannot.setdefault(b, set()).add(a)
        return must, cannot

    @property
    def stable_anchor(self) -> int:
        return min(self.seed_stable)

    @property
    def unstable_anchor(self) -> int:
        return min(self.seed_unstable)


def seed_masks(ds: Dataset, v_stable: float = 0.9, v_unstable: float = 0.7,
               tail_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < v_unstable < v_stable:
        raise RangeError(f"need 0 < v_unstable < v_stable, got {v_unstable}, {v_stable}")
    if not 0.0 < tail_fraction <= 1.0:
        raise RangeError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    L = ds.n_buses
    U = ds.series_array()[:, :, :L]
    stable = np.all(U >= v_stable, axis=(1, 2))
    n_tail = max(1, math.ceil(tail_fraction * ds.m))
    tail = U[:, -n_tail:, :]
    low = np.all(tail <= v_unstable, axis=(1, 2))
    no_recovery = tail[:, -1, :].mean(axis=1) <= tail[:, 0, :].mean(axis=1) + RECOVERY_TOLERANCE_PU
    return stable, low & no_recovery


def derive_constraints(ds: Dataset, v_stable: float = 0.9, v_unstable: float = 0.7,
                       tail_fraction: float = 0.2) -> ConstraintSet:
    stable, unstable = seed_masks(ds, v_stable, v_unstable, tail_fraction)
    ids = np.array(ds.ids)
    s_ids = sorted(int(i) for i in ids[stable])
    u_ids = sorted(int(i) for i in ids[unstable])
    if not s_ids or not u_ids:
        raise InsufficientSeedsError(
            f"found {len(s_ids)} stable and {len(u_ids)} unstable seeds; both classes need "
            f"at least one (try adjusting v_stable={v_stable}, v_unstable={v_unstable}, "
            f"tail_fraction={tail_fraction})"
        )
    a_s, a_u = s_ids[0], u_ids[0]
    must = [(a_s, i) for i in s_ids[1:]] + [(a_u, i) for i in u_ids[1:]]
    cannot = [(a_s, a_u)] + [(a_u, i) for i in s_ids[1:]] + [(a_s, i) for i in u_ids[1:]]
    return ConstraintSet(frozenset(s_ids), frozenset(u_ids), frozenset(must), frozenset(cannot))


def ts_distance(a, b) -> float:
    """Euclidean distance over every time step and channel."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"series shapes differ: {a.shape} vs {b.shape}")
    per_dim = np.sqrt(np.sum((a - b) ** 2, axis=0)) if a.ndim > 1 else np.sqrt(np.sum((a - b) ** 2))
    return float(np.sqrt(np.sum(np.square(per_dim))))


def compute_centers(ds: Dataset, assignment: dict, k: int = 2) -> list[np.ndarray]:
    """Pointwise mean series of each cluster."""
    X = ds.series_array()
    ids = ds.ids
    centers = []
    for c in range(k):
        rows = [r for r, i in enumerate(ids) if assignment.get(i) == c]
        if not rows:
            raise EmptyClusterError(c)
        centers.append(X[rows].mean(axis=0))
    return centers


@dataclass
class ClusterResult:
    labels: dict
    iterations: int
    assignment: dict
    converged: bool
    centers: list = field(default_factory=list)
    reseeds: int = 0


def _assign_pass(ids, dists, must, cannot):
    assigned: dict[int, int] = {}
    for r in np.argsort(ids, kind="stable"):
        i = int(ids[r])
        blocking = []
        choice = None
        for c in np.argsort(dists[r], kind="stable"):
            c = int(c)
            bad = [("must", j) for j in must.get(i, ()) if j in assigned and assigned[j] != c]
            bad += [("cannot", j) for j in cannot.get(i, ()) if j in assigned and assigned[j] == c]
            if not bad:
                choice = c
                break
            blocking.extend(bad)
        if choice is None:
            raise InfeasibleAssignmentError(i, sorted(set(blocking)))
        assigned[i] = choice
    return assigned


def run_cop_kmeans(ds: Dataset, cs: ConstraintSet, k: int = 2, max_iter: int = 100,
                   seed: int = 0) -> ClusterResult:
    """Anchored two-cluster COP k-means.

    ``seed`` is accepted for interface symmetry with the other stages; the
    procedure is deterministic (anchored start, id-ordered passes).
    """
    if k != 2:
        raise ValueError("only k = 2 is supported")
    if not cs.seed_stable or not cs.seed_unstable:
        raise InsufficientSeedsError("both classes need at least one seed")
    ids = np.array(ds.ids)
    known = set(ids.tolist())
    linked = {i for p in cs.must_links | cs.cannot_links for i in p}
    if not linked <= known or not (cs.seed_stable | cs.seed_unstable) <= known:
        raise ConstraintError("constraints reference ids absent from the dataset")
    X = ds.series_array().reshape(len(ds), -1)
    row_of = {int(i): r for r, i in enumerate(ids)}
    centers = np.stack([X[row_of[cs.stable_anchor]], X[row_of[cs.unstable_anchor]]])
    must, cannot = cs.partners()

    prev = None
    assigned: dict[int, int] = {}
    iterations = 0
    reseeds = 0
    converged = False
    while iterations < max_iter:
        iterations += 1
        dists = np.sqrt(((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2))
        assigned = _assign_pass(ids, dists, must, cannot)
        vec = np.array([assigned[int(i)] for i in ids])
        counts = np.bincount(vec, minlength=k)
        if np.any(counts == 0):
            empty = int(np.argmin(counts))
            other = 1 - empty
            far = int(np.argmax(dists[:, other]))
            centers[empty] = X[far]
            reseeds += 1
            prev = vec
            continue
        if prev is not None and np.array_equal(vec, prev):
            converged = True
            break
        prev = vec
        centers = np.stack([X[vec == c].mean(axis=0) for c in range(k)])

    stable_cluster = assigned[cs.stable_anchor]
    labels = {int(i): (Label.STABLE if assigned[int(i)] == stable_cluster else Label.UNSTABLE)
              for i in ids}
    return ClusterResult(labels, iterations, assigned, converged,
                         [c.reshape(ds.m, ds.n_channels) for c in centers], reseeds)


def cop_kmeans(ds: Dataset, cs: ConstraintSet, k: int = 2, max_iter: int = 100,
               seed: int = 0) -> tuple[dict, int]:
    res = run_cop_kmeans(ds, cs, k, max_iter, seed)
    return res.labels, res.iterations


def violations(assignment: dict, cs: ConstraintSet) -> list:
    out = [("must", p) for p in cs.must_links if assignment[p[0]] != assignment[p[1]]]
    out += [("cannot", p) for p in cs.cannot_links if assignment[p[0]] == assignment[p[1]]]
    return out


def within_cluster_sse(X: np.ndarray, assignment_vec: np.ndarray, k: int = 2) -> float:
    total = 0.0
    for c in range(k):
        members = X[assignment_vec == c]
        if len(members):
            total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def apply_labels(ds: Dataset, labels: dict) -> Dataset:
    return ds.with_instances(inst.with_label(labels[inst.id]) for inst in ds.instances)

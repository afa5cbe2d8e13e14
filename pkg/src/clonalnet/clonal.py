"""Clonal selection machinery: affinity, affinity-proportional cloning,
inverse-affinity mutation, uniform crossover, threshold filtering, and
bounded per-class antibody memory pools. Also provides the standalone
population-based clonal selection procedure used as a reference
pattern-recognition demo.

Affinity maps cosine similarity into [0, 1] via (1 + cos) / 2 so that the
clone-count and mutation-rate formulas receive a bounded positive quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError, UndefinedAffinityError

# smallest normal float64: squared norms below this have underflowed and
# carry no usable direction information
_TINY_NORMAL = float(np.finfo(np.float64).tiny)


@dataclass
class Antibody:
    feature: np.ndarray
    class_label: int
    affinity_score: float


@dataclass
class MemoryPool:
    """Bounded per-class antibody set, kept sorted by descending score.

    Member feature arrays are treated as immutable once inside a pool; the
    affinity helpers cache a stacked matrix keyed on the members list.
    """

    class_label: int
    capacity: int
    members: list[Antibody] = field(default_factory=list)

    def best(self) -> Antibody | None:
        return self.members[0] if self.members else None


@dataclass(frozen=True)
class CloneConfig:
    eta: float = 5.0              # cloning constant
    alpha: float = 0.1            # mutation constant
    tau: float = 0.6              # acceptance threshold
    sigma: float = 0.1            # base mutation scale
    rate_cap: float = 1.0
    crossover_prob: float = 0.2
    memory_capacity: int = 30
    rng_seed: int = 0

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigurationError(f"eta must be >= 0, got {self.eta}")
        if self.alpha <= 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigurationError(f"tau must be in [0, 1], got {self.tau}")
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")
        if self.rate_cap <= 0:
            raise ConfigurationError(f"rate_cap must be > 0, got {self.rate_cap}")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ConfigurationError(
                f"crossover_prob must be in [0, 1], got {self.crossover_prob}"
            )
        if self.memory_capacity < 1:
            raise ConfigurationError(
                f"memory_capacity must be >= 1, got {self.memory_capacity}"
            )


# ---------------------------------------------------------------------------
# scalar operators
# ---------------------------------------------------------------------------

def affinity(v1: np.ndarray, v2: np.ndarray) -> float:
    """(1 + cosine(v1, v2)) / 2, in [0, 1].

    A single zero vector counts as orthogonal (0.5); two zero vectors have
    no defined direction and raise.
    """
    a = np.asarray(v1, dtype=np.float64)
    b = np.asarray(v2, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise DimensionError(
            f"affinity needs equal-width vectors, got {a.shape} and {b.shape}"
        )
    a_zero = not a.any()
    b_zero = not b.any()
    if a_zero and b_zero:
        raise UndefinedAffinityError("affinity of two zero vectors is undefined")
    if a_zero or b_zero:
        return 0.5
    aa = float(np.dot(a, a))
    bb = float(np.dot(b, b))
    denom_sq = aa * bb
    if denom_sq < _TINY_NORMAL or not math.isfinite(denom_sq):
        # squared norms of extreme-magnitude vectors leave the normal float
        # range even though the vectors are nonzero; cosine is scale
        # invariant, so renormalize by the largest component and retry
        a = a / np.abs(a).max()
        b = b / np.abs(b).max()
        aa = float(np.dot(a, a))
        bb = float(np.dot(b, b))
        denom_sq = aa * bb
    # sqrt of the product (not product of sqrts) keeps cos(v, v) exactly 1
    cos = float(np.dot(a, b) / np.sqrt(denom_sq))
    return (1.0 + min(1.0, max(-1.0, cos))) / 2.0


def clone_count(a: float, eta: float, tau: float) -> int:
    """round(eta * a), floored at 0 below the threshold, at least 1 above it.

    eta == 0 disables cloning entirely (degenerate expansion).
    """
    if a < tau or eta == 0.0:
        return 0
    return max(1, int(math.floor(eta * a + 0.5)))


def mutation_rate(a: float, alpha: float, rate_cap: float) -> float:
    """min(alpha / a, rate_cap); saturates at rate_cap as a -> 0."""
    if a <= 0.0:
        return rate_cap
    return min(alpha / a, rate_cap)


def mutate(v: np.ndarray, rate: float, sigma: float,
           rng: np.random.Generator) -> np.ndarray:
    """Independent zero-mean Gaussian perturbation, std = rate * sigma."""
    v = np.asarray(v, dtype=np.float64)
    return v + rng.normal(scale=rate * sigma, size=v.shape)


def crossover(v1: np.ndarray, v2: np.ndarray,
              rng: np.random.Generator) -> np.ndarray:
    """Uniform crossover: each component from v1 or v2 with probability 1/2."""
    a = np.asarray(v1, dtype=np.float64)
    b = np.asarray(v2, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(
            f"crossover needs equal widths, got {a.shape} and {b.shape}"
        )
    take_first = rng.random(a.shape) < 0.5
    return np.where(take_first, a, b)


# ---------------------------------------------------------------------------
# memory pools
# ---------------------------------------------------------------------------

def _pool_matrix(pool: MemoryPool) -> tuple[np.ndarray, np.ndarray]:
    # stacked member features + norms, cached per members list
    cache = getattr(pool, "_matrix_cache", None)
    if cache is None or cache[2] is not pool.members \
            or cache[0].shape[0] != len(pool.members):
        matrix = np.stack([ab.feature for ab in pool.members])
        sq_norms = np.einsum("ij,ij->i", matrix, matrix)
        cache = (matrix, sq_norms, pool.members)
        pool._matrix_cache = cache
    return cache[0], cache[1]


def pool_affinities(features: np.ndarray, pool: MemoryPool) -> np.ndarray:
    """Affinity of each row of ``features`` against every pool member.

    Shape (n, len(members)); agrees with the scalar ``affinity`` entry by
    entry, including the zero-vector conventions.
    """
    if not pool.members:
        raise ConfigurationError(
            f"memory pool for class {pool.class_label} is empty"
        )
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    matrix, sq_norms = _pool_matrix(pool)
    if feats.shape[1] != matrix.shape[1]:
        raise DimensionError(
            f"feature width {feats.shape[1]} does not match pool width "
            f"{matrix.shape[1]}"
        )
    query_sq = np.einsum("ij,ij->i", feats, feats)
    q_zero = ~feats.any(axis=1)
    m_zero = ~matrix.any(axis=1)
    if q_zero.any() and m_zero.any():
        raise UndefinedAffinityError("affinity of two zero vectors is undefined")
    # inf/nan intermediates are expected for extreme magnitudes and are
    # repaired below, so keep numpy quiet about them here
    with np.errstate(invalid="ignore", over="ignore"):
        denom_sq = np.outer(query_sq, sq_norms)
        safe = np.sqrt(np.where(denom_sq > 0.0, denom_sq, 1.0))
        cos = np.where(denom_sq > 0.0, (feats @ matrix.T) / safe, 0.0)
    out = (1.0 + np.clip(cos, -1.0, 1.0)) / 2.0
    # pairs of nonzero vectors whose norm product left the normal float
    # range go through the scalar path, which renormalizes
    degenerate = (denom_sq < _TINY_NORMAL) | ~np.isfinite(denom_sq)
    degenerate &= ~(q_zero[:, None] | m_zero[None, :])
    if degenerate.any():
        for i, j in zip(*np.nonzero(degenerate)):
            out[i, j] = affinity(feats[i], matrix[j])
    return out


def best_match_affinity(feature: np.ndarray, pool: MemoryPool) -> float:
    """Affinity against the pool member that matches ``feature`` best."""
    return float(pool_affinities(np.asarray(feature)[None, :], pool).max())


def update_memory(pool: MemoryPool, candidates: list[Antibody],
                  m: int | None = None) -> MemoryPool:
    """Top-m merge of existing members and candidates by affinity score.

    Elitist: on score ties an existing member outranks any candidate, so a
    member is only ever evicted by a strictly better candidate.
    """
    capacity = pool.capacity if m is None else m
    for cand in candidates:
        if cand.class_label != pool.class_label:
            raise ConfigurationError(
                f"candidate class {cand.class_label} does not match pool "
                f"class {pool.class_label}"
            )
    ranked = sorted(
        [(ab, 0, i) for i, ab in enumerate(pool.members)]
        + [(ab, 1, i) for i, ab in enumerate(candidates)],
        key=lambda t: (-t[0].affinity_score, t[1], t[2]),
    )
    members = [ab for ab, _, _ in ranked[:capacity]]
    return MemoryPool(class_label=pool.class_label, capacity=capacity,
                      members=members)


# ---------------------------------------------------------------------------
# clone generation over a training batch
# ---------------------------------------------------------------------------

def generate_clones(batch, pools: dict[int, MemoryPool], config: CloneConfig,
                    rng: np.random.Generator):
    """Expand a batch of (feature, label, parent_ref) tuples into clones.

    Per feature: affinity against its best-matching same-class pool member
    sets the clone count and mutation rate; each clone is optionally crossed
    with a random same-class batch feature before mutation; clones whose
    affinity back to the pool falls below the acceptance threshold are
    discarded. Returns (clone_feature, label, parent_ref) tuples.
    """
    batch = list(batch)
    by_class: dict[int, list[np.ndarray]] = {}
    for feature, label, _ in batch:
        by_class.setdefault(int(label), []).append(feature)

    clones = []
    for feature, label, parent_ref in batch:
        label = int(label)
        if label not in pools:
            raise ConfigurationError(f"no memory pool for class {label}")
        pool = pools[label]
        a = best_match_affinity(feature, pool)
        n_clones = clone_count(a, config.eta, config.tau)
        if n_clones == 0:
            continue
        rate = mutation_rate(a, config.alpha, config.rate_cap)
        peers = by_class[label]
        proposals = []
        for _ in range(n_clones):
            base = feature
            if config.crossover_prob > 0 and rng.random() < config.crossover_prob:
                partner = peers[int(rng.integers(len(peers)))]
                base = crossover(base, partner, rng)
            proposals.append(mutate(base, rate, config.sigma, rng))
        kept = pool_affinities(np.stack(proposals), pool).max(axis=1) >= config.tau
        clones.extend((clone, label, parent_ref)
                      for clone, ok in zip(proposals, kept) if ok)
    return clones


class ClonalExpander:
    """Stateful training hook: bootstraps per-class pools from the first
    batch of each class, expands every batch into clones, and folds both
    originals and accepted clones back into the pools."""

    def __init__(self, config: CloneConfig):
        self.config = config
        self.pools: dict[int, MemoryPool] = {}
        self.rng = np.random.default_rng(config.rng_seed)

    def _bootstrap(self, features, labels) -> None:
        for label in sorted(set(int(l) for l in labels)):
            if label in self.pools and self.pools[label].members:
                continue
            seeds = [features[i] for i in range(len(labels))
                     if int(labels[i]) == label]
            centroid = np.mean(seeds, axis=0)
            candidates = [
                Antibody(feature=np.array(s), class_label=label,
                         affinity_score=affinity(s, centroid))
                for s in seeds
            ]
            empty = MemoryPool(class_label=label,
                               capacity=self.config.memory_capacity)
            self.pools[label] = update_memory(empty, candidates)

    def __call__(self, features, labels):
        self._bootstrap(features, labels)
        batch = [(features[i], int(labels[i]), i) for i in range(len(labels))]
        clones = generate_clones(batch, self.pools, self.config, self.rng)

        by_class: dict[int, list[np.ndarray]] = {}
        for clone_feature, label, _ in clones:
            by_class.setdefault(label, []).append(clone_feature)
        for feature, label, _ in batch:
            by_class.setdefault(label, []).append(np.array(feature))
        for label, candidate_features in sorted(by_class.items()):
            pool = self.pools[label]
            scores = pool_affinities(np.stack(candidate_features), pool).max(axis=1)
            candidates = [
                Antibody(feature=f, class_label=label, affinity_score=float(s))
                for f, s in zip(candidate_features, scores)
            ]
            self.pools[label] = update_memory(pool, candidates)
        return clones


# ---------------------------------------------------------------------------
# pool serialization (versioned text format)
# ---------------------------------------------------------------------------

POOL_FORMAT_HEADER = "clonalnet-pools v1"


def save_pools(pools: dict[int, MemoryPool], path) -> None:
    lines = [POOL_FORMAT_HEADER]
    for label in sorted(pools):
        pool = pools[label]
        lines.append(f"class {pool.class_label} {len(pool.members)} {pool.capacity}")
        for ab in pool.members:
            coords = " ".join(repr(float(x)) for x in ab.feature)
            lines.append(f"{ab.affinity_score!r} {coords}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_pools(path) -> dict[int, MemoryPool]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != POOL_FORMAT_HEADER:
        raise ConfigurationError(
            f"unrecognized pool file header: {lines[0] if lines else '<empty>'}"
        )
    pools: dict[int, MemoryPool] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "class":
            raise ConfigurationError(f"malformed pool class line: {lines[i]!r}")
        label, count, capacity = int(parts[1]), int(parts[2]), int(parts[3])
        members = []
        for j in range(i + 1, i + 1 + count):
            fields = lines[j].split()
            members.append(Antibody(
                feature=np.array([float(x) for x in fields[1:]]),
                class_label=label,
                affinity_score=float(fields[0]),
            ))
        pools[label] = MemoryPool(class_label=label, capacity=capacity,
                                  members=members)
        i += 1 + count
    return pools


# ---------------------------------------------------------------------------
# standalone clonal selection reference procedure
# ---------------------------------------------------------------------------

@dataclass
class ClonalgResult:
    population: np.ndarray        # (pop_size, dim)
    memory_vectors: np.ndarray    # (m, dim), best first
    memory_scores: np.ndarray     # (m,)
    history: list[float]          # best memory score per generation


def clonalg_run(patterns, population_size: int, generations: int,
                config: CloneConfig, rng: np.random.Generator,
                select_n: int = 10) -> ClonalgResult:
    """Population-based clonal selection against a set of target patterns.

    Per generation and pattern: score the whole population, select the
    ``select_n`` best, clone each proportionally to affinity, mutate each
    clone at the inverse-affinity rate, reinsert, and refresh an elitist
    top-m memory set. The history records the best memory score per
    generation and is non-decreasing by construction.
    """
    patterns = [np.asarray(p, dtype=np.float64).ravel() for p in patterns]
    if not patterns:
        raise ConfigurationError("clonalg_run requires at least one pattern")
    if population_size < select_n:
        raise ConfigurationError(
            f"population_size {population_size} < select_n {select_n}"
        )
    if generations < 1:
        raise ConfigurationError(f"generations must be >= 1, got {generations}")
    dim = patterns[0].shape[0]
    population = rng.uniform(0.0, 1.0, size=(population_size, dim))

    mem_vectors: list[np.ndarray] = []
    mem_scores: list[float] = []
    history: list[float] = []

    def remember(vec: np.ndarray, score: float) -> None:
        mem_vectors.append(vec.copy())
        mem_scores.append(score)
        order = sorted(range(len(mem_scores)), key=lambda k: -mem_scores[k])
        keep = order[:config.memory_capacity]
        mem_vectors[:] = [mem_vectors[k] for k in keep]
        mem_scores[:] = [mem_scores[k] for k in keep]

    for _ in range(generations):
        for pattern in patterns:
            scores = np.array([affinity(ind, pattern) for ind in population])
            best_idx = np.argsort(-scores)[:select_n]
            offspring = []
            offspring_scores = []
            for idx in best_idx:
                a = float(scores[idx])
                rate = mutation_rate(a, config.alpha, config.rate_cap)
                for _ in range(clone_count(a, config.eta, 0.0)):
                    child = mutate(population[idx], rate, config.sigma, rng)
                    offspring.append(child)
                    offspring_scores.append(affinity(child, pattern))
            merged = np.vstack([population] + [np.array(offspring)]) \
                if offspring else population
            merged_scores = np.concatenate([scores, np.array(offspring_scores)]) \
                if offspring else scores
            keep = np.argsort(-merged_scores)[:population_size]
            population = merged[keep]
            top = keep[0]
            remember(merged[top], float(merged_scores[top]))
        history.append(mem_scores[0])

    return ClonalgResult(
        population=population,
        memory_vectors=np.array(mem_vectors),
        memory_scores=np.array(mem_scores),
        history=history,
    )

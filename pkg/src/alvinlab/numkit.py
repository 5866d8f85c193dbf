"""Deterministic numerical primitives used by every selection strategy.

All randomness flows through :class:`RngState`, a small xoshiro256** generator
(seeded via splitmix64) implemented here so that a fixed seed reproduces the
exact same stream across runs and platforms. numpy is used for vector math
only, never for random number generation.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateInputError, UsageError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_LN4 = 1.3862943611198906
_BB_CONST = 2.6094379124341003  # 1 + ln(5)


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns (next_state, output)."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class RngState:
    """xoshiro256** stream with splitmix64 seeding and keyed child derivation.

    Identical seed + identical call sequence gives an identical stream.
    A state is single-owner: concurrent tasks must each receive their own
    ``child(...)`` state, which depends only on the parent seed and the tag
    path, never on how much of the parent stream was consumed.
    """

    __slots__ = ("seed", "_s", "_spare_normal")

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        s = self.seed
        words = []
        for _ in range(4):
            s, out = _splitmix64(s)
            words.append(out)
        self._s = words
        self._spare_normal: float | None = None

    def child(self, *tags: int) -> "RngState":
        """Derive an independently seeded generator from (seed, *tags)."""
        s = self.seed
        for t in tags:
            _, s = _splitmix64((s ^ (t & _MASK64)) & _MASK64)
        return RngState(s)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 1.1102230246251565e-16  # 2**-53

    def below(self, n: int) -> int:
        """Unbiased uniform integer in [0, n)."""
        if n <= 0:
            raise UsageError(f"below() needs n >= 1, got {n}")
        limit = ((1 << 64) // n) * n
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def normal(self) -> float:
        """Standard normal draw (Box-Muller, spare value cached)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = 1.0 - self.random()  # (0, 1], keeps log finite
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = list(range(n))
        self.shuffle(idx)
        return np.array(idx, dtype=np.int64)

    def sample(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), uniform, in draw order."""
        if k > n:
            raise UsageError(f"cannot sample {k} distinct items from {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


def as_vector(values, *, name: str = "vector") -> np.ndarray:
    """Validate and return a 1-D float64 vector (finite entries, dim > 0)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] == 0:
        raise UsageError(f"{name} must be 1-D and non-empty, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise UsageError(f"{name} contains non-finite entries")
    return v


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.sqrt(np.sum(a * a)))
    nb = float(np.sqrt(np.sum(b * b)))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity undefined for zero-norm input")
    c = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, c))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax (max-subtracted) over a 1-D logit vector."""
    v = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise UsageError("softmax requires finite logits")
    shifted = v - np.max(v)
    e = np.exp(shifted)
    return e / np.sum(e)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax for a 2-D logit matrix."""
    m = np.asarray(logits, dtype=np.float64)
    shifted = m - np.max(m, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy -sum(p ln p) with 0*ln(0) := 0."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return -np.sum(terms, axis=1)


def _beta_johnk(rng: RngState, alpha: float, beta: float) -> float:
    # Acceptance rate degrades for large shapes; used only when min(shape) <= 1.
    inv_a = 1.0 / alpha
    inv_b = 1.0 / beta
    while True:
        x = rng.random() ** inv_a
        y = rng.random() ** inv_b
        s = x + y
        if 0.0 < s <= 1.0:
            return x / s


def _beta_cheng_bb(rng: RngState, alpha: float, beta: float) -> float:
    # Cheng's BB rejection algorithm, valid for min(alpha, beta) > 1.
    a0 = min(alpha, beta)
    b0 = max(alpha, beta)
    total = a0 + b0
    scale = math.sqrt((total - 2.0) / (2.0 * a0 * b0 - total))
    gamma = a0 + 1.0 / scale
    while True:
        u1 = rng.random()
        u2 = rng.random()
        if u1 <= 0.0 or u1 >= 1.0:
            continue
        v = scale * math.log(u1 / (1.0 - u1))
        w = a0 * math.exp(v) if v < 709.0 else math.inf
        z = u1 * u1 * u2
        r = gamma * v - _LN4
        s = a0 + r - w
        if s + _BB_CONST >= 5.0 * z:
            break
        t = math.log(z)
        if s >= t:
            break
        if r + total * math.log(total / (b0 + w)) >= t:
            break
    x = w / (b0 + w)
    return x if alpha == a0 else 1.0 - x


def sample_beta(rng: RngState, alpha: float, beta: float) -> float:
    """One Beta(alpha, beta) draw in [0, 1], consuming only uniform draws."""
    if not (alpha > 0.0 and beta > 0.0):
        raise UsageError(f"Beta shapes must be positive, got ({alpha}, {beta})")
    if min(alpha, beta) > 1.0:
        return _beta_cheng_bb(rng, alpha, beta)
    return _beta_johnk(rng, alpha, beta)


def _sq_dists_to(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    d = points - x
    return np.sum(d * d, axis=1)


def kmeans_pp_init(points: np.ndarray, k: int, rng: RngState) -> list[int]:
    """k-means++ seeding: D^2-weighted sequence of k distinct point indices.

    The first index is uniform; each later one is drawn with probability
    proportional to its squared distance to the nearest already-chosen point.
    If all remaining weights are zero (duplicate points), the next index is
    uniform over the unchosen ones.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k > n:
        raise UsageError(f"k={k} exceeds number of points {n}")
    if k <= 0:
        raise UsageError("k must be >= 1")
    first = rng.below(n)
    chosen = [first]
    if k == 1:
        return chosen
    d2 = _sq_dists_to(pts, pts[first])
    d2[first] = 0.0
    for _ in range(k - 1):
        total = float(np.sum(d2))
        if total <= 0.0:
            remaining = [i for i in range(n) if i not in set(chosen)]
            nxt = remaining[rng.below(len(remaining))]
        else:
            r = rng.random() * total
            cum = np.cumsum(d2)
            nxt = int(np.searchsorted(cum, r, side="right"))
            nxt = min(nxt, n - 1)
            while d2[nxt] == 0.0:  # guard against landing on a zero-width bin
                nxt += 1
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists_to(pts, pts[nxt]))
        d2[nxt] = 0.0
    return chosen


def lloyd_kmeans(
    points: np.ndarray,
    k: int,
    init: list[int],
    max_iters: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's k-means from the given initial point indices.

    Returns (centroids, assignment). Assignment ties go to the lowest cluster
    index. An empty cluster is re-seeded at the point currently farthest from
    its own centroid, which keeps the objective non-increasing.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 1:
        raise UsageError("k must be >= 1")
    if len(init) != k or len(set(init)) != k:
        raise UsageError("init must contain k distinct point indices")
    centroids = pts[list(init)].copy()
    assignment = _assign(pts, centroids)
    for _ in range(max_iters):
        new_centroids = centroids.copy()
        empty = []
        for c in range(k):
            members = assignment == c
            if np.any(members):
                new_centroids[c] = pts[members].mean(axis=0)
            else:
                empty.append(c)
        if empty:
            dists = np.sqrt(
                np.sum((pts - new_centroids[assignment]) ** 2, axis=1)
            )
            taken: set[int] = set()
            for c in empty:
                order = np.argsort(-dists, kind="stable")
                far = next(int(i) for i in order if int(i) not in taken)
                taken.add(far)
                new_centroids[c] = pts[far]
        new_assignment = _assign(pts, new_centroids)
        converged = not empty and np.array_equal(new_assignment, assignment)
        centroids = new_centroids
        assignment = new_assignment
        if converged:
            break
    return centroids, assignment


def _assign(pts: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared distances; modest sizes only, computed blockwise
    n = pts.shape[0]
    k = centroids.shape[0]
    out = np.empty(n, dtype=np.int64)
    block = max(1, int(2_000_000 // max(1, k)))
    for start in range(0, n, block):
        chunk = pts[start : start + block]
        d2 = (
            np.sum(chunk * chunk, axis=1)[:, None]
            - 2.0 * chunk @ centroids.T
            + np.sum(centroids * centroids, axis=1)[None, :]
        )
        out[start : start + block] = np.argmin(d2, axis=1)
    return out


def kmeans_objective(points: np.ndarray, centroids: np.ndarray, assignment: np.ndarray) -> float:
    pts = np.asarray(points, dtype=np.float64)
    d = pts - centroids[assignment]
    return float(np.sum(d * d))

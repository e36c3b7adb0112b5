"""Independent reference implementations used only by the test suite.

Deliberately written with different algorithms and data structures than
the library (union-find instead of label flooding, dict-based BFS instead
of array kernels) so agreement between the two is meaningful.
"""
from __future__ import annotations

from collections import deque

import numpy as np


def union_find_regions(passable: np.ndarray) -> int:
    """4-connected component count via disjoint sets."""
    passable = np.asarray(passable, dtype=bool)
    h, w = passable.shape
    parent: dict[tuple[int, int], tuple[int, int]] = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for r in range(h):
        for c in range(w):
            if passable[r, c]:
                parent[(r, c)] = (r, c)
    for r in range(h):
        for c in range(w):
            if not passable[r, c]:
                continue
            if r + 1 < h and passable[r + 1, c]:
                union((r, c), (r + 1, c))
            if c + 1 < w and passable[r, c + 1]:
                union((r, c), (r, c + 1))
    return len({find(x) for x in parent})


def dict_bfs(passable: np.ndarray, sources: list[tuple[int, int]]) -> dict[tuple[int, int], int]:
    """Plain BFS distances from multiple sources; sources may sit on
    impassable cells (distance zero, expansion through passable only)."""
    passable = np.asarray(passable, dtype=bool)
    h, w = passable.shape
    dist: dict[tuple[int, int], int] = {}
    q: deque[tuple[int, int]] = deque()
    for s in sources:
        if s not in dist:
            dist[s] = 0
            q.append(s)
    while q:
        r, c = q.popleft()
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < h and 0 <= cc < w and passable[rr, cc] and (rr, cc) not in dist:
                dist[(rr, cc)] = dist[(r, c)] + 1
                q.append((rr, cc))
    return dist


def dist_dict_to_grid(passable: np.ndarray, dist: dict[tuple[int, int], int]) -> np.ndarray:
    """Dict BFS result as an int32 grid with -1 for unreached, matching the
    library's field convention (impassable source cells read 0)."""
    h, w = np.asarray(passable).shape
    out = np.full((h, w), -1, dtype=np.int32)
    for (r, c), d in dist.items():
        out[r, c] = d
    return out


def all_pairs_diameter(passable: np.ndarray) -> int:
    """Exact graph diameter of the passable subgraph (max over finite
    pairwise distances); 0 when nothing is passable."""
    passable = np.asarray(passable, dtype=bool)
    best = 0
    for r in range(passable.shape[0]):
        for c in range(passable.shape[1]):
            if passable[r, c]:
                d = dict_bfs(passable, [(r, c)])
                best = max(best, max(d.values()))
    return best


def endpoint_distance(
    passable: np.ndarray, sources: list[tuple[int, int]], target: tuple[int, int]
) -> int:
    """Source-to-target steps where both ends may be impassable entity
    cells; -1 when unreachable."""
    dist = dict_bfs(passable, sources)
    if target in dist:
        return dist[target]
    r, c = target
    h, w = np.asarray(passable).shape
    best = None
    for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
        if 0 <= rr < h and 0 <= cc < w and (rr, cc) in dist:
            d = dist[(rr, cc)] + 1
            best = d if best is None else min(best, d)
    return -1 if best is None else best


def corridor_map(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random spanning-tree corridor layout: the passable cells form an
    acyclic 4-connected graph, so a double BFS sweep finds the exact
    diameter."""
    passable = np.zeros((h, w), dtype=bool)
    start = (int(rng.integers(h)), int(rng.integers(w)))
    passable[start] = True

    def passable_neighbors(r, c):
        n = 0
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < h and 0 <= cc < w and passable[rr, cc]:
                n += 1
        return n

    frontier = {start}
    while frontier:
        candidates = set()
        for r, c in frontier:
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= rr < h and 0 <= cc < w and not passable[rr, cc]:
                    if passable_neighbors(rr, cc) == 1:
                        candidates.add((rr, cc))
        if not candidates:
            break
        ordered = sorted(candidates)
        take = rng.permutation(len(ordered))[: max(1, len(ordered) // 2)]
        frontier = set()
        for k in take:
            r, c = ordered[int(k)]
            # recheck: an earlier pick this round may have added a neighbor
            if not passable[r, c] and passable_neighbors(r, c) == 1:
                passable[r, c] = True
                frontier.add((r, c))
    return passable


def gae_reference(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Direct nested-loop expansion of the advantage recurrence."""
    t_len, b = rewards.shape
    adv = np.zeros((t_len, b), dtype=np.float64)
    for i in range(b):
        for t in range(t_len):
            acc = 0.0
            coef = 1.0
            for k in range(t, t_len):
                v_next = bootstrap[i] if k == t_len - 1 else values[k + 1, i]
                nonterm = 0.0 if dones[k, i] else 1.0
                delta = rewards[k, i] + gamma * v_next * nonterm - values[k, i]
                acc += coef * delta
                if dones[k, i]:
                    break
                coef *= gamma * lam
            adv[t, i] = acc
    return adv, adv + values

"""Exact minimum-weight perfect matching decoding.

Each fired detector is matched either to another fired detector (cost: the
shortest-path distance between them) or to the boundary (cost: its
shortest-path distance to the boundary node). A pair is only worth matching
when it is cheaper than sending both ends to the boundary, so the problem
splits into independent connected components over those useful pairs. Small
components are solved by dynamic programming over subsets. Larger ones go to a
blossom matcher on the usual boundary-twin graph, with twin-twin edges only
along useful pairs. Some optimum only uses useful pairs, so this stays exact.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
from typing import Optional, Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from qecstab.blossom import match_with_boundary
from qecstab.dem import DecodingGraph
from qecstab.sim import DetectionData

# Components up to this size are solved by subset dynamic programming.
DP_LIMIT = 8


class DecodeError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Matching:
    """An optimal matching of one syndrome.

    `pairs` holds (a, b) detector pairs, with b equal to the boundary node for
    detectors matched to the boundary.
    """
    pairs: tuple[tuple[int, int], ...]
    weight: float
    prediction: np.ndarray  # observable flips, bool


class PathTable:
    """Shortest-path distances and path observable masks, filled lazily per source node."""

    def __init__(self, graph: DecodingGraph):
        self.graph = graph
        n = graph.num_nodes
        self._csr = scipy.sparse.csr_matrix(
            (graph.weight, (graph.u, graph.v)), shape=(n, n))
        self._edge_mask = {}
        for a, b, m in zip(graph.u.tolist(), graph.v.tolist(), graph.mask.tolist()):
            self._edge_mask[(a, b)] = m
            self._edge_mask[(b, a)] = m
        self.dist = np.full((n, n), np.inf)
        self.mask = np.zeros((n, n), np.int64)
        self._done = np.zeros(n, bool)

    def ensure(self, sources) -> None:
        sources = np.asarray(sources, np.intp)
        todo = np.unique(sources[~self._done[sources]])
        if not todo.size:
            return
        dist, pred = scipy.sparse.csgraph.dijkstra(
            self._csr, directed=False, indices=todo, return_predecessors=True)
        for row, s in enumerate(todo.tolist()):
            d, pr = dist[row], pred[row]
            masks = np.zeros(len(d), np.int64)
            for v in np.argsort(d, kind='stable').tolist():
                u = pr[v]
                if u >= 0:
                    masks[v] = masks[u] ^ self._edge_mask[(int(u), v)]
            self.dist[s] = d
            self.mask[s] = masks
            self._done[s] = True

    def distance(self, a: int, b: int) -> float:
        self.ensure([a])
        return float(self.dist[a, b])

    def path_mask(self, a: int, b: int) -> int:
        self.ensure([a])
        return int(self.mask[a, b])


def all_pairs_distances(graph: DecodingGraph, sources: Sequence[int],
                        table: Optional[PathTable] = None) -> tuple[np.ndarray, np.ndarray]:
    """Distances and path masks among `sources` plus the boundary.

    Returns two (k, k+1) arrays; column k is the boundary. Raises DecodeError when
    a source reaches neither the boundary nor any other source.
    """
    table = table or PathTable(graph)
    src = np.asarray(sources, np.intp)
    table.ensure(src)
    cols = np.append(src, graph.boundary)
    dist = table.dist[np.ix_(src, cols)]
    mask = table.mask[np.ix_(src, cols)]
    for i in range(len(src)):
        reach = np.isfinite(dist[i])
        reach[i] = False
        if not reach.any():
            raise DecodeError(f'detector {src[i]} cannot reach the boundary or another fired detector')
    return dist, mask


class Decoder:
    """Matching decoder over one DecodingGraph, caching paths and repeated syndromes."""

    def __init__(self, graph: DecodingGraph, *, precompute: bool = False, cache_size: int = 1 << 16):
        self.graph = graph
        self.table = PathTable(graph)
        if precompute:
            self.table.ensure(np.arange(graph.num_nodes))
        self._cache: dict[bytes, Matching] = {}
        self._cache_size = cache_size

    def match(self, fired: Sequence[int]) -> Matching:
        g = self.graph
        f = np.unique(np.asarray(fired, np.intp))
        if f.size and (f[0] < 0 or f[-1] >= g.num_detectors):
            raise DecodeError(f'fired detector index out of range 0..{g.num_detectors - 1}')
        key = f.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        result = self._match(f)
        if len(self._cache) < self._cache_size:
            self._cache[key] = result
        return result

    def _match(self, f: np.ndarray) -> Matching:
        g = self.graph
        k = len(f)
        if k == 0:
            return Matching((), 0.0, np.zeros(g.num_observables, bool))
        self.table.ensure(f)
        cols = np.append(f, g.boundary)
        dist = self.table.dist[np.ix_(f, cols)]
        mask = self.table.mask[np.ix_(f, cols)]
        mate, total = match_with_boundary(
            np.ascontiguousarray(dist[:, :k]), np.ascontiguousarray(dist[:, k]), DP_LIMIT)
        if not np.isfinite(total):
            raise DecodeError(f'fired detectors {f.tolist()} cannot be perfectly matched')
        flips = 0
        pairs = []
        for i, j in enumerate(mate.tolist()):
            if j < 0:
                flips ^= int(mask[i, k])
                pairs.append((int(f[i]), g.boundary))
            elif i < j:
                flips ^= int(mask[i, j])
                pairs.append((int(f[i]), int(f[j])))
        prediction = np.array([(flips >> o) & 1 for o in range(g.num_observables)], bool)
        return Matching(tuple(pairs), float(total), prediction)

    def decode(self, fired: Sequence[int]) -> np.ndarray:
        return self.match(fired).prediction


def decode_shot(graph: DecodingGraph, fired: Sequence[int], decoder: Optional[Decoder] = None) -> np.ndarray:
    """Predicted observable flips for one syndrome."""
    return (decoder or Decoder(graph)).decode(fired)


@dataclasses.dataclass
class BatchResult:
    predictions: np.ndarray  # (shots, num_observables) bool
    shots: int
    errors: int

    def summary(self) -> str:
        return f'shots={self.shots} errors={self.errors}'


# Shots handed to a worker at a time.
CHUNK_SHOTS = 1 << 14


def _decode_chunk(args) -> np.ndarray:
    graph, data, start, stop = args
    decoder = _worker_decoder(graph)
    out = np.zeros((stop - start, graph.num_observables), bool)
    for s, fired in enumerate(data.fired(start, stop)):
        out[s] = decoder.decode(fired)
    return out


_WORKER: dict[int, Decoder] = {}


def _worker_decoder(graph: DecodingGraph) -> Decoder:
    d = _WORKER.get(id(graph))
    if d is None or d.graph is not graph:
        _WORKER.clear()
        d = _WORKER[id(graph)] = Decoder(graph)
    return d


def decode_batch(graph: DecodingGraph, data: DetectionData, *, workers: int = 1,
                 decoder: Optional[Decoder] = None) -> BatchResult:
    """Decodes every shot; a shot is a logical error when any predicted flip is wrong."""
    if data.num_detectors != graph.num_detectors:
        raise DecodeError(
            f'data has {data.num_detectors} detectors but the graph has {graph.num_detectors}')
    if data.num_observables != graph.num_observables:
        raise DecodeError(
            f'data has {data.num_observables} observables but the graph has {graph.num_observables}')
    bounds = [(s, min(s + CHUNK_SHOTS, data.shots)) for s in range(0, data.shots, CHUNK_SHOTS)]
    if workers > 1 and len(bounds) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, len(bounds))) as pool:
            parts = list(pool.map(_decode_chunk, [(graph, data, a, b) for a, b in bounds]))
    else:
        decoder = decoder or Decoder(graph)
        parts = []
        for a, b in bounds:
            out = np.zeros((b - a, graph.num_observables), bool)
            for s, fired in enumerate(data.fired(a, b)):
                out[s] = decoder.decode(fired)
            parts.append(out)
    predictions = np.concatenate(parts) if parts else np.zeros((0, graph.num_observables), bool)
    actual = data.observable_bits()
    errors = int(np.any(predictions != actual, axis=1).sum())
    return BatchResult(predictions, data.shots, errors)

"""Connection-aware retrieval: neighbor segment profiles and utility ranking.

A user's profile weighs the segments their connections sit in: segments
holding at least `phi` of the user's connections survive the cut, and each
survivor is weighted by its share of the retained connections, rounded to
tenths. Shares and the phi cut use exact integer arithmetic so e.g. a 10%
threshold on 3 of 30 neighbors behaves exactly, with .x5 shares rounding
away from zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .data import BusError, DataError
from .ranking import RankedList
from .retrieval import NodeCatalog, StrippedTree


class SocialError(BusError):
    """Bad social graph input or an unresolvable profile."""


class SocialGraph:
    """Undirected connection graph; parallel edges and self-loops are dropped."""

    def __init__(self, edges: Iterable[tuple[str, str]] = ()):
        self._adj: dict[str, set] = {}
        for a, b in edges:
            self.add_edge(a, b)

    def add_edge(self, a: str, b: str) -> None:
        if not a or not b:
            raise SocialError("edge endpoints must be non-empty user ids")
        if a == b:
            return
        self._adj.setdefault(a, set()).add(b)
        self._adj.setdefault(b, set()).add(a)

    def neighbors(self, user_id: str) -> list[str]:
        return sorted(self._adj.get(user_id, ()))

    def edges(self):
        """Each undirected edge once, as sorted (a, b) pairs in sorted order."""
        for a in sorted(self._adj):
            for b in sorted(self._adj[a]):
                if a < b:
                    yield a, b

    def degree(self, user_id: str) -> int:
        return len(self._adj.get(user_id, ()))

    @property
    def n_users(self) -> int:
        return len(self._adj)

    @property
    def n_edges(self) -> int:
        return sum(len(v) for v in self._adj.values()) // 2


def load_edges(path) -> SocialGraph:
    """Read a delimited edge list with columns user_a, user_b."""
    path = Path(path)
    delimiter = "\t" if path.suffix.lower() in (".tsv", ".tab") else ","
    graph = SocialGraph()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            return graph
        missing = [c for c in ("user_a", "user_b") if c not in header]
        if missing:
            raise SocialError(f"{path}: missing required columns: {missing}")
        ca, cb = header.index("user_a"), header.index("user_b")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SocialError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                graph.add_edge(row[ca], row[cb])
            except SocialError as exc:
                raise SocialError(f"{path}: line {lineno}: {exc}") from None
    return graph


def _round_tenths(count: int, total: int) -> float:
    """count/total rounded to one decimal, halves away from zero, exactly."""
    tenths, rem = divmod(count * 10, total)
    if 2 * rem >= total:
        tenths += 1
    return tenths / 10.0


@dataclass(frozen=True)
class ConnectionProfile:
    """Where one user's connections live: (segment id, weight) pairs sorted
    by segment id, weights in tenths of the user's retained connections."""

    owner: str
    own_segment: int
    weighted_segments: tuple = ()

    def key(self) -> str:
        """Canonical string: equal keys mean identical retrieval output."""
        parts = [f"{sid}:{w:.1f}" for sid, w in self.weighted_segments]
        return f"own:{self.own_segment}|" + ",".join(parts)

    def weight_of(self, segment_id: int) -> float:
        for sid, w in self.weighted_segments:
            if sid == segment_id:
                return w
        return 0.0


def connection_segments(graph: SocialGraph, user_id: str,
                        segment_of: Mapping[str, int],
                        phi: float = 0.1) -> ConnectionProfile:
    """Profile of a user's connections.

    A segment survives when it holds at least phi of the user's connections;
    each survivor is weighted by its share of the retained connections,
    rounded to tenths. Neighbors without a segment assignment count toward
    the phi cut but toward no segment; shares rounding to 0.0 are dropped.
    """
    if user_id not in segment_of:
        raise SocialError(f"user {user_id!r} has no segment assignment")
    phi_frac = Fraction(str(phi))
    if not (0 <= phi_frac <= 1):
        raise SocialError(f"phi must be within [0, 1], got {phi}")
    counts: dict[int, int] = {}
    for neighbor in graph.neighbors(user_id):
        segment = segment_of.get(neighbor)
        if segment is not None:
            counts[segment] = counts.get(segment, 0) + 1
    degree = graph.degree(user_id)
    num, den = phi_frac.numerator, phi_frac.denominator
    retained = {s: c for s, c in counts.items()
                if c * den >= degree * num}  # count/degree >= phi, exactly
    total = sum(retained.values())
    kept = []
    for segment in sorted(retained):
        weight = _round_tenths(retained[segment], total)
        if weight > 0.0:
            kept.append((segment, weight))
    return ConnectionProfile(user_id, segment_of[user_id], tuple(kept))


def utility_rank(profile: ConnectionProfile, catalog: NodeCatalog,
                 stripped: StrippedTree, k: Optional[int] = None,
                 combine: str = "max") -> RankedList:
    """Top-k items by connection-boosted utility.

    Every source segment contributes score * (1 + weight) — weight 0 for the
    user's own segment — and an item's utility is the max (or sum) over its
    sources. With no qualifying connections this reduces exactly to the
    user's own segment list.
    """
    if combine not in ("max", "sum"):
        raise SocialError(f"combine must be 'max' or 'sum', got {combine!r}")
    k = catalog.k if k is None else k
    sources: list[tuple[int, float]] = [(profile.own_segment, 0.0)]
    for sid, w in profile.weighted_segments:
        if sid != profile.own_segment:
            sources.append((sid, w))
    utility: dict[str, float] = {}
    for segment_id, weight in sources:
        serving = stripped.serving_node(segment_id)
        for item, score in catalog.list_for(serving):
            boosted = score * (1.0 + weight)
            if combine == "max":
                current = utility.get(item)
                if current is None or boosted > current:
                    utility[item] = boosted
            else:
                utility[item] = utility.get(item, 0.0) + boosted
    ranked = sorted(utility.items(), key=lambda e: (-e[1], e[0]))
    return RankedList(tuple(ranked[:k]))

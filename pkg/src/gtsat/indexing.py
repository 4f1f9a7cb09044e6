"""Retrieval structures for saturation.

A set-trie over polarized relation clusters answers subsumption-candidate
queries (which stored entries could subsume / be subsumed by a given one),
and relation maps / a path index answer unification-partner queries.  All
queries over-approximate: no genuinely relevant entry is ever missed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .deps import Dependency, Rule, SignatureStats, TGD
from .terms import Atom, Const, Fn, Var

BODY, HEAD = 0, 1


@dataclass(frozen=True)
class ClusterMap:
    """Assignment of polarized relation symbols to clusters of one polarity."""

    body_cluster: dict[str, int]
    head_cluster: dict[str, int]
    order: tuple[tuple[int, int], ...]  # (polarity, cluster) in index order

    @property
    def positions(self) -> dict[tuple[int, int], int]:
        return {sym: i for i, sym in enumerate(self.order)}


def compute_clusters(stats: SignatureStats, k: int | None = None) -> ClusterMap:
    """Balance symbols over k same-polarity clusters by descending frequency.

    The default cluster count is ceil(sqrt(#relations)), clamped to [1, 64];
    any k yields correct retrieval, only index fan-out changes.
    """
    relations = sorted(stats.relations)
    if k is None:
        k = 1 if not relations else min(64, math.isqrt(len(relations) - 1) + 1)
    if k < 1:
        raise ValueError("cluster count must be at least 1")

    def assign(freq: dict[str, int]) -> dict[str, int]:
        loads = [0] * k
        out: dict[str, int] = {}
        for rel in sorted(relations, key=lambda r: (-freq.get(r, 0), r)):
            target = min(range(k), key=lambda c: (loads[c], c))
            out[rel] = target
            loads[target] += freq.get(rel, 0)
        return out

    body_cluster = assign(dict(stats.body_occurrences))
    head_cluster = assign(dict(stats.head_occurrences))

    def cluster_freqs(cluster: dict[str, int], freq) -> dict[int, int]:
        out: dict[int, int] = {c: 0 for c in range(k)}
        for rel, c in cluster.items():
            out[c] += freq.get(rel, 0)
        return out

    bfreq = cluster_freqs(body_cluster, stats.body_occurrences)
    hfreq = cluster_freqs(head_cluster, stats.head_occurrences)
    order = [(BODY, c) for c in sorted(bfreq, key=lambda c: (-bfreq[c], c))]
    order += [(HEAD, c) for c in sorted(hfreq, key=lambda c: (-hfreq[c], c))]
    return ClusterMap(body_cluster, head_cluster, tuple(order))


def feature_vector(dep: Dependency, clusters: ClusterMap) -> tuple[int, ...]:
    """Sorted positions of the body and head clusters touched by the dependency."""
    positions = clusters.positions
    head_atoms = [dep.head] if isinstance(dep, Rule) else list(dep.head)
    symbols = {(BODY, clusters.body_cluster.get(a.relation, 0)) for a in dep.body}
    symbols |= {(HEAD, clusters.head_cluster.get(a.relation, 0)) for a in head_atoms}
    return tuple(sorted(positions[s] for s in symbols))


class SetTrie:
    """Trie over strictly increasing symbol-position words with id buckets."""

    __slots__ = ("children", "bucket")

    def __init__(self):
        self.children: dict[int, SetTrie] = {}
        self.bucket: set[int] = set()

    def insert(self, entry_id: int, fv: tuple[int, ...]) -> None:
        node = self
        for sym in fv:
            node = node.children.setdefault(sym, SetTrie())
        node.bucket.add(entry_id)

    def remove(self, entry_id: int, fv: tuple[int, ...]) -> None:
        """Remove an id; absent ids are a no-op.  Empty branches are pruned."""
        path = [self]
        node = self
        for sym in fv:
            node = node.children.get(sym)
            if node is None:
                return
            path.append(node)
        node.bucket.discard(entry_id)
        for i in range(len(path) - 1, 0, -1):
            child = path[i]
            if child.bucket or child.children:
                break
            del path[i - 1].children[fv[i - 1]]

    def _collect(self, out: set[int]) -> None:
        out.update(self.bucket)
        for child in self.children.values():
            child._collect(out)

    def query(self, fv: tuple[int, ...], mode: str, boundary: int) -> set[int]:
        """Entries related to fv by the mixed subset/superset criterion.

        ``boundary`` is the first head-polarity position; positions below it
        are body symbols.  ``candidates_subsuming`` finds stored vectors with
        body part a subset of fv's and head part a superset of fv's;
        ``candidates_subsumed`` is the converse.
        """
        if mode == "candidates_subsuming":
            body_subset, head_subset = True, False
        elif mode == "candidates_subsumed":
            body_subset, head_subset = False, True
        else:
            raise ValueError(f"unknown mode {mode!r}")
        fv_body = [s for s in fv if s < boundary]
        fv_head = [s for s in fv if s >= boundary]
        out: set[int] = set()
        self._walk(fv_body, fv_head, body_subset, head_subset, boundary, out)
        return out

    def _walk(self, need_body, need_head, body_subset, head_subset, boundary, out) -> None:
        # an entry ends here: subset parts are satisfied by construction,
        # superset parts must have consumed every required symbol
        body_ok = not need_body if not body_subset else True
        head_ok = not need_head if not head_subset else True
        if body_ok and head_ok and self.bucket:
            out.update(self.bucket)
        for sym, child in self.children.items():
            if sym < boundary:
                if body_subset:
                    if sym in need_body:
                        child._walk(need_body, need_head, body_subset, head_subset, boundary, out)
                else:
                    pending = [s for s in need_body if s < sym]
                    if pending:
                        continue  # a required body symbol can no longer appear
                    rest = [s for s in need_body if s > sym] if sym in need_body else need_body
                    child._walk(rest, need_head, body_subset, head_subset, boundary, out)
            else:
                if body_subset:
                    pass  # subset walks impose nothing when leaving the body region
                elif need_body:
                    continue  # superset over body unmet and body symbols are over
                if head_subset:
                    if sym in need_head:
                        child._walk((), need_head, body_subset, head_subset, boundary, out)
                else:
                    pending = [s for s in need_head if s < sym]
                    if pending:
                        continue
                    rest = [s for s in need_head if s > sym] if sym in need_head else need_head
                    child._walk((), rest, body_subset, head_subset, boundary, out)


@dataclass
class SubsumptionIndex:
    """Feature-vector set-trie over every live TGD/rule of a saturation run."""

    clusters: ClusterMap
    trie: SetTrie = field(default_factory=SetTrie)
    vectors: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @property
    def boundary(self) -> int:
        for i, (polarity, _) in enumerate(self.clusters.order):
            if polarity == HEAD:
                return i
        return len(self.clusters.order)

    def insert(self, entry_id: int, dep: Dependency) -> None:
        fv = feature_vector(dep, self.clusters)
        self.vectors[entry_id] = fv
        self.trie.insert(entry_id, fv)

    def remove(self, entry_id: int) -> None:
        fv = self.vectors.pop(entry_id, None)
        if fv is not None:
            self.trie.remove(entry_id, fv)

    def candidates_subsuming(self, dep: Dependency) -> set[int]:
        return self.trie.query(feature_vector(dep, self.clusters), "candidates_subsuming", self.boundary)

    def candidates_subsumed(self, dep: Dependency) -> set[int]:
        return self.trie.query(feature_vector(dep, self.clusters), "candidates_subsumed", self.boundary)


# ----------------------------------------------------------- unification index

class RelationIndex:
    """TGD-mode partner index: relation name -> ids with it in body / head."""

    def __init__(self):
        self.by_body: dict[str, set[int]] = {}
        self.by_head: dict[str, set[int]] = {}

    def insert(self, entry_id: int, tgd: TGD) -> None:
        for a in tgd.body:
            self.by_body.setdefault(a.relation, set()).add(entry_id)
        for a in tgd.head:
            self.by_head.setdefault(a.relation, set()).add(entry_id)

    def remove(self, entry_id: int, tgd: TGD) -> None:
        for a in tgd.body:
            self.by_body.get(a.relation, set()).discard(entry_id)
        for a in tgd.head:
            self.by_head.get(a.relation, set()).discard(entry_id)

    def body_partners(self, relations: Iterable[str]) -> set[int]:
        out: set[int] = set()
        for rel in relations:
            out |= self.by_body.get(rel, set())
        return out

    def head_partners(self, relations: Iterable[str]) -> set[int]:
        out: set[int] = set()
        for rel in relations:
            out |= self.by_head.get(rel, set())
        return out


_WILD = "*"


def path_key(a: Atom) -> tuple:
    """Relation plus one symbol per argument position, variables wildcarded.

    Guarded rules keep Skolem arguments function-free, so depth one suffices.
    """
    parts: list[str | tuple] = [a.relation]
    for t in a.args:
        if isinstance(t, Var):
            parts.append(_WILD)
        elif isinstance(t, Const):
            parts.append(("c", t.name))
        elif isinstance(t, Fn):
            parts.append(("f", t.symbol))
        else:
            parts.append(("n", t.id))
    return tuple(parts)


class PathIndex:
    """Rule-mode partner index: tries over body-atom and head-atom path keys."""

    def __init__(self):
        self.body_trie: dict = {}
        self.head_trie: dict = {}

    @staticmethod
    def _insert(trie: dict, key: tuple, entry_id: int) -> None:
        node = trie
        for part in key:
            node = node.setdefault(part, {})
        node.setdefault(None, set()).add(entry_id)

    @staticmethod
    def _remove(trie: dict, key: tuple, entry_id: int) -> None:
        node = trie
        for part in key:
            node = node.get(part)
            if node is None:
                return
        node.get(None, set()).discard(entry_id)

    @staticmethod
    def _query(trie: dict, key: tuple, out: set[int]) -> None:
        if not key:
            out.update(trie.get(None, ()))
            return
        part, rest = key[0], key[1:]
        if part == _WILD:
            for label, child in trie.items():
                if label is not None:
                    PathIndex._query(child, rest, out)
            return
        child = trie.get(part)
        if child is not None:
            PathIndex._query(child, rest, out)
        wild = trie.get(_WILD)
        if wild is not None and part != _WILD:
            PathIndex._query(wild, rest, out)

    def insert(self, entry_id: int, rule: Rule) -> None:
        for a in rule.body:
            self._insert(self.body_trie, path_key(a), entry_id)
        self._insert(self.head_trie, path_key(rule.head), entry_id)

    def remove(self, entry_id: int, rule: Rule) -> None:
        for a in rule.body:
            self._remove(self.body_trie, path_key(a), entry_id)
        self._remove(self.head_trie, path_key(rule.head), entry_id)

    def body_partners(self, probe: Atom) -> set[int]:
        """Ids of rules with a body atom possibly unifiable with the probe."""
        out: set[int] = set()
        self._query(self.body_trie, path_key(probe), out)
        return out

    def head_partners(self, probe: Atom) -> set[int]:
        out: set[int] = set()
        self._query(self.head_trie, path_key(probe), out)
        return out


def unif_partners(probe: Atom, index: RelationIndex | PathIndex, mode: str) -> set[int]:
    """Candidate partner ids whose body (or head) atoms may unify with the probe."""
    if isinstance(index, RelationIndex):
        if mode == "body":
            return index.body_partners([probe.relation])
        if mode == "head":
            return index.head_partners([probe.relation])
    else:
        if mode == "body":
            return index.body_partners(probe)
        if mode == "head":
            return index.head_partners(probe)
    raise ValueError(f"unknown mode {mode!r}")

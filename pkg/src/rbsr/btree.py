"""In-memory aggregate-augmented B+-tree."""
from __future__ import annotations

from typing import Iterable

from .model import DEFAULT_CONFIG, ConfigError, ItemKey, SummaryConfig, encode_key
from .tree import Node, TreeCore


class AggBTree(TreeCore):
    """RSOS over a B+-tree whose branch entries cache child aggregates.

    ``fanout`` bounds both leaf size and branch fanout; non-root nodes stay
    at least half full.
    """

    links = True

    def __init__(self, items: Iterable[ItemKey] = (), cfg: SummaryConfig = DEFAULT_CONFIG,
                 fanout: int = 16) -> None:
        if not 4 <= fanout <= 256:
            raise ConfigError(f"fanout must be in [4, 256], got {fanout}")
        self._setup(cfg, fanout, fanout)
        self.fanout = fanout
        self._root_ref = None
        self._version = 0
        keys = sorted({encode_key(k) for k in items})
        if keys:
            self._bulk_build(keys)

    @classmethod
    def from_sorted_raw(cls, keys: list[bytes], cfg: SummaryConfig = DEFAULT_CONFIG,
                        fanout: int = 16) -> "AggBTree":
        tree = cls(cfg=cfg, fanout=fanout)
        tree._bulk_build(keys)
        return tree

    @property
    def version(self) -> int:
        return self._version

    def _touched(self) -> None:
        self._version += 1

    def _load(self, ref: Node) -> Node:
        self.counters.nodes_visited += 1
        return ref

    def _ref(self, node: Node) -> Node:
        return node

    def _writable(self, node: Node) -> Node:
        return node

    def _new(self, leaf: bool) -> Node:
        return Node(leaf)

    def __contains__(self, x: ItemKey) -> bool:
        return self._contains(encode_key(x))

    def validate(self) -> list[str]:
        """Return integrity violations; an empty list means the tree is sound."""
        problems, leaves = self._audit(self._root_ref, lambda n: n)
        for a, b in zip(leaves, leaves[1:]):
            if a.next is not b:
                problems.append("leaf chain broken")
                break
        if leaves and leaves[-1].next is not None:
            problems.append("last leaf links past the end of the tree")
        return problems

    def cached_aggregates(self) -> dict[int, tuple[int, int]]:
        """Map id(child node) -> its cached (count, summary) in the parent entry."""
        out: dict[int, tuple[int, int]] = {}
        stack = [] if self._root_ref is None else [self._root_ref]
        while stack:
            node = stack.pop()
            if node.leaf:
                continue
            for k, child in enumerate(node.children):
                out[id(child)] = (node.counts[k], node.csums[k])
                stack.append(child)
        return out

    @property
    def root(self) -> Node | None:
        return self._root_ref

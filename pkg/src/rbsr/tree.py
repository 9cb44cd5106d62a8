"""Aggregate-augmented B+-tree algorithms shared by the in-memory and paged backends.

Every branch entry caches ``(count, summary)`` of its child subtree and uses the
smallest key in that subtree as separator.  Subclasses decide what a child
reference is and how a node is made writable:

* the in-memory tree hands out the node objects themselves,
* the paged store hands out page numbers and clones pages on first write
  within a transaction (copy-on-write).
"""
from __future__ import annotations

from bisect import bisect_left, bisect_right
from typing import Any, Iterable, Optional

from .base import RSOSBase
from .model import MINUS_INF, PLUS_INF, PreconditionError, SummaryConfig


class Node:
    __slots__ = ("leaf", "keys", "sums", "children", "counts", "csums", "next", "pgno", "dirty")

    def __init__(self, leaf: bool) -> None:
        self.leaf = leaf
        # leaf: stored keys; branch: separator (= min key) per child
        self.keys: list[bytes] = []
        self.sums: list[int] = []  # leaf only: summary per key
        self.children: list[Any] = []
        self.counts: list[int] = []
        self.csums: list[int] = []
        self.next: Optional["Node"] = None
        self.pgno: int = -1
        self.dirty = False

    def __len__(self) -> int:
        return len(self.keys)

    def copy(self) -> "Node":
        n = Node(self.leaf)
        n.keys = self.keys.copy()
        if self.leaf:
            n.sums = self.sums.copy()
        else:
            n.children = self.children.copy()
            n.counts = self.counts.copy()
            n.csums = self.csums.copy()
        return n

    def __repr__(self) -> str:
        kind = "Leaf" if self.leaf else "Branch"
        return f"{kind}(pgno={self.pgno}, n={len(self.keys)})"


def balanced_chunks(n: int, cap: int) -> list[int]:
    """Split ``n`` entries into the fewest chunks of at most ``cap``, sizes differing by <= 1."""
    if n == 0:
        return []
    k = -(-n // cap)
    base, extra = divmod(n, k)
    return [base + 1] * extra + [base] * (k - extra)


class TreeCore(RSOSBase):
    leaf_cap: int
    branch_cap: int
    links: bool = False
    _root_ref: Any = None

    def _setup(self, cfg: SummaryConfig, leaf_cap: int, branch_cap: int) -> None:
        RSOSBase.__init__(self)
        self.cfg = cfg
        self.leaf_cap = leaf_cap
        self.branch_cap = branch_cap
        self.leaf_min = -(-leaf_cap // 2)
        self.branch_min = -(-branch_cap // 2)
        self._mask = cfg.mask
        self._summary = cfg.summary_raw

    # -- subclass hooks ------------------------------------------------------
    def _load(self, ref: Any) -> Node:
        raise NotImplementedError

    def _ref(self, node: Node) -> Any:
        raise NotImplementedError

    def _writable(self, node: Node) -> Node:
        raise NotImplementedError

    def _new(self, leaf: bool) -> Node:
        raise NotImplementedError

    def _discard(self, node: Node) -> None:
        pass

    def _touched(self) -> None:
        """Called after every effective mutation."""

    # -- helpers ---------------------------------------------------------------
    def _node_total(self, node: Node) -> tuple[int, int]:
        if node.leaf:
            return len(node.keys), sum(node.sums) & self._mask
        return sum(node.counts), sum(node.csums) & self._mask

    def _size(self) -> int:
        if self._root_ref is None:
            return 0
        root = self._load(self._root_ref)
        return len(root.keys) if root.leaf else sum(root.counts)

    def height(self) -> int:
        """Number of levels; 0 for an empty tree, 1 for a lone leaf."""
        if self._root_ref is None:
            return 0
        h = 1
        node = self._load(self._root_ref)
        while not node.leaf:
            node = self._load(node.children[0])
            h += 1
        return h

    def _mut_child(self, parent: Node, i: int) -> Node:
        child = self._writable(self._load(parent.children[i]))
        parent.children[i] = self._ref(child)
        return child

    def _contains(self, kb: bytes) -> bool:
        if self._root_ref is None:
            return False
        node = self._load(self._root_ref)
        while not node.leaf:
            i = bisect_right(node.keys, kb) - 1
            if i < 0:
                return False
            node = self._load(node.children[i])
        i = bisect_left(node.keys, kb)
        return i < len(node.keys) and node.keys[i] == kb

    # -- queries -----------------------------------------------------------------
    def size(self) -> int:
        self._start()
        return self._size()

    def rank_raw(self, z: bytes) -> int:
        self._start()
        if self._root_ref is None:
            return 0
        st = self.counters
        acc = 0
        node = self._load(self._root_ref)
        while not node.leaf:
            i = bisect_left(node.keys, z) - 1
            if i < 0:
                return acc
            acc += sum(node.counts[:i])
            st.entries_scanned += i + 1
            node = self._load(node.children[i])
        return acc + bisect_left(node.keys, z)

    def select_raw(self, r: int) -> bytes:
        self._start()
        if not 0 <= r < self._size():
            raise IndexError(f"rank {r} out of range")
        st = self.counters
        node = self._load(self._root_ref)
        while not node.leaf:
            for i, c in enumerate(node.counts):
                if r < c:
                    break
                r -= c
            st.entries_scanned += i + 1
            node = self._load(node.children[i])
        return node.keys[r]

    def aggregate_raw(self, lo: bytes, hi: bytes) -> tuple[int, int]:
        self._start()
        if hi < lo:
            raise PreconditionError("inverted bounds")
        if self._root_ref is None or lo == hi:
            return 0, 0
        c, s = self._agg_range(
            self._load(self._root_ref),
            None if lo == MINUS_INF else lo,
            None if hi == PLUS_INF else hi,
        )
        return c, s & self._mask

    def _agg_range(self, node: Node, lo: Optional[bytes], hi: Optional[bytes]) -> tuple[int, int]:
        # lo/hi of None mean the subtree is unbounded on that side
        keys = node.keys
        if node.leaf:
            i = 0 if lo is None else bisect_left(keys, lo)
            j = len(keys) if hi is None else bisect_left(keys, hi)
            if j <= i:
                return 0, 0
            self.counters.entries_scanned += j - i
            return j - i, sum(node.sums[i:j])
        n = len(keys)
        if lo is None:
            i = 0
        else:
            i = bisect_right(keys, lo) - 1
            if i < 0:
                i, lo = 0, None
            elif keys[i] == lo:
                lo = None
        if hi is None:
            j = n - 1
        else:
            j = bisect_left(keys, hi) - 1
            if j + 1 < n and keys[j + 1] == hi:
                hi = None
        if j < i:
            return 0, 0
        self.counters.entries_scanned += j - i + 1
        if i == j:
            if lo is None and hi is None:
                return node.counts[i], node.csums[i]
            return self._agg_range(self._load(node.children[i]), lo, hi)
        c = sum(node.counts[i + 1:j])
        s = sum(node.csums[i + 1:j])
        if lo is None:
            c += node.counts[i]
            s += node.csums[i]
        else:
            lc, ls = self._agg_range(self._load(node.children[i]), lo, None)
            c += lc
            s += ls
        if hi is None:
            c += node.counts[j]
            s += node.csums[j]
        else:
            rc, rs = self._agg_range(self._load(node.children[j]), None, hi)
            c += rc
            s += rs
        return c, s

    def enumerate_raw(self, lo: bytes, hi: bytes) -> list[bytes]:
        self._start()
        if hi < lo:
            raise PreconditionError("inverted bounds")
        out: list[bytes] = []
        if self._root_ref is None or lo == hi:
            return out
        if self.links:
            self._scan_chain(lo, hi, out)
        else:
            self._collect(self._load(self._root_ref),
                          None if lo == MINUS_INF else lo,
                          None if hi == PLUS_INF else hi, out)
        return out

    def _scan_chain(self, lo: bytes, hi: bytes, out: list[bytes]) -> None:
        node = self._load(self._root_ref)
        while not node.leaf:
            i = max(bisect_right(node.keys, lo) - 1, 0)
            node = self._load(node.children[i])
        st = self.counters
        pos = bisect_left(node.keys, lo)
        while True:
            keys = node.keys
            end = bisect_left(keys, hi, pos)
            out.extend(keys[pos:end])
            st.entries_scanned += end - pos
            if end < len(keys) or node.next is None:
                return
            node = self._load(node.next)
            pos = 0

    def _collect(self, node: Node, lo: Optional[bytes], hi: Optional[bytes], out: list[bytes]) -> None:
        keys = node.keys
        if node.leaf:
            i = 0 if lo is None else bisect_left(keys, lo)
            j = len(keys) if hi is None else bisect_left(keys, hi)
            if j > i:
                out.extend(keys[i:j])
                self.counters.entries_scanned += j - i
            return
        i = 0 if lo is None else max(bisect_right(keys, lo) - 1, 0)
        j = len(keys) - 1 if hi is None else bisect_left(keys, hi) - 1
        for k in range(i, j + 1):
            self._collect(self._load(node.children[k]),
                          lo if k == i else None,
                          hi if k == j else None, out)

    # -- rank-space queries ------------------------------------------------------
    def aggregate_ranks_raw(self, r_lo: int, r_hi: int) -> tuple[int, int]:
        self._start()
        if r_lo >= r_hi or self._root_ref is None:
            return 0, 0
        c, s = self._agg_ranks(self._load(self._root_ref), r_lo, r_hi)
        return c, s & self._mask

    def _agg_ranks(self, node: Node, a: int, b: int) -> tuple[int, int]:
        if node.leaf:
            self.counters.entries_scanned += b - a
            return b - a, sum(node.sums[a:b])
        c = s = 0
        start = 0
        for k, cnt in enumerate(node.counts):
            end = start + cnt
            if end > a:
                if start >= b:
                    break
                self.counters.entries_scanned += 1
                if a <= start and end <= b:
                    c += cnt
                    s += node.csums[k]
                else:
                    cc, ss = self._agg_ranks(self._load(node.children[k]),
                                             max(a, start) - start, min(b, end) - start)
                    c += cc
                    s += ss
            start = end
        return c, s

    def enumerate_ranks_raw(self, r_lo: int, r_hi: int) -> list[bytes]:
        self._start()
        out: list[bytes] = []
        if r_lo < r_hi and self._root_ref is not None:
            self._collect_ranks(self._load(self._root_ref), r_lo, r_hi, out)
        return out

    def _collect_ranks(self, node: Node, a: int, b: int, out: list[bytes]) -> None:
        if node.leaf:
            out.extend(node.keys[a:b])
            self.counters.entries_scanned += b - a
            return
        start = 0
        for k, cnt in enumerate(node.counts):
            end = start + cnt
            if end > a:
                if start >= b:
                    break
                self._collect_ranks(self._load(node.children[k]),
                                    max(a, start) - start, min(b, end) - start, out)
            start = end

    def partition_ranks_raw(self, cuts: list[int]) -> tuple[list[bytes], list[tuple[int, int]]]:
        """One walk producing the keys at interior cuts and every part's aggregate."""
        self._start()
        nparts = len(cuts) - 1
        counts = [0] * nparts
        sums = [0] * nparts
        keys: list[Optional[bytes]] = [None] * (nparts - 1)
        if self._root_ref is not None and cuts[0] < cuts[-1]:
            self._partition(self._load(self._root_ref), 0, cuts, counts, sums, keys)
        mask = self._mask
        assert all(k is not None for k in keys), "interior cut beyond the stored items"
        return keys, [(c, s & mask) for c, s in zip(counts, sums)]  # type: ignore[return-value]

    def _partition(self, node: Node, base: int, cuts: list[int], counts: list[int],
                   sums: list[int], keys: list[Optional[bytes]]) -> None:
        first, last = cuts[0], cuts[-1]
        nparts = len(counts)
        if node.leaf:
            size = len(node.keys)
            lo, hi = max(first, base), min(last, base + size)
            p = bisect_right(cuts, lo) - 1
            while lo < hi:
                end = min(cuts[p + 1], hi) if p + 1 <= nparts else hi
                self.counters.entries_scanned += end - lo
                counts[p] += end - lo
                sums[p] += sum(node.sums[lo - base:end - base])
                lo = end
                p += 1
            for ci in range(bisect_left(cuts, base, 1, nparts), nparts):
                c = cuts[ci]
                if c >= base + size:
                    break
                keys[ci - 1] = node.keys[c - base]
            return
        start = base
        for k, cnt in enumerate(node.counts):
            end = start + cnt
            if end > first and start < last:
                self.counters.entries_scanned += 1
                inside = bisect_left(cuts, end) - bisect_right(cuts, start)
                if inside == 0 and start >= first and end <= last:
                    p = bisect_right(cuts, start) - 1
                    counts[p] += cnt
                    sums[p] += node.csums[k]
                    for ci in range(bisect_left(cuts, start, 1, nparts), nparts):
                        if cuts[ci] != start:
                            break
                        keys[ci - 1] = node.keys[k]
                else:
                    self._partition(self._load(node.children[k]), start, cuts, counts, sums, keys)
            elif start >= last:
                break
            start = end

    # -- updates -------------------------------------------------------------------
    def insert_raw(self, kb: bytes) -> bool:
        self._start()
        if self._contains(kb):
            return False
        s = self._summary(kb)
        if self._root_ref is None:
            leaf = self._new(True)
            leaf.keys.append(kb)
            leaf.sums.append(s)
            self._root_ref = self._ref(leaf)
        else:
            root = self._writable(self._load(self._root_ref))
            self._root_ref = self._ref(root)
            right = self._ins(root, kb, s)
            if right is not None:
                top = self._new(False)
                for child in (root, right):
                    c, cs = self._node_total(child)
                    top.keys.append(child.keys[0])
                    top.children.append(self._ref(child))
                    top.counts.append(c)
                    top.csums.append(cs)
                self._root_ref = self._ref(top)
        self._touched()
        return True

    def _ins(self, node: Node, kb: bytes, s: int) -> Optional[Node]:
        if node.leaf:
            pos = bisect_left(node.keys, kb)
            node.keys.insert(pos, kb)
            node.sums.insert(pos, s)
            if len(node.keys) > self.leaf_cap:
                return self._split(node)
            return None
        i = max(bisect_right(node.keys, kb) - 1, 0)
        child = self._mut_child(node, i)
        right = self._ins(child, kb, s)
        node.counts[i] += 1
        node.csums[i] = (node.csums[i] + s) & self._mask
        if kb < node.keys[i]:
            node.keys[i] = kb
        if right is None:
            return None
        rc, rs = self._node_total(right)
        node.counts[i] -= rc
        node.csums[i] = (node.csums[i] - rs) & self._mask
        node.keys.insert(i + 1, right.keys[0])
        node.children.insert(i + 1, self._ref(right))
        node.counts.insert(i + 1, rc)
        node.csums.insert(i + 1, rs)
        if len(node.keys) > self.branch_cap:
            return self._split(node)
        return None

    def _split(self, node: Node) -> Node:
        right = self._new(node.leaf)
        mid = (len(node.keys) + 1) // 2
        right.keys = node.keys[mid:]
        del node.keys[mid:]
        if node.leaf:
            right.sums = node.sums[mid:]
            del node.sums[mid:]
            if self.links:
                right.next = node.next
                node.next = right
        else:
            right.children = node.children[mid:]
            right.counts = node.counts[mid:]
            right.csums = node.csums[mid:]
            del node.children[mid:], node.counts[mid:], node.csums[mid:]
        return right

    def delete_raw(self, kb: bytes) -> bool:
        self._start()
        if not self._contains(kb):
            return False
        s = self._summary(kb)
        root = self._writable(self._load(self._root_ref))
        self._root_ref = self._ref(root)
        self._del(root, kb, s)
        if root.leaf:
            if not root.keys:
                self._discard(root)
                self._root_ref = None
        elif len(root.children) == 1:
            self._discard(root)
            self._root_ref = root.children[0]
        self._touched()
        return True

    def _del(self, node: Node, kb: bytes, s: int) -> None:
        if node.leaf:
            pos = bisect_left(node.keys, kb)
            del node.keys[pos]
            del node.sums[pos]
            return
        i = max(bisect_right(node.keys, kb) - 1, 0)
        child = self._mut_child(node, i)
        self._del(child, kb, s)
        node.counts[i] -= 1
        node.csums[i] = (node.csums[i] - s) & self._mask
        if child.keys and node.keys[i] != child.keys[0]:
            node.keys[i] = child.keys[0]
        if len(child.keys) < (self.leaf_min if child.leaf else self.branch_min):
            self._rebalance(node, i, child)

    def _rebalance(self, parent: Node, i: int, child: Node) -> None:
        minimum = self.leaf_min if child.leaf else self.branch_min
        n = len(parent.children)
        if i > 0 and len(self._load(parent.children[i - 1]).keys) > minimum:
            left = self._mut_child(parent, i - 1)
            self._move_entry(left, -1, child, 0)
            self._refresh(parent, i - 1, left)
            self._refresh(parent, i, child)
        elif i + 1 < n and len(self._load(parent.children[i + 1]).keys) > minimum:
            right = self._mut_child(parent, i + 1)
            self._move_entry(right, 0, child, len(child.keys))
            self._refresh(parent, i, child)
            self._refresh(parent, i + 1, right)
        elif i > 0:
            left = self._mut_child(parent, i - 1)
            self._merge(parent, i - 1, left, child)
        else:
            right = self._mut_child(parent, i + 1)
            self._merge(parent, i, child, right)

    def _move_entry(self, src: Node, si: int, dst: Node, di: int) -> None:
        dst.keys.insert(di, src.keys.pop(si))
        if src.leaf:
            dst.sums.insert(di, src.sums.pop(si))
        else:
            dst.children.insert(di, src.children.pop(si))
            dst.counts.insert(di, src.counts.pop(si))
            dst.csums.insert(di, src.csums.pop(si))

    def _refresh(self, parent: Node, i: int, child: Node) -> None:
        parent.counts[i], parent.csums[i] = self._node_total(child)
        parent.keys[i] = child.keys[0]
        parent.children[i] = self._ref(child)

    def _merge(self, parent: Node, i: int, left: Node, right: Node) -> None:
        """Fold parent entry i+1 into entry i."""
        left.keys.extend(right.keys)
        if left.leaf:
            left.sums.extend(right.sums)
            if self.links:
                left.next = right.next
        else:
            left.children.extend(right.children)
            left.counts.extend(right.counts)
            left.csums.extend(right.csums)
        parent.counts[i] += parent.counts[i + 1]
        parent.csums[i] = (parent.csums[i] + parent.csums[i + 1]) & self._mask
        parent.keys[i] = left.keys[0]
        parent.children[i] = self._ref(left)
        del parent.keys[i + 1], parent.children[i + 1], parent.counts[i + 1], parent.csums[i + 1]
        self._discard(right)

    # -- bulk build ------------------------------------------------------------------
    def _bulk_build(self, keys: list[bytes]) -> None:
        """Build a fresh tree bottom-up from strictly increasing encoded keys."""
        for a, b in zip(keys, keys[1:]):
            if not a < b:
                raise PreconditionError("bulk load requires strictly increasing keys")
        if not keys:
            self._root_ref = None
            return
        summary = self._summary
        level: list[Node] = []
        pos = 0
        prev: Optional[Node] = None
        for size in balanced_chunks(len(keys), self.leaf_cap):
            leaf = self._new(True)
            leaf.keys = keys[pos:pos + size]
            leaf.sums = [summary(kb) for kb in leaf.keys]
            pos += size
            if self.links and prev is not None:
                prev.next = leaf
            prev = leaf
            level.append(leaf)
        while len(level) > 1:
            parents: list[Node] = []
            pos = 0
            for size in balanced_chunks(len(level), self.branch_cap):
                node = self._new(False)
                for child in level[pos:pos + size]:
                    c, s = self._node_total(child)
                    node.keys.append(child.keys[0])
                    node.children.append(self._ref(child))
                    node.counts.append(c)
                    node.csums.append(s)
                pos += size
                parents.append(node)
            level = parents
        self._root_ref = self._ref(level[0])

    # -- integrity audit -------------------------------------------------------------
    def _audit(self, root_ref: Any, load: Any) -> tuple[list[str], list[Node]]:
        """Recompute every cached aggregate; return (violations, leaves in order)."""
        problems: list[str] = []
        leaves: list[Node] = []
        if root_ref is None:
            return problems, leaves
        depths: set[int] = set()
        mask = self._mask
        summary = self._summary

        def walk(node: Node, depth: int, is_root: bool, label: str) -> tuple[int, int, Optional[bytes]]:
            keys = node.keys
            if any(not a < b for a, b in zip(keys, keys[1:])):
                problems.append(f"{label}: keys not strictly ascending")
            if node.leaf:
                depths.add(depth)
                leaves.append(node)
                if not is_root and not self.leaf_min <= len(keys) <= self.leaf_cap:
                    problems.append(f"{label}: leaf fanout {len(keys)} outside [{self.leaf_min}, {self.leaf_cap}]")
                if is_root and not 1 <= len(keys) <= self.leaf_cap:
                    problems.append(f"{label}: root leaf size {len(keys)}")
                if node.sums != [summary(kb) for kb in keys]:
                    problems.append(f"{label}: leaf summaries stale")
                return len(keys), sum(node.sums) & mask, keys[0] if keys else None
            n = len(node.children)
            lower = 2 if is_root else self.branch_min
            if not lower <= n <= self.branch_cap:
                problems.append(f"{label}: branch fanout {n} outside [{lower}, {self.branch_cap}]")
            if not len(node.counts) == len(node.csums) == len(keys) == n:
                problems.append(f"{label}: branch arrays have inconsistent lengths")
                return 0, 0, None
            total_c = total_s = 0
            for k in range(n):
                c, s, mn = walk(load(node.children[k]), depth + 1, False, f"{label}/{k}")
                if node.counts[k] != c or node.csums[k] != s:
                    problems.append(f"{label}[{k}]: cached aggregate ({node.counts[k]}, {node.csums[k]:#x}) "
                                    f"!= recomputed ({c}, {s:#x})")
                if mn is not None and keys[k] != mn:
                    problems.append(f"{label}[{k}]: separator is not the child minimum")
                total_c += c
                total_s += s
            return total_c, total_s & mask, keys[0] if keys else None

        walk(load(root_ref), 1, True, "root")
        if len(depths) > 1:
            problems.append(f"leaves at differing depths {sorted(depths)}")
        flat = [kb for leaf in leaves for kb in leaf.keys]
        if any(not a < b for a, b in zip(flat, flat[1:])):
            problems.append("in-order key sequence not strictly ascending")
        return problems, leaves


def iter_keys(tree: TreeCore) -> Iterable[bytes]:
    return tree.enumerate_raw(MINUS_INF, PLUS_INF)

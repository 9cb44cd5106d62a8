"""File-backed RSOS: fixed-size pages, dual meta slots, copy-on-write commits.

See FORMAT.md at the repository root for the byte layout.  All integers are
little-endian except the big-endian timestamp inside canonical keys.
"""
from __future__ import annotations

import os
import struct
import threading
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .model import DEFAULT_CONFIG, KEY_LEN, ConfigError, RSOSError, SummaryConfig
from .tree import Node, TreeCore

MAGIC = b"RSOSPGV1"
AGG_ENTRIES = 0x1
AGG_HASHSUM = 0x2
DEFAULT_FLAGS = AGG_ENTRIES | AGG_HASHSUM

PAGE_BRANCH = 1
PAGE_LEAF = 2
PAGE_HEADER = struct.Struct("<QBBHI")  # pgno, type, agg flags, nkeys, reserved
NO_PAGE = 0xFFFF_FFFF_FFFF_FFFF

# magic, page_size, width_bits, slice_offset, slice_len, agg_flags,
# txn_id, root_page, next_pgno, total_entries
META_FIXED = struct.Struct("<8sIHHHHQQQQ")
PAGE_SIZES = tuple(1 << p for p in range(9, 17))


class StoreError(RSOSError):
    pass


class CorruptFileError(StoreError):
    pass


class SimulatedCrash(StoreError):
    """Raised by the commit fault-injection hook after pages but before the meta."""


@dataclass(frozen=True)
class Meta:
    page_size: int
    cfg: SummaryConfig
    agg_flags: int
    txn_id: int
    root: Optional[int]
    next_pgno: int
    total_entries: int
    total_hashsum: int

    def encode(self) -> bytes:
        width = self.cfg.width_bits // 8
        body = META_FIXED.pack(
            MAGIC, self.page_size, self.cfg.width_bits, self.cfg.slice_offset, self.cfg.slice_len,
            self.agg_flags, self.txn_id, NO_PAGE if self.root is None else self.root,
            self.next_pgno, self.total_entries,
        ) + self.total_hashsum.to_bytes(width, "little")
        body += struct.pack("<I", zlib.crc32(body))
        return body + bytes(self.page_size - len(body))


def decode_meta(page: bytes) -> Meta:
    if len(page) < META_FIXED.size or page[:8] != MAGIC:
        raise CorruptFileError("bad magic")
    (_, page_size, width_bits, offset, slice_len, flags, txn, root, next_pgno,
     entries) = META_FIXED.unpack_from(page)
    try:
        cfg = SummaryConfig(width_bits, offset, slice_len)
    except ConfigError as exc:
        raise CorruptFileError(f"bad summary config: {exc}") from exc
    end = META_FIXED.size + width_bits // 8
    if len(page) < end + 4:
        raise CorruptFileError("truncated meta")
    (crc,) = struct.unpack_from("<I", page, end)
    if zlib.crc32(page[:end]) != crc:
        raise CorruptFileError("meta checksum mismatch")
    hashsum = int.from_bytes(page[META_FIXED.size:end], "little")
    return Meta(page_size, cfg, flags, txn, None if root == NO_PAGE else root, next_pgno, entries, hashsum)


def branch_record_size(cfg: SummaryConfig, flags: int) -> int:
    return 8 + 8 + (cfg.width_bits // 8 if flags & AGG_HASHSUM else 0) + KEY_LEN


def capacities(page_size: int, cfg: SummaryConfig, flags: int) -> tuple[int, int]:
    """(leaf capacity, branch fanout) implied by the page size."""
    room = page_size - PAGE_HEADER.size
    return room // KEY_LEN, room // branch_record_size(cfg, flags)


def encode_page(node: Node, page_size: int, cfg: SummaryConfig, flags: int) -> bytes:
    if node.leaf:
        body = PAGE_HEADER.pack(node.pgno, PAGE_LEAF, 0, len(node.keys), 0) + b"".join(node.keys)
    else:
        width = cfg.width_bits // 8
        hashsum = flags & AGG_HASHSUM
        parts = [PAGE_HEADER.pack(node.pgno, PAGE_BRANCH, flags, len(node.keys), 0)]
        for child, count, s, key in zip(node.children, node.counts, node.csums, node.keys):
            parts.append(struct.pack("<QQ", child, count))
            if hashsum:
                parts.append(s.to_bytes(width, "little"))
            parts.append(key)
        body = b"".join(parts)
    if len(body) > page_size:
        raise StoreError(f"page {node.pgno} overflows: {len(body)} > {page_size}")
    return body + bytes(page_size - len(body))


def decode_page(data: bytes, cfg: SummaryConfig, flags: int) -> Node:
    pgno, kind, pflags, nkeys, _ = PAGE_HEADER.unpack_from(data)
    pos = PAGE_HEADER.size
    if kind == PAGE_LEAF:
        node = Node(True)
        end = pos + nkeys * KEY_LEN
        if end > len(data):
            raise CorruptFileError(f"page {pgno}: leaf records overflow the page")
        node.keys = [data[o:o + KEY_LEN] for o in range(pos, end, KEY_LEN)]
        if flags & AGG_HASHSUM:
            node.sums = [cfg.summary_raw(kb) for kb in node.keys]
        else:
            node.sums = [0] * nkeys
    elif kind == PAGE_BRANCH:
        if pflags != flags:
            raise CorruptFileError(f"page {pgno}: aggregate flags {pflags:#x} != database flags {flags:#x}")
        node = Node(False)
        width = cfg.width_bits // 8 if flags & AGG_HASHSUM else 0
        rec = 16 + width + KEY_LEN
        if pos + nkeys * rec > len(data):
            raise CorruptFileError(f"page {pgno}: branch records overflow the page")
        for _ in range(nkeys):
            child, count = struct.unpack_from("<QQ", data, pos)
            node.children.append(child)
            node.counts.append(count)
            node.csums.append(int.from_bytes(data[pos + 16:pos + 16 + width], "little"))
            node.keys.append(bytes(data[pos + 16 + width:pos + rec]))
            pos += rec
    else:
        raise CorruptFileError(f"page {pgno}: unknown page type {kind}")
    node.pgno = pgno
    return node


class _PageFile:
    """Open file plus the cache of decoded committed pages (immutable once written)."""

    def __init__(self, path: Path, fh, page_size: int, cfg: SummaryConfig, flags: int) -> None:
        self.path = path
        self.fh = fh
        self.page_size = page_size
        self.cfg = cfg
        self.flags = flags
        self.cache: dict[int, Node] = {}
        self.lock = threading.Lock()

    def read(self, pgno: int) -> Node:
        node = self.cache.get(pgno)
        if node is None:
            with self.lock:
                self.fh.seek(pgno * self.page_size)
                data = self.fh.read(self.page_size)
            if len(data) != self.page_size:
                raise CorruptFileError(f"page {pgno} lies beyond the end of the file")
            node = decode_page(data, self.cfg, self.flags)
            if node.pgno != pgno:
                raise CorruptFileError(f"page {pgno} carries page number {node.pgno}")
            self.cache[pgno] = node
        return node


class _PagedView(TreeCore):
    _file: _PageFile
    _meta: Meta

    def _init_view(self, pf: _PageFile, meta: Meta) -> None:
        leaf_cap, branch_cap = capacities(pf.page_size, pf.cfg, pf.flags)
        self._setup(pf.cfg, leaf_cap, branch_cap)
        if not pf.flags & AGG_HASHSUM:
            self._summary = lambda kb: 0
        self._file = pf
        self._meta = meta
        self._root_ref = meta.root

    def _load(self, ref: int) -> Node:
        self.counters.nodes_visited += 1
        return self._file.read(ref)

    def _ref(self, node: Node) -> int:
        return node.pgno

    def _writable(self, node: Node) -> Node:
        raise StoreError("read-only view")

    _new = _writable  # type: ignore[assignment]

    @property
    def txn_id(self) -> int:
        return self._meta.txn_id

    @property
    def page_size(self) -> int:
        return self._file.page_size

    @property
    def agg_flags(self) -> int:
        return self._file.flags

    def totals(self):
        """Entry count and hashsum straight from the meta block; no page walk."""
        self._start()
        return self._agg(self._meta.total_entries, self._meta.total_hashsum)


class Snapshot(_PagedView):
    """Read-only view pinned to one committed transaction."""

    def __init__(self, pf: _PageFile, meta: Meta) -> None:
        self._init_view(pf, meta)

    @property
    def version(self) -> tuple[int, int]:
        return (self._meta.txn_id, 0)

    def insert_raw(self, kb: bytes) -> bool:
        raise StoreError("snapshot is read-only")

    delete_raw = insert_raw


class PagedStore(_PagedView):
    """Single-writer paged store.

    Reads through this handle see the open write transaction, if any;
    ``reader()`` pins a snapshot of the last commit.
    """

    def __init__(self, pf: _PageFile, meta: Meta, sync: bool = True) -> None:
        self._init_view(pf, meta)
        self._dirty: dict[int, Node] = {}
        self._next_pgno = meta.next_pgno
        self._ops_in_txn = 0
        self._writer = threading.Lock()
        self._in_txn = False
        self.sync = sync
        self.closed = False

    # -- lifecycle -------------------------------------------------------------
    @classmethod
    def create(cls, path: str | os.PathLike, cfg: SummaryConfig = DEFAULT_CONFIG,
               page_size: int = 4096, agg_flags: int = DEFAULT_FLAGS, sync: bool = True) -> "PagedStore":
        path = Path(path)
        if page_size not in PAGE_SIZES:
            raise ConfigError(f"unsupported page size {page_size}")
        if not agg_flags & AGG_ENTRIES or agg_flags & ~DEFAULT_FLAGS:
            raise ConfigError(f"unsupported aggregate flags {agg_flags:#x}")
        if capacities(page_size, cfg, agg_flags)[1] < 4:
            raise ConfigError("page too small for a branch fanout of 4")
        if path.exists() and path.stat().st_size:
            raise StoreError(f"{path} exists and is not empty")
        meta = Meta(page_size, cfg, agg_flags, 0, None, 2, 0, 0)
        with open(path, "wb") as fh:
            fh.write(meta.encode() * 2)
            fh.flush()
            if sync:
                os.fsync(fh.fileno())
        return cls.open(path, sync=sync)

    @classmethod
    def open(cls, path: str | os.PathLike, sync: bool = True) -> "PagedStore":
        path = Path(path)
        fh = open(path, "r+b")
        try:
            meta = read_latest_meta(fh)
        except Exception:
            fh.close()
            raise
        pf = _PageFile(path, fh, meta.page_size, meta.cfg, meta.agg_flags)
        return cls(pf, meta, sync=sync)

    def close(self) -> None:
        if self._in_txn:
            self.abort()
        if not self.closed:
            self._file.fh.close()
            self.closed = True

    def __enter__(self) -> "PagedStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def path(self) -> Path:
        return self._file.path

    def disk_bytes(self) -> int:
        return os.path.getsize(self._file.path)

    def reader(self) -> Snapshot:
        return Snapshot(self._file, self._meta)

    @property
    def version(self) -> tuple[int, int]:
        return (self._meta.txn_id, self._ops_in_txn)

    # -- transactions ----------------------------------------------------------
    def begin(self) -> None:
        if self.closed:
            raise StoreError("store is closed")
        if self._in_txn:
            raise StoreError("a write transaction is already open on this handle")
        self._writer.acquire()
        self._in_txn = True

    @contextmanager
    def transaction(self) -> Iterator["PagedStore"]:
        self.begin()
        try:
            yield self
        except BaseException:
            self.abort()
            raise
        self.commit()

    def _ensure_txn(self) -> None:
        if not self._in_txn:
            self.begin()

    def insert_raw(self, kb: bytes) -> bool:
        self._ensure_txn()
        return super().insert_raw(kb)

    def delete_raw(self, kb: bytes) -> bool:
        self._ensure_txn()
        return super().delete_raw(kb)

    def bulk_load_raw(self, keys: list[bytes]) -> None:
        """Replace an empty store's contents with sorted keys in one pass."""
        if self._size():
            raise StoreError("bulk load requires an empty store")
        self._ensure_txn()
        self._bulk_build(keys)
        self._ops_in_txn += 1

    def _touched(self) -> None:
        self._ops_in_txn += 1

    def _writable(self, node: Node) -> Node:
        if node.dirty:
            return node
        clone = node.copy()
        return self._register(clone)

    def _new(self, leaf: bool) -> Node:
        if not self._in_txn:
            raise StoreError("no write transaction")
        return self._register(Node(leaf))

    def _register(self, node: Node) -> Node:
        node.pgno = self._next_pgno
        node.dirty = True
        self._next_pgno += 1
        self._dirty[node.pgno] = node
        return node

    def _discard(self, node: Node) -> None:
        if node.dirty:
            self._dirty.pop(node.pgno, None)

    def _load(self, ref: int) -> Node:
        self.counters.nodes_visited += 1
        node = self._dirty.get(ref)
        return node if node is not None else self._file.read(ref)

    def commit(self, *, _crash_before_meta: bool = False) -> int:
        """Write dirty pages, then publish a new meta; return the new txn id."""
        if not self._in_txn:
            return self._meta.txn_id
        pf = self._file
        try:
            if self._root_ref is None:
                entries, hashsum = 0, 0
            else:
                root = self._load(self._root_ref)
                entries, hashsum = self._node_total(root)
            meta = Meta(pf.page_size, pf.cfg, pf.flags, self._meta.txn_id + 1, self._root_ref,
                        self._next_pgno, entries, hashsum)
            fh = pf.fh
            with pf.lock:
                for pgno in sorted(self._dirty):
                    fh.seek(pgno * pf.page_size)
                    fh.write(encode_page(self._dirty[pgno], pf.page_size, pf.cfg, pf.flags))
                fh.flush()
                if self.sync:
                    os.fsync(fh.fileno())
                if _crash_before_meta:
                    raise SimulatedCrash("crashed after page writes, before meta publish")
                fh.seek((meta.txn_id % 2) * pf.page_size)
                fh.write(meta.encode())
                fh.flush()
                if self.sync:
                    os.fsync(fh.fileno())
        except SimulatedCrash:
            self._dirty = {}
            self._in_txn = False
            self._writer.release()
            self.close()
            raise
        except OSError:
            self.abort()
            raise
        for node in self._dirty.values():
            node.dirty = False
            pf.cache[node.pgno] = node
        self._dirty = {}
        self._meta = meta
        self._ops_in_txn = 0
        self._in_txn = False
        self._writer.release()
        return meta.txn_id

    def abort(self) -> None:
        if not self._in_txn:
            return
        self._dirty = {}
        self._root_ref = self._meta.root
        self._next_pgno = self._meta.next_pgno
        self._ops_in_txn = 0
        self._in_txn = False
        self._writer.release()

    def totals(self):
        if self._in_txn:
            return super(_PagedView, self).totals()
        return super().totals()

    def validate(self) -> list[str]:
        """Audit the tree visible through this handle (including uncommitted pages)."""
        problems, _ = self._audit(self._root_ref, self._load)
        return problems


def read_latest_meta(fh) -> Meta:
    fh.seek(0)
    head = fh.read(META_FIXED.size)
    if len(head) < META_FIXED.size or head[:8] != MAGIC:
        raise CorruptFileError("bad magic")
    (page_size,) = struct.unpack_from("<I", head, 8)
    if page_size not in PAGE_SIZES:
        raise CorruptFileError(f"unsupported page size {page_size}")
    metas: list[Meta] = []
    errors: list[str] = []
    for slot in (0, 1):
        fh.seek(slot * page_size)
        try:
            metas.append(decode_meta(fh.read(page_size)))
        except CorruptFileError as exc:
            errors.append(f"meta {slot}: {exc}")
    if not metas:
        raise CorruptFileError("; ".join(errors))
    return max(metas, key=lambda m: m.txn_id)


@dataclass
class Violation:
    pgno: Optional[int]
    message: str

    def __str__(self) -> str:
        where = "file" if self.pgno is None else f"page {self.pgno}"
        return f"{where}: {self.message}"


@dataclass
class VerifyReport:
    path: str
    txn_id: Optional[int] = None
    pages_checked: int = 0
    entries: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def flagged_pages(self) -> set[int]:
        return {v.pgno for v in self.violations if v.pgno is not None}


def verify_file(path: str | os.PathLike) -> VerifyReport:
    """Offline integrity check of a closed store file."""
    report = VerifyReport(str(path))
    with open(path, "rb") as fh:
        try:
            meta = read_latest_meta(fh)
        except CorruptFileError as exc:
            report.violations.append(Violation(None, str(exc)))
            return report
        page_size = meta.page_size
        for slot in (0, 1):
            fh.seek(slot * page_size)
            try:
                m = decode_meta(fh.read(page_size))
            except CorruptFileError as exc:
                # a stale slot is tolerated only if it lost to a newer valid meta
                report.violations.append(Violation(slot, f"meta slot invalid: {exc}"))
                continue
            if (m.page_size, m.cfg, m.agg_flags) != (meta.page_size, meta.cfg, meta.agg_flags):
                report.violations.append(Violation(slot, "meta slots disagree on configuration"))
        report.txn_id = meta.txn_id
        file_pages = os.fstat(fh.fileno()).st_size // page_size
        if meta.next_pgno > file_pages:
            report.violations.append(Violation(None, f"meta claims {meta.next_pgno} pages, file has {file_pages}"))
        leaf_cap, branch_cap = capacities(page_size, meta.cfg, meta.agg_flags)
        leaf_min, branch_min = -(-leaf_cap // 2), -(-branch_cap // 2)
        mask = meta.cfg.mask
        hashsum_on = bool(meta.agg_flags & AGG_HASHSUM)
        seen: set[int] = set()
        leaf_depths: set[int] = set()
        prev_key: list[Optional[bytes]] = [None]

        def load(pgno: int) -> Optional[Node]:
            if pgno < 2 or pgno >= meta.next_pgno:
                return None
            fh.seek(pgno * page_size)
            data = fh.read(page_size)
            if len(data) != page_size:
                return None
            node = decode_page(data, meta.cfg, meta.agg_flags)
            return node

        def walk(pgno: int, depth: int, is_root: bool) -> tuple[int, int, Optional[bytes]]:
            if pgno in seen:
                report.violations.append(Violation(pgno, "page referenced twice"))
                return 0, 0, None
            seen.add(pgno)
            try:
                node = load(pgno)
            except CorruptFileError as exc:
                report.violations.append(Violation(pgno, str(exc)))
                return 0, 0, None
            if node is None:
                report.violations.append(Violation(pgno, "page number out of range"))
                return 0, 0, None
            if node.pgno != pgno:
                report.violations.append(Violation(pgno, f"header names page {node.pgno}"))
            report.pages_checked += 1
            keys = node.keys
            if node.leaf:
                leaf_depths.add(depth)
                n = len(keys)
                if n > leaf_cap or (not is_root and n < leaf_min) or n == 0:
                    report.violations.append(Violation(pgno, f"leaf holds {n} records"))
                for kb in keys:
                    if prev_key[0] is not None and not prev_key[0] < kb:
                        report.violations.append(Violation(pgno, "leaf records out of order"))
                        break
                    prev_key[0] = kb
                s = sum(node.sums) & mask if hashsum_on else 0
                return n, s, keys[0] if keys else None
            n = len(node.children)
            if n > branch_cap or n < (2 if is_root else branch_min):
                report.violations.append(Violation(pgno, f"branch fanout {n}"))
            total_c = total_s = 0
            bad = False
            for k in range(n):
                c, s, mn = walk(node.children[k], depth + 1, False)
                if node.counts[k] != c or (hashsum_on and node.csums[k] != s):
                    bad = True
                if mn is not None and keys[k] != mn:
                    report.violations.append(Violation(pgno, f"separator {k} is not the child minimum"))
                total_c += c
                total_s += s
            if bad:
                report.violations.append(Violation(pgno, "branch aggregate prefix differs from recomputation"))
            return total_c, total_s & mask, keys[0] if keys else None

        if meta.root is not None:
            entries, hashsum, _ = walk(meta.root, 1, True)
        else:
            entries, hashsum = 0, 0
        report.entries = entries
        if len(leaf_depths) > 1:
            report.violations.append(Violation(None, f"leaves at differing depths {sorted(leaf_depths)}"))
        if (meta.total_entries, meta.total_hashsum) != (entries, hashsum):
            report.violations.append(Violation(None, "meta totals differ from recomputation"))
    return report


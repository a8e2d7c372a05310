"""Leaf-to-leaf AST paths, vocabularies and fixed-width path encodings."""
import collections
import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import javaparse

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"

DEFAULT_R = 200
DEFAULT_MAX_PATH_NODES = 8
DEFAULT_MIN_COUNT = 2

UP, DOWN = "↑", "↓"


class CodePath(NamedTuple):
    start: str
    path: str
    end: str


def leaf_label(label):
    """Path-facing form of a leaf: string/char literal quotes are dropped."""
    if len(label) >= 2 and label[0] == label[-1] and label[0] in "\"'":
        return label[1:-1]
    return label


def extract_paths(tree, max_path_nodes=DEFAULT_MAX_PATH_NODES, directions=False):
    """All leaf pairs (left-to-right) whose connecting path has at most
    ``max_path_nodes`` nodes; ``0`` disables the cap.

    Paths are enumerated by their topmost node, so pairs that exceed the cap
    are never visited. Output is sorted by (left leaf, right leaf) frontier
    position.
    """
    cap = max_path_nodes or 0
    up_sep, down_sep = (UP, DOWN) if directions else ("|", "|")
    ends = []
    found = []

    def visit(node):
        # entries: (leaf index, nodes from here to leaf excl., text up to here, text down from here)
        if not node.children:
            label = leaf_label(node.label)
            ends.append(label)
            return [(len(ends) - 1, 0, label, label)]
        groups = [visit(c) for c in node.children]
        top = node.label
        for a in range(len(groups) - 1):
            for i, da, up, _ in groups[a]:
                head = up + up_sep + top + down_sep
                for b in range(a + 1, len(groups)):
                    for j, db, _, down in groups[b]:
                        if cap and da + db + 3 > cap:
                            continue
                        found.append((i, j, head + down))
        out = []
        limit = cap - 3 if cap else None
        for g in groups:
            for i, d, up, down in g:
                if limit is None or d + 1 <= limit:
                    out.append((i, d + 1, up + up_sep + top, top + down_sep + down))
        return out

    visit(tree)
    found.sort(key=lambda f: (f[0], f[1]))
    return [CodePath(ends[i], path, ends[j]) for i, j, path in found]


def stable_seed(*parts):
    h = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


_GOLDEN = 0x9E3779B97F4A7C15


def epoch_seed(base_seed, epoch):
    """Seed for one submission in one epoch, from its stable base seed."""
    return (int(base_seed) ^ ((epoch + 1) * _GOLDEN % 2**64)) % 2**64


def sample_indices(n_paths, R, seed):
    """Positions kept for one submission: all when ``n_paths <= R``, else R
    positions drawn without replacement by a generator seeded with ``seed``,
    returned in frontier order."""
    if n_paths <= R:
        return np.arange(n_paths)
    rng = np.random.default_rng(seed % 2**64)
    return np.sort(rng.choice(n_paths, size=R, replace=False))


def sample_paths(paths, R, rng_seed):
    """Return ``(selected paths, mask)``; padding slots are ``None``."""
    if R < 1:
        raise ValueError("R must be at least 1")
    keep = sample_indices(len(paths), R, rng_seed)
    selected = [paths[i] for i in keep] + [None] * (R - len(keep))
    mask = np.zeros(R, dtype=np.int8)
    mask[:len(keep)] = 1
    return selected, mask


@dataclass
class Vocab:
    node_vocab: dict
    path_vocab: dict
    min_count: int

    @property
    def n_nodes(self):
        return len(self.node_vocab)

    @property
    def n_paths(self):
        return len(self.path_vocab)

    def node(self, label):
        return self.node_vocab.get(label, UNK)

    def path(self, path):
        return self.path_vocab.get(path, UNK)

    def digest(self):
        h = hashlib.sha256()
        for table in (self.node_vocab, self.path_vocab):
            for k in table:
                h.update(k.encode("utf-8") + b"\x00")
            h.update(b"\x01")
        return h.hexdigest()[:16]

    def to_dict(self):
        return {"min_count": self.min_count,
                "nodes": list(self.node_vocab), "paths": list(self.path_vocab)}

    @classmethod
    def from_dict(cls, d):
        return cls({k: i for i, k in enumerate(d["nodes"])},
                   {k: i for i, k in enumerate(d["paths"])}, d["min_count"])


def build_vocab(path_lists, min_count=DEFAULT_MIN_COUNT):
    """Index labels/path strings seen at least ``min_count`` times in
    ``path_lists`` (one list of CodePath per training submission)."""
    nodes = collections.Counter()
    paths = collections.Counter()
    for plist in path_lists:
        for p in plist:
            nodes[p.start] += 1
            nodes[p.end] += 1
            paths[p.path] += 1

    def index(counter):
        table = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        # frequency-major, then lexical, so indices do not depend on corpus order
        for key, c in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0])):
            if c >= min_count and key not in table:
                table[key] = len(table)
        return table

    return Vocab(index(nodes), index(paths), min_count)


@dataclass
class EncodedSubmission:
    starts: np.ndarray
    paths: np.ndarray
    ends: np.ndarray
    mask: np.ndarray


def encode_submission(selected, vocab, R=None):
    """Indices for a selection from :func:`sample_paths` (``None`` = padding)."""
    R = len(selected) if R is None else R
    if len(selected) > R:
        raise ValueError(f"selection of {len(selected)} paths exceeds R={R}")
    starts = np.full(R, PAD, dtype=np.int64)
    paths = np.full(R, PAD, dtype=np.int64)
    ends = np.full(R, PAD, dtype=np.int64)
    mask = np.zeros(R, dtype=np.int8)
    for i, p in enumerate(selected):
        if p is None:
            continue
        starts[i], paths[i], ends[i] = vocab.node(p.start), vocab.path(p.path), vocab.node(p.end)
        mask[i] = 1
    return EncodedSubmission(starts, paths, ends, mask)


def index_paths(paths, vocab):
    """All paths of one submission as a (3, n) index array, for per-epoch sampling."""
    out = np.empty((3, len(paths)), dtype=np.int64)
    for i, p in enumerate(paths):
        out[0, i] = vocab.node(p.start)
        out[1, i] = vocab.path(p.path)
        out[2, i] = vocab.node(p.end)
    return out


def format_tsv(paths):
    return "\n".join(f"{p.start}\t{p.path}\t{p.end}" for p in paths)


class PathIndex:
    """Interned path storage for a corpus of submissions.

    Each distinct source text is parsed once; its paths are kept as an int32
    (3, n) array of corpus-global ids into ``labels`` / ``path_strings``.
    """

    def __init__(self, max_path_nodes=DEFAULT_MAX_PATH_NODES, directions=False, parser=None):
        self.max_path_nodes = max_path_nodes
        self.directions = directions
        self._parse = parser or javaparse.parse_source
        self.labels = []
        self.path_strings = []
        self._label_ids = {}
        self._path_ids = {}
        self.arrays = []
        self.modes = []
        self._by_source = {}

    def _intern(self, table, ids, key):
        i = ids.get(key)
        if i is None:
            i = ids[key] = len(table)
            table.append(key)
        return i

    def add(self, source):
        """Code id for ``source`` (parsed and extracted on first sight)."""
        cid = self._by_source.get(source)
        if cid is not None:
            return cid
        outcome = self._parse(source)
        paths = extract_paths(outcome.tree, self.max_path_nodes, self.directions)
        arr = np.empty((3, len(paths)), dtype=np.int32)
        li, pi = self._label_ids, self._path_ids
        for k, p in enumerate(paths):
            arr[0, k] = self._intern(self.labels, li, p.start)
            arr[1, k] = self._intern(self.path_strings, pi, p.path)
            arr[2, k] = self._intern(self.labels, li, p.end)
        cid = len(self.arrays)
        self.arrays.append(arr)
        self.modes.append(outcome.mode)
        self._by_source[source] = cid
        return cid

    def paths(self, cid):
        arr = self.arrays[cid]
        return [CodePath(self.labels[s], self.path_strings[p], self.labels[e]) for s, p, e in arr.T]

    def build_vocab(self, code_ids, min_count=DEFAULT_MIN_COUNT):
        """Vocabulary counted over the submissions ``code_ids`` (with repeats),
        plus remap arrays from global ids to vocabulary indices."""
        node_counts = np.zeros(len(self.labels), dtype=np.int64)
        path_counts = np.zeros(len(self.path_strings), dtype=np.int64)
        uniq, reps = np.unique(np.asarray(list(code_ids), dtype=np.int64), return_counts=True)
        for cid, rep in zip(uniq, reps):
            arr = self.arrays[cid]
            if arr.shape[1] == 0:
                continue
            node_counts += rep * (np.bincount(arr[0], minlength=len(self.labels))
                                  + np.bincount(arr[2], minlength=len(self.labels)))
            path_counts += rep * np.bincount(arr[1], minlength=len(self.path_strings))

        def index(counts, names):
            table = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
            remap = np.full(len(names), UNK, dtype=np.int32)
            keep = [i for i in np.flatnonzero(counts >= min_count) if names[i] not in table]
            keep.sort(key=lambda i: (-counts[i], names[i]))
            for i in keep:
                remap[i] = table[names[i]] = len(table)
            return table, remap

        nodes, node_remap = index(node_counts, self.labels)
        paths, path_remap = index(path_counts, self.path_strings)
        return Vocab(nodes, paths, min_count), (node_remap, path_remap)

    def remap_for(self, vocab):
        """Global id -> vocabulary index arrays for an existing ``vocab``."""
        node_remap = np.array([vocab.node(x) for x in self.labels], dtype=np.int32)
        path_remap = np.array([vocab.path(x) for x in self.path_strings], dtype=np.int32)
        return node_remap, path_remap


class CodeBank:
    """Vocabulary-indexed paths for a fixed list of submissions, with seeded
    per-epoch R-path sampling vectorised over the whole list."""

    def __init__(self, index, code_ids, submission_keys, vocab_remap, R, seed):
        node_remap, path_remap = vocab_remap
        self.R = R
        self.code_ids = np.asarray(code_ids, dtype=np.int64)
        arrays = [index.arrays[c] for c in self.code_ids]
        self.counts = np.array([a.shape[1] for a in arrays], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.counts)])
        flat = np.concatenate(arrays, axis=1) if arrays else np.zeros((3, 0), dtype=np.int32)
        self.flat = np.stack([node_remap[flat[0]], path_remap[flat[1]], node_remap[flat[2]]]).astype(np.int32) \
            if flat.shape[1] else np.zeros((3, 0), dtype=np.int32)
        self.base_seeds = np.array([stable_seed(seed, k) for k in submission_keys], dtype=np.uint64)

    def __len__(self):
        return len(self.code_ids)

    def sample(self, epoch):
        """(starts, paths, ends, mask) arrays of shape (n_submissions, R)."""
        n = len(self.code_ids)
        R = self.R
        pos = np.full((n, R), -1, dtype=np.int64)
        for i in range(n):
            c = int(self.counts[i])
            if c == 0:
                continue
            keep = sample_indices(c, R, epoch_seed(self.base_seeds[i], epoch))
            pos[i, :keep.size] = self.offsets[i] + keep
        mask = (pos >= 0).astype(np.int8)
        flat = np.concatenate([self.flat, np.zeros((3, 1), dtype=np.int32)], axis=1)  # PAD column
        starts, paths, ends = (flat[k][pos].astype(np.int64) for k in range(3))
        return starts, paths, ends, mask



"""Hypergraphs with repeated hyperlinks, text ingestion and incidence encoding.

Vertices are 0-based in the Python API. The text format and every exported
report (JSON/CSV) use 1-based vertex ids, or the original string labels when
the input was labelled.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
from scipy import sparse

__all__ = [
    "Hypergraph",
    "HypergraphError",
    "ParseError",
    "parse_hyperlinks",
    "read_hyperlinks",
    "format_hyperlinks",
    "incidence",
    "from_incidence",
    "degree",
    "degrees",
    "orders",
    "audit",
]

_INT_RE = re.compile(r"^[+-]?\d+$")
_SPLIT_RE = re.compile(r"[,\s]+")
_HEADER_RE = re.compile(r"^#\s*n=(\d+)", re.MULTILINE)


class HypergraphError(ValueError):
    """Invalid vertex index or ill-posed statistic."""


class ParseError(HypergraphError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Hypergraph:
    """``m`` hyperlinks over ``n`` vertices.

    ``links[j]`` is the sorted tuple of vertex indices of hyperlink ``j``.
    Identical tuples are distinct hyperlinks (multiplicity), and empty
    tuples are allowed.
    """

    n: int
    links: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        if self.n < 1:
            raise HypergraphError(f"vertex count must be positive, got {self.n}")
        links = tuple(tuple(sorted(set(int(v) for v in e))) for e in self.links)
        for j, e in enumerate(links):
            if e and (e[0] < 0 or e[-1] >= self.n):
                raise HypergraphError(f"link {j} has a vertex outside [0, {self.n})")
        object.__setattr__(self, "links", links)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.n:
                raise HypergraphError("label table length must equal n")
            if len(set(labels)) != self.n:
                raise HypergraphError("vertex labels must be unique")
            object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return len(self.links)

    def order(self, j: int) -> int:
        return len(self.links[j])

    def vertex_id(self, i: int) -> str | int:
        """External identifier of vertex ``i``: its label, else ``i + 1``."""
        return self.labels[i] if self.labels is not None else i + 1

    def index_of(self, ident: str | int) -> int:
        """Inverse of :meth:`vertex_id`."""
        if self.labels is not None:
            try:
                return self.labels.index(str(ident))
            except ValueError:
                raise HypergraphError(f"unknown vertex label {ident!r}") from None
        i = int(ident) - 1
        if not 0 <= i < self.n:
            raise HypergraphError(f"vertex id {ident} outside [1, {self.n}]")
        return i

    def stacked(self, times: int = 2) -> "Hypergraph":
        """Every hyperlink repeated ``times`` times (block-wise)."""
        return Hypergraph(self.n, self.links * times, self.labels)


def _tokenize(text: str) -> Iterable[tuple[int, list[str]]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if any(ord(c) < 32 and c not in "\t" for c in line):
            raise ParseError(lineno, "control character in line")
        stripped = line.strip(", \t")
        if not stripped:
            raise ParseError(lineno, "line contains only separators")
        if re.search(r",\s*,", stripped):
            raise ParseError(lineno, "empty vertex token between commas")
        yield lineno, _SPLIT_RE.split(stripped)


def parse_hyperlinks(
    stream: str | TextIO,
    n_hint: int | None = None,
    labelled: bool | None = None,
) -> Hypergraph:
    """Read one hyperlink per line.

    Tokens are separated by whitespace or commas; lines starting with ``#``
    and blank lines are skipped; a ``# n=<int>`` comment acts as ``n_hint``
    when none is passed. When every token is an integer the ids are
    read as 1-based vertex indices (``labelled=False``); otherwise tokens are
    labels interned to indices in order of first appearance. Repeated
    vertices within a line collapse to one membership. An empty hyperlink
    is written as a line holding only ``{}``.
    """
    text = stream if isinstance(stream, str) else stream.read()
    if n_hint is None:
        header = _HEADER_RE.search(text)
        if header:
            n_hint = int(header.group(1))
    rows: list[tuple[int, list[str]]] = []
    for lineno, tokens in _tokenize(text):
        if tokens == ["{}"]:
            tokens = []
        rows.append((lineno, tokens))

    if labelled is None:
        labelled = any(not _INT_RE.match(t) for _, toks in rows for t in toks)

    links: list[list[int]] = []
    if labelled:
        table: dict[str, int] = {}
        for _, toks in rows:
            links.append([table.setdefault(t, len(table)) for t in toks])
        labels = list(table)
        n = len(labels)
        if n_hint is not None:
            if n_hint < n:
                raise HypergraphError(f"n_hint={n_hint} smaller than {n} observed labels")
            labels += [f"#{i + 1}" for i in range(n, n_hint)]
            n = n_hint
        if n == 0:
            raise HypergraphError("no vertices observed and no n_hint given")
        return Hypergraph(n, tuple(tuple(e) for e in links), tuple(labels))

    top = 0
    for lineno, toks in rows:
        link = []
        for t in toks:
            if not _INT_RE.match(t):
                raise ParseError(lineno, f"malformed vertex id {t!r}")
            v = int(t)
            if v <= 0:
                raise HypergraphError(f"line {lineno}: vertex id {v} must be >= 1")
            link.append(v - 1)
            top = max(top, v)
        links.append(link)
    if n_hint is not None:
        if n_hint < top:
            raise HypergraphError(f"vertex id {top} exceeds n_hint={n_hint}")
        top = n_hint
    if top == 0:
        raise HypergraphError("no vertices observed and no n_hint given")
    return Hypergraph(top, tuple(tuple(e) for e in links))


def read_hyperlinks(path, n_hint: int | None = None) -> Hypergraph:
    with open(path, encoding="utf-8") as fh:
        return parse_hyperlinks(fh, n_hint=n_hint)


def format_hyperlinks(hg: Hypergraph) -> str:
    """Inverse of :func:`parse_hyperlinks` (a header comment records ``n``)."""
    out = io.StringIO()
    out.write(f"# n={hg.n} m={hg.m}\n")
    for e in hg.links:
        if not e:
            out.write("{}\n")
        else:
            out.write(" ".join(str(hg.vertex_id(i)) for i in e) + "\n")
    return out.getvalue()


def incidence(hg: Hypergraph) -> sparse.csr_array:
    """Binary ``m x n`` incidence matrix with ``Y[j, i] = 1`` iff ``i`` in ``e_j``."""
    indptr = np.zeros(hg.m + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(e) for e in hg.links])
    indices = np.fromiter((i for e in hg.links for i in e), dtype=np.int64, count=indptr[-1])
    data = np.ones(indptr[-1], dtype=np.int8)
    return sparse.csr_array((data, indices, indptr), shape=(hg.m, hg.n))


def from_incidence(Y, labels: tuple[str, ...] | None = None) -> Hypergraph:
    """Rebuild the hyperlink list (row order preserved) from an incidence matrix."""
    Y = sparse.csr_array(Y)
    Y.eliminate_zeros()
    Y.sort_indices()
    m, n = Y.shape
    links = tuple(tuple(int(i) for i in Y.indices[Y.indptr[j]:Y.indptr[j + 1]]) for j in range(m))
    return Hypergraph(n, links, labels)


def orders(hg: Hypergraph) -> np.ndarray:
    return np.array([len(e) for e in hg.links], dtype=np.int64)


def degrees(hg: Hypergraph) -> np.ndarray:
    deg = np.zeros(hg.n, dtype=np.int64)
    for e in hg.links:
        deg[list(e)] += 1
    return deg


def degree(hg: Hypergraph, i: int) -> int:
    """Number of hyperlinks containing vertex ``i`` (0-based)."""
    if not 0 <= i < hg.n:
        raise HypergraphError(f"vertex index {i} outside [0, {hg.n})")
    return sum(1 for e in hg.links if i in e)


def audit(hg: Hypergraph) -> dict:
    """Null vertices, empty (non-informative) hyperlinks and incidence density.

    Indices in the returned sets are 0-based; see :func:`audit_report` for
    the external form.
    """
    if hg.m * hg.n == 0:
        raise HypergraphError("density undefined for an empty incidence matrix")
    deg = degrees(hg)
    ords = orders(hg)
    return {
        "null_vertices": set(np.flatnonzero(deg == 0).tolist()),
        "non_informative_links": set(np.flatnonzero(ords == 0).tolist()),
        "density": float(ords.sum()) / (hg.m * hg.n),
    }


def audit_report(hg: Hypergraph) -> dict:
    """JSON-ready audit with external ids (1-based or labels; links 1-based)."""
    a = audit(hg)
    return {
        "null_vertices": [hg.vertex_id(i) for i in sorted(a["null_vertices"])],
        "non_informative_links": [j + 1 for j in sorted(a["non_informative_links"])],
        "density": a["density"],
    }

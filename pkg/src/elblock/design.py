"""General block designs with partially observed treatment responses.

A design holds ``n`` blocks and ``p`` treatments.  Block ``i`` observes the
treatments where ``incidence[i, k]`` is true; ``values[i, k]`` is the response
there and exactly ``0.0`` elsewhere.
"""

from __future__ import annotations

import csv
import itertools
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DesignError, DuplicateCellError

DUPLICATE_POLICIES = ("error", "average")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BlockDesign:
    """Observations plus binary incidence structure.

    Use :func:`ingest`, :func:`read_csv` or :meth:`from_arrays` rather than
    calling the constructor directly.
    """

    incidence: np.ndarray
    values: np.ndarray
    block_labels: tuple = ()
    treatment_labels: tuple = ()
    duplicate_warnings: int = 0

    def __post_init__(self):
        inc = np.asarray(self.incidence, dtype=bool)
        if inc.ndim != 2 or inc.shape[0] < 1 or inc.shape[1] < 1:
            raise DesignError("incidence must be a non-empty n x p table")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != inc.shape:
            raise DesignError(
                f"values shape {vals.shape} does not match incidence {inc.shape}")
        if not inc.any(axis=1).all():
            empty = np.flatnonzero(~inc.any(axis=1))
            raise DesignError(f"blocks without observations: {empty.tolist()}")
        if not np.isfinite(vals[inc]).all():
            raise DesignError("non-finite response value")
        vals = np.where(inc, vals, 0.0)
        n, p = inc.shape
        blabels = tuple(self.block_labels) or tuple(f"b{i + 1}" for i in range(n))
        tlabels = tuple(self.treatment_labels) or tuple(f"t{k + 1}" for k in range(p))
        if len(blabels) != n or len(tlabels) != p:
            raise DesignError("label count does not match design shape")
        object.__setattr__(self, "incidence", _frozen(inc))
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "block_labels", blabels)
        object.__setattr__(self, "treatment_labels", tlabels)

    @classmethod
    def from_arrays(cls, incidence, values=None, *, block_labels=(),
                    treatment_labels=()) -> BlockDesign:
        inc = np.asarray(incidence, dtype=bool)
        if values is None:
            values = np.zeros(inc.shape)
        return cls(inc, values, tuple(block_labels), tuple(treatment_labels))

    @property
    def n_blocks(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_treatments(self) -> int:
        return self.incidence.shape[1]

    @cached_property
    def block_sizes(self) -> np.ndarray:
        return _frozen(self.incidence.sum(axis=1))

    @cached_property
    def replications(self) -> np.ndarray:
        return _frozen(self.incidence.sum(axis=0))

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row-compressed ``(indptr, treatment index, value)`` arrays."""
        ptr = np.zeros(self.n_blocks + 1, dtype=np.int64)
        np.cumsum(self.block_sizes, out=ptr[1:])
        rows, cols = np.nonzero(self.incidence)
        return (_frozen(ptr), _frozen(cols.astype(np.int64)),
                _frozen(self.values[rows, cols]))

    def with_values(self, values) -> BlockDesign:
        """Same incidence and labels, new responses."""
        return BlockDesign(self.incidence, values, self.block_labels,
                           self.treatment_labels)

    def take_blocks(self, rows) -> BlockDesign:
        """Design built from whole blocks ``rows`` (repeats allowed)."""
        rows = np.asarray(rows, dtype=np.int64)
        return BlockDesign(self.incidence[rows], self.values[rows],
                           tuple(f"b{i + 1}" for i in range(len(rows))),
                           self.treatment_labels)

    def observed(self, k: int) -> np.ndarray:
        return self.values[self.incidence[:, k], k]


@dataclass(frozen=True, eq=False)
class DesignSummary:
    block_sizes: np.ndarray
    replications: np.ndarray
    concurrence: np.ndarray
    d_hat: np.ndarray
    min_replication_ratio: float

    def to_dict(self) -> dict:
        return {
            "n_blocks": int(len(self.block_sizes)),
            "n_treatments": int(len(self.replications)),
            "block_sizes": self.block_sizes.tolist(),
            "replications": self.replications.tolist(),
            "concurrence": self.concurrence.tolist(),
            "min_replication_ratio": self.min_replication_ratio,
        }


def ingest(records: Iterable[Sequence], duplicate_policy: str = "error") -> BlockDesign:
    """Build a design from ``(block_id, treatment_id, value)`` records.

    Labels are mapped to 0-based indices in order of first appearance.  With
    ``duplicate_policy="average"`` repeated cells are replaced by their mean
    and counted in ``duplicate_warnings``.
    """
    if duplicate_policy not in DUPLICATE_POLICIES:
        raise ValueError(f"duplicate_policy must be one of {DUPLICATE_POLICIES}")
    blocks: dict = {}
    treatments: dict = {}
    cells: dict[tuple[int, int], list[float]] = {}
    for rec in records:
        if len(rec) != 3:
            raise DesignError(f"record must have 3 fields, got {len(rec)}")
        b, t, v = rec
        try:
            v = float(v)
        except (TypeError, ValueError):
            raise DesignError(f"unparsable value {v!r}") from None
        if not np.isfinite(v):
            raise DesignError(f"non-finite value for block {b!r}, treatment {t!r}")
        i = blocks.setdefault(b, len(blocks))
        k = treatments.setdefault(t, len(treatments))
        if (i, k) in cells and duplicate_policy == "error":
            raise DuplicateCellError(f"duplicate cell (block={b!r}, treatment={t!r})")
        cells.setdefault((i, k), []).append(v)
    if not cells:
        raise DesignError("no records")

    n, p = len(blocks), len(treatments)
    inc = np.zeros((n, p), dtype=bool)
    vals = np.zeros((n, p))
    dups = 0
    for (i, k), vs in cells.items():
        inc[i, k] = True
        if len(vs) > 1:
            dups += 1
            vals[i, k] = sum(vs) / len(vs)
        else:
            vals[i, k] = vs[0]
    if dups:
        warnings.warn(f"averaged {dups} replicated (block, treatment) cells",
                      stacklevel=2)
    return BlockDesign(inc, vals, tuple(str(b) for b in blocks),
                       tuple(str(t) for t in treatments), dups)


def read_csv(path, duplicate_policy: str = "error") -> BlockDesign:
    """Read a ``block,treatment,value`` CSV file (UTF-8, header required)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DesignError(f"{path}: empty file")
    header = [c.strip().lower() for c in rows[0]]
    if header != ["block", "treatment", "value"]:
        raise DesignError(f"{path}: expected header block,treatment,value")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise DesignError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        records.append((row[0].strip(), row[1].strip(), row[2].strip()))
    if not records:
        raise DesignError(f"{path}: no data rows")
    return ingest(records, duplicate_policy)


def summarize(design: BlockDesign) -> DesignSummary:
    c = design.incidence.astype(np.int64)
    conc = c.T @ c
    n = design.n_blocks
    r = design.replications
    return DesignSummary(
        block_sizes=design.block_sizes,
        replications=r,
        concurrence=_frozen(conc),
        d_hat=_frozen(conc / n),
        min_replication_ratio=float(r.min() / n),
    )


def connectivity(design: BlockDesign) -> list[tuple[int, ...]]:
    """Connected components of the treatment concurrence graph.

    A single component means the design is connected.  Components are listed
    by their smallest treatment index.
    """
    conc = summarize(design).concurrence
    _, labels = connected_components(csr_matrix(conc > 0), directed=False)
    comps: dict[int, list[int]] = {}
    for k, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(k)
    return sorted((tuple(v) for v in comps.values()), key=lambda t: t[0])


def generate_pair_design(p: int, reps_per_pair: int) -> BlockDesign:
    """Blocks of size two covering every unordered pair ``reps_per_pair`` times.

    For ``p=5`` this is the (5, n, 0.4n, 2, 0.1n) balanced incomplete block
    design with ``reps_per_pair = n / 10``.  Values are zero placeholders.
    """
    if p < 2 or reps_per_pair < 1:
        raise ValueError("need p >= 2 and reps_per_pair >= 1")
    pairs = list(itertools.combinations(range(p), 2))
    inc = np.zeros((reps_per_pair * len(pairs), p), dtype=bool)
    for row, (_, (k, l)) in enumerate(itertools.product(range(reps_per_pair), pairs)):
        inc[row, [k, l]] = True
    return BlockDesign.from_arrays(inc)

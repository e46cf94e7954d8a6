"""Construction of the signal-alignment relaying scheme.

The relay applies a wide compression matrix whose rows are drawn from the
left null spaces of stacked channel subsets, so that after compression each
user pair's signals can be forced into a common column: the alignment
equation ``P H_i V_ij == P H_j V_ji``.  The relay then only has to decode
the stacked pairwise sums, one network-coded stream per compressed
dimension.

Construction order, for a branch index ``beta``:

1. ``allocate_streams`` fixes the symmetric per-pair stream count.
2. ``required_row_counts`` distributes compression rows over the
   ``C(K, beta)`` antenna subsets and checks the feasibility inequalities.
3. ``build_compression_matrix`` extracts the rows by SVD.
4. ``build_precoders`` pulls each pair's joint precoder from the null
   space of the compressed pair channel.
5. ``assemble_scheme`` stacks the aligned basis and certifies residual and
   conditioning.

``verify_alignment_conditions`` re-checks the two structural conditions of
the scheme (row membership counts and precoder null-space residuals)
independently of how the scheme was built.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from math import comb, gcd

import numpy as np

from .bounds import corner_abscissa
from .channel import ChannelSet
from .config import SystemConfig
from .errors import (
    AlignmentInfeasibleError,
    AlignmentVerificationError,
    ConfigurationError,
    DecodabilityError,
    DegenerateChannelError,
    DegenerateSplitError,
    InfeasibleConfigurationError,
    NeedsExtensionError,
)
from .serialization import complex_matrix_from_pairs, complex_matrix_to_pairs

__all__ = [
    "StreamAllocation",
    "RowCounts",
    "CompressionMatrix",
    "AlignmentScheme",
    "PairCheck",
    "AlignmentReport",
    "allocate_streams",
    "required_row_counts",
    "build_compression_matrix",
    "build_precoders",
    "assemble_scheme",
    "verify_alignment_conditions",
    "scheme_to_dict",
    "scheme_from_dict",
    "save_scheme",
    "load_scheme",
]

# A singular value counts as zero below this fraction of the largest one.
NULL_SPACE_RTOL = 1e-10
# Residual ceiling for rows placed in a left null space, relative to the
# stacked matrix norm.
ROW_RESIDUAL_TOL = 1e-9
# Normalized alignment residual ceiling for an assembled scheme.
ALIGNMENT_TOL = 1e-8
# Condition-number ceiling for the aligned basis.
BASIS_COND_MAX = 1e8
# Relative residual below which the verifier counts a row as annihilating
# a pair, and above which a precoder fails the null-space condition.
VERIFY_TOL = 1e-8


@dataclass(frozen=True)
class StreamAllocation:
    """Stream counts per ordered user pair.

    Symmetric allocations (the only kind produced here) carry the same
    count ``x`` in both directions of every pair.
    """

    cfg: SystemConfig
    d: dict[tuple[int, int], int]

    @property
    def d_total(self) -> int:
        return sum(self.d.values())

    @property
    def rows(self) -> int:
        """Row count of the compression matrix, d_total / 2."""
        total = self.d_total
        if total % 2:
            raise ConfigurationError(f"total stream count must be even, got {total}")
        return total // 2

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """Unordered pairs (i < j) in lexicographic order."""
        return list(itertools.combinations(range(self.cfg.K), 2))

    @property
    def is_symmetric(self) -> bool:
        values = set(self.d.values())
        return len(values) == 1

    @property
    def per_pair(self) -> int:
        if not self.is_symmetric:
            raise ConfigurationError("allocation is not symmetric")
        return next(iter(self.d.values()))

    def blocks(self) -> list[tuple[tuple[int, int], int, int]]:
        """(pair, start, stop) column blocks in the aligned basis."""
        out = []
        start = 0
        for pair in self.pairs:
            width = self.d[pair]
            out.append((pair, start, start + width))
            start += width
        return out


def allocate_streams(cfg: SystemConfig, beta: int) -> StreamAllocation:
    """Symmetric per-pair stream count achieving the corner for ``beta``.

    The closed form is ``x = 4M / (2 + K(K-1) - beta(beta-1))``.  A
    fractional x means the configuration needs a symbol extension by the
    denominator of x; a ratio below the corner abscissa cannot host the
    allocation at all.
    """
    K = cfg.K
    if not 2 <= beta <= K - 2:
        raise ConfigurationError(f"beta must be in [2, {K - 2}] for K={K}, got {beta}")
    alpha = corner_abscissa(K, beta)
    if cfg.ratio < alpha:
        n_min = -(-alpha.numerator * cfg.M // alpha.denominator)  # ceil(alpha * M)
        raise InfeasibleConfigurationError(
            f"ratio N/M={cfg.ratio} is below the beta={beta} corner {alpha}: "
            f"needs N >= {n_min} at M={cfg.M}",
            inequality="N/M >= corner abscissa",
        )
    x = Fraction(4 * cfg.M, 2 + K * (K - 1) - beta * (beta - 1))
    if x.denominator != 1:
        raise NeedsExtensionError(
            f"per-pair stream count {x} is fractional; needs a "
            f"{x.denominator}-symbol extension",
            factor=x.denominator,
        )
    d = {(i, j): int(x) for i in range(K) for j in range(K) if i != j}
    return StreamAllocation(cfg=cfg, d=d)


@dataclass(frozen=True)
class RowCounts:
    """Compression-row bookkeeping for one branch index.

    ``q`` rows go to each of the ``subsets`` antenna subsets; ``p[(i, j)]``
    counts the rows annihilating both channels of a pair.
    """

    q: int
    p: dict[tuple[int, int], int]
    rows: int
    subsets: int


def required_row_counts(
    cfg: SystemConfig, alloc: StreamAllocation, beta: int
) -> RowCounts:
    """Distribute compression rows over subsets and check feasibility.

    Every size-``beta`` subset receives ``q = rows / C(K, beta)`` rows,
    which must be a nonnegative integer; each pair is then covered by
    ``q * C(K-2, beta-2)`` rows.  Feasibility needs ``q <= N - beta*M``
    (the left null space is big enough) and ``p >= rows - 2M + d_ij``
    (enough rows to shrink the pair channel's rank).
    """
    if not alloc.is_symmetric:
        raise ConfigurationError("row counting requires a symmetric allocation")
    K = cfg.K
    rows = alloc.rows
    subsets = comb(K, beta)
    q, rem = divmod(rows, subsets)
    if rem:
        need = subsets // gcd(rows, subsets)
        raise NeedsExtensionError(
            f"{rows} compression rows do not divide over {subsets} subsets; "
            f"needs a {need}-symbol extension",
            factor=need,
        )
    if q > cfg.N - beta * cfg.M:
        raise InfeasibleConfigurationError(
            f"q={q} rows per subset exceed the null space size N - beta*M = "
            f"{cfg.N - beta * cfg.M}",
            inequality="q <= N - beta*M",
        )
    per_pair_rows = q * comb(K - 2, beta - 2)
    p = {}
    for i, j in itertools.combinations(range(K), 2):
        need = rows - 2 * cfg.M + alloc.d[(i, j)]
        if per_pair_rows < need:
            raise InfeasibleConfigurationError(
                f"pair ({i},{j}) is covered by {per_pair_rows} rows but needs "
                f"{need} (rows - 2M + d_ij)",
                inequality="p >= rows - 2M + d_ij",
            )
        p[(i, j)] = per_pair_rows
    return RowCounts(q=q, p=p, rows=rows, subsets=subsets)


@dataclass(frozen=True)
class CompressionMatrix:
    """The relay's compression matrix with per-row provenance.

    ``row_subsets[k]`` is the antenna subset whose stacked channel the
    k-th row annihilates; ``row_residuals[k]`` the measured residual.
    """

    matrix: np.ndarray
    row_subsets: tuple[tuple[int, ...], ...]
    row_residuals: np.ndarray


def _left_null_rows(stack: np.ndarray, count: int) -> tuple[np.ndarray, int]:
    """First ``count`` left-null rows of ``stack``, ascending singular value.

    Returns the rows and the full left-null dimension.
    """
    n = stack.shape[0]
    u, s, _ = np.linalg.svd(stack)
    sigma = np.zeros(n)
    sigma[: s.size] = s
    cutoff = NULL_SPACE_RTOL * (s[0] if s.size else 0.0)
    null_dim = int(np.count_nonzero(sigma <= cutoff))
    order = np.argsort(sigma, kind="stable")
    if count:
        rows = np.stack([u[:, k].conj() for k in order[:count]])
    else:
        rows = np.empty((0, n), dtype=complex)
    return rows, null_dim


def build_compression_matrix(
    ch: ChannelSet, alloc: StreamAllocation, beta: int
) -> CompressionMatrix:
    """Extract q left-null rows per antenna subset, lexicographic order."""
    cfg = ch.cfg
    counts = required_row_counts(cfg, alloc, beta)
    rows = []
    provenance = []
    residuals = []
    for subset in itertools.combinations(range(cfg.K), beta):
        stack = np.hstack([ch.uplink[g] for g in subset])
        picked, null_dim = _left_null_rows(stack, counts.q)
        if null_dim < counts.q:
            raise InfeasibleConfigurationError(
                f"subset {subset}: left null space has dimension {null_dim} < q={counts.q}",
                inequality="null dimension >= q",
            )
        scale = np.linalg.norm(stack, 2)
        for row in picked:
            residual = np.linalg.norm(row @ stack)
            if residual > ROW_RESIDUAL_TOL * scale:
                raise DegenerateChannelError(
                    f"subset {subset}: null row residual {residual:.3e} above "
                    f"tolerance; reseed"
                )
            rows.append(row)
            provenance.append(subset)
            residuals.append(residual)
    matrix = np.vstack(rows) if rows else np.empty((0, cfg.N))
    if matrix.shape[0]:
        sv = np.linalg.svd(matrix, compute_uv=False)
        if sv[-1] <= NULL_SPACE_RTOL * sv[0]:
            raise DegenerateChannelError(
                "compression matrix lost row rank (probability-zero event); reseed"
            )
    matrix.setflags(write=False)
    return CompressionMatrix(
        matrix=matrix,
        row_subsets=tuple(provenance),
        row_residuals=np.asarray(residuals),
    )


def build_precoders(
    ch: ChannelSet, compression: CompressionMatrix, alloc: StreamAllocation
) -> dict[tuple[int, int], np.ndarray]:
    """Per-pair precoders from the compressed pair channel's null space.

    For each unordered pair the stacked null vector splits into the two
    directions' precoder columns; both halves are scaled jointly so the
    larger one has unit norm, keeping the alignment identity intact while
    bounding per-stream transmit power.
    """
    cfg = ch.cfg
    M = cfg.M
    P = compression.matrix
    precoders: dict[tuple[int, int], np.ndarray] = {}
    for i, j in alloc.pairs:
        a = np.hstack([P @ ch.uplink[i], -(P @ ch.uplink[j])])
        _, s, vh = np.linalg.svd(a)
        sigma = np.zeros(2 * M)
        sigma[: s.size] = s
        cutoff = NULL_SPACE_RTOL * (s[0] if s.size else 0.0)
        null_dim = int(np.count_nonzero(sigma <= cutoff))
        need = alloc.d[(i, j)]
        if null_dim < need:
            raise AlignmentInfeasibleError(
                f"pair ({i},{j}): null space dimension {null_dim} < {need} streams"
            )
        order = np.argsort(sigma, kind="stable")
        top_cols = []
        bottom_cols = []
        for k in order[:need]:
            w = vh[k].conj()
            top, bottom = w[:M], w[M:]
            scale = max(np.linalg.norm(top), np.linalg.norm(bottom))
            if scale <= NULL_SPACE_RTOL:
                raise DegenerateSplitError(
                    f"pair ({i},{j}): null vector vanished on both halves; reseed"
                )
            top_cols.append(top / scale)
            bottom_cols.append(bottom / scale)
        v_ij = np.stack(top_cols, axis=1)
        v_ji = np.stack(bottom_cols, axis=1)
        for direction, v in (((i, j), v_ij), ((j, i), v_ji)):
            sv = np.linalg.svd(v, compute_uv=False)
            if sv.size == 0 or sv[-1] <= NULL_SPACE_RTOL * max(sv[0], 1.0):
                raise DegenerateSplitError(
                    f"precoder {direction} lost column rank; reseed or re-pick "
                    f"basis vectors"
                )
            v.setflags(write=False)
        precoders[(i, j)] = v_ij
        precoders[(j, i)] = v_ji
    return precoders


@dataclass(frozen=True)
class AlignmentScheme:
    """A fully assembled relaying scheme.

    ``aligned_basis`` maps the stacked pairwise symbol sums to the
    compressed relay observation; it is square and well conditioned for
    generic channels.
    """

    cfg: SystemConfig
    beta: int
    alloc: StreamAllocation
    compression: CompressionMatrix
    precoders: dict[tuple[int, int], np.ndarray]
    aligned_basis: np.ndarray
    alignment_residual: float
    basis_condition: float

    @property
    def pair_blocks(self) -> list[tuple[tuple[int, int], int, int]]:
        return self.alloc.blocks()


def assemble_scheme(
    ch: ChannelSet,
    alloc: StreamAllocation,
    beta: int,
    *,
    tol_align: float = ALIGNMENT_TOL,
    cond_max: float = BASIS_COND_MAX,
) -> AlignmentScheme:
    """Build and certify the full scheme for one channel realization."""
    compression = build_compression_matrix(ch, alloc, beta)
    precoders = build_precoders(ch, compression, alloc)
    P = compression.matrix
    p_norm = np.linalg.norm(P, 2)
    blocks = []
    residual = 0.0
    for i, j in alloc.pairs:
        left = P @ ch.uplink[i] @ precoders[(i, j)]
        right = P @ ch.uplink[j] @ precoders[(j, i)]
        scale = p_norm * np.linalg.norm(ch.uplink[i], 2) * np.linalg.norm(
            precoders[(i, j)], 2
        )
        residual = max(residual, np.abs(left - right).max() / scale)
        blocks.append(left)
    if residual > tol_align:
        raise AlignmentVerificationError(
            f"alignment residual {residual:.3e} exceeds {tol_align:.1e}"
        )
    basis = np.hstack(blocks)
    if basis.shape[0] != basis.shape[1]:
        raise ConfigurationError(
            f"aligned basis is {basis.shape}, expected square; allocation must "
            f"be symmetric"
        )
    sv = np.linalg.svd(basis, compute_uv=False)
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if condition > cond_max:
        raise DecodabilityError(
            f"aligned basis condition number {condition:.3e} exceeds {cond_max:.1e}"
        )
    basis.setflags(write=False)
    return AlignmentScheme(
        cfg=ch.cfg,
        beta=beta,
        alloc=alloc,
        compression=compression,
        precoders=precoders,
        aligned_basis=basis,
        alignment_residual=float(residual),
        basis_condition=condition,
    )


@dataclass(frozen=True)
class PairCheck:
    """Verification outcome for one unordered pair."""

    null_rows_found: int
    null_rows_required: int
    condition1: bool
    precoder_residual: float
    residual_tolerance: float
    condition2: bool

    @property
    def passed(self) -> bool:
        return self.condition1 and self.condition2


@dataclass(frozen=True)
class AlignmentReport:
    """Independent re-check of the scheme's two structural conditions."""

    per_pair: dict[tuple[int, int], PairCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.per_pair.values())


def verify_alignment_conditions(
    scheme: AlignmentScheme, ch: ChannelSet, *, tol: float = VERIFY_TOL
) -> AlignmentReport:
    """Re-derive both alignment conditions from the raw matrices.

    Condition 1 counts the compression rows that annihilate the stacked
    pair channel ``[H_i, -H_j]`` and compares against
    ``rows - 2M + d_ij``.  Condition 2 measures the residual of the
    stacked precoder against the compressed pair channel's null space.
    Counting is done from scratch (no provenance shortcuts), so a
    corrupted row or perturbed precoder is caught.
    """
    P = scheme.compression.matrix
    rows = P.shape[0]
    M = scheme.cfg.M
    report: dict[tuple[int, int], PairCheck] = {}
    for i, j in scheme.alloc.pairs:
        target = np.hstack([ch.uplink[i], -ch.uplink[j]])
        scale = np.linalg.norm(target, 2)
        found = 0
        for row in P:
            if np.linalg.norm(row @ target) <= tol * scale * np.linalg.norm(row):
                found += 1
        required = rows - 2 * M + scheme.alloc.d[(i, j)]
        a = np.hstack([P @ ch.uplink[i], -(P @ ch.uplink[j])])
        stacked = np.vstack([scheme.precoders[(i, j)], scheme.precoders[(j, i)]])
        residual = float(np.abs(a @ stacked).max()) if stacked.size else 0.0
        tolerance = tol * max(1.0, np.linalg.norm(a, 2))
        report[(i, j)] = PairCheck(
            null_rows_found=found,
            null_rows_required=required,
            condition1=found >= required,
            precoder_residual=residual,
            residual_tolerance=tolerance,
            condition2=residual <= tolerance,
        )
    return AlignmentReport(per_pair=report)


def scheme_to_dict(scheme: AlignmentScheme) -> dict:
    """JSON-ready scheme export (matrices as row-major [re, im] pairs)."""
    return {
        "cfg": {"K": scheme.cfg.K, "M": scheme.cfg.M, "N": scheme.cfg.N},
        "beta": scheme.beta,
        "allocation": {f"{i},{j}": v for (i, j), v in sorted(scheme.alloc.d.items())},
        "compression": {
            "matrix": complex_matrix_to_pairs(scheme.compression.matrix),
            "row_subsets": [list(s) for s in scheme.compression.row_subsets],
            "row_residuals": [float(r) for r in scheme.compression.row_residuals],
        },
        "precoders": {
            f"{i},{j}": complex_matrix_to_pairs(v)
            for (i, j), v in sorted(scheme.precoders.items())
        },
        "aligned_basis": complex_matrix_to_pairs(scheme.aligned_basis),
        "metrics": {
            "alignment_residual": scheme.alignment_residual,
            "basis_condition": scheme.basis_condition,
        },
    }


def scheme_from_dict(data: dict) -> AlignmentScheme:
    cfg = SystemConfig(data["cfg"]["K"], data["cfg"]["M"], data["cfg"]["N"])
    d = {
        tuple(int(k) for k in key.split(",")): int(v)
        for key, v in data["allocation"].items()
    }
    alloc = StreamAllocation(cfg=cfg, d=d)
    matrix = complex_matrix_from_pairs(data["compression"]["matrix"])
    matrix.setflags(write=False)
    compression = CompressionMatrix(
        matrix=matrix,
        row_subsets=tuple(tuple(s) for s in data["compression"]["row_subsets"]),
        row_residuals=np.asarray(data["compression"]["row_residuals"], dtype=float),
    )
    precoders = {}
    for key, rows in data["precoders"].items():
        i, j = (int(k) for k in key.split(","))
        v = complex_matrix_from_pairs(rows)
        v.setflags(write=False)
        precoders[(i, j)] = v
    basis = complex_matrix_from_pairs(data["aligned_basis"])
    basis.setflags(write=False)
    return AlignmentScheme(
        cfg=cfg,
        beta=int(data["beta"]),
        alloc=alloc,
        compression=compression,
        precoders=precoders,
        aligned_basis=basis,
        alignment_residual=float(data["metrics"]["alignment_residual"]),
        basis_condition=float(data["metrics"]["basis_condition"]),
    )


def save_scheme(scheme: AlignmentScheme, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scheme_to_dict(scheme), fh)


def load_scheme(path: str) -> AlignmentScheme:
    with open(path, "r", encoding="utf-8") as fh:
        return scheme_from_dict(json.load(fh))

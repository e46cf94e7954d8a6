"""Two-phase link-level simulation of the alignment relaying scheme.

Uplink (MAC) phase: every source precodes its per-pair streams and
transmits; the relay compresses its observation and solves the aligned
basis for the stacked pairwise symbol sums.

Downlink (BC) phase: the relay precodes the network-coded vector so that
each user's receive filter lands exactly on the sums it participates in.
The downlink precoder comes from running the same alignment construction
on the transposed downlink channels; transposing that dual scheme turns
its compression matrix into the relay transmit precoder and its source
precoders into receive filters, and composing with the inverse dual basis
makes every filter output a clean selector of the wanted sums.  The
downlink path is certified per instance by residual and rank checks and
is kept isolated: uplink recovery never depends on it.

Noisy runs reuse the same machinery with AWGN added at the relay and the
users; per-stream zero-forcing rates feed the DoF slope estimate.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentScheme, allocate_streams, assemble_scheme
from .bounds import corner_points
from .channel import (
    LABEL_FRAME,
    LABEL_NOISE,
    ChannelSet,
    apply_extension_plan,
    complex_gaussian,
    plan_extension,
    sample_channels,
    substream,
)
from .config import SystemConfig
from .errors import (
    BroadcastInfeasibleError,
    ConfigurationError,
    DecodabilityError,
    DimensionError,
    StageError,
    YChannelError,
)

__all__ = [
    "SymbolFrame",
    "NetworkCodedVector",
    "BcScheme",
    "SimResult",
    "make_frame",
    "stack_network_coded",
    "mac_phase",
    "relay_decode",
    "build_bc_scheme",
    "bc_phase",
    "decode_user",
    "cancel_self_interference",
    "end_to_end",
    "pairwise_rates",
    "sum_rate_curve",
    "fit_slope",
    "estimate_dof_slope",
    "result_record",
    "write_records_csv",
    "CSV_COLUMNS",
]

# Noiseless relay/user recovery must be at least this accurate.
RECOVERY_TOL = 1e-6
# Residual ceiling for the downlink selector certification.
SELECTOR_TOL = 1e-8

CSV_COLUMNS = [
    "K",
    "M",
    "N",
    "beta",
    "t",
    "seed",
    "snr_db",
    "relay_err",
    "user_err",
    "sum_rate",
]


@dataclass(frozen=True)
class SymbolFrame:
    """One frame of symbols, one vector per ordered user pair."""

    streams: dict[tuple[int, int], np.ndarray]


@dataclass(frozen=True)
class NetworkCodedVector:
    """Stacked pairwise sums in the scheme's pair order."""

    entries: np.ndarray
    labels: list[tuple[int, int, int]]  # (i, j, stream index) per entry, i < j


def make_frame(scheme: AlignmentScheme, seed: int, kind: str = "gaussian") -> SymbolFrame:
    """Draw a deterministic symbol frame.

    ``gaussian`` gives unit-variance complex Gaussian symbols; ``qpsk``
    gives (+-1 +-1j)/sqrt(2), handy for crisp exact-recovery checks.
    """
    rng = substream(seed, LABEL_FRAME)
    streams = {}
    for pair in sorted(scheme.alloc.d):
        count = scheme.alloc.d[pair]
        if kind == "gaussian":
            sym = complex_gaussian(rng, (count,))
        elif kind == "qpsk":
            bits = rng.integers(0, 2, size=(2, count))
            sym = ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / np.sqrt(2)
        else:
            raise ConfigurationError(f"unknown symbol kind {kind!r}")
        streams[pair] = sym
    return SymbolFrame(streams=streams)


def stack_network_coded(scheme: AlignmentScheme, frame: SymbolFrame) -> NetworkCodedVector:
    """Stack s_ij + s_ji over unordered pairs in scheme order."""
    chunks = []
    labels = []
    for (i, j), start, stop in scheme.pair_blocks:
        chunks.append(frame.streams[(i, j)] + frame.streams[(j, i)])
        labels.extend((i, j, k) for k in range(stop - start))
    entries = np.concatenate(chunks) if chunks else np.empty(0, dtype=complex)
    return NetworkCodedVector(entries=entries, labels=labels)


def _awgn(rng: np.random.Generator | None, size: int, noise_var: float) -> np.ndarray:
    if noise_var == 0.0:
        return np.zeros(size, dtype=complex)
    if rng is None:
        raise ConfigurationError("noisy runs need an explicit rng")
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return np.sqrt(noise_var / 2.0) * (re + 1j * im)


def mac_phase(
    scheme: AlignmentScheme,
    ch: ChannelSet,
    frame: SymbolFrame,
    noise_var: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Superimpose all precoded uplink transmissions at the relay."""
    cfg = scheme.cfg
    if ch.cfg != cfg:
        raise DimensionError(f"channel cfg {ch.cfg} does not match scheme cfg {cfg}")
    y = np.zeros(cfg.N, dtype=complex)
    for i in range(cfg.K):
        x = np.zeros(cfg.M, dtype=complex)
        for j in range(cfg.K):
            if i == j:
                continue
            x = x + scheme.precoders[(i, j)] @ frame.streams[(i, j)]
        y = y + ch.uplink[i] @ x
    return y + _awgn(rng, cfg.N, noise_var)


def relay_decode(scheme: AlignmentScheme, y: np.ndarray) -> NetworkCodedVector:
    """Solve the aligned basis for the stacked pairwise sums."""
    compressed = scheme.compression.matrix @ y
    try:
        entries = np.linalg.solve(scheme.aligned_basis, compressed)
    except np.linalg.LinAlgError as exc:
        raise DecodabilityError(f"aligned basis is singular: {exc}") from exc
    labels = []
    for (i, j), start, stop in scheme.pair_blocks:
        labels.extend((i, j, k) for k in range(stop - start))
    return NetworkCodedVector(entries=entries, labels=labels)


@dataclass(frozen=True)
class BcScheme:
    """Downlink precoder, per-user receive filters and certification.

    ``relay_precoder`` maps the network-coded vector to relay antennas;
    ``filters[(i, j)]`` recovers the (i, j) pair block at user i.
    ``power_scale`` is applied at the relay and undone in the filters so
    the mean transmit power matches one unit per stream dimension.
    """

    relay_precoder: np.ndarray
    filters: dict[tuple[int, int], np.ndarray]
    power_scale: float
    selector_residual: float
    dual_basis_condition: float


def build_bc_scheme(scheme: AlignmentScheme, ch: ChannelSet) -> BcScheme:
    """Dual alignment construction on the transposed downlink channels."""
    cfg = scheme.cfg
    dual_ch = ChannelSet(
        cfg=cfg,
        seed=ch.seed,
        uplink=tuple(np.ascontiguousarray(g.T) for g in ch.downlink),
        downlink=tuple(np.ascontiguousarray(h.T) for h in ch.uplink),
    )
    try:
        dual = assemble_scheme(dual_ch, scheme.alloc, scheme.beta)
    except YChannelError as exc:
        raise BroadcastInfeasibleError(f"dual construction failed: {exc}") from exc
    # Transposing the dual alignment identity turns its compression matrix
    # into a transmit precoder; composing with the inverse dual basis makes
    # each user filter output the wanted pair block of the input.
    precoder = np.linalg.solve(dual.aligned_basis, dual.compression.matrix).T
    filters = {}
    for i in range(cfg.K):
        for j in range(cfg.K):
            if i != j:
                filters[(i, j)] = dual.precoders[(i, j)].T
    rows = scheme.alloc.rows
    residual = 0.0
    for i in range(cfg.K):
        for j in range(cfg.K):
            if i == j:
                continue
            pair = (min(i, j), max(i, j))
            start, stop = _block_bounds(scheme, pair)
            selector = filters[(i, j)] @ ch.downlink[i] @ precoder
            want = np.zeros((stop - start, rows))
            want[:, start:stop] = np.eye(stop - start)
            residual = max(residual, float(np.abs(selector - want).max()))
    if residual > SELECTOR_TOL:
        raise BroadcastInfeasibleError(
            f"downlink selector residual {residual:.3e} exceeds {SELECTOR_TOL:.1e}"
        )
    power = np.linalg.norm(precoder, "fro") ** 2
    scale = float(np.sqrt(rows / (2.0 * power))) if power > 0 else 1.0
    precoder.setflags(write=False)
    return BcScheme(
        relay_precoder=precoder,
        filters=filters,
        power_scale=scale,
        selector_residual=residual,
        dual_basis_condition=dual.basis_condition,
    )


def _block_bounds(scheme: AlignmentScheme, pair: tuple[int, int]) -> tuple[int, int]:
    for p, start, stop in scheme.pair_blocks:
        if p == pair:
            return start, stop
    raise DimensionError(f"pair {pair} not in scheme")


def bc_phase(
    scheme: AlignmentScheme,
    ch: ChannelSet,
    s_plus: NetworkCodedVector,
    noise_var: float = 0.0,
    rng: np.random.Generator | None = None,
    bc: BcScheme | None = None,
) -> tuple[list[np.ndarray], BcScheme]:
    """Broadcast the network-coded vector; returns raw per-user receptions."""
    if bc is None:
        bc = build_bc_scheme(scheme, ch)
    x = bc.power_scale * (bc.relay_precoder @ s_plus.entries)
    received = []
    for i in range(scheme.cfg.K):
        y = ch.downlink[i] @ x + _awgn(rng, scheme.cfg.M, noise_var)
        received.append(y)
    return received, bc


def decode_user(
    scheme: AlignmentScheme, bc: BcScheme, user: int, y: np.ndarray
) -> dict[tuple[int, int], np.ndarray]:
    """Filter a user's reception into its pair blocks of the sum vector."""
    out = {}
    for j in range(scheme.cfg.K):
        if j == user:
            continue
        pair = (min(user, j), max(user, j))
        if pair not in out:
            out[pair] = (bc.filters[(user, j)] @ y) / bc.power_scale
    return out


def cancel_self_interference(
    frame: SymbolFrame, user: int, decoded: dict[tuple[int, int], np.ndarray]
) -> dict[int, np.ndarray]:
    """Subtract the user's own symbols to expose each partner's streams."""
    out = {}
    for (i, j), total in decoded.items():
        partner = j if i == user else i
        out[partner] = total - frame.streams[(user, partner)]
    return out


@dataclass(frozen=True)
class SimResult:
    """Outcome of one end-to-end run."""

    cfg: SystemConfig
    beta: int
    t: int
    seed: int
    snr_db: float | None
    relay_recovery_error: float
    user_recovery_error: float | None
    bc_failure: str | None
    sum_rate: float | None
    rates: dict[tuple[int, int], float] | None


@contextmanager
def _stage(name: str):
    # tags domain errors with the pipeline stage they came from
    try:
        yield
    except YChannelError as exc:
        raise StageError(name, exc) from exc


def _prepare(
    cfg: SystemConfig, beta: int, seed: int, max_extension: int
) -> tuple[ChannelSet, AlignmentScheme, int]:
    target = next((c for c in corner_points(cfg.K) if c.beta == beta), None)
    if target is None:
        raise ConfigurationError(f"beta={beta} has no corner for K={cfg.K}")
    plan = plan_extension(cfg, target, max_extension)
    base = sample_channels(cfg, seed)
    ch = apply_extension_plan(base, plan)
    alloc = allocate_streams(ch.cfg, beta)
    scheme = assemble_scheme(ch, alloc, beta)
    return ch, scheme, plan.ext.t


def end_to_end(
    cfg: SystemConfig,
    beta: int,
    seed: int,
    noise_var: float = 0.0,
    *,
    symbols: str = "gaussian",
    max_extension: int = 64,
) -> SimResult:
    """Full pipeline: plan, synthesize, transmit both phases, decode.

    Noiseless runs must recover the network-coded vector at the relay and
    every partner stream at the users to within ``RECOVERY_TOL``.  A
    downlink failure is recorded in ``bc_failure`` without failing the
    uplink result.
    """
    with _stage("synthesis"):
        ch, scheme, t = _prepare(cfg, beta, seed, max_extension)
    rng = substream(seed, LABEL_NOISE)
    with _stage("mac"):
        frame = make_frame(scheme, seed, symbols)
        truth = stack_network_coded(scheme, frame)
        y = mac_phase(scheme, ch, frame, noise_var, rng)
    with _stage("relay_decode"):
        decoded = relay_decode(scheme, y)
        relay_err = float(np.abs(decoded.entries - truth.entries).max())
    user_err: float | None = None
    bc_failure: str | None = None
    try:
        with _stage("bc"):
            received, bc = bc_phase(scheme, ch, decoded, noise_var, rng)
            worst = 0.0
            for user in range(scheme.cfg.K):
                blocks = decode_user(scheme, bc, user, received[user])
                partners = cancel_self_interference(frame, user, blocks)
                for partner, estimate in partners.items():
                    err = np.abs(estimate - frame.streams[(partner, user)]).max()
                    worst = max(worst, float(err))
            user_err = worst
    except StageError as exc:
        if not isinstance(exc.cause, BroadcastInfeasibleError):
            raise
        bc_failure = str(exc.cause)
    snr_db = None if noise_var == 0.0 else float(-10.0 * np.log10(noise_var))
    rates = None
    total = None
    if noise_var > 0.0 and bc_failure is None:
        rates = pairwise_rates(scheme, bc, snr_db)
        total = float(sum(rates.values()))
    return SimResult(
        cfg=cfg,
        beta=beta,
        t=t,
        seed=seed,
        snr_db=snr_db,
        relay_recovery_error=relay_err,
        user_recovery_error=user_err,
        bc_failure=bc_failure,
        sum_rate=total,
        rates=rates,
    )


def pairwise_rates(
    scheme: AlignmentScheme, bc: BcScheme, snr_db: float
) -> dict[tuple[int, int], float]:
    """Zero-forcing rate of every ordered message at one SNR.

    Both hops decode by solving the (square, well-conditioned) aligned
    systems, so each stream sees only its own scaled noise.  A message's
    rate is the minimum of its uplink network-coded rate and its downlink
    filter rate, summed over the pair's streams; per-stream transmit power
    is the budget split uniformly over each node's streams.
    """
    cfg = scheme.cfg
    power = 10.0 ** (snr_db / 10.0)
    per_user_streams = (cfg.K - 1) * scheme.alloc.per_pair
    p_stream = power / per_user_streams
    solver = np.linalg.solve(scheme.aligned_basis, scheme.compression.matrix)
    mac_noise = np.linalg.norm(solver, axis=1) ** 2
    mac_rate = np.log2(1.0 + 2.0 * p_stream / mac_noise)
    # Relay transmit power: scale so E||x_r||^2 = power with 2*p_stream
    # energy per network-coded entry.
    u_energy = np.linalg.norm(bc.relay_precoder, "fro") ** 2
    gamma2 = power / (2.0 * p_stream * u_energy)
    rates: dict[tuple[int, int], float] = {}
    for (i, j), start, stop in scheme.pair_blocks:
        for user, src in ((j, i), (i, j)):
            # message src -> user, decoded at `user`
            f = bc.filters[(user, src)]
            bc_noise = np.linalg.norm(f, axis=1) ** 2 / gamma2
            bc_rate = np.log2(1.0 + p_stream / bc_noise)
            rates[(src, user)] = float(
                np.minimum(mac_rate[start:stop], bc_rate).sum()
            )
    return rates


def _thread_count() -> int:
    raw = os.environ.get("GSA_DOF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def sum_rate_curve(
    cfg: SystemConfig,
    beta: int,
    seeds: list[int],
    snr_grid_db: list[float],
    *,
    max_extension: int = 64,
) -> np.ndarray:
    """Mean sum rate per SNR point, averaged over seeds.

    Seeds fan out over GSA_DOF_THREADS worker threads; results merge in
    seed order, so the output is independent of the thread count.
    """
    if not seeds:
        raise ConfigurationError("need at least one seed")

    def one_seed(seed: int) -> np.ndarray:
        ch, scheme, _ = _prepare(cfg, beta, seed, max_extension)
        bc = build_bc_scheme(scheme, ch)
        return np.array(
            [sum(pairwise_rates(scheme, bc, snr).values()) for snr in snr_grid_db]
        )

    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            curves = list(pool.map(one_seed, seeds))
    else:
        curves = [one_seed(s) for s in seeds]
    return np.mean(curves, axis=0)


def fit_slope(snr_grid_db: list[float], sum_rates: np.ndarray) -> float:
    """Least-squares slope of sum rate versus log2 of the linear SNR."""
    if len(snr_grid_db) < 2:
        raise ConfigurationError("slope fit needs at least 2 SNR points")
    x = np.asarray(snr_grid_db, dtype=float) * (np.log2(10.0) / 10.0)
    return float(np.polyfit(x, np.asarray(sum_rates, dtype=float), 1)[0])


def estimate_dof_slope(
    cfg: SystemConfig,
    beta: int,
    seeds: list[int],
    snr_grid_db: list[float],
    *,
    max_extension: int = 64,
) -> float:
    """Fitted sum-rate slope in DoF units; approaches the stream total."""
    curve = sum_rate_curve(cfg, beta, seeds, snr_grid_db, max_extension=max_extension)
    return fit_slope(snr_grid_db, curve)


def result_record(result: SimResult) -> dict:
    """Flatten a result into the stable CSV column set."""
    return {
        "K": result.cfg.K,
        "M": result.cfg.M,
        "N": result.cfg.N,
        "beta": result.beta,
        "t": result.t,
        "seed": result.seed,
        "snr_db": "" if result.snr_db is None else result.snr_db,
        "relay_err": result.relay_recovery_error,
        "user_err": "" if result.user_recovery_error is None else result.user_recovery_error,
        "sum_rate": "" if result.sum_rate is None else result.sum_rate,
    }


def write_records_csv(records: list[dict], fh) -> None:
    """Write records in the documented column order, LF line endings."""
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(rec)

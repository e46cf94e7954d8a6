"""Seeded channel sampling, antenna deactivation and symbol extension.

Sampling is reproducible across platforms: every matrix gets its own
Philox substream keyed by (seed, direction, node index), and normal
variates come from a Box-Muller transform of the stream's uniforms.
Philox is counter based, so the substreams are independent by key and the
byte stream is stable across library versions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bounds import CornerPoint
from .config import SystemConfig
from .errors import DegenerateChannelError, DimensionError, InfeasibleConfigurationError
from .serialization import complex_matrix_from_pairs, complex_matrix_to_pairs

__all__ = [
    "ChannelSet",
    "ExtensionSpec",
    "ExtensionPlan",
    "sample_channels",
    "deactivate",
    "symbol_extend",
    "plan_extension",
    "apply_extension_plan",
    "channel_to_dict",
    "channel_from_dict",
    "save_channels",
    "load_channels",
    "substream",
    "complex_gaussian",
]

_MASK64 = (1 << 64) - 1

# Substream labels; frame/noise labels live here so all RNG keying is in one place.
LABEL_UPLINK = 0
LABEL_DOWNLINK = 1
LABEL_MIXER = 2
LABEL_FRAME = 3
LABEL_NOISE = 4


def substream(seed: int, label: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, label, index) triple."""
    key = (seed & _MASK64) | (((label << 32) | index) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian samples.

    Entries are (x + iy)/sqrt(2) with x, y standard normal, produced by a
    Box-Muller transform of the generator's uniforms so the mapping from
    raw stream to samples is fully specified.
    """
    u1 = 1.0 - rng.random(shape)  # in (0, 1], keeps the log finite
    u2 = rng.random(shape)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return (radius * np.cos(angle) + 1j * radius * np.sin(angle)) / np.sqrt(2.0)


def _freeze(m: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(m)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ChannelSet:
    """One realization of all uplink and downlink channel matrices.

    ``uplink[i]`` is the N x M matrix from source i to the relay and
    ``downlink[i]`` the M x N matrix from the relay to source i.
    Immutable once created; the arrays are write-locked.
    """

    cfg: SystemConfig
    seed: int
    uplink: tuple[np.ndarray, ...]
    downlink: tuple[np.ndarray, ...]


def sample_channels(cfg: SystemConfig, seed: int) -> ChannelSet:
    """Draw an i.i.d. unit-variance complex Gaussian channel realization.

    Deterministic given (cfg, seed).  Every matrix is checked to be
    numerically full rank, which holds with probability 1.
    """
    uplink = []
    downlink = []
    for i in range(cfg.K):
        h = complex_gaussian(substream(seed, LABEL_UPLINK, i), (cfg.N, cfg.M))
        g = complex_gaussian(substream(seed, LABEL_DOWNLINK, i), (cfg.M, cfg.N))
        uplink.append(_freeze(h))
        downlink.append(_freeze(g))
    ch = ChannelSet(cfg=cfg, seed=seed, uplink=tuple(uplink), downlink=tuple(downlink))
    for m in (*ch.uplink, *ch.downlink):
        smin = np.linalg.svd(m, compute_uv=False)[-1]
        if not smin > 0.0:
            raise DegenerateChannelError(
                f"sampled matrix is rank deficient (seed={seed}); reseed"
            )
    return ch


def deactivate(ch: ChannelSet, M_use: int, N_use: int) -> ChannelSet:
    """Keep the first ``M_use`` source and ``N_use`` relay antennas.

    Channels are i.i.d., so a fixed prefix is statistically equivalent to
    any other antenna subset.
    """
    if not 1 <= M_use <= ch.cfg.M:
        raise DimensionError(f"M_use={M_use} outside [1, {ch.cfg.M}]")
    if not 1 <= N_use <= ch.cfg.N:
        raise DimensionError(f"N_use={N_use} outside [1, {ch.cfg.N}]")
    cfg = SystemConfig(ch.cfg.K, M_use, N_use)
    uplink = tuple(_freeze(h[:N_use, :M_use]) for h in ch.uplink)
    downlink = tuple(_freeze(g[:M_use, :N_use]) for g in ch.downlink)
    return ChannelSet(cfg=cfg, seed=ch.seed, uplink=uplink, downlink=downlink)


def symbol_extend(ch: ChannelSet, t: int) -> ChannelSet:
    """Lift every matrix to its t-fold block diagonal.

    The channel is quasi-static, so all t diagonal blocks repeat the same
    realization and the configuration scales by t.
    """
    if t < 1:
        raise DimensionError(f"extension factor must be >= 1, got {t}")
    if t == 1:
        return ch
    eye = np.eye(t)
    cfg = SystemConfig(ch.cfg.K, t * ch.cfg.M, t * ch.cfg.N)
    uplink = tuple(_freeze(np.kron(eye, h)) for h in ch.uplink)
    downlink = tuple(_freeze(np.kron(eye, g)) for g in ch.downlink)
    return ChannelSet(cfg=cfg, seed=ch.seed, uplink=uplink, downlink=downlink)


@dataclass(frozen=True)
class ExtensionSpec:
    """Extension factor and the resulting effective dimensions."""

    t: int
    effective_M: int
    effective_N: int


@dataclass(frozen=True)
class ExtensionPlan:
    """How to reach a target corner ratio from a given configuration.

    ``deactivation`` holds the antenna counts to keep, expressed in the
    t-extended system (equal to the original counts when t == 1).
    ``side`` records which end gives up antennas.
    """

    deactivation: tuple[int, int]
    ext: ExtensionSpec
    side: str  # "relay", "source" or "none"


def plan_extension(
    cfg: SystemConfig, target: CornerPoint, max_extension: int = 64
) -> ExtensionPlan:
    """Smallest extension factor and deactivation hitting the target ratio.

    Above the corner the relay gives up antennas; below it the sources do.
    When the required count is a fraction s/t in lowest terms, the system
    is first extended by t so that s antennas of the extended block
    realize the exact ratio.
    """
    alpha = target.abscissa
    if cfg.ratio >= alpha:
        keep = alpha * cfg.M  # relay antennas to keep, possibly fractional
        t = keep.denominator
        m_eff = t * cfg.M
        n_eff = int(keep * t)
        side = "none" if n_eff == t * cfg.N else "relay"
    else:
        keep = Fraction(cfg.N) / alpha  # source antennas to keep
        t = keep.denominator
        m_eff = int(keep * t)
        n_eff = t * cfg.N
        side = "none" if m_eff == t * cfg.M else "source"
    if t > max_extension:
        raise InfeasibleConfigurationError(
            f"reaching ratio {alpha} needs a {t}-symbol extension, above the cap "
            f"{max_extension}",
            inequality="t <= max_extension",
        )
    return ExtensionPlan(
        deactivation=(m_eff, n_eff),
        ext=ExtensionSpec(t=t, effective_M=m_eff, effective_N=n_eff),
        side=side,
    )


def _random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    q, _ = np.linalg.qr(complex_gaussian(rng, (n, n)))
    return q


def apply_extension_plan(ch: ChannelSet, plan: ExtensionPlan) -> ChannelSet:
    """Realize an extension plan on a sampled channel set.

    For t == 1 this is plain prefix deactivation.  For t > 1 the deactivated
    side first applies a seeded random orthonormal basis change of its
    extended antenna space and then truncates.  Per-slot antenna subsets
    would confine every aligned-subspace row to a few coordinates of the
    block-diagonal channel and provably collapse the compression matrix
    rank, whereas truncation in a generic rotated basis keeps exactly
    effective_M/effective_N usable dimensions, which is all the DoF
    argument needs.
    """
    t = plan.ext.t
    m_eff, n_eff = plan.deactivation
    if t == 1:
        return deactivate(ch, m_eff, n_eff)
    extended = symbol_extend(ch, t)
    if plan.side == "none":
        return extended
    cfg = SystemConfig(ch.cfg.K, m_eff, n_eff)
    if plan.side == "relay":
        mixer = _random_unitary(substream(ch.seed, LABEL_MIXER, 0), t * ch.cfg.N)
        uplink = tuple(_freeze((mixer @ h)[:n_eff, :]) for h in extended.uplink)
        downlink = tuple(
            _freeze((g @ mixer.conj().T)[:, :n_eff]) for g in extended.downlink
        )
    else:
        ups = []
        downs = []
        for i in range(ch.cfg.K):
            mixer = _random_unitary(substream(ch.seed, LABEL_MIXER, i + 1), t * ch.cfg.M)
            ups.append(_freeze((extended.uplink[i] @ mixer.conj().T)[:, :m_eff]))
            downs.append(_freeze((mixer @ extended.downlink[i])[:m_eff, :]))
        uplink, downlink = tuple(ups), tuple(downs)
    return ChannelSet(cfg=cfg, seed=ch.seed, uplink=uplink, downlink=downlink)


def channel_to_dict(ch: ChannelSet) -> dict:
    """JSON-ready fixture representation (row-major [re, im] entries)."""
    return {
        "cfg": {"K": ch.cfg.K, "M": ch.cfg.M, "N": ch.cfg.N},
        "seed": ch.seed,
        "uplink": [complex_matrix_to_pairs(h) for h in ch.uplink],
        "downlink": [complex_matrix_to_pairs(g) for g in ch.downlink],
    }


def channel_from_dict(data: dict) -> ChannelSet:
    cfg = SystemConfig(data["cfg"]["K"], data["cfg"]["M"], data["cfg"]["N"])
    uplink = tuple(_freeze(complex_matrix_from_pairs(m)) for m in data["uplink"])
    downlink = tuple(_freeze(complex_matrix_from_pairs(m)) for m in data["downlink"])
    for h in uplink:
        if h.shape != (cfg.N, cfg.M):
            raise DimensionError(f"uplink matrix shape {h.shape} != {(cfg.N, cfg.M)}")
    for g in downlink:
        if g.shape != (cfg.M, cfg.N):
            raise DimensionError(f"downlink matrix shape {g.shape} != {(cfg.M, cfg.N)}")
    return ChannelSet(cfg=cfg, seed=int(data["seed"]), uplink=uplink, downlink=downlink)


def save_channels(ch: ChannelSet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(channel_to_dict(ch), fh)


def load_channels(path: str) -> ChannelSet:
    with open(path, "r", encoding="utf-8") as fh:
        return channel_from_dict(json.load(fh))

"""DoF bounds and alignment relaying for K-user MIMO Y networks.

The package has four layers:

* :mod:`ychannel.bounds`: exact rational DoF upper bound and achievable
  envelope, regime identification and gap reports.
* :mod:`ychannel.channel`: reproducible channel sampling, antenna
  deactivation, symbol extension and extension planning.
* :mod:`ychannel.alignment`: constructive synthesis and verification of
  the compressed signal-alignment relaying scheme.
* :mod:`ychannel.simulation`: end-to-end two-phase simulation and DoF
  slope estimation.

The ``ychannel`` console script fronts all of it.
"""

from .alignment import (
    AlignmentReport,
    AlignmentScheme,
    CompressionMatrix,
    PairCheck,
    RowCounts,
    StreamAllocation,
    allocate_streams,
    assemble_scheme,
    build_compression_matrix,
    build_precoders,
    load_scheme,
    required_row_counts,
    save_scheme,
    scheme_from_dict,
    scheme_to_dict,
    verify_alignment_conditions,
)
from .bounds import (
    CornerPoint,
    GapReport,
    Regime,
    RegimeLabel,
    achievable_dof,
    corner_points,
    gap_report,
    regime_of,
    upper_bound,
)
from .channel import (
    ChannelSet,
    ExtensionPlan,
    ExtensionSpec,
    apply_extension_plan,
    channel_from_dict,
    channel_to_dict,
    deactivate,
    load_channels,
    plan_extension,
    sample_channels,
    save_channels,
    symbol_extend,
)
from .config import SystemConfig
from .errors import (
    AlignmentInfeasibleError,
    AlignmentVerificationError,
    BroadcastInfeasibleError,
    ConfigurationError,
    DecodabilityError,
    DegenerateChannelError,
    DegenerateSplitError,
    DimensionError,
    InfeasibleConfigurationError,
    NeedsExtensionError,
    StageError,
    YChannelError,
)
from .simulation import (
    BcScheme,
    NetworkCodedVector,
    SimResult,
    SymbolFrame,
    bc_phase,
    build_bc_scheme,
    cancel_self_interference,
    decode_user,
    end_to_end,
    estimate_dof_slope,
    fit_slope,
    mac_phase,
    make_frame,
    pairwise_rates,
    relay_decode,
    stack_network_coded,
    sum_rate_curve,
)

__version__ = "0.1.0"

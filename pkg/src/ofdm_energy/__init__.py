"""Energy-optimal downlink scheduling for multiuser OFDM.

Three schedulers share one system model: D-TDMA minimizes the weighted
receiver energy of the mobiles, OFDMA minimizes the base station's energy,
and time-slotted OFDMA trades the two off through the BS weight ``alpha0``.
"""

from .errors import (
    AllocationError,
    BracketError,
    EllipsoidDegeneracyError,
    InfeasibleError,
    LPRecoveryError,
    NumericError,
    ScenarioError,
    UnboundedError,
)
from .model import (
    Allocation,
    ChannelMatrix,
    DemandVector,
    DualCertificate,
    EnergyReport,
    Slot,
    SystemConfig,
    Tolerances,
    Violation,
    energy_report,
    invert_rate,
    subcarrier_rate,
    validate_allocation,
)
from .scenario import (
    ScenarioSpec,
    default_paper_scenario,
    generate_channels,
    load_scenario,
    save_scenario,
)
from .temin import FrameSearch, P2Solution, bs_energy_gradient, solve_p2, solve_temin, solve_temin_tmax, v_of_T
from .tsofdma import (
    Grouping,
    GroupingSolver,
    cci_matrix,
    cog_grouping,
    exhaustive_grouping,
    solve_grouping,
    solve_wstremin,
    solve_wstremin_tmax,
)
from .wsre import TdmaSolution, solve_wsremin_tdma, solve_wsremin_tdma_tmax, tdma_rebase

__version__ = "0.1.0"

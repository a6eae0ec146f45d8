"""Link-level simulator for asynchronous differential two-way relay systems."""

from .channel import (
    ChannelSet,
    CpUnderrunError,
    LinkChannel,
    PowerDelayProfile,
    add_noise,
    apply_link,
    freq_response,
    sample_link,
)
from .config import ConfigError, SimConfig, analysis_config, default_config, pep_config
from .dsp import (
    CpBlock,
    add_cp,
    apply_cyclic_delay,
    circular_convolve,
    conj_time_reverse,
    dft,
    idft,
    remove_cp,
)
from .dstc import (
    Codebook,
    DispersionSet,
    build_codeword,
    delta_distance,
    diversity_estimate,
    enumerate_codebook,
    get_design,
    pep_bound,
    validate_dispersion_set,
)
from .harness import (
    BerRecord,
    PepRecord,
    emit_results,
    read_results,
    run_ber_sweep,
    run_pep_experiment,
    sigma2_for_snr,
    snr_at_user,
)
from .jbd import analytic_ber
from .modulation import PskConstellation

__version__ = "0.1.0"

__all__ = [
    "BerRecord",
    "ChannelSet",
    "Codebook",
    "ConfigError",
    "CpBlock",
    "CpUnderrunError",
    "DispersionSet",
    "LinkChannel",
    "PepRecord",
    "PowerDelayProfile",
    "PskConstellation",
    "SimConfig",
    "add_cp",
    "add_noise",
    "analysis_config",
    "analytic_ber",
    "apply_cyclic_delay",
    "apply_link",
    "build_codeword",
    "circular_convolve",
    "conj_time_reverse",
    "default_config",
    "delta_distance",
    "dft",
    "diversity_estimate",
    "emit_results",
    "enumerate_codebook",
    "freq_response",
    "get_design",
    "idft",
    "pep_bound",
    "pep_config",
    "read_results",
    "remove_cp",
    "run_ber_sweep",
    "run_pep_experiment",
    "sample_link",
    "sigma2_for_snr",
    "snr_at_user",
    "validate_dispersion_set",
]

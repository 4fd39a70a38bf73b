"""Preview tracking experiments: plant simulation, reference generation,
closed-loop trials, frequency-domain subsystem identification, metrics,
batch pipelines, and a live-trial service."""

from .lti import (
    ContinuousTF,
    DelayedTF,
    DiscreteTF,
    default_plant,
    freq_response,
    is_stable,
    simulate,
    zoh_discretize,
)
from .loop import (
    ControllerModel,
    ExperimentConfig,
    TrialRecord,
    detect_divergence,
    run_trial,
    simulate_loop,
    synthetic_subject,
)
from .metrics import (
    ModelQuality,
    PerformanceSummary,
    fb_norm,
    ff_gap,
    ff_mag_phase_errors,
    freq_errors,
    model_quality,
    time_avg_error,
    vaf,
)
from .refgen import ReferenceCommand, generate, preview_window, sample
from .spectra import FreqResponseData, closed_loop_response, dft_bins
from .ssid import (
    CandidatePools,
    FeedbackCandidate,
    IdentifiedModel,
    closed_loop_tf_at_bins,
    default_pools,
    fit_feedforward,
    ssid_search,
    stability_filter,
    validate,
)
from .stats import anova_oneway, paired_t

__version__ = "0.1.0"

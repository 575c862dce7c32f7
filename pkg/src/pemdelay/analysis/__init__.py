from .convergence import (CSV_COLUMNS, THREADS_ENV, ConvergenceReport, LevelResult,
                          fit_loglog_slope, strong_convergence)
from .probes import (LocalErrorLevel, ProbeReport, b_consistency_probe, c_stability_pairs,
                     c_stability_probe, growth_probe, history_holder_probe, monotonicity_probe)

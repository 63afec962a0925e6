"""govid: block-diagram simulation and hybrid parameter identification for
IEEE GGOV1 turbine-governor and ST6B excitation models.

The library exposes discrete-time block primitives, the two assembled plant
models with their subsystem partition, signal preprocessing, least-squares
pre-identification, Cuckoo Search / GA / PSO optimizers, residual-whiteness
validation and a batch CLI (``govid``).
"""

from .blocks import BlockKind, BlockSpec, discretize_linear, make_block, step_block
from .estimate import build_regressor, error_index_percent, ls_estimate, ls_identify, mse
from .optim import (CsConfig, GaConfig, PsoConfig, SearchSpace, cs_run, ga_run,
                    hybrid_identify, levy_step, mantegna_steps, pso_run)
from .params import (GGOV1, ST6B, ParamSet, defaults_for, ggov1_defaults,
                     reference_ggov1, reference_st6b, st6b_defaults)
from .plants import (PlantModel, SubsystemId, build_model, simulate,
                     simulate_subsystem, subsystem_view)
from .signals import (TimeSeries, add_noise, butterworth_lowpass, de_per_unitize,
                      load_csv, per_unitize, square_pulse, write_csv)
from .validate import (ValidationReport, WhitenessResult, autocorrelation,
                       beta_for_alpha, build_report, whiteness_test)

__version__ = "0.1.0"

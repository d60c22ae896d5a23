"""Spectra of the Hatano-Nelson model with strictly ergodic potentials."""

import warnings

# numba probes for TBB at import and warns when the system copy is too old;
# the workqueue/omp layers are used instead
warnings.filterwarnings("ignore", message=".*TBB.*")

from .base import GOLDEN, BaseSystem, Potential, orbit, potential_sequence, sample_potential  # noqa: E402
from .cocycle import (LyapunovField, ProductAccumulator, UHCertificate, lyapunov,  # noqa: E402
                      lyapunov_field, transfer_product, uh_test)
from .dos import (EmpiricalMeasure, dos_density_from_L, empirical_dos, log_potential,  # noqa: E402
                  support_vs_spectrum, thouless_check)
from .errors import ConfigError, EigenSolverError, HNError, NumericalFailure, RegimeError  # noqa: E402
from .finite import (EigenResult, FiniteOperator, build, charpoly_eval,  # noqa: E402
                     dirichlet_g_invariance, eigenvalues)
from .resolvent import GreenWindow, decay_fit, green_forward, green_hyperbolic  # noqa: E402
from .spectral import (SpectrumSet, TransitionReport, assemble_spectrum, classify,  # noqa: E402
                       count_contours, oracle_free_L, oracle_single_exp_L,
                       real_spectrum_sigma0, transition_report)

__version__ = "0.1.0"

"""
Electron-spin coherence under dynamical decoupling in a 13C environment.

Modules: ``model`` (records), ``lattice`` (pair geometry, random baths),
``dynamics`` (propagators, modulation factors, total signal), ``protocols``
(resonances, pair spectroscopy, schedule synthesis), ``estimation`` (fits),
``figures`` (synthetic figure drivers) and ``cli``.
"""
__version__ = "0.1.0"

from .model import (DDSequence, EnvironmentModel, Envelope, FieldConfig, CarbonPair, ModelError,
                    PhysicalConstants, SingleCarbon, Trace, load_model, reference_model,
                    save_model, validate_model)
from .lattice import (BathConfig, PairClass, assign_structure, dipolar_coupling,
                      enumerate_pair_classes, generate_bath)
from .dynamics import (dd_sweep, exact_pair_oracle, pair_modulation, ramsey_trace,
                       single_spin_modulation, total_dd_signal)
from .protocols import (ScalingLaw, TailoredSchedule, design_gate, infer_Z, misaligned_omega0,
                        pair_resonance_taus, revival_grid, revival_offset_robustness,
                        simulate_pair_spectroscopy, tailor_sequence)
from .estimation import (FitResult, extract_frequency, fit_envelope, fit_fidelity_crossing,
                         fit_ramsey, fit_scaling, fit_t1, nlls_fit)

__all__ = [name for name in dir() if not name.startswith("_")]

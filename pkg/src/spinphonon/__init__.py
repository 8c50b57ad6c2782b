"""Direct (one-phonon) spin-lattice relaxation for molecular crystals."""

from .version import __version__

from .coupling import (CouplingDerivativeSet, DerivativeScan, ModeCoupling,
                       coupling_norm_distribution, dipolar_derivative,
                       dipolar_pair_records, fit_derivative_scan,
                       mode_tensor_derivatives, project_to_mode)
from .crystal import Atom, CrystalModel
from .errors import (CapacityError, ConfigError, NumericalError, ParseError,
                     SpinPhononError, ValidationError)
from .hamiltonian import (SpinHamiltonian, assemble_hamiltonian, diagonalize,
                          dipolar_tensor, magnetization)
from .lattice import (DosCurve, ForceConstantSet, PhononMode, bose_population,
                      dynamical_matrix, enforce_acoustic_sum_rule,
                      phonon_dos, phonon_modes, phonon_spectrum,
                      rigid_body_decomposition)
from .redfield import (DensityMatrix, PhononCorrelation, RedfieldTensor,
                       assemble_redfield, equilibrium_state,
                       extract_relaxation_time, phonon_correlation_value,
                       propagate, unitary_evolution)
from .spins import (SpinCenter, SpinCoupling, SpinOperators, SpinSystem,
                    build_spin_operators)
from .sweep import (RelaxationPipeline, RunParams, SweepPlan, SweepResult,
                    converge_protocol, kpoint_grid, multi_spin_scaling,
                    perturbation_study, run_sweep)
from .project import (ProjectConfig, load_config, load_crystal,
                      load_derivatives, load_force_constants, load_project,
                      load_results, write_bands_csv, write_coupling_csv,
                      write_dos_csv, write_results)
from .toy import ToySpec, diatomic_chain, generate_toy_crystal
from .units import UnitSystem

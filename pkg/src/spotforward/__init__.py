"""Joint spot/forward equilibrium with quadratic trading costs."""

__version__ = "0.1.0"

from .model import (AffineDemand, Constant, ConstantDemand, ModelParams, RegimeSwitch, SupplySpec,
                    TimeGrid, ValidationError, default_grid, demand_at, validate)
from .costs import CostPath
from .deterministic import (CoefficientPaths, alpha_T, alpha_closed, assemble_paths, beta_T,
                            beta_closed, delta_closed, deterministic_paths, h_path,
                            large_rho_asymptotics, p_closed, solve_delta_backward,
                            solve_riccati_backward)
from .jump import (ConditionalPath, JumpCoefficients, conditional_alpha, conditional_beta,
                   conditional_path, expected_alpha, expected_beta, normal_coefficients,
                   normal_delta_voc, solve_jump, stressed_coefficients)
from .equilibrium import (CalibrationError, CalibrationResult, CalibrationSetup, VenueQuote,
                          calibrate, clear_market, forward_wedge, parity_demand, parity_intensity,
                          parity_residual, supply_curve, sweep, venue_quote)
from .picard import (ContractionReport, PerturbationState, dense_solve, lemma_bounds,
                     phi_thresholds, picard_step, run_picard)
from .quotes import QuoteRow, WedgeStats, annualized_ratio, read_quotes, wedge_stats

__all__ = [name for name in dir() if not name.startswith("_")]

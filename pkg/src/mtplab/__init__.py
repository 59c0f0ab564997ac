"""Simulation and verification toolkit for unimodular random rooted measured metric spaces."""

__version__ = "0.1.0"

from .space import (Decoration, FiniteRmmSpace, SizeLimitError, bias_measure, check, cycle,
                    graph_space, path, petersen, point, product_space, reroot, star,
                    swap_measure, torus_grid, validate)
from .canon import (are_isomorphic, automorphism_group_order, automorphism_orbits,
                    canonical_hash, stabilizer_order)
from .ensembles import (ModelSpec, RootedEnsemble, Sampler, build_model, degree_biased,
                        exact_expectation, quasi_transitive_unimodularization, reroot_by_kernel,
                        uniform_rooting)
from .transport import (KernelMatrix, TransportFunction, build_g_positive, build_h_balanced,
                        builtin, eval_out_in, factor_subset_check, mtp_check_exact, mtp_check_mc)
from .reports import EstimateReport, MtpReport

__all__ = [name for name in dir() if not name.startswith("_")]

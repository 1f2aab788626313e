"""Clustering-based multilevel preconditioners for ridge normal equations."""
from .analysis import (CSV_COLUMNS, IdealDataset, MethodSpec, ResultRow, SpectralReport,
                       compare_methods, effective_spectral_radius, iteration_matrix,
                       make_ideal_dataset, random_ideal_dataset)
from .clustering import (ClusterAssignment, ClusterQuality, cluster, cluster_stats, kmeans,
                         kmeanspp_seed, leader_follower, leader_follower_for_size, renyi_entropy,
                         renyi_subsample)
from .coarsening import (CoarseLevel, DenseCapExceeded, Prolongation, build_adjusted_average,
                         build_ls_interpolation, build_plain_average, build_prolongation, coarsen,
                         top_eigenpairs)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .hierarchy import (CoarseSolveError, LevelHierarchy, LevelSpec, TwoLevelPreconditioner,
                        auto_omega, build_hierarchy, build_two_level, solve_system)
from .io import (MatrixMarketError, RhsSpec, generate_rhs, read_assignment_csv, read_matrix_market,
                 sample_vector, write_assignment_csv, write_matrix_market)
from .krylov import (BreakdownError, NotSPDError, SolveReport, SolverConfig, cg,
                     estimate_lambda_max, fcg, fgmres, richardson_step)
from .sparse import FeatureMatrix, RidgeOperator, csr_from_triplets, gram_diagonal, ridge_apply, spmv, spmv_transpose

__version__ = "0.1.0"

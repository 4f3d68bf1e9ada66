"""decopt: decentralized non-convex optimization over explicit graph
topologies, with exact communication/computation accounting."""

from .algorithms import ALGORITHM_IDS, ALGORITHMS, AlgoConfig, AlgoState, \
    ConfigError, StepSize, run_trajectory, verify_equivalences
from .chebyshev import chebyshev_solve
from .harness import run, run_experiment, sweep, verify
from .metrics import Counters, CSV_HEADER, RunRecord, heterogeneity_at, \
    read_records, stationarity_gap, write_records
from .oracles import GradientEstimate, Oracle, OracleSpec, unbiasedness_check
from .problems import Problem, QuadraticProblem, NcvxLogisticProblem, \
    TinyMlpProblem, generate_synthetic, line3_counterexample, \
    opposing_quadratic_pair
from .topology import Graph, MixingMatrix, Topology, build_graph, \
    explicit_mixing, laplacian_ratio, max_degree_mixing, mix

__version__ = "0.1.0"

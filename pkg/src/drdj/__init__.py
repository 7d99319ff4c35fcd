"""Distributionally robust data join: classifiers trained on a labeled sample
and an unlabeled sample with extra features, hedged over two Wasserstein balls."""

from .data import (
    AuxDataset, CsvSchema, FullDataset, LabeledDataset, SplitSpec, StandardizationStats,
    gen_fair_synthetic, gen_synthetic, load_csv, split_overlap, standardize,
)
from .geometry import (
    MatchSet, NormSpec, TransportPlan, build_match_set, check_feasibility, dist_A, dist_P,
    dual_norm, feasibility_witness_coupling, norm, wasserstein_X,
)
from .objective import JoinProblem, ModelPoint, SolverConfig, omega, omega_subgradient
from .projection import FeasibleSetSpec, project, project_oracle
from .solver import TrainedModel, predict, train
from .fairness import FairnessConfig, train_fair, unfairness_empirical
from .baselines import BaselineConfig, train_drlr, train_lr, train_rlr
from .harness import ExperimentSpec, evaluate, run_experiment

__version__ = "0.1.0"

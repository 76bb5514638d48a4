"""Physics-informed neural networks with DQN-driven adaptive collocation sampling.

Everything runs on numpy: a reverse-mode tape for parameter gradients and
truncated Taylor jets for spatial derivatives of the network.
"""

from .harness import RunConfig, RunRecord, compare, default_config, emit_results, load_config, run_pipeline, run_sweep
from .network import MLPSpec, ParamVector, forward, forward_jet, forward_scalar, init_params
from .problems import PROBLEMS, ProblemSpec, make_problem, sample_boundary
from .samplers import RLConfig, rad_run, rar_run, rl_run, uniform_sample
from .training import LossWeights, TrainConfig, evaluate_error, relative_l2, train

__version__ = "0.1.0"

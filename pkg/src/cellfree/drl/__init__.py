from .agents import (CONTINUOUS_AGENTS, DISCRETE_AGENTS, AcAgent, AgentConfig, DdpgAgent,
                     DdqnAgent, GaussianAcAgent, GaussianPgAgent, PgAgent, SacAgent, SarsaAgent,
                     discounted_returns, double_q_targets, make_agent, sac_q_target,
                     sac_value_target, sarsa_target)
from .envs import (CSI_MODES, BeamEnv, ClusteringEnv, CsiSchedule, action_to_phases,
                   phase_grid_search)
from .flops import flops_estimate, flops_report, table_flops
from .nets import Adam, Mlp, Sgd, softmax
from .replay import ReplayBuffer, Transition
from .serialize import load_agent, save_agent

from .mdp import MDP_ENVS, make_mdp_env
from .rmab import RMAB_ENVS, make_rmab_env

__all__ = ["MDP_ENVS", "RMAB_ENVS", "make_mdp_env", "make_rmab_env"]

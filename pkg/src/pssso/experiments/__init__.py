"""Experiment commands; each returns an :class:`ExperimentResult`."""

from .calculus import cmd_calculus_check
from .common import ExperimentResult
from .degenerate import cmd_degenerate_l1, cmd_degenerate_nuclear
from .elastic import cmd_elastic_net_bound
from .minibatch import cmd_minibatch_lasso
from .saa import cmd_saa_consistency
from .union_demo import cmd_local_union_demo

COMMANDS = {
    "degenerate-l1": cmd_degenerate_l1,
    "degenerate-nuclear": cmd_degenerate_nuclear,
    "minibatch-lasso": cmd_minibatch_lasso,
    "saa-consistency": cmd_saa_consistency,
    "elastic-net-bound": cmd_elastic_net_bound,
    "local-union-demo": cmd_local_union_demo,
    "calculus-check": cmd_calculus_check,
}

__all__ = ["COMMANDS", "ExperimentResult", "cmd_degenerate_l1",
           "cmd_degenerate_nuclear", "cmd_minibatch_lasso",
           "cmd_saa_consistency", "cmd_elastic_net_bound",
           "cmd_local_union_demo", "cmd_calculus_check"]

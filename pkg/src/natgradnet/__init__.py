"""Natural-gradient learning in discrete DAG belief networks.

Library layout:

* :mod:`natgradnet.state_space` -- finite configuration spaces, indexing
* :mod:`natgradnet.dag_model` -- DAG models, kernels, tables, sampling
* :mod:`natgradnet.fisher` -- Fisher blocks, brute-force oracle, pinv
* :mod:`natgradnet.objective` -- KL objective, gradients, training
* :mod:`natgradnet.sampler` -- Markov-blanket Gibbs sampling
* :mod:`natgradnet.wake_sleep` -- recognition models, wake/sleep phases
* :mod:`natgradnet.geometry` -- coarse grainings, embeddings, extensions
* :mod:`natgradnet.nets` -- network builders
* :mod:`natgradnet.verify` -- numerical check suites
* :mod:`natgradnet.cli` -- command-line driver
"""

__version__ = "0.1.0"

from .dag_model import Dag, DagModel, KernelFamily, KernelSpec  # noqa: F401
from .state_space import Config, StateSpace, binary_space  # noqa: F401

"""metaplan: a workbench for studying how agents learn planning strategies
in click-to-reveal decision trees.

Subpackages cover the planning task itself (env), feature vectors over
belief/computation pairs (features), the strategy-learning mechanisms
(learners), their composition into a model grid (metacontrol), likelihood
fitting (fitkit), Bayesian model selection and trend statistics
(modelselect), forward simulation (simlab), and a CLI plus a small
collection service (cli, serve).
"""

__version__ = "0.1.0"

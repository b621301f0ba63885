"""Metapath-view contrastive learning for heterogeneous graphs.

Pipeline modules: hin (graph loading and view extraction), augment
(stochastic corruption), positives (PPR/semantic positive sampling),
numerics (autodiff tensor core), model (encoder/projector/discriminator),
objective (contrastive losses), trainer, evaluate, synth, config, cli.
"""

__version__ = "0.1.0"

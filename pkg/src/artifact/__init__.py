"""Desk-scale reconstruction-conditioned video generation.

A toy Gaussian-splat renderer supplies degraded renderings and opacity maps;
a small flow-matching transformer learns to enhance them starting from an
opacity-mixed source, and is then distilled into a block-causal, KV-cached
few-step generator whose frames can be fitted back into the splat scene.
"""
__version__ = "0.1.0"

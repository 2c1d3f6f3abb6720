"""Differentiable neural decision trees and forests for tabular mortality prediction.

The package bundles a small reverse-mode autodiff core, soft routing trees and
jointly trained forests, seven classical baselines, a synthetic cohort
generator and a four-stage experiment harness.
"""

__version__ = "0.1.0"

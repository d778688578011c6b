"""galikit: desk-scale decoder-only inference with training-free
context-length extrapolation.

The package implements chunk-wise fractional position-ID interpolation
with direct attention-logit interpolation, the exact rotary reference
and frequency/position rescaling baselines, a toy transformer to run
them in, and the measurement tooling (attention-distribution diffs,
entropy, decay curves, perplexity) to compare them.
"""

__version__ = "0.1.0"

from galikit.kernels import backend_name  # noqa: F401

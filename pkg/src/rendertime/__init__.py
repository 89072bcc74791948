"""Rendering-time prediction toolkit for CPU volume raycasting.

Trains a two-stage model (volume autoencoder + parameter-conditioned
regressor) on measurements from an instrumented raycaster and applies the
predictions to per-frame ray-step-size control and makespan scheduling.
"""
import os
import warnings

# The renderer's sample counts must be reproducible for any thread count up
# to 8, so the numba pool is sized before numba is first imported.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))

# numba falls back to another threading layer when the system TBB is old;
# the fallback is fine and the warning is just noise.
warnings.filterwarnings("ignore", message="The TBB threading layer requires TBB")

__version__ = "0.1.0"

"""Energy-based priors for accelerated MRI: training, joint image/coil MAP
reconstruction, and posterior sampling."""

__version__ = "0.1.0"

"""Baseband-equivalent simulation of adaptive nonlinear RF
self-interference cancellation for simultaneous transmit-receive radios.

Subpackage map:
  signal_gen  multicarrier waveforms, PAPR reduction, calibration probes
  rf_chain    PA / coupling / LNA / aux models and noise budget math
  basis       nonlinear basis functions and their orthogonalization
  canceller   regeneration, combining, optimum-filter oracle, delay
  learning    block-adaptive decorrelation learning and stability bounds
  analysis    Welch PSD, band powers, complexity calculator
  scenario    experiment configuration (YAML)
  runner      scenario execution and CSV artifacts
  cli         command-line entry point
"""

from .signal_gen import ComplexSignal, WaveformSpec

__all__ = ["ComplexSignal", "WaveformSpec"]
__version__ = "0.1.0"

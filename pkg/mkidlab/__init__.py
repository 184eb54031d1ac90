"""
mkid-lab - MKID single-photon analysis pipeline

Characterizes superconducting resonators (S21 fits, gap extraction from Qi(T)),
calibrates the heterodyne IQ chain, triggers and aligns pulse records, estimates
pulse amplitudes with an optimum filter and fits the photon-number spectrum.
A seeded synthetic generator provides ground truth for every stage.
"""

__version__ = "0.1.0"

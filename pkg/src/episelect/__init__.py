"""Cost-constrained measurement selection for networked SIR rate estimation.

Two settings are covered: exact noiseless measurements, where the goal is a
cheapest selection that makes the infection and recovery rates uniquely
identifiable, and randomized test outcomes, where a budgeted selection
minimizes a Bayesian error bound on the rate estimates. Brute-force oracles
certify the approximation guarantees on desk-scale instances.
"""

__version__ = "0.1.0"

"""Threshold-based sorting of alternatives described by criterion time series.

Two learners share one data model: ``tpl`` fits a piecewise-linear value
model with a fixed time discount as a convex QP, and ``mrnn`` trains a
monotonic recurrent network with learned discount gates.
"""

__version__ = "0.1.0"

"""Simulation and verification tools for asynchronous minibatch SGD and
momentum variance reduction on heterogeneous workers."""

from .delays import DelayModel, DelayProfile, RateFunction, gradients_completed, sample_delays
from .engine import Arrival, Cluster, RunTrace, collect_batch, run_method
from .optim import (
    InexactRennalaMVR,
    Minibatch,
    MvrState,
    RennalaMVR,
    RennalaSGD,
    SgdState,
    inexact_mvr_step,
    mvr_init,
    mvr_step,
    sgd_step,
    theorem3_params,
)
from .problems import OracleSample, QuadraticProblem

__version__ = "0.1.0"

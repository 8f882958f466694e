"""Defining a state-space model and moving between time representations.

A two-state discrete-time model (think: coupled affect states measured once
per day) is validated, converted to its continuous-time twin, and converted
back.  The continuous drift is what you would report when pings are
irregularly spaced; the discrete transition matrix is what you would report
on an equal-interval grid.  For linear dynamics the two are one-to-one.
"""

import numpy as np

import emastate as es

# x1 -> x1 with persistence .5, x2 spills into x1 with weight .2
spec = es.ModelSpec(
    A=[[0.5, 0.2], [0.0, 0.5]],
    Sigma=np.eye(2),
    Theta=0.4 * np.eye(2),
)

report = es.validate_model(spec)
print("validation errors:", report.errors)
print("validation warnings:", report.warnings)

cont = es.to_continuous(spec, dt=1.0)
print("\ncontinuous drift (per hour, if pings were hourly):")
print(np.round(cont.A, 4))

back = es.discretize(cont, dt=1.0)
print("\nround trip back to the one-step transition matrix:")
print(np.round(back.A, 10))

# the same continuous model stepped at half the cadence
half = es.discretize(cont, dt=0.5)
print("\ntransition over half a step (note: not simply A/2):")
print(np.round(half.A, 4))

mean, cov = es.stationary_moments(spec)
print("\nstationary covariance of the states:")
print(np.round(cov, 4))

# would a 12h ping cadence capture a daily process? (no: need strictly
# faster than half the period)
print("\nNyquist advisories:")
print("  period 24h, sample every 12h ->", es.nyquist_check(24, 12))
print("  period 24h, sample every  6h ->", es.nyquist_check(24, 6))

# a declared random walk: shocks never decay
walk = es.ModelSpec(A=[[1.0]], Sigma=[[1.0]], initial_cov=[[0.0]],
                    random_walk_states={0})
print("\nrandom-walk spec validates cleanly:", es.validate_model(walk).ok)

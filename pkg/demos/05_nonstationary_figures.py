"""The non-stationary zoo, as plot data.

Each generator returns named columns (write them with any plotting tool):

fig1a  sampling-rate thinning: the full series vs every-5th and every-10th
fig1b  a linear trend vs a weekend effect, all else equal
fig3a  autoregression sliding 0 -> 1 along a sigmoid (time-varying parameter)
fig3b  regime switches in the mean: 0 -> 3 at t=33, 3 -> -3 at t=66
fig3c  stationary vs random walk hit by the same one-time shock
"""

import numpy as np

import emastate as es

cols = es.figure_series("fig1a", seed=0)
rmse = es.thinning_rmse(cols)
print("fig1a thinning RMSE:", {k: round(v, 3) for k, v in rmse.items()})
print("  (coarser sampling loses the small fluctuations first)")

cols = es.figure_series("fig1b", seed=0)
print("\nfig1b final-week means: linear trend "
      f"{cols['linear_trend'][-7:].mean():+.2f}, weekend effect "
      f"{cols['weekend_trend'][-7:].mean():+.2f}")

cols = es.figure_series("fig3a", seed=0)
v = cols["value"]
print("\nfig3a lag-1 autocorrelation, first vs last 40 pings: "
      f"{np.corrcoef(v[:40][:-1], v[:40][1:])[0, 1]:.2f} -> "
      f"{np.corrcoef(v[60:][:-1], v[60:][1:])[0, 1]:.2f}")

cols = es.figure_series("fig3b", seed=0)
v = cols["value"]
print("\nfig3b segment means:",
      [round(float(v[:33].mean()), 2), round(float(v[33:66].mean()), 2),
       round(float(v[66:].mean()), 2)])

cols = es.figure_series("fig3c", seed=0)
stat, walk = cols["stationary"], cols["random_walk"]
print("\nfig3c final-quarter means after the t=50 shock:")
print(f"  stationary returns to baseline: {stat[75:].mean():+.2f}")
print(f"  random walk keeps the shift:    {walk[75:].mean():+.2f}")

# the same data is available from the command line:
#   emastate plotdata --figure fig3c --out figs --seed 0

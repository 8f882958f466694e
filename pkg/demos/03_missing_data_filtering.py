"""Filtering as the missing-data workhorse.

The filter carries the state straight through nonresponse: at a fully
missed ping the state estimate is the model prediction, and the likelihood
simply skips the gap.  The demo also shows the two equivalent night
treatments — continuous-time filtering across the raw overnight gap versus
inserting night-length/interval NA rows and filtering at the day cadence —
and a particle filter pulling a latent state out of pure count data.
"""

import numpy as np

import emastate as es

# --- Kalman filtering through 30% nonresponse --------------------------------
spec = es.ModelSpec(A=[[0.7]], Sigma=[[1.0]], Theta=[[0.5]])
sched = es.PingSchedule(kind="fixed", horizon=200.0, interval=1.0)
data = es.simulate_dataset(spec, sched, rng_seed=1)
holed = es.inject_missingness(data, es.MissingnessSpec("MCAR", 0.3), rng_seed=2)

p = holed.participants[0]
r = es.kalman_filter(spec, p.Y, p.missing)
print(f"pings with nonresponse: {r.missing_handled} of {p.n_pings}")
print(f"log-likelihood over observed cells: {r.log_likelihood:.2f}")

truth = data.participants[0].Y[:, 0]
err_obs = np.abs(r.filtered_mean[~p.missing[:, 0], 0] - truth[~p.missing[:, 0]])
err_mis = np.abs(r.filtered_mean[p.missing[:, 0], 0] - truth[p.missing[:, 0]])
print(f"mean |filtered - truth| at observed pings: {err_obs.mean():.3f}")
print(f"mean |filtered - truth| at missed pings:   {err_mis.mean():.3f}")

s = es.kalman_smooth(spec, p.Y, p.missing)
err_sm = np.abs(s.smoothed_mean[p.missing[:, 0], 0] - truth[p.missing[:, 0]])
print(f"smoother tightens the missed pings to:     {err_sm.mean():.3f}")

# --- the two night treatments coincide ----------------------------------------
delta = 2.4
day_model = es.ModelSpec(A=[[0.6]], Sigma=[[1.0]], Theta=[[0.4]],
                         initial_cov=[[1.6]])
ct = es.to_continuous(day_model, delta)
t = np.concatenate([np.arange(5) * delta, 24.0 + np.arange(5) * delta])
y = np.random.default_rng(3).normal(size=(10, 1))

r_ct = es.kalman_filter_ct(ct, t, y)
raw = es.EmaDataset([es.Participant("p1", t, y, np.zeros_like(y, bool),
                                    np.zeros((10, 0)))], ["y1"], [])
aug = es.augment_night_gaps(raw, day_window=(0.0, 12.0), target_interval=delta)
pa = aug.participants[0]
r_na = es.kalman_filter(day_model, pa.Y, pa.missing)
print(f"\ninserted NA rows for the night: {len(pa.metadata['inserted_rows'])}")
print("next-morning prediction, continuous:", np.round(r_ct.predicted_mean[5, 0], 8))
print("next-morning prediction, NA rows:   ", np.round(r_na.predicted_mean[10, 0], 8))

# --- counts need particles -----------------------------------------------------
drinks = es.MeasurementChannel(family="poisson", scale=1.0, link="log")
count_model = es.ModelSpec(A=[[0.8]], Sigma=[[0.3]], H=[[1.0]], Theta=[[0.0]],
                           channels=(drinks,))
cdata = es.simulate_dataset(count_model, sched, rng_seed=4)
cy = cdata.participants[0].Y
pf = es.particle_filter(count_model, cy, n_particles=4000, rng_seed=5)
print(f"\nparticle filter on daily counts: loglik {pf.log_likelihood:.2f}")
print("observed counts, first 10 days:  ", cy[:10, 0].astype(int))
print("filtered log-rate, first 10 days:", np.round(pf.filtered_mean[:10, 0], 2))

"""State estimation and likelihood evaluation.

Linear-Gaussian models get the exact Kalman filter and fixed-interval
smoother, with missing channels dropped from each update (a fully missing
ping keeps the prediction untouched).  Continuous-time specs are filtered by
discretizing each inter-ping gap exactly.  Models with count, ordinal, or
dichotomous channels fall back to a bootstrap particle filter.

Covariance updates use the Joseph form plus explicit symmetrization: EMA
series are long and round-off accumulates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, gammaln, logsumexp

from .errors import EmaError
from .model import (GAUSSIAN, GRADED_RESPONSE, BERNOULLI_LOGISTIC, POISSON,
                    ModelSpec, discretize, psd_sqrt)

COND_LIMIT = 1e12


@dataclass
class FilterResult:
    """Per-ping predicted and filtered state moments plus the likelihood."""

    timestamps: np.ndarray
    predicted_mean: np.ndarray      # (T, n)
    predicted_cov: np.ndarray       # (T, n, n)
    filtered_mean: np.ndarray       # (T, n)
    filtered_cov: np.ndarray        # (T, n, n)
    loglik_contributions: np.ndarray
    log_likelihood: float
    missing_handled: int            # pings with >= 1 missing channel
    missing: np.ndarray             # (T, p) mask actually used

    def to_delimited(self, y_names: list[str] | None = None, sep: str = ",") -> str:
        """One row per ping: time, filtered means/variances, loglik, miss flags."""
        T, n = self.filtered_mean.shape
        p = self.missing.shape[1]
        if y_names is None:
            y_names = [f"y{j + 1}" for j in range(p)]
        header = (["t"] + [f"mean.s{i + 1}" for i in range(n)]
                  + [f"var.s{i + 1}" for i in range(n)] + ["loglik"]
                  + [f"miss.{nm}" for nm in y_names])
        lines = [sep.join(header)]
        for t in range(T):
            row = [f"{self.timestamps[t]:.12g}"]
            row += [f"{v:.12g}" for v in self.filtered_mean[t]]
            row += [f"{self.filtered_cov[t, i, i]:.12g}" for i in range(n)]
            row.append(f"{self.loglik_contributions[t]:.12g}")
            row += [str(int(m)) for m in self.missing[t]]
            lines.append(sep.join(row))
        return "\n".join(lines) + "\n"


@dataclass
class SmoothResult:
    """Fixed-interval smoother output; lag_one_cov[t] = Cov(x[t+1], x[t] | all)."""

    timestamps: np.ndarray
    smoothed_mean: np.ndarray
    smoothed_cov: np.ndarray
    lag_one_cov: np.ndarray         # (T-1, n, n)

    def to_delimited(self, sep: str = ",") -> str:
        T, n = self.smoothed_mean.shape
        header = (["t"] + [f"mean.s{i + 1}" for i in range(n)]
                  + [f"var.s{i + 1}" for i in range(n)])
        lines = [sep.join(header)]
        for t in range(T):
            row = [f"{self.timestamps[t]:.12g}"]
            row += [f"{v:.12g}" for v in self.smoothed_mean[t]]
            row += [f"{self.smoothed_cov[t, i, i]:.12g}" for i in range(n)]
            lines.append(sep.join(row))
        return "\n".join(lines) + "\n"


def _normalize_series(spec: ModelSpec, y, missing, u):
    y = np.atleast_2d(np.asarray(y, dtype=float))
    T = y.shape[0]
    if y.shape[1] != spec.n_obs:
        raise EmaError("INVALID_MODEL",
                       f"series has {y.shape[1]} channels, model expects {spec.n_obs}")
    if missing is None:
        missing = np.isnan(y)
    else:
        missing = np.atleast_2d(np.asarray(missing, dtype=bool))
        missing = missing | np.isnan(y)
    if u is None:
        u = np.zeros((T, spec.n_inputs))
    else:
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u.reshape(T, -1)
        if u.shape != (T, spec.n_inputs):
            raise EmaError("INVALID_MODEL",
                           f"U has shape {u.shape}, expected ({T}, {spec.n_inputs})")
    return y, missing, u


def _kalman_pass_scalar(y, missing, u, mu0, P0, H, Theta, transitions):
    """Pure-float recursion for 1-state, 1-channel models (the hot path in
    estimation); same formulas as the general pass."""
    T = y.shape[0]
    h = float(H[0, 0]); theta = float(Theta[0, 0])
    pred_m = np.empty(T); pred_P = np.empty(T)
    filt_m = np.empty(T); filt_P = np.empty(T)
    ll = np.zeros(T)
    gains = np.ones(T)
    have_u = u.shape[1] > 0
    log2pi = np.log(2.0 * np.pi)

    m = float(mu0[0]); P = float(P0[0, 0])
    for t in range(T):
        if t > 0:
            A, Sigma, G = transitions[t - 1]
            a = float(A[0, 0])
            m = a * m + (float(G[0] @ u[t - 1]) if have_u else 0.0)
            P = a * P * a + float(Sigma[0, 0])
        pred_m[t] = m; pred_P[t] = P
        if missing[t, 0]:
            filt_m[t] = m; filt_P[t] = P
            continue
        s = h * P * h + theta
        if s <= 0.0:
            raise EmaError("SINGULAR_INNOVATION",
                           f"innovation variance {s:.3g} <= 0 at ping {t}")
        v = y[t, 0] - h * m
        k = P * h / s
        m = m + k * v
        ikh = 1.0 - k * h
        P = ikh * P * ikh + k * theta * k
        filt_m[t] = m; filt_P[t] = P
        gains[t] = ikh
        ll[t] = -0.5 * (log2pi + np.log(s) + v * v / s)

    shape = (T, 1, 1)
    return (pred_m.reshape(T, 1), pred_P.reshape(shape),
            filt_m.reshape(T, 1), filt_P.reshape(shape), ll,
            [np.array([[g]]) for g in gains])


def _kalman_pass(y, missing, u, mu0, P0, H, Theta, transitions):
    """Shared predict/update recursion.

    ``transitions[k]`` supplies (A, Sigma, G) for the step into ping k+1.
    Returns everything the smoother needs as well.
    """
    T, p = y.shape
    n = mu0.size
    if n == 1 and p == 1:
        return _kalman_pass_scalar(y, missing, u, mu0, P0, H, Theta, transitions)
    pred_m = np.empty((T, n)); pred_P = np.empty((T, n, n))
    filt_m = np.empty((T, n)); filt_P = np.empty((T, n, n))
    ll = np.zeros(T)
    gain_terms = [None] * T        # (I - K H_obs) per ping, for the lag-one pass
    I_n = np.eye(n)

    m, P = mu0.copy(), P0.copy()
    for t in range(T):
        if t > 0:
            A, Sigma, G = transitions[t - 1]
            m = A @ m + (G @ u[t - 1] if G.shape[1] else np.zeros(n))
            P = A @ P @ A.T + Sigma
            P = 0.5 * (P + P.T)
        pred_m[t], pred_P[t] = m, P

        obs = ~missing[t]
        if not obs.any():
            filt_m[t], filt_P[t] = m, P
            gain_terms[t] = I_n
            continue
        Ho = H[obs]
        v = y[t, obs] - Ho @ m
        S = Ho @ P @ Ho.T + Theta[np.ix_(obs, obs)]
        S = 0.5 * (S + S.T)
        w = np.linalg.eigvalsh(S)
        if w[0] <= 0.0 or w[-1] > COND_LIMIT * w[0]:
            raise EmaError("SINGULAR_INNOVATION",
                           f"innovation covariance at ping {t} is numerically "
                           f"singular (eigenvalues {w.min():.3g}..{w.max():.3g})")
        cf = cho_factor(S, lower=True)
        K = cho_solve(cf, Ho @ P).T
        m = m + K @ v
        IKH = I_n - K @ Ho
        P = IKH @ P @ IKH.T + K @ Theta[np.ix_(obs, obs)] @ K.T
        P = 0.5 * (P + P.T)
        filt_m[t], filt_P[t] = m, P
        gain_terms[t] = IKH
        logdet = 2.0 * np.log(np.diag(cf[0])).sum()
        ll[t] = -0.5 * (obs.sum() * np.log(2.0 * np.pi) + logdet
                        + v @ cho_solve(cf, v))

    return pred_m, pred_P, filt_m, filt_P, ll, gain_terms


def _require_gaussian(spec: ModelSpec) -> None:
    if not spec.all_gaussian:
        raise EmaError("LIKELIHOOD_MODE_MISMATCH",
                       "the Kalman filter applies only to all-Gaussian channels; "
                       "use particle_filter for count/ordinal/dichotomous data")


def kalman_filter(spec: ModelSpec, y, missing=None, u=None,
                  timestamps=None) -> FilterResult:
    """Exact filter for a discrete-time all-Gaussian spec.

    Missing channels are dropped from that ping's update and from the
    likelihood; the prediction-error decomposition therefore covers observed
    cells only.
    """
    if spec.time_mode != "discrete":
        raise EmaError("INVALID_MODEL", "kalman_filter expects a discrete-time spec; "
                                        "use kalman_filter_ct")
    _require_gaussian(spec)
    y, missing, u = _normalize_series(spec, y, missing, u)
    T = y.shape[0]
    if timestamps is None:
        timestamps = np.arange(T, dtype=float)
    trans = [(spec.A, spec.Sigma, spec.G)] * max(T - 1, 0)
    pm, pP, fm, fP, ll, _ = _kalman_pass(y, missing, u, spec.initial_mean,
                                         spec.initial_cov, spec.H, spec.Theta, trans)
    return FilterResult(np.asarray(timestamps, dtype=float), pm, pP, fm, fP, ll,
                        float(ll.sum()), int(missing.any(axis=1).sum()), missing)


def _gap_transitions(spec: ModelSpec, timestamps: np.ndarray):
    """Per-gap exact discretization, cached over repeated gap lengths."""
    cache: dict = {}
    trans = []
    for dt in np.diff(timestamps):
        if dt <= 0:
            raise EmaError("NON_MONOTONE_TIME", "timestamps must be strictly increasing")
        key = round(float(dt), 12)
        if key not in cache:
            d = discretize(spec, float(dt))
            cache[key] = (d.A, d.Sigma, d.G)
        trans.append(cache[key])
    return trans


def kalman_filter_ct(spec: ModelSpec, timestamps, y, missing=None,
                     u=None) -> FilterResult:
    """Filter a continuous-time spec over arbitrarily spaced pings.

    Each gap is discretized exactly (matrix exponential of the drift and the
    matching noise integral), then one predict/update step runs; inputs are
    held over the gap.
    """
    if spec.time_mode != "continuous":
        raise EmaError("INVALID_MODEL", "kalman_filter_ct expects a continuous-time spec")
    _require_gaussian(spec)
    timestamps = np.asarray(timestamps, dtype=float).reshape(-1)
    y, missing, u = _normalize_series(spec, y, missing, u)
    if timestamps.size != y.shape[0]:
        raise EmaError("INVALID_MODEL", "timestamps and series lengths differ")
    trans = _gap_transitions(spec, timestamps)
    pm, pP, fm, fP, ll, _ = _kalman_pass(y, missing, u, spec.initial_mean,
                                         spec.initial_cov, spec.H, spec.Theta, trans)
    return FilterResult(timestamps, pm, pP, fm, fP, ll, float(ll.sum()),
                        int(missing.any(axis=1).sum()), missing)


def kalman_smooth(spec: ModelSpec, y, missing=None, u=None,
                  timestamps=None) -> SmoothResult:
    """Fixed-interval (RTS) smoother; works for both time modes."""
    if spec.time_mode == "continuous":
        if timestamps is None:
            raise EmaError("INVALID_MODEL", "continuous-time smoothing needs timestamps")
        timestamps = np.asarray(timestamps, dtype=float).reshape(-1)
        _require_gaussian(spec)
        y, missing, u = _normalize_series(spec, y, missing, u)
        trans = _gap_transitions(spec, timestamps)
    else:
        _require_gaussian(spec)
        y, missing, u = _normalize_series(spec, y, missing, u)
        T0 = y.shape[0]
        if timestamps is None:
            timestamps = np.arange(T0, dtype=float)
        trans = [(spec.A, spec.Sigma, spec.G)] * max(T0 - 1, 0)

    pm, pP, fm, fP, _, gain = _kalman_pass(y, missing, u, spec.initial_mean,
                                           spec.initial_cov, spec.H, spec.Theta, trans)
    T, n = fm.shape
    sm = fm.copy()
    sP = fP.copy()
    J = [None] * max(T - 1, 0)
    for t in range(T - 2, -1, -1):
        A_next = trans[t][0]
        # J_t = P_f[t] A' P_pred[t+1]^{-1}; pseudo-inverse guards Sigma = 0 cases
        Pp = pP[t + 1]
        try:
            Jt = np.linalg.solve(Pp, A_next @ fP[t]).T
        except np.linalg.LinAlgError:
            Jt = (np.linalg.pinv(Pp) @ (A_next @ fP[t])).T
        J[t] = Jt
        sm[t] = fm[t] + Jt @ (sm[t + 1] - pm[t + 1])
        sP[t] = fP[t] + Jt @ (sP[t + 1] - Pp) @ Jt.T
        sP[t] = 0.5 * (sP[t] + sP[t].T)

    lag1 = np.empty((max(T - 1, 0), n, n))
    if T > 1:
        lag1[T - 2] = gain[T - 1] @ trans[T - 2][0] @ fP[T - 2]
        for t in range(T - 3, -1, -1):
            lag1[t] = (fP[t + 1] @ J[t].T
                       + J[t + 1] @ (lag1[t + 1] - trans[t + 1][0] @ fP[t + 1]) @ J[t].T)
    return SmoothResult(np.asarray(timestamps, dtype=float), sm, sP, lag1)


# ---------------------------------------------------------------------------
# Particle filter for non-Gaussian measurement families
# ---------------------------------------------------------------------------

def _systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    N = weights.size
    positions = (rng.uniform() + np.arange(N)) / N
    return np.minimum(np.searchsorted(np.cumsum(weights), positions), N - 1)


def _channel_loglik(spec: ModelSpec, particles: np.ndarray, y_t: np.ndarray,
                    obs: np.ndarray) -> np.ndarray:
    """Log of the observation density at y_t for every particle.

    Observed Gaussian channels enter jointly through their Theta sub-block;
    each observed non-Gaussian channel contributes its pmf; missing channels
    contribute nothing (weight one).
    """
    N = particles.shape[0]
    logw = np.zeros(N)
    gauss = np.array([c.family == GAUSSIAN for c in spec.channels]) & obs
    if gauss.any():
        Hg = spec.H[gauss]
        Tg = spec.Theta[np.ix_(gauss, gauss)]
        resid = y_t[gauss][None, :] - particles @ Hg.T
        w_eig = np.linalg.eigvalsh(0.5 * (Tg + Tg.T))
        if w_eig[0] <= 0.0 or w_eig[-1] > COND_LIMIT * w_eig[0]:
            raise EmaError("SINGULAR_INNOVATION",
                           "Gaussian channel error covariance is singular")
        cf = cho_factor(Tg, lower=True)
        maha = np.einsum("ij,ij->i", resid, cho_solve(cf, resid.T).T)
        logdet = 2.0 * np.log(np.diag(cf[0])).sum()
        logw += -0.5 * (gauss.sum() * np.log(2.0 * np.pi) + logdet + maha)
    for j, ch in enumerate(spec.channels):
        if not obs[j] or ch.family == GAUSSIAN:
            continue
        s = particles[:, ch.state_index]
        if ch.family == POISSON:
            rate = ch.scale * (np.exp(s) if ch.link == "log" else s)
            lp = np.full(particles.shape[0], -np.inf)
            ok = rate > 0
            k = y_t[j]
            lp[ok] = k * np.log(rate[ok]) - rate[ok] - gammaln(k + 1.0)
            logw += lp
        elif ch.family == GRADED_RESPONSE:
            th = np.asarray(ch.thresholds)
            k = int(y_t[j])
            if not 1 <= k <= th.size + 1:
                raise EmaError("INVALID_MODEL",
                               f"channel {j}: category {y_t[j]} outside 1..{th.size + 1}")
            upper = (expit(ch.discrimination * (s - th[k - 2]))
                     if k >= 2 else np.ones_like(s))
            lower = (expit(ch.discrimination * (s - th[k - 1]))
                     if k <= th.size else np.zeros_like(s))
            logw += np.log(np.maximum(upper - lower, 1e-300))
        elif ch.family == BERNOULLI_LOGISTIC:
            p = expit(ch.discrimination * (s - ch.thresholds[0]))
            logw += np.log(np.maximum(p if y_t[j] >= 0.5 else 1.0 - p, 1e-300))
    return logw


def particle_filter(spec: ModelSpec, y, n_particles: int, rng_seed: int,
                    missing=None, u=None, timestamps=None) -> FilterResult:
    """Bootstrap filter: propagate through the state equation, weight by the
    observation likelihood over observed channels, resample systematically
    when the effective sample size drops below half the particle count.

    The likelihood estimate sums, per ping, the log of the weighted mean of
    the incremental weights; with resampling at every ping this reduces to
    the plain mean, and either way the estimator of the likelihood itself is
    unbiased.
    """
    if n_particles < 100:
        raise EmaError("PARTICLES_TOO_FEW", f"need >= 100 particles, got {n_particles}")
    y, missing, u = _normalize_series(spec, y, missing, u)
    T = y.shape[0]
    n = spec.n_states
    continuous = spec.time_mode == "continuous"
    if continuous:
        if timestamps is None:
            raise EmaError("INVALID_MODEL", "continuous-time particle filter needs timestamps")
        timestamps = np.asarray(timestamps, dtype=float).reshape(-1)
        trans = _gap_transitions(spec, timestamps)
    else:
        if timestamps is None:
            timestamps = np.arange(T, dtype=float)
        trans = [(spec.A, spec.Sigma, spec.G)] * max(T - 1, 0)

    rng = np.random.default_rng(rng_seed)
    L0 = psd_sqrt(spec.initial_cov)
    chol_cache = {id(tr): psd_sqrt(tr[1]) for tr in trans} if trans else {}

    particles = spec.initial_mean + rng.standard_normal((n_particles, n)) @ L0.T
    log_w = np.full(n_particles, -np.log(n_particles))

    pred_m = np.empty((T, n)); pred_P = np.empty((T, n, n))
    filt_m = np.empty((T, n)); filt_P = np.empty((T, n, n))
    ll = np.zeros(T)

    def weighted_moments(pts, lw):
        wts = np.exp(lw - logsumexp(lw))
        mean = wts @ pts
        d = pts - mean
        cov = (d * wts[:, None]).T @ d
        return mean, 0.5 * (cov + cov.T)

    for t in range(T):
        if t > 0:
            A, _, G = trans[t - 1]
            L = chol_cache[id(trans[t - 1])]
            drift = (G @ u[t - 1]) if G.shape[1] else 0.0
            particles = particles @ A.T + drift + rng.standard_normal((n_particles, n)) @ L.T
        pred_m[t], pred_P[t] = weighted_moments(particles, log_w)

        obs = ~missing[t]
        if obs.any():
            incr = _channel_loglik(spec, particles, y[t], obs)
            tot = logsumexp(log_w + incr)
            if not np.isfinite(tot):
                raise EmaError("DEGENERATE_WEIGHTS",
                               f"all particle weights vanished at ping {t}")
            ll[t] = tot          # log sum of W_prev * incremental weight
            log_w = log_w + incr - tot
        filt_m[t], filt_P[t] = weighted_moments(particles, log_w)

        ess = 1.0 / np.exp(logsumexp(2.0 * log_w))
        if ess < n_particles / 2.0:
            idx = _systematic_resample(np.exp(log_w - logsumexp(log_w)), rng)
            particles = particles[idx]
            log_w = np.full(n_particles, -np.log(n_particles))

    return FilterResult(np.asarray(timestamps, dtype=float), pred_m, pred_P,
                        filt_m, filt_P, ll, float(ll.sum()),
                        int(missing.any(axis=1).sum()), missing)

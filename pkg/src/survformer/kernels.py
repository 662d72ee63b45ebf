"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Two loops dominate runtime outside the training tape: concordance pair
enumeration (quadratic in the number of records) and batched evaluation of
piecewise-constant-hazard loss terms. Both are provided in two variants:

* a numba ``@njit`` version, compiled lazily on first call, and
* a pure-numpy version with identical semantics.

Set the environment variable ``SURVFORMER_DISABLE_NUMBA=1`` before import to
force the numpy path (useful on platforms without numba, and for the
benchmark in ``benchmarks/bench_kernels.py``). Results of the two paths agree
up to floating-point summation order.
"""

import os

import numpy as np

_DISABLED = os.environ.get("SURVFORMER_DISABLE_NUMBA", "") not in ("", "0")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = HAS_NUMBA and not _DISABLED


def pch_terms_numpy(hazards, kappa0, rho, events):
    """Per-record piecewise-constant-hazard loss terms.

    Arguments:
        hazards: (n, m) positive hazard values per time bin.
        kappa0: (n,) zero-based bin index of each record's duration.
        rho: (n,) elapsed proportion of that bin, in [0, 1].
        events: (n,) 1.0 where the record's event is observed for this head,
            0.0 for a censored contribution.

    Returns:
        (n,) array: -e*log(h[kappa]) + h[kappa]*rho + sum of earlier bins.
    """
    n = hazards.shape[0]
    rows = np.arange(n)
    h_at = hazards[rows, kappa0]
    cum = np.cumsum(hazards, axis=1)
    prior = np.where(kappa0 > 0, cum[rows, np.maximum(kappa0 - 1, 0)], 0.0)
    return -events * np.log(h_at) + h_at * rho + prior


@njit(cache=True)
def _pch_terms_nb(hazards, kappa0, rho, events):  # pragma: no cover - jit
    n = hazards.shape[0]
    out = np.empty(n)
    for i in range(n):
        k = kappa0[i]
        acc = 0.0
        for j in range(k):
            acc += hazards[i, j]
        h = hazards[i, k]
        out[i] = -events[i] * np.log(h) + h * rho[i] + acc
    return out


def pch_terms(hazards, kappa0, rho, events):
    hazards = np.ascontiguousarray(hazards, dtype=np.float64)
    kappa0 = np.ascontiguousarray(kappa0, dtype=np.int64)
    rho = np.ascontiguousarray(rho, dtype=np.float64)
    events = np.ascontiguousarray(events, dtype=np.float64)
    if USE_NUMBA:
        return _pch_terms_nb(hazards, kappa0, rho, events)
    return pch_terms_numpy(hazards, kappa0, rho, events)


def ctd_pair_stats_numpy(times, eligible, scores, weights):
    """Weighted concordance statistics over comparable pairs.

    A pair (i, j) is comparable when ``eligible[i]`` (record i has the event
    of interest no later than the horizon) and ``times[i] < times[j]``. Each
    pair carries record i's weight. Concordant means record i, who failed
    earlier, has the strictly lower predicted survival; equal predictions
    count one half.

    Returns:
        (concordant_weight, total_weight, pair_count)
    """
    i_mask = eligible
    dt = times[:, None] < times[None, :]
    pair = dt & i_mask[:, None]
    lower = scores[:, None] < scores[None, :]
    tied = scores[:, None] == scores[None, :]
    w = np.broadcast_to(weights[:, None], pair.shape)
    num = np.sum(w * pair * (lower + 0.5 * tied))
    den = np.sum(w * pair)
    return num, den, int(np.sum(pair))


@njit(cache=True)
def _ctd_pair_stats_nb(times, eligible, scores, weights):  # pragma: no cover
    n = times.shape[0]
    num = 0.0
    den = 0.0
    pairs = 0
    for i in range(n):
        if not eligible[i]:
            continue
        w = weights[i]
        for j in range(n):
            if times[i] < times[j]:
                pairs += 1
                den += w
                if scores[i] < scores[j]:
                    num += w
                elif scores[i] == scores[j]:
                    num += 0.5 * w
    return num, den, pairs

def ctd_pair_stats(times, eligible, scores, weights):
    times = np.ascontiguousarray(times, dtype=np.float64)
    eligible = np.ascontiguousarray(eligible, dtype=np.bool_)
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if USE_NUMBA:
        num, den, pairs = _ctd_pair_stats_nb(times, eligible, scores, weights)
        return num, den, int(pairs)
    return ctd_pair_stats_numpy(times, eligible, scores, weights)

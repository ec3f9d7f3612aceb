"""Parameter calibration against a historical return series and its
validation by a distance p-value and moment coverage ratios.

The search minimises the mean stylised-facts distance of ``n_rep``
simulations per parameter point.  A space-filling design seeds a
gradient-boosted tree surrogate; each round the surrogate ranks a candidate
pool (global low-discrepancy points plus perturbations of the best points
so far) and the top candidates are simulated.  A coordinate-wise grid
around the incumbent finishes the search.
"""
import copy
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc
from sklearn.ensemble import GradientBoostingRegressor
from sklearn.model_selection import KFold, cross_val_score

from ._validation import check_array, check_is_fitted, check_random_state
from .config import CALIBRATED, with_params
from .facts import (
    COVERAGE_MOMENTS, DegenerateSeriesError, DistanceWeights, bootstrap_weights,
    differentials, moment_vector, resample_returns, weighted_distance,
)
from .kernel import SimConfig, run

MIN_VALIDATION_RUNS = 20


@dataclass
class CalibrationSpace:
    bounds: dict  # name -> (lower, upper), in CALIBRATED order

    def __post_init__(self):
        unknown = set(self.bounds) - set(CALIBRATED)
        if unknown:
            raise ValueError(f"unknown calibrated parameter {sorted(unknown)[0]!r}")
        self.bounds = {k: tuple(map(float, self.bounds[k])) for k in CALIBRATED if k in self.bounds}
        for k, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ValueError(f"bounds of {k}: need lower < upper")

    @property
    def names(self):
        return list(self.bounds)

    @property
    def lower(self):
        return np.array([b[0] for b in self.bounds.values()])

    @property
    def upper(self):
        return np.array([b[1] for b in self.bounds.values()])

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def scale(self, u):
        return self.lower + np.asarray(u) * (self.upper - self.lower)

    def clip(self, theta):
        return np.clip(theta, self.lower, self.upper)

    def contains(self, theta):
        t = np.asarray(theta)
        return bool(np.all(t >= self.lower - 1e-12) and np.all(t <= self.upper + 1e-12))

    def sobol(self, n, seed):
        s = qmc.Sobol(self.dim, scramble=True, seed=seed)
        m = int(np.ceil(np.log2(max(n, 2))))
        return self.scale(s.random_base2(m)[:n])

    def as_dict(self, theta):
        return {k: float(v) for k, v in zip(self.names, theta)}


@dataclass
class CalibrationReport:
    theta_hat: dict
    d_hat: float
    eval_log: list = field(default_factory=list)  # dicts: theta, d, seed, replication
    cv_rmse: list = field(default_factory=list)  # surrogate CV error per round
    incumbent_trace: list = field(default_factory=list)  # best mean D after each batch

    def means(self):
        """(theta tuple, mean D) per evaluated point, in evaluation order."""
        acc = {}
        for row in self.eval_log:
            key = tuple(row["theta"].values())
            acc.setdefault(key, []).append(row["d"])
        return [(k, float(np.mean(v))) for k, v in acc.items()]

    def to_dict(self):
        return {"theta_hat": self.theta_hat, "d_hat": self.d_hat, "cv_rmse": self.cv_rmse,
                "incumbent_trace": self.incumbent_trace, "n_evaluations": len(self.eval_log)}


@dataclass
class ValidationReport:
    p_value: float
    d_critical: float
    mcr: dict
    sim_distances: np.ndarray = field(repr=False, default=None)
    n_failed: int = 0

    def to_dict(self):
        return {"p_value": self.p_value, "d_critical": self.d_critical, "mcr": self.mcr,
                "n_runs": 0 if self.sim_distances is None else int(len(self.sim_distances)),
                "n_failed": self.n_failed}


# --------------------------------------------------------------------------
# objective


def simulated_returns(config: SimConfig):
    rec = run(config)
    return resample_returns(rec.mid, config.warmup_steps, config.steps_per_second)


def _sim_distance(args):
    cfg, ref, w, tail = args
    try:
        mv = moment_vector(simulated_returns(cfg), tail)
        return weighted_distance(differentials(mv, ref), w), mv
    except (DegenerateSeriesError, ValueError):
        return np.nan, None


class SimulationObjective:
    """Stylised-facts distance of simulated days to the historical series.

    ``objective(theta, seeds)`` returns one distance per seed; a failed or
    degenerate simulation gives NaN.
    """

    def __init__(self, base_config: SimConfig, space: CalibrationSpace, weights: DistanceWeights,
                 tail_fraction=0.05, threads=1):
        self.base_config = base_config
        self.space = space
        self.weights = weights
        self.tail_fraction = tail_fraction
        self.threads = threads

    def config_for(self, theta, seed):
        cfg = with_params(self.base_config, **self.space.as_dict(theta))
        cfg.seed = int(seed)
        return cfg

    def run_many(self, thetas, seeds):
        jobs = [(self.config_for(t, s), self.weights.reference, self.weights.weights, self.tail_fraction)
                for t, s in zip(thetas, seeds)]
        return _map(_sim_distance, jobs, self.threads)

    def __call__(self, theta, seeds):
        return [d for d, _ in self.run_many([theta] * len(seeds), seeds)]

    def batch(self, thetas, seeds):
        flat_t = [t for t in thetas for _ in seeds]
        flat_s = [s for _ in thetas for s in seeds]
        d = [r[0] for r in self.run_many(flat_t, flat_s)]
        return [d[i * len(seeds):(i + 1) * len(seeds)] for i in range(len(thetas))]


def _map(fn, items, threads):
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _batch_eval(objective, thetas, seeds):
    if hasattr(objective, "batch"):
        return objective.batch(thetas, seeds)
    return [list(objective(t, seeds)) for t in thetas]


# --------------------------------------------------------------------------
# search


class _Log:
    def __init__(self, space, seeds):
        self.space = space
        self.seeds = seeds
        self.rows = []
        self.X = []
        self.y = []
        self.trace = []

    def add(self, thetas, dists):
        for t, ds in zip(thetas, dists):
            for r, (s, d) in enumerate(zip(self.seeds, ds)):
                self.rows.append({"theta": self.space.as_dict(t), "d": float(d),
                                  "seed": int(s), "replication": r})
            self.X.append(np.asarray(t, dtype=float))
            self.y.append(float(np.mean(ds)))

    def penalised(self):
        # failed points take the worst finite mean distance observed
        y = np.array(self.y)
        bad = ~np.isfinite(y)
        if bad.any():
            y[bad] = np.nanmax(y[~bad]) if (~bad).any() else 1.0
        return y

    def best(self):
        y = self.penalised()
        i = int(np.argmin(y))
        return self.X[i], float(y[i])


def _fit_surrogate(X, y, seed, max_trees=500):
    """Gradient-boosted trees on log D; the tree count is chosen by 5-fold CV."""
    z = np.log(np.maximum(y, 1e-12))
    params = dict(max_depth=3, learning_rate=0.05, subsample=0.8, random_state=seed)
    n_splits = min(5, len(X))
    n_best, err = max_trees, np.nan
    if n_splits >= 2:
        curve = np.zeros(max_trees)
        for tr, te in KFold(n_splits, shuffle=True, random_state=seed).split(X):
            m = GradientBoostingRegressor(n_estimators=max_trees, **params).fit(X[tr], z[tr])
            for i, p in enumerate(m.staged_predict(X[te])):
                curve[i] += np.sum((p - z[te]) ** 2)
        curve = np.sqrt(curve / len(X))
        n_best = int(np.argmin(curve)) + 1
        err = float(curve[n_best - 1])
    model = GradientBoostingRegressor(n_estimators=n_best, **params).fit(X, z)
    return model, err


def _pick(pool, pred, batch, seen, min_sep):
    order = np.argsort(pred, kind="stable")
    out = []
    for i in order:
        c = pool[i]
        if any(np.max(np.abs(c - s)) < min_sep for s in seen + out):
            continue
        out.append(c)
        if len(out) == batch:
            break
    return out


def surrogate_search(objective, space: CalibrationSpace, budget, n_rep=3, seed=0,
                     design_fraction=0.25, batch_size=10, pool_size=10000, base_seed=None):
    """Surrogate-guided minimisation of a noisy objective.

    ``budget`` counts objective evaluations (one per seed), so ``budget //
    n_rep`` parameter points are tried.  Every point is evaluated with the
    same seeds, ``base_seed .. base_seed + n_rep - 1``.
    """
    n_points = budget // n_rep
    n_design = max(1, int(round(design_fraction * n_points)))
    if n_points < n_design or n_points < 1:
        raise ValueError(f"budget {budget} is below the initial design of {n_design} points x {n_rep}")
    rng = check_random_state(seed)
    s0 = int(rng.integers(0, 2 ** 31)) if base_seed is None else int(base_seed)
    seeds = [s0 + r for r in range(n_rep)]
    log = _Log(space, seeds)
    span = space.upper - space.lower
    min_sep = 1e-6

    design = space.sobol(n_design, int(rng.integers(0, 2 ** 31)))
    log.add(design, _batch_eval(objective, design, seeds))
    log.trace.append(log.best()[1])
    cv_rmse = []
    radius = 0.2  # local search radius as a fraction of each range
    while len(log.X) < n_points:
        y = log.penalised()
        model, err = _fit_surrogate(np.array(log.X), y, int(rng.integers(0, 2 ** 31)))
        cv_rmse.append(err)
        k = min(batch_size, n_points - len(log.X))
        # half the batch explores globally, half searches around the best points
        n_loc = pool_size // 2
        top = np.argsort(y, kind="stable")[:3]
        local = [space.clip(log.X[top[0]] + rng.normal(0, radius, (n_loc // 2, space.dim)) * span)]
        for i in top[1:]:
            local.append(space.clip(log.X[i] + rng.normal(0, radius, (n_loc // 4, space.dim)) * span))
        local = np.vstack(local)
        glob = space.sobol(pool_size - len(local), int(rng.integers(0, 2 ** 31)))
        picks = _pick(local, model.predict(local), k - k // 2, list(log.X), min_sep)
        picks += _pick(glob, model.predict(glob), k - len(picks), list(log.X) + picks, min_sep)
        if len(picks) < k:
            picks += list(space.sobol(k - len(picks), int(rng.integers(0, 2 ** 31))))
        before = log.best()[1]
        log.add(picks, _batch_eval(objective, picks, seeds))
        after = log.best()[1]
        log.trace.append(after)
        if not after < before:
            radius = max(0.5 * radius, 0.005)
    best, d = log.best()
    return CalibrationReport(theta_hat=space.as_dict(best), d_hat=d, eval_log=log.rows,
                             cv_rmse=cv_rmse, incumbent_trace=log.trace)


def grid_refine(objective, space: CalibrationSpace, center, radii, grid_points_per_dim=3,
                seeds=(0,), center_d=None):
    """Coordinate-wise grid search around ``center``.

    Along each parameter in turn, ``grid_points_per_dim`` evenly spaced
    values within ``center +- radius`` (clipped to the bounds) are tried
    with the other parameters at the current best; the best point moves the
    center.  ``center_d`` is the center's known mean distance, else it is
    evaluated.  The result is never worse than the center.
    """
    c = np.asarray([center[k] for k in space.names] if isinstance(center, dict) else center, float)
    if not space.contains(c):
        raise ValueError("grid center lies outside the calibration space")
    r = np.broadcast_to(np.asarray(radii, dtype=float), c.shape)
    seeds = list(seeds)
    log = _Log(space, seeds)
    if center_d is None:
        log.add([c], _batch_eval(objective, [c], seeds))
    else:
        log.X.append(c.copy())
        log.y.append(float(center_d))
    best, best_d = log.best()
    log.trace.append(best_d)
    if grid_points_per_dim > 1:
        for j in range(space.dim):
            vals = np.linspace(best[j] - r[j], best[j] + r[j], grid_points_per_dim)
            vals = np.unique(np.clip(vals, space.lower[j], space.upper[j]))
            cand = []
            for v in vals:
                t = best.copy()
                t[j] = v
                if not any(np.array_equal(t, x) for x in log.X):
                    cand.append(t)
            if cand:
                log.add(cand, _batch_eval(objective, cand, seeds))
            best, best_d = log.best()
            log.trace.append(best_d)
    return CalibrationReport(theta_hat=space.as_dict(best), d_hat=best_d, eval_log=log.rows,
                             incumbent_trace=log.trace)


# --------------------------------------------------------------------------
# validation


def p_value(sim_distances, d_critical):
    """Share of simulated distances at or below the bootstrap critical value."""
    d = np.asarray(sim_distances, dtype=float)
    d = d[np.isfinite(d)]
    if len(d) < MIN_VALIDATION_RUNS:
        raise ValueError(f"need >= {MIN_VALIDATION_RUNS} simulated distances, got {len(d)}")
    return float(np.mean(d <= d_critical))


def coverage_ratios(sim_moments, weights: DistanceWeights):
    """Per coverage moment, the share of runs inside the empirical 95% interval."""
    ref = weights.reference.coverage_moments()
    out = {}
    for k in COVERAGE_MOMENTS:
        sd = weights.moment_sd[k]
        if not sd > 0:
            raise ValueError(f"bootstrap standard deviation of moment {k} is zero")
        lo, hi = ref[k] - 1.96 * sd, ref[k] + 1.96 * sd
        vals = np.array([m.coverage_moments()[k] for m in sim_moments])
        out[k] = float(np.mean((vals >= lo) & (vals <= hi))) if len(vals) else np.nan
    return out


def p_value_test(theta_hat, base_config, weights, n_samples=60, seed=0, threads=1,
                 space=None):
    return validate(theta_hat, base_config, weights, n_samples, seed, threads, space)


def moment_coverage(theta_hat, base_config, weights, n_runs=60, seed=0, threads=1, space=None):
    return validate(theta_hat, base_config, weights, n_runs, seed, threads, space).mcr


def validate(theta_hat, base_config, weights: DistanceWeights, n_runs=60, seed=0, threads=1,
             space=None):
    """p-value and moment coverage ratios of ``theta_hat`` from ``n_runs`` fresh seeds."""
    if n_runs < MIN_VALIDATION_RUNS:
        raise ValueError(f"n_runs must be >= {MIN_VALIDATION_RUNS}")
    space = space or CalibrationSpace({k: (0.0, np.inf) for k in theta_hat})
    obj = SimulationObjective(base_config, space, weights, threads=threads)
    theta = [theta_hat[k] for k in space.names]
    seeds = [int(seed) + j for j in range(n_runs)]
    res = obj.run_many([theta] * n_runs, seeds)
    d = np.array([r[0] for r in res])
    mvs = [r[1] for r in res if r[1] is not None]
    return ValidationReport(p_value=p_value(d, weights.d_critical), d_critical=weights.d_critical,
                            mcr=coverage_ratios(mvs, weights), sim_distances=d,
                            n_failed=int(np.sum(~np.isfinite(d))))


# --------------------------------------------------------------------------
# estimator


class SurrogateCalibrator:
    """``fit(hist_returns)`` calibrates the seven parameters of ``base_config``.

    Fitted attributes: ``weights_``, ``search_report_``, ``refine_report_``,
    ``theta_hat_``, ``d_hat_``.
    """

    def __init__(self, base_config=None, bounds=None, budget=500, n_rep=3, design_fraction=0.25,
                 batch_size=10, pool_size=10000, grid_points=3, grid_radius=0.1, block_size=1800,
                 n_boot=60, seed=0, threads=1):
        self.base_config = base_config
        self.bounds = bounds
        self.budget = budget
        self.n_rep = n_rep
        self.design_fraction = design_fraction
        self.batch_size = batch_size
        self.pool_size = pool_size
        self.grid_points = grid_points
        self.grid_radius = grid_radius
        self.block_size = block_size
        self.n_boot = n_boot
        self.seed = seed
        self.threads = threads

    _PARAMS = ("base_config", "bounds", "budget", "n_rep", "design_fraction", "batch_size",
               "pool_size", "grid_points", "grid_radius", "block_size", "n_boot", "seed", "threads")

    def get_params(self, deep=True):
        return {k: getattr(self, k) for k in self._PARAMS}

    def set_params(self, **params):
        for k, v in params.items():
            if k not in self._PARAMS:
                raise ValueError(f"invalid parameter {k!r}")
            setattr(self, k, v)
        return self

    def _space(self):
        b = self.bounds or {k: (0.0, 1.0 if k == "theta_mm" else 2.0) for k in CALIBRATED}
        return CalibrationSpace(dict(b))

    def fit(self, X, y=None):
        hist = check_array(X, name="historical returns", min_length=2 * self.block_size)
        cfg = copy.deepcopy(self.base_config) if self.base_config is not None else SimConfig()
        rng = check_random_state(self.seed)
        self.weights_ = bootstrap_weights(hist, self.block_size, self.n_boot,
                                          seed=int(rng.integers(0, 2 ** 31)))
        space = self._space()
        obj = SimulationObjective(cfg, space, self.weights_, threads=self.threads)
        self.search_report_ = surrogate_search(
            obj, space, self.budget, self.n_rep, seed=int(rng.integers(0, 2 ** 31)),
            design_fraction=self.design_fraction, batch_size=self.batch_size,
            pool_size=self.pool_size)
        seeds = sorted({row["seed"] for row in self.search_report_.eval_log})
        radii = self.grid_radius * (space.upper - space.lower)
        self.refine_report_ = grid_refine(obj, space, self.search_report_.theta_hat, radii,
                                          self.grid_points, seeds=seeds,
                                          center_d=self.search_report_.d_hat)
        self.space_ = space
        self.theta_hat_ = self.refine_report_.theta_hat
        self.d_hat_ = self.refine_report_.d_hat
        self.config_ = with_params(cfg, **self.theta_hat_)
        return self

    def validate(self, n_runs=60, seed=None):
        check_is_fitted(self, "theta_hat_")
        s = self.seed + 10_000 if seed is None else seed
        return validate(self.theta_hat_, self.base_config or SimConfig(), self.weights_, n_runs,
                        s, self.threads, self.space_)

    def score(self, X=None, y=None):
        """Negative achieved distance (larger is better)."""
        check_is_fitted(self, "d_hat_")
        return -self.d_hat_

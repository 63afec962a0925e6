"""Box-constrained metaheuristic optimizers and the hybrid identification
pipeline (least-squares seed -> population search -> restart rounds).

All three optimizers share one contract: minimize objective(x) over the box,
return the best position/fitness plus a per-generation best-fitness history
that is monotone non-increasing, fully reproducible from the config seed.
Random draws are made on the coordinating thread before candidates are
dispatched and results are reduced in fixed nest order, so parallel and
sequential evaluation produce bit-identical runs.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sp_optimize
from scipy.special import gamma as sp_gamma

from .errors import BadLambda, GovidError, LsFailed, ObjectiveFailure
from .params import ParamSet
from .plants import SubsystemId, simulate_subsystem, subsystem_view
from .signals import TimeSeries
from . import estimate

log = logging.getLogger("govid.optim")

PENALTY_FITNESS = 1.0e6
DEFAULT_STOP = math.exp(-2.0)


@dataclass
class SearchSpace:
    names: list[str]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(self.lower >= self.upper):
            raise GovidError("search space needs lower < upper elementwise")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def sample(self, rng, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    @classmethod
    def from_params(cls, params: ParamSet, names) -> "SearchSpace":
        names = list(names)
        return cls(names=names,
                   lower=np.array([params[n].lo for n in names]),
                   upper=np.array([params[n].hi for n in names]))


@dataclass
class CsConfig:
    n_nests: int = 25
    p_a: float = 0.25
    alpha: float = 1.0
    levy_lambda: float = 1.5
    max_generations: int = 100
    stop_threshold: float = DEFAULT_STOP
    seed: int = 0
    # per-dimension Levy step scale: reach_coef * |x - best| + floor_scale * range
    reach_coef: float = 0.7
    floor_scale: float = 3e-4

    def validate(self):
        if not 0.0 < self.p_a < 1.0:
            raise GovidError(f"p_a = {self.p_a} must be in (0, 1)")
        if not 1.0 < self.levy_lambda <= 3.0:
            raise BadLambda(f"lambda = {self.levy_lambda} outside (1, 3]")
        if self.n_nests < 2:
            raise GovidError("need at least 2 nests")


@dataclass
class GaConfig:
    n_pop: int = 25
    tournament_size: int = 3
    crossover_rate: float = 0.9
    blend_alpha: float = 0.5
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.05   # fraction of parameter range
    max_generations: int = 100
    stop_threshold: float = DEFAULT_STOP
    seed: int = 0


@dataclass
class PsoConfig:
    n_particles: int = 25
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    velocity_clamp: float = 0.2    # fraction of parameter range
    max_generations: int = 100
    stop_threshold: float = DEFAULT_STOP
    seed: int = 0


@dataclass
class OptResult:
    best_position: np.ndarray
    best_fitness: float
    history: np.ndarray            # best fitness after each generation, gen 0 = init
    generations: int
    population: np.ndarray
    fitness: np.ndarray
    evaluations: int


# ---------------------------------------------------------------------------
# Levy flights
# ---------------------------------------------------------------------------

def mantegna_sigma(beta: float) -> float:
    return (sp_gamma(1.0 + beta) * math.sin(math.pi * beta / 2.0)
            / (sp_gamma((1.0 + beta) / 2.0) * beta * 2.0 ** ((beta - 1.0) / 2.0))
            ) ** (1.0 / beta)


def mantegna_steps(levy_lambda: float, size, rng) -> np.ndarray:
    """Heavy-tailed step samples whose |step| survival function decays with
    tail exponent levy_lambda.

    The stability index of Mantegna's sampler is capped just below 2, where
    the construction degenerates to a Gaussian; exponents in (2, 3] therefore
    saturate at near-Gaussian tails.
    """
    if not 1.0 < levy_lambda <= 3.0:
        raise BadLambda(f"lambda = {levy_lambda} outside (1, 3]")
    beta = min(levy_lambda, 1.99)
    sigma = mantegna_sigma(beta)
    u = rng.normal(0.0, sigma, size=size)
    v = rng.normal(0.0, 1.0, size=size)
    return u / np.abs(v) ** (1.0 / beta)


def levy_step(position, alpha, levy_lambda, scale, rng,
              space: SearchSpace | None = None) -> np.ndarray:
    """One Levy-flight move: position + alpha * Levy(lambda) (x) scale.

    scale is the per-dimension step scale (entrywise product); when a search
    space is given the result is clamped to its box.  Callers wanting the
    plain range-relative default should pass scale = 0.01 * space.span.
    """
    steps = mantegna_steps(levy_lambda, np.shape(position), rng)
    moved = position + alpha * np.asarray(scale, dtype=float) * steps
    return space.clip(moved) if space is not None else moved


# ---------------------------------------------------------------------------
# shared evaluation plumbing
# ---------------------------------------------------------------------------

def _evaluate(objective, candidates, workers, history):
    try:
        if workers and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                values = list(pool.map(objective, candidates))
        else:
            values = [objective(x) for x in candidates]
    except Exception as exc:
        raise ObjectiveFailure(f"objective raised: {exc!r}", history=list(history)) from exc
    return np.asarray(values, dtype=float)


def _best_index(fitness: np.ndarray) -> int:
    # ties broken by the lower nest index
    return int(np.argmin(fitness))


# ---------------------------------------------------------------------------
# Cuckoo Search
# ---------------------------------------------------------------------------

def cs_run(objective, space: SearchSpace, cfg: CsConfig,
           init_population=None, workers: int = 1) -> OptResult:
    """Cuckoo Search via Levy flights.

    Per generation: every nest proposes a Levy-flight candidate which is
    compared against a randomly chosen nest and replaces it when better
    (minimization); then exactly round(p_a * n) worst nests, never including
    the current best, are abandoned and rebuilt by a biased random walk
    toward other nests.  Stops when the best fitness falls below
    cfg.stop_threshold or the generation budget is exhausted.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_nests
    if init_population is not None:
        pop = space.clip(np.array(init_population, dtype=float))
        if pop.shape != (n, space.dim):
            raise GovidError(f"init population shape {pop.shape} != {(n, space.dim)}")
    else:
        pop = space.sample(rng, n)
    history: list[float] = []
    fitness = _evaluate(objective, pop, workers, history)
    evaluations = n
    best = _best_index(fitness)
    history.append(float(fitness[best]))

    generations = 0
    n_abandon = min(int(round(cfg.p_a * n)), n - 1)
    for gen in range(1, cfg.max_generations + 1):
        if history[-1] < cfg.stop_threshold:
            break
        generations = gen

        # cuckoo phase: candidates from every nest, random target nests.
        # The per-dimension step scale is modulated by the distance to the
        # current best so steps shrink as the population contracts; the
        # range-relative floor keeps collapsed nests exploring.
        best_pos = pop[_best_index(fitness)]
        scale = (cfg.reach_coef * np.abs(pop - best_pos)
                 + cfg.floor_scale * space.span)
        steps = mantegna_steps(cfg.levy_lambda, (n, space.dim), rng)
        candidates = space.clip(pop + cfg.alpha * scale * steps)
        targets = rng.integers(0, n, size=n)
        cand_fit = _evaluate(objective, candidates, workers, history)
        evaluations += n
        for i in range(n):
            j = int(targets[i])
            if cand_fit[i] < fitness[j]:
                pop[j] = candidates[i]
                fitness[j] = cand_fit[i]

        # abandonment phase: the worst nests, never the best, are discarded
        # and rebuilt by a biased random walk toward other nests, which mixes
        # broadly early on and refines once the population has contracted
        if n_abandon > 0:
            best = _best_index(fitness)
            order = np.argsort(fitness, kind="stable")
            worst = [int(i) for i in order[::-1] if int(i) != best][:n_abandon]
            mix_a = rng.integers(0, n, size=n_abandon)
            mix_b = rng.integers(0, n, size=n_abandon)
            stretch = rng.random((n_abandon, space.dim))
            rebuilt = space.clip(pop[worst] + stretch * (pop[mix_a] - pop[mix_b]))
            new_fit = _evaluate(objective, rebuilt, workers, history)
            evaluations += n_abandon
            for row, j in enumerate(worst):
                pop[j] = rebuilt[row]
                fitness[j] = new_fit[row]

        best = _best_index(fitness)
        history.append(float(fitness[best]))

    best = _best_index(fitness)
    return OptResult(best_position=pop[best].copy(), best_fitness=float(fitness[best]),
                     history=np.asarray(history), generations=generations,
                     population=pop, fitness=fitness, evaluations=evaluations)


# ---------------------------------------------------------------------------
# GA baseline
# ---------------------------------------------------------------------------

def ga_run(objective, space: SearchSpace, cfg: GaConfig,
           init_population=None, workers: int = 1) -> OptResult:
    """Tournament selection, blend crossover, Gaussian mutation, elitism 1."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_pop
    if init_population is not None:
        pop = space.clip(np.array(init_population, dtype=float))
    else:
        pop = space.sample(rng, n)
    history: list[float] = []
    fitness = _evaluate(objective, pop, workers, history)
    evaluations = n
    best = _best_index(fitness)
    best_x, best_f = pop[best].copy(), float(fitness[best])
    history.append(best_f)

    generations = 0
    for gen in range(1, cfg.max_generations + 1):
        if history[-1] < cfg.stop_threshold:
            break
        generations = gen

        children = np.empty_like(pop)
        children[0] = best_x  # elitism
        row = 1
        while row < n:
            idx = rng.integers(0, n, size=(2, cfg.tournament_size))
            p1 = pop[idx[0][np.argmin(fitness[idx[0]])]]
            p2 = pop[idx[1][np.argmin(fitness[idx[1]])]]
            if rng.random() < cfg.crossover_rate:
                lo = np.minimum(p1, p2)
                hi = np.maximum(p1, p2)
                spread = hi - lo
                c1 = rng.uniform(lo - cfg.blend_alpha * spread, hi + cfg.blend_alpha * spread)
                c2 = rng.uniform(lo - cfg.blend_alpha * spread, hi + cfg.blend_alpha * spread)
            else:
                c1, c2 = p1.copy(), p2.copy()
            for child in (c1, c2):
                mask = rng.random(space.dim) < cfg.mutation_rate
                noise = rng.normal(0.0, cfg.mutation_sigma * space.span)
                child = np.where(mask, child + noise, child)
                if row < n:
                    children[row] = space.clip(child)
                    row += 1
        pop = children
        fitness = _evaluate(objective, pop, workers, history)
        evaluations += n
        i = _best_index(fitness)
        if fitness[i] < best_f:
            best_x, best_f = pop[i].copy(), float(fitness[i])
        history.append(best_f)

    return OptResult(best_position=best_x, best_fitness=best_f,
                     history=np.asarray(history), generations=generations,
                     population=pop, fitness=fitness, evaluations=evaluations)


# ---------------------------------------------------------------------------
# PSO baseline
# ---------------------------------------------------------------------------

def pso_run(objective, space: SearchSpace, cfg: PsoConfig,
            init_population=None, workers: int = 1) -> OptResult:
    """Global-best PSO with clamped velocities and positions."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_particles
    if init_population is not None:
        pos = space.clip(np.array(init_population, dtype=float))
    else:
        pos = space.sample(rng, n)
    v_max = cfg.velocity_clamp * space.span
    vel = rng.uniform(-v_max, v_max, size=pos.shape)

    history: list[float] = []
    fitness = _evaluate(objective, pos, workers, history)
    evaluations = n
    pbest, pbest_f = pos.copy(), fitness.copy()
    g = _best_index(fitness)
    gbest, gbest_f = pos[g].copy(), float(fitness[g])
    history.append(gbest_f)

    generations = 0
    for gen in range(1, cfg.max_generations + 1):
        if history[-1] < cfg.stop_threshold:
            break
        generations = gen
        r1 = rng.random((n, space.dim))
        r2 = rng.random((n, space.dim))
        vel = (cfg.inertia * vel
               + cfg.cognitive * r1 * (pbest - pos)
               + cfg.social * r2 * (gbest - pos))
        vel = np.clip(vel, -v_max, v_max)
        pos = space.clip(pos + vel)
        fitness = _evaluate(objective, pos, workers, history)
        evaluations += n
        improved = fitness < pbest_f
        pbest[improved] = pos[improved]
        pbest_f[improved] = fitness[improved]
        g = _best_index(pbest_f)
        if pbest_f[g] < gbest_f:
            gbest, gbest_f = pbest[g].copy(), float(pbest_f[g])
        history.append(gbest_f)

    return OptResult(best_position=gbest, best_fitness=gbest_f,
                     history=np.asarray(history), generations=generations,
                     population=pos, fitness=fitness, evaluations=evaluations)


OPTIMIZERS = {"cs": (cs_run, CsConfig), "ga": (ga_run, GaConfig), "pso": (pso_run, PsoConfig)}


# ---------------------------------------------------------------------------
# hybrid identification pipeline
# ---------------------------------------------------------------------------

@dataclass
class FitReport:
    sub_id: int
    optimizer: str
    ls_seed_used: bool
    ls_values: dict | None
    rounds: int = 0
    histories: list = field(default_factory=list)
    best_fitness: float = math.inf
    generations_total: int = 0
    evaluations_total: int = 0
    stop_threshold: float = DEFAULT_STOP
    converged: bool = False
    polished: bool = False
    seed: int = 0

    @property
    def history(self) -> np.ndarray:
        return np.concatenate(self.histories) if self.histories else np.array([])


def subsystem_objective(kind: str, sub_id, template: ParamSet, data: TimeSeries,
                        free_names=None):
    """MSE-between measured and simulated subsystem output as a function of
    the free-parameter vector; simulation failures earn a fixed penalty."""
    view = subsystem_view(kind, sub_id)
    names = list(free_names or view.free_params)
    y_meas = data.channel(view.output)
    base = template.copy()

    def objective(x):
        candidate = base.updated(dict(zip(names, x)))
        try:
            y_hat = simulate_subsystem(kind, sub_id, candidate, data)
        except GovidError:
            return PENALTY_FITNESS
        value = estimate.mse(y_meas, y_hat)
        return value if math.isfinite(value) else PENALTY_FITNESS

    return objective, names


def canonicalize(kind: str, sub_id, params: ParamSet) -> ParamSet:
    """Resolve identifiability conventions on fitted parameters.

    Valve path: with no turbine lead, actuator and turbine lags are
    exchangeable in the transfer function, so the slower one is reported as
    the actuator.  Speed PID: a vanishing derivative gain leaves the filter
    lag unobservable, so both are snapped to the bypassed-derivative zero.
    """
    sub_id = SubsystemId(sub_id)
    if sub_id is SubsystemId.VALVE and params.value("t_c") < 1e-2:
        if params.value("t_act") < params.value("t_b"):
            out = params.copy()
            out.set_value("t_act", params.value("t_b"))
            out.set_value("t_b", params.value("t_act"))
            return out
    if sub_id is SubsystemId.SPEED_CONTROLLER and params.value("k_dgov") < 1e-4:
        out = params.copy()
        out.set_value("k_dgov", 0.0)
        out.set_value("t_dgov", 0.0)
        return out
    return params


def _local_polish(objective, space: SearchSpace, x0, f0, n_samples: int):
    """Deterministic simplex descent of the simulation-error objective from
    the population-search optimum.

    Parameters sitting at an exact structural zero (bypassed derivative
    path, vanished lead) stay frozen: letting them back in only buys
    noise-fitting capacity.  The polished point is kept when it beats the
    incumbent by more than an information-criterion margin (a free parameter
    can always buy order 2/N of relative MSE by fitting noise)."""
    x0 = np.asarray(x0, dtype=float)
    active = np.nonzero(x0 != 0.0)[0]
    if active.size == 0:
        return x0, float(f0), False
    dim = int(active.size)

    def boxed(x_active):
        x = x0.copy()
        x[active] = x_active
        if np.any(x < space.lower) or np.any(x > space.upper):
            return PENALTY_FITNESS
        return objective(x)

    result = sp_optimize.minimize(
        boxed, x0[active], method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 0.0, "maxiter": 200 * dim})
    margin = 1.0 - 8.0 * dim / max(n_samples, 16 * dim)
    if result.fun < f0 * margin:
        out = x0.copy()
        out[active] = result.x
        return space.clip(out), float(result.fun), True
    return x0, float(f0), False


def hybrid_identify(kind: str, sub_id, data: TimeSeries, template: ParamSet,
                    opt_cfg=None, optimizer: str = "cs", use_ls_seed: bool = True,
                    restarts: int = 3, workers: int = 1,
                    polish: bool = True) -> tuple[ParamSet, FitReport]:
    """Least-squares pre-identification seeding a population search.

    One nest starts at the LS solution (when available), the rest uniform in
    bounds; the search restarts from its final population up to `restarts`
    rounds while the stop threshold is unmet.  When LS fails the pipeline
    degrades to a fully random initial population.  A deterministic local
    descent can polish the returned optimum (see _local_polish); it never
    changes the population search itself.
    """
    sub_id = SubsystemId(sub_id)
    run, cfg_cls = OPTIMIZERS[optimizer]
    cfg = opt_cfg if opt_cfg is not None else cfg_cls()
    objective, names = subsystem_objective(kind, sub_id, template, data)
    space = SearchSpace.from_params(template, names)

    ls_values = None
    if use_ls_seed:
        try:
            ls_params, _diag = estimate.ls_identify(kind, sub_id, template, data)
            ls_values = {n: ls_params.value(n) for n in names}
        except (LsFailed, GovidError) as exc:
            log.warning("LS pre-identification failed (%s); random start", exc)
            ls_values = None

    n_pop = getattr(cfg, "n_nests", None) or getattr(cfg, "n_pop", None) \
        or getattr(cfg, "n_particles")
    rng = np.random.default_rng(cfg.seed)
    population = space.sample(rng, n_pop)
    if ls_values is not None:
        population[0] = space.clip(np.array([ls_values[n] for n in names]))

    report = FitReport(sub_id=int(sub_id), optimizer=optimizer,
                       ls_seed_used=ls_values is not None, ls_values=ls_values,
                       stop_threshold=cfg.stop_threshold, seed=cfg.seed)
    best_x, best_f = None, math.inf
    for round_idx in range(max(restarts, 1)):
        result = run(objective, space, cfg, init_population=population, workers=workers)
        report.rounds = round_idx + 1
        report.histories.append(result.history)
        report.generations_total += result.generations
        report.evaluations_total += result.evaluations
        if result.best_fitness < best_f:
            best_x, best_f = result.best_position, result.best_fitness
        if best_f < cfg.stop_threshold:
            report.converged = True
            break
        population = result.population

    if polish and best_x is not None:
        best_x, best_f, report.polished = _local_polish(
            objective, space, best_x, best_f, data.n_samples)
        if best_f < cfg.stop_threshold:
            report.converged = True

    report.best_fitness = float(best_f)
    fitted = template.updated(dict(zip(names, best_x)))
    fitted = canonicalize(kind, sub_id, fitted)
    return fitted, report

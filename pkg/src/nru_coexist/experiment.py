"""
Experiment orchestration: sweep points x methods x replicates, each producing one or more result rows.

A task (sweep point, method, replicate) is self-contained and picklable, tasks run in order or on a process pool,
and results are assembled by task index, so output does not depend on scheduling.
"""

import csv
import dataclasses
import enum
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Tuple

import numpy as np
import runez

from nru_coexist import CoexistenceError, ConvergenceError, InfeasibleError, ParameterError
from nru_coexist.allocator import Allocation, run_algorithm1, Scenario
from nru_coexist.baselines import BASELINES
from nru_coexist.channel import dbm_to_watts, draw_gains, gain_matrix, noise_power, RNG_ALGORITHMS
from nru_coexist.coexistence import optimal_initial_window, solve_coexistence
from nru_coexist.config import Config
from nru_coexist.fairness import fairness_check, fairness_threshold, wifi_throughput
from nru_coexist.macsim import MIN_HORIZON, OUTCOMES, simulate, empirical_throughputs
from nru_coexist.params import LBT_CLASSES, NruParams, WifiParams

LOG = logging.getLogger(__name__)

CAT4_WINDOW = 16
MCOT_CHOICES_MS = sorted({round(x * 1000) for c in LBT_CLASSES.values() for x in c.mcots})

# Fixed column order, shared by all modes (metrics a mode does not compute are left empty)
KEY_COLUMNS = ("sweep_axis", "sweep_value", "method", "channel", "status", "replicates", "seed")
METRICS = (
    "window",
    "window_rounded",
    "window_in_class",
    "imbalance",
    "tau_w",
    "tau_l",
    "p_w",
    "p_l",
    "succ_w",
    "succ_l",
    "r_gnb",
    "r_wifi",
    "t_slot",
    "idle_frac",
    "wifi_success_frac",
    "gnb_success_frac",
    "wifi_collision_frac",
    "cross_collision_frac",
    "model_gap",
    "wifi_rate",
    "virtual_wifi_rate",
    "phi",
    "rate_floor",
    "nr_dl_rate",
    "nr_ul_rate",
    "nr_rate",
    "iterations",
)
COLUMNS = KEY_COLUMNS + tuple(c for m in METRICS for c in (m, "%s_std" % m))
TRACE_COLUMNS = ("sweep_value", "method", "replicate", "outer", "inner", "objective", "lagrangian", "max_violation", "alpha", "gamma", "theta")


class Status(enum.IntEnum):
    """Row status, a row aggregating several replicates gets the worst one"""

    ok = 0
    boundary = 1
    not_converged = 2
    infeasible = 3
    failed = 4

    @property
    def label(self):
        return self.name.replace("_", "-")


class Method(enum.Enum):
    proposed = "proposed"
    etep = "etep"
    etop = "etop"
    otep = "otep"
    cat4_lbt = "cat4-lbt"
    cot_adjust = "cot-adjust"

    @property
    def label(self):
        return _METHOD_LABELS[self]

    @property
    def is_baseline(self):
        return self.value in BASELINES


_METHOD_LABELS = {
    Method.proposed: "proposed",
    Method.etep: "ETEP",
    Method.etop: "ETOP",
    Method.otep: "OTEP",
    Method.cat4_lbt: "Cat4-LBT",
    Method.cot_adjust: "COT-adjust",
}


def _check_payload(value):
    if not 100 <= value <= 4096:
        return "%s is out of range [100, 4096]" % value


def _check_wifi_nodes(value):
    if int(value) != value or not 1 <= value <= 64:
        return "%s is out of range [1, 64]" % value


def _check_mcot(value):
    if value not in MCOT_CHOICES_MS:
        return "%s is not one of %s" % (value, MCOT_CHOICES_MS)


def _check_dbm(value):
    if not -30 <= value <= 60:
        return "%s is out of range [-30, 60]" % value


SWEEP_AXES = {
    "wifi-nodes": _check_wifi_nodes,
    "payload": _check_payload,
    "mcot": _check_mcot,
    "p-dk-max": _check_dbm,
    "p-gnb-max": _check_dbm,
}


@dataclasses.dataclass(frozen=True)
class ScenarioSpec:
    """Scenario settings, in SI units, before channel draws"""

    channels: int
    wifi_nodes: Tuple[int, ...]
    bandwidth: float
    dl_users: int
    ul_users: int
    distance_range: Tuple[float, float]
    carrier_ghz: float
    fading: bool
    p_avg: float
    p_gnb_max: float
    p_dk_max: float
    fairness: bool

    @property
    def n_users(self):
        return self.dl_users + self.ul_users


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    wifi: WifiParams
    nru: NruParams
    window_policy: object  # 'optimal', 'cat4' or an int
    scenario: ScenarioSpec
    methods: Tuple[Method, ...]
    sweep_axis: Optional[str] = None
    sweep_values: Tuple[float, ...] = (None,)
    replicates: int = 1
    seed: int = 1
    rng: str = "pcg64"
    cot_adjust_mcot: float = 2e-3
    horizon_slots: int = 10**6
    allocator_options: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def from_config(cls, config: Config, sweep=None, seed=None, replicates=None, methods=None):
        """
        Parameters
        ----------
        config : Config
            Configuration, its mode selects which overrides apply
        sweep : (str, list) | None
            Sweep axis and values given on the command line, replacing the configured 'sweep' block
        seed, replicates : int | None
            Command line overrides
        methods : list | None
            Command line override of the configured methods
        """
        num = config.get_number
        wifi = WifiParams(
            window=num("wifi/window", kind=int, lo=1, hi=2**16),
            max_stage=num("wifi/max-stage", kind=int, lo=1, hi=16),
            slot=num("wifi/slot-us", positive=True) * 1e-6,
            sifs=num("wifi/sifs-us", positive=True) * 1e-6,
            difs=num("wifi/difs-us", positive=True) * 1e-6,
            pifs=num("wifi/pifs-us", positive=True) * 1e-6,
            rts=num("wifi/rts-bits", kind=int, positive=True),
            cts=num("wifi/cts-bits", kind=int, positive=True),
            header=num("wifi/header-bits", kind=int, positive=True),
            ack=num("wifi/ack-bits", kind=int, positive=True),
            rate=num("wifi/rate-mbps", positive=True) * 1e6,
            delay=num("wifi/delay-us", positive=True) * 1e-6,
            payload=num("wifi/payload-bytes", lo=100, hi=4096) * 8,
        )
        priority = num("nru/priority-class", kind=int, lo=1, hi=4)
        mcot_ms = num("nru/mcot-ms", positive=True)
        if mcot_ms not in [round(x * 1000) for x in LBT_CLASSES[priority].mcots]:
            config.invalid("nru/mcot-ms", "%g ms is not allowed for %s" % (mcot_ms, LBT_CLASSES[priority]))

        nru = NruParams(
            max_stage=num("nru/max-stage", kind=int, lo=1, hi=16),
            icca_slots=num("nru/icca-slots", kind=int, lo=1, hi=64),
            silent=num("nru/silent-us", positive=True) * 1e-6,
            mcot=mcot_ms * 1e-3,
            gnb_slot=num("nru/gnb-slot-ms", positive=True) * 1e-3,
            priority_class=priority,
            access_form=config.get_choice("nru/access-form", choices=NruParams.forms),
        )
        window_policy = config.get_value("nru/window")
        if window_policy not in ("optimal", "cat4"):
            window_policy = config.checked_number("nru/window", window_policy, kind=int, lo=1, hi=2**16)
            nru = nru.with_window(window_policy)

        channels = num("scenario/channels", kind=int, lo=1, hi=64)
        nodes = runez.flattened(config.get_value("scenario/wifi-nodes"))
        nodes = [config.checked_number("scenario/wifi-nodes", n, kind=int, lo=1, hi=64, index=i) for i, n in enumerate(nodes)]
        if len(nodes) == 1:
            nodes = nodes * channels

        if len(nodes) != channels:
            config.invalid("scenario/wifi-nodes", "expecting 1 or %s values, got %s" % (channels, len(nodes)))

        distance = runez.flattened(config.get_value("scenario/distance-m"))
        distance = [config.checked_number("scenario/distance-m", d, lo=10, hi=5000, index=i) for i, d in enumerate(distance)]
        if len(distance) != 2 or distance[0] > distance[1]:
            config.invalid("scenario/distance-m", "expecting [min, max], got %s" % distance)

        scenario = ScenarioSpec(
            channels=channels,
            wifi_nodes=tuple(nodes),
            bandwidth=num("scenario/bandwidth-mhz", positive=True) * 1e6,
            dl_users=num("scenario/dl-users", kind=int, lo=0, hi=1000),
            ul_users=num("scenario/ul-users", kind=int, lo=0, hi=1000),
            distance_range=tuple(distance),
            carrier_ghz=num("scenario/carrier-ghz", positive=True),
            fading=bool(config.get_value("scenario/fading")),
            p_avg=float(dbm_to_watts(num("scenario/p-avg-dbm", lo=-30, hi=60))),
            p_gnb_max=float(dbm_to_watts(num("scenario/p-gnb-max-dbm", lo=-30, hi=60))),
            p_dk_max=float(dbm_to_watts(num("scenario/p-dk-max-dbm", lo=-30, hi=60))),
            fairness=bool(config.get_value("scenario/fairness")),
        )
        if not scenario.n_users:
            config.invalid("scenario/dl-users", "at least one DL or UL user is needed")

        if methods is None:
            methods = config.get_list("methods")
            names = [m.value for m in Method]
            for i, m in enumerate(methods):
                if m not in names:
                    config.invalid("methods", "'%s' is not one of: %s" % (m, ", ".join(names)), index=i)

        if sweep is None:
            sweep = _configured_sweep(config)

        else:
            sweep = _validated_sweep(*sweep, lambda problem, index: runez.abort("--sweep %s: %s" % (_item(sweep[0], index), problem)))

        axis, values = sweep
        if replicates is None:
            replicates = num("replicates", kind=int, lo=1, hi=10**6)

        elif replicates < 1:
            runez.abort("--replicates must be >= 1, got %s" % replicates)

        if seed is None:
            seed = num("seed", kind=int, lo=0, hi=2**64 - 1)

        return cls(
            mode=config.mode or "analyze",
            wifi=wifi,
            nru=nru,
            window_policy=window_policy,
            scenario=scenario,
            methods=tuple(Method(m) for m in methods),
            sweep_axis=axis,
            sweep_values=tuple(values),
            replicates=replicates,
            seed=seed,
            rng=config.get_choice("rng", choices=list(RNG_ALGORITHMS)),
            cot_adjust_mcot=num("nru/cot-adjust-ms", positive=True) * 1e-3,
            horizon_slots=num("mac-sim/horizon-slots", kind=int, lo=MIN_HORIZON),
            allocator_options=dict(
                max_outer=num("allocator/max-outer", kind=int, lo=1),
                tolerance=num("allocator/tolerance", positive=True),
                inner_tolerance=num("allocator/inner-tolerance", positive=True),
                alpha_step=num("allocator/alpha-step", positive=True),
            ),
        )

    def point(self, value):
        """(wifi, nru, scenario) at sweep value 'value'"""
        wifi, nru, scenario = self.wifi, self.nru, self.scenario
        axis = self.sweep_axis
        if axis == "wifi-nodes":
            scenario = dataclasses.replace(scenario, wifi_nodes=(int(value),) * scenario.channels)

        elif axis == "payload":
            wifi = wifi.with_payload(value * 8)

        elif axis == "mcot":
            nru = nru.with_mcot(value * 1e-3)

        elif axis == "p-dk-max":
            scenario = dataclasses.replace(scenario, p_dk_max=float(dbm_to_watts(value)))

        elif axis == "p-gnb-max":
            scenario = dataclasses.replace(scenario, p_gnb_max=float(dbm_to_watts(value)))

        return wifi, nru, scenario


def _item(key, index):
    return key if index is None else "%s[%s]" % (key, index)


def _validated_sweep(axis, values, fail):
    if axis not in SWEEP_AXES:
        fail("unknown axis '%s', expecting one of: %s" % (axis, ", ".join(SWEEP_AXES)), None)

    result = []
    for i, v in enumerate(runez.flattened(values, split=",")):
        if isinstance(v, str):
            try:
                v = float(v)

            except ValueError:
                fail("'%s' is not a number" % v, i)

        if isinstance(v, bool) or not isinstance(v, (int, float)):
            fail("'%s' is not a number" % v, i)

        problem = SWEEP_AXES[axis](v)
        if problem:
            fail(problem, i)

        result.append(int(v) if int(v) == v else v)

    if not result:
        fail("no values given", None)

    return axis, result


def _configured_sweep(config: Config):
    axis = config.get_value("sweep/axis")
    if axis is None:
        return None, [None]

    def fail(problem, index):
        key = "sweep/axis" if index is None and "axis" in problem else "sweep/values"
        config.invalid(key, problem, index=index)

    return _validated_sweep(axis, config.get_value("sweep/values"), fail)


def parsed_sweep(text):
    """'axis=v1,v2' -> (axis, [v1, v2])"""
    axis, _, values = (text or "").partition("=")
    if not axis or not values:
        runez.abort("--sweep must be of the form axis=v1,v2,... got '%s'" % text)

    return axis.strip(), values


@dataclasses.dataclass
class Outcome:
    """Result of one task, for one channel (or all channels together)"""

    channel: str
    status: Status
    metrics: dict
    message: str = ""


@dataclasses.dataclass(frozen=True)
class Task:
    index: int
    experiment: ExperimentConfig
    sweep_value: object
    method: Method
    replicate: int

    @property
    def seed(self):
        return self.experiment.seed + self.replicate


def _status_of(error):
    if isinstance(error, InfeasibleError):
        return Status.infeasible

    if isinstance(error, ConvergenceError):
        return Status.not_converged

    return Status.failed


def _method_nru(exp: ExperimentConfig, nru: NruParams, method: Method):
    if method is Method.cat4_lbt:
        return nru.with_window(CAT4_WINDOW)

    if method is Method.cot_adjust:
        return nru.with_mcot(exp.cot_adjust_mcot).with_window(CAT4_WINDOW)

    if exp.window_policy == "cat4":
        return nru.with_window(CAT4_WINDOW)

    return nru


def _coexistence(exp, wifi, nru, method, n_wifi):
    """Solved channel for 'method', and the window tuning if one was performed"""
    nru = _method_nru(exp, nru, method)
    if exp.window_policy == "optimal" and method not in (Method.cat4_lbt, Method.cot_adjust):
        tuning = optimal_initial_window(wifi, nru, n_wifi)
        return tuning.coexistence, tuning

    return solve_coexistence(wifi, nru, n_wifi), None


def _access_metrics(coexistence, tuning=None):
    state, slots = coexistence.state, coexistence.slots
    n = coexistence.n_wifi
    r_gnb, r_wifi = coexistence.ratios
    fractions = slots.fractions()
    metrics = {
        "window": coexistence.nru.window,
        "tau_w": state.tau_w,
        "tau_l": state.tau_l,
        "p_w": state.p_w,
        "p_l": state.p_l,
        "succ_w": state.wifi_success(n),
        "succ_l": state.gnb_success(n),
        "r_gnb": r_gnb,
        "r_wifi": r_wifi,
        "t_slot": slots.t_slot,
        "iterations": state.iterations,
    }
    metrics.update(("%s_frac" % k.replace("-", "_"), v) for k, v in fractions.items())
    if tuning is not None:
        metrics.update(window_rounded=tuning.rounded, window_in_class=tuning.in_class, imbalance=tuning.imbalance)

    return metrics


def _allocation_scenario(exp, scenario: ScenarioSpec, coexistences, seed, floors):
    gains = draw_gains(
        seed,
        scenario.n_users,
        scenario.channels,
        distance_range=scenario.distance_range,
        carrier_ghz=scenario.carrier_ghz,
        fading=scenario.fading,
        algorithm=exp.rng,
    )
    dl = range(scenario.dl_users)
    ul = range(scenario.dl_users, scenario.n_users)
    return Scenario(
        bandwidth=np.full(scenario.channels, scenario.bandwidth),
        access=np.array([c.access_factor for c in coexistences]),
        rate_floor=np.asarray(floors, dtype=float),
        gain_d=gain_matrix(gains, dl, scenario.channels),
        gain_u=gain_matrix(gains, ul, scenario.channels),
        sigma2=noise_power(scenario.bandwidth),
        mcot=coexistences[0].nru.mcot,
        p_avg=scenario.p_avg,
        p_gnb_max=scenario.p_gnb_max,
        p_dk_max=scenario.p_dk_max,
        n_wifi=scenario.wifi_nodes,
    )


def _allocate(exp, method, scenario: Scenario):
    """(allocation, converged, trace)"""
    if method.is_baseline:
        return BASELINES[method.value](scenario), True, []

    result = run_algorithm1(scenario, **exp.allocator_options)
    return result.allocation, result.converged, result.trace


def _run_analyze(task, wifi, nru, spec):
    outcomes = []
    for k, n in enumerate(spec.wifi_nodes):
        coexistence, tuning = _coexistence(task.experiment, wifi, nru, task.method, n)
        metrics = _access_metrics(coexistence, tuning)
        metrics["wifi_rate"] = wifi_throughput(coexistence.state, coexistence.slots, n, wifi.payload)
        status = Status.boundary if tuning and tuning.bounded else Status.ok
        outcomes.append(Outcome(str(k), status, metrics))

    return outcomes, []


def _run_tune_window(task, wifi, nru, spec):
    outcomes = []
    for k, n in enumerate(spec.wifi_nodes):
        tuning = optimal_initial_window(wifi, _method_nru(task.experiment, nru, task.method), n)
        metrics = _access_metrics(tuning.coexistence, tuning)
        outcomes.append(Outcome(str(k), Status.boundary if tuning.bounded else Status.ok, metrics))

    return outcomes, []


def _run_allocation(task, wifi, nru, spec, per_channel):
    exp = task.experiment
    solved = [_coexistence(exp, wifi, nru, task.method, n) for n in spec.wifi_nodes]
    coexistences = [c for c, _ in solved]
    thresholds = [fairness_threshold(c, spec.n_users) for c in coexistences]
    floors = [t.rate_floor if spec.fairness else 0.0 for t in thresholds]
    scenario = _allocation_scenario(exp, spec, coexistences, task.seed, floors)
    allocation, converged, trace = _allocate(exp, task.method, scenario)
    status = Status.ok if converged else Status.not_converged
    if any(t and t.bounded for _, t in solved):
        status = max(status, Status.boundary)

    r_d, r_u = allocation.rates(scenario)
    channel_rates = r_d.sum(axis=0) + r_u.sum(axis=0)
    checks = [fairness_check(c, spec.n_users, float(rate)) for c, rate in zip(coexistences, channel_rates)]
    outcomes = []
    if per_channel:
        for k, (coexistence, threshold, check) in enumerate(zip(coexistences, thresholds, checks)):
            metrics = {
                "window": coexistence.nru.window,
                "phi": threshold.phi,
                "rate_floor": threshold.rate_floor,
                "wifi_rate": check.wifi_rate,
                "virtual_wifi_rate": check.virtual_rate,
                "nr_dl_rate": float(r_d[:, k].sum()),
                "nr_ul_rate": float(r_u[:, k].sum()),
                "nr_rate": float(channel_rates[k]),
            }
            outcomes.append(Outcome(str(k), status, metrics))

    else:
        metrics = {
            "rate_floor": float(sum(floors)),
            "wifi_rate": sum(c.wifi_rate for c in checks),
            "virtual_wifi_rate": sum(c.virtual_rate for c in checks),
            "nr_dl_rate": float(r_d.sum()),
            "nr_ul_rate": float(r_u.sum()),
            "nr_rate": float(channel_rates.sum()),
            "iterations": len(trace),
        }
        outcomes.append(Outcome("all", status, metrics))

    return outcomes, trace


def _run_fairness(task, wifi, nru, spec):
    return _run_allocation(task, wifi, nru, spec, per_channel=True)


def _run_optimize(task, wifi, nru, spec):
    return _run_allocation(task, wifi, nru, spec, per_channel=False)


def _run_simulate(task, wifi, nru, spec):
    exp = task.experiment
    outcomes = []
    for k, n in enumerate(spec.wifi_nodes):
        coexistence, tuning = _coexistence(exp, wifi, nru, task.method, n)
        stats = simulate(wifi, coexistence.nru, n, exp.horizon_slots, task.seed * 1000 + k, algorithm=exp.rng)
        goodput, _ = empirical_throughputs(stats, wifi.payload)
        r_gnb, r_wifi = stats.airtime_ratios()
        fractions = {"%s_frac" % x.replace("-", "_"): v for x, v in stats.fractions().items()}
        analytic = _access_metrics(coexistence)
        metrics = {
            "window": coexistence.nru.window,
            "tau_w": stats.tau_w,
            "tau_l": stats.tau_l,
            "p_w": stats.p_w,
            "p_l": stats.p_l,
            "r_gnb": r_gnb,
            "r_wifi": r_wifi,
            "t_slot": stats.mean_slot,
            "wifi_rate": goodput,
            **fractions,
        }
        compared = ["tau_w", "tau_l"] + ["%s_frac" % x.replace("-", "_") for x in OUTCOMES]
        gaps = [abs(metrics[m] - analytic[m]) / analytic[m] for m in compared if analytic[m] > 0]
        metrics["model_gap"] = max(gaps, default=0.0)
        status = Status.boundary if tuning and tuning.bounded else Status.ok
        outcomes.append(Outcome(str(k), status, metrics))

    return outcomes, []


RUNNERS = {
    "analyze": _run_analyze,
    "tune-window": _run_tune_window,
    "fairness": _run_fairness,
    "optimize": _run_optimize,
    "compare": _run_optimize,
    "simulate": _run_simulate,
}


def run_task(task: Task):
    """(outcomes, trace records) of one task, errors become flagged outcomes"""
    exp = task.experiment
    try:
        wifi, nru, spec = exp.point(task.sweep_value)
        return RUNNERS[exp.mode](task, wifi, nru, spec)

    except CoexistenceError as e:
        LOG.warning("%s at %s=%s (replicate %s): %s", task.method.label, exp.sweep_axis, task.sweep_value, task.replicate, e)
        return [Outcome("", _status_of(e), {}, message=str(e))], []

    except Exception as e:
        # Any other error fails this row only, the sweep carries on
        message = "%s: %s" % (e.__class__.__name__, e)
        LOG.error("%s at %s=%s (replicate %s) crashed: %s", task.method.label, exp.sweep_axis, task.sweep_value, task.replicate, message)
        return [Outcome("", Status.failed, {}, message=message)], []


@dataclasses.dataclass
class ResultRow:
    sweep_axis: Optional[str]
    sweep_value: object
    method: str
    channel: str
    status: Status
    replicates: int
    seed: int
    metrics: dict
    stddev: dict
    message: str = ""

    def values(self):
        """Values in COLUMNS order"""
        row = {
            "sweep_axis": self.sweep_axis or "",
            "sweep_value": "" if self.sweep_value is None else self.sweep_value,
            "method": self.method,
            "channel": self.channel,
            "status": self.status.label,
            "replicates": self.replicates,
            "seed": self.seed,
        }
        for m in METRICS:
            row[m] = self.metrics.get(m, "")
            row["%s_std" % m] = self.stddev.get(m, "")

        return [row[c] for c in COLUMNS]


def aggregated(task: Task, outcomes_by_replicate):
    """Rows for one (sweep value, method), combining replicates channel by channel"""
    exp = task.experiment
    channels = []
    for outcomes in outcomes_by_replicate:
        for outcome in outcomes:
            if outcome.channel not in channels:
                channels.append(outcome.channel)

    rows = []
    for channel in channels:
        picked = [o for outcomes in outcomes_by_replicate for o in outcomes if o.channel == channel]
        status = max(o.status for o in picked)
        metrics, stddev = {}, {}
        for m in METRICS:
            values = [o.metrics[m] for o in picked if o.metrics.get(m) is not None]
            if values:
                metrics[m] = statistics.fmean(values)
                stddev[m] = statistics.stdev(values) if len(values) > 1 else 0.0

        message = next((o.message for o in picked if o.message), "")
        rows.append(ResultRow(exp.sweep_axis, task.sweep_value, task.method.label, channel, status, len(picked), exp.seed, metrics, stddev, message))

    return rows


@runez.log.timeit("Experiment", logger=LOG.info)
def run_experiment(experiment: ExperimentConfig, jobs=1):
    """
    Returns
    -------
    (list[ResultRow], list[tuple])
        One row per (sweep value, method, channel), and trace records in TRACE_COLUMNS order
    """
    tasks = []
    for value in experiment.sweep_values:
        for method in experiment.methods:
            for replicate in range(experiment.replicates):
                tasks.append(Task(len(tasks), experiment, value, method, replicate))

    LOG.debug("Running %s (mode %s)", runez.plural(tasks, "task"), experiment.mode)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(run_task, tasks))

    else:
        results = [run_task(t) for t in tasks]

    rows = []
    traces = []
    for i in range(0, len(tasks), experiment.replicates):
        group = tasks[i : i + experiment.replicates]
        rows.extend(aggregated(group[0], [results[t.index][0] for t in group]))
        for t in group:
            for r in results[t.index][1]:
                alpha = ";".join(_formatted(a) for a in r.alpha)
                traces.append((t.sweep_value, t.method.label, t.replicate, r.outer, r.inner, r.objective, r.lagrangian, r.max_violation, alpha, r.gamma, r.theta))

    return rows, traces


def _formatted(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"

        return "%.9g" % value

    if value is None:
        return ""

    return str(value)


def emit_results(rows, path, columns=COLUMNS, fmt="csv"):
    """
    Write 'rows' as CSV: header first, then one line per row, floats with 9 significant digits

    Parameters
    ----------
    rows : list[ResultRow] | list[tuple]
        Rows to write, ResultRow-s or plain tuples already in 'columns' order
    path : str | pathlib.Path
        File to write
    columns : tuple
        Header
    fmt : str
        Only 'csv' is supported
    """
    if fmt != "csv":
        msg = "Unsupported output format '%s'" % fmt
        raise ParameterError(msg)

    if not rows:
        msg = "No result rows to write to %s" % runez.short(path)
        raise ParameterError(msg)

    path = runez.to_path(path)
    try:
        runez.ensure_folder(path.parent, logger=None)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(columns)
            for row in rows:
                values = row.values() if isinstance(row, ResultRow) else row
                writer.writerow([_formatted(v) for v in values])

    except OSError as e:
        runez.abort("Can't write %s: %s" % (runez.red(runez.short(path)), e))

    LOG.info("Wrote %s to %s", runez.plural(rows, "row"), runez.short(path))
    return path


def trace_path(path):
    """Path of the trace CSV accompanying results written to 'path'"""
    path = runez.to_path(path)
    return path.parent / ("%s-trace.csv" % path.stem)


def failed_rows(rows):
    return [r for r in rows if r.status is Status.failed]

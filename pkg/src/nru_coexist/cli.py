import logging

import click
import runez
from runez.render import PrettyTable

from nru_coexist.config import MODES, NCG
from nru_coexist.experiment import (
    emit_results,
    ExperimentConfig,
    failed_rows,
    Method,
    parsed_sweep,
    run_experiment,
    TRACE_COLUMNS,
    trace_path,
)
from nru_coexist.params import params_summary

LOG = logging.getLogger(__name__)

SHOWN_METRICS = {
    "analyze": ("window", "tau_w", "tau_l", "r_gnb", "r_wifi", "wifi_rate"),
    "tune-window": ("window", "window_rounded", "window_in_class", "imbalance", "tau_l"),
    "fairness": ("window", "phi", "rate_floor", "wifi_rate", "virtual_wifi_rate", "nr_rate"),
    "optimize": ("nr_dl_rate", "nr_ul_rate", "nr_rate", "rate_floor", "iterations"),
    "compare": ("nr_dl_rate", "nr_ul_rate", "nr_rate"),
    "simulate": ("tau_w", "tau_l", "r_gnb", "r_wifi", "wifi_rate", "model_gap"),
}


@runez.click.group()
@runez.click.version()
@runez.click.color()
@runez.click.debug("-v")
@click.option("--config", "-c", metavar="PATH", help="Config file(s) to use, comma separated (first one wins)")
def main(debug, config):
    """
    NR-U / WiFi coexistence: access model, fairness, resource allocation and MAC simulation
    """
    runez.system.AbortException = SystemExit
    runez.log.setup(
        debug=debug,
        console_format="%(levelname)s %(message)s",
        console_level=logging.INFO,
        default_logger=LOG.info,
        locations=None,
    )
    NCG.grab_config(config)


def experiment_options(func):
    options = [
        click.option("--seed", type=int, help="Base seed (replicate i uses seed + i)"),
        click.option("--replicates", "-r", type=int, help="Number of replicates per sweep point"),
        click.option("--sweep", "-s", metavar="AXIS=V1,V2", help="Sweep override, axis one of: wifi-nodes, payload, mcot, p-dk-max, p-gnb-max"),
        click.option("--method", "-m", "methods", multiple=True, type=click.Choice([m.value for m in Method]), help="Method(s) to run"),
        click.option("--jobs", "-j", type=int, default=1, show_default=True, help="Worker processes"),
        click.option("--out", "-o", metavar="PATH", help="Write results as CSV to PATH"),
        click.option("--trace", is_flag=True, help="Also write allocator convergence trace next to --out"),
    ]
    for option in reversed(options):
        func = option(func)

    return func


def run_mode(mode, seed=None, replicates=None, sweep=None, methods=None, jobs=1, out=None, trace=False):
    if trace and not out:
        runez.abort("--trace requires --out")

    NCG.select_mode(mode)
    experiment = ExperimentConfig.from_config(
        NCG.config,
        sweep=parsed_sweep(sweep) if sweep else None,
        seed=seed,
        replicates=replicates,
        methods=list(methods) if methods else None,
    )
    rows, traces = run_experiment(experiment, jobs=max(1, jobs))
    print(rows_table(rows, experiment.mode))
    if out:
        emit_results(rows, out)
        if trace:
            if traces:
                emit_results(traces, trace_path(out), columns=TRACE_COLUMNS)

            else:
                LOG.info("No allocator ran, no trace to write")

    failed = failed_rows(rows)
    if failed:
        runez.abort("%s failed: %s" % (runez.plural(failed, "row"), failed[0].message))


def rows_table(rows, mode):
    metrics = SHOWN_METRICS[mode]
    table = PrettyTable(["sweep", "method", "channel", "status", *metrics], missing="")
    for row in rows:
        values = [_short(row.metrics.get(m)) for m in metrics]
        status = runez.red(row.status.label) if row.status.value else row.status.label
        table.add_row(_short(row.sweep_value), row.method, row.channel, status, *values)

    return str(table)


def _short(value):
    if isinstance(value, float):
        return "%.4g" % value

    return "" if value is None else str(value)


@main.command()
@experiment_options
def analyze(**kwargs):
    """Access probabilities, slot breakdown and airtime ratios"""
    run_mode("analyze", **kwargs)


@main.command()
@experiment_options
def tune_window(**kwargs):
    """Initial gNB window giving the gNB the airtime of one WiFi node"""
    run_mode("tune-window", **kwargs)


@main.command()
@experiment_options
def fairness(**kwargs):
    """WiFi throughput next to the gNB vs next to an equivalent WiFi network"""
    run_mode("fairness", **kwargs)


@main.command()
@experiment_options
def optimize(**kwargs):
    """Joint DL/UL time and power allocation"""
    run_mode("optimize", **kwargs)


@main.command()
@experiment_options
def compare(**kwargs):
    """Proposed allocation vs equal-time / equal-power baselines"""
    run_mode("compare", **kwargs)


@main.command()
@experiment_options
def simulate(**kwargs):
    """Monte-Carlo MAC simulation, with the gap to the analytical model"""
    run_mode("simulate", **kwargs)


@main.command()
@click.option("--mode", required=True, type=click.Choice([*MODES, "analytic", "compare-baselines"]), help="Run mode")
@experiment_options
def run(mode, **kwargs):
    """Run the experiment of given --mode"""
    run_mode(mode, **kwargs)


@main.command()
def diagnostics():
    """Show diagnostics info"""
    with runez.Anchored("."):
        config = NCG.config.represented()
        print(PrettyTable.two_column_diagnostics(_diagnostics(), config))


def _diagnostics():
    yield "config", NCG.config.config_files_report()
    experiment = ExperimentConfig.from_config(NCG.config)
    for name, seconds in params_summary(experiment.wifi, experiment.nru).items():
        yield name, "%.6g us" % (seconds * 1e6)

    yield from runez.SYS_INFO.diagnostics()

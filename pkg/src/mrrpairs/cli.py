"""Command-line interface.

Exit codes: 0 success, 1 user error (config/io), 2 internal error
(numeric/statistics/unexpected).  Every JSON output embeds the config hash
and the seed of the run that produced it.
"""

import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import pipelines, tagio
from .config import ExperimentConfig, load_config
from .correlate import coincidence_summary, cross_correlate
from .emitter import simulate_cw, simulate_timebin
from .errors import ConfigError, MrrPairsError
from .svgplot import line_plot_svg

_USER_CATEGORIES = {"config", "io"}


def _run_guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MrrPairsError as exc:
            click.echo(f"error [{exc.category}]: {exc}", err=True)
            sys.exit(1 if exc.category in _USER_CATEGORIES else 2)
        except Exception as exc:  # noqa: BLE001
            click.echo(f"error [internal]: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _load(config_path) -> ExperimentConfig:
    return load_config(config_path)


def _parse_range(text: str) -> tuple[int, int]:
    sep = ".." if ".." in text else ":"
    lo, _, hi = text.partition(sep)
    try:
        return int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"bad range '{text}', expected MIN:MAX") from None


def _provenance(cfg: ExperimentConfig, seed: int) -> dict:
    return {"config_hash": cfg.config_hash, "seed": seed}


@click.group()
def main() -> None:
    """Microring photon-pair source simulator and analysis toolkit."""


@main.command()
@click.argument("mode", type=click.Choice(["cw", "timebin"]))
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--power", type=float, default=None, help="Override pump power (mW).")
@click.option("--duration", type=float, default=None, help="Override duration (s).")
@click.option("--phase", type=float, default=None, help="Interferometer phase (rad, timebin).")
@click.option("--seed", type=int, default=None, help="Override RNG seed.")
@_run_guarded
def simulate(mode, config_path, out_path, power, duration, phase, seed):
    """Generate a tag stream and write it in the binary tag format."""
    cfg = _load(config_path)
    if mode == "cw":
        source = cfg.source
    else:
        source = cfg.timebin_source
    if power is not None:
        source = replace(source, pump_power_mw=power)
    if duration is not None:
        source = replace(source, duration_s=duration)
    if seed is not None:
        source = replace(source, rng_seed=seed)
    if mode == "cw":
        stream = simulate_cw(
            source,
            cfg.det_signal,
            cfg.det_idler,
            cfg.pair,
            resolution_ps=cfg.analysis.resolution_ps,
            max_tags=cfg.analysis.max_tags,
        )
    else:
        tb = cfg.timebin
        if phase is not None:
            tb = replace(tb, interferometer_phase_rad=phase)
        stream = simulate_timebin(
            source,
            tb,
            cfg.det_signal,
            cfg.det_idler,
            resolution_ps=cfg.analysis.resolution_ps,
            max_tags=cfg.analysis.max_tags,
        )
    tagio.write_tags(out_path, stream)
    meta = dict(stream.origin)
    meta.update(_provenance(cfg, source.rng_seed))
    meta["tags"] = len(stream)
    tagio.write_json(str(out_path) + ".json", meta)
    click.echo(f"wrote {len(stream)} tags to {out_path}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--a", "ch_a", type=int, default=0, show_default=True)
@click.option("--b", "ch_b", type=int, default=1, show_default=True)
@click.option("--bin", "bin_width", type=int, default=100, show_default=True, help="Bin width (ps).")
@click.option("--range", "delay_range", default="-100000:100000", show_default=True,
              help="Delay range min:max (ps).")
@click.option("--window", type=int, default=2000, show_default=True, help="Coincidence window (ps).")
@click.option("--duration", type=float, default=None, help="Acquisition time override (s).")
@click.option("--out-hist", type=click.Path(), default=None)
@click.option("--out-summary", type=click.Path(), default=None)
@_run_guarded
def correlate(in_path, ch_a, ch_b, bin_width, delay_range, window, duration, out_hist, out_summary):
    """Cross-correlate two channels of a tag file."""
    stream = tagio.read_tags(in_path, duration_s=duration)
    hist = cross_correlate(stream, ch_a, ch_b, bin_width, _parse_range(delay_range))
    summary = coincidence_summary(hist, window)
    if out_hist:
        tagio.write_histogram_csv(out_hist, hist)
    payload = {
        "peak_counts": summary.peak_counts,
        "accidental_counts_per_bin": summary.accidental_counts_per_bin,
        "window_ps": summary.window_ps,
        "coincidence_rate": summary.coincidence_rate,
        "car": summary.car,
        "peak_delay_ps": summary.peak_delay_ps,
    }
    if out_summary:
        tagio.write_json(out_summary, payload)
    click.echo(json.dumps(payload, indent=2))


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--ch", type=int, default=0, show_default=True)
@click.option("--bin", "bin_width", type=int, default=500, show_default=True)
@click.option("--range", "delay_range", default="-100000:100000", show_default=True)
@click.option("--shape", type=click.Choice(["double_exponential", "lorentzian"]),
              default="double_exponential", show_default=True)
@click.option("--splitter-seed", type=int, default=1234, show_default=True)
@click.option("--duration", type=float, default=None)
@click.option("--out-hist", type=click.Path(), default=None)
@click.option("--out-fit", type=click.Path(), default=None)
@_run_guarded
def g2(in_path, ch, bin_width, delay_range, shape, splitter_seed, duration, out_hist, out_fit):
    """Split-detector autocorrelation and g2(0) fit of one channel."""
    from .correlate import autocorrelate_split
    from .fitting import fit_g2

    stream = tagio.read_tags(in_path, duration_s=duration)
    hist = autocorrelate_split(stream, ch, splitter_seed, bin_width, _parse_range(delay_range))
    fit = fit_g2(hist, shape)
    if out_hist:
        tagio.write_histogram_csv(out_hist, hist)
    payload = {
        "parameters": fit.parameters,
        "standard_errors": fit.standard_errors,
        "reduced_chi_square": fit.reduced_chi_square,
        "flags": {k: v for k, v in fit.flags.items() if not isinstance(v, np.ndarray)},
    }
    if out_fit:
        tagio.write_json(out_fit, payload)
    click.echo(json.dumps(payload, indent=2))


@main.command("power-sweep")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--powers", default=None, help="Comma-separated pump powers (mW).")
@click.option("--duration", type=float, default=None, help="Seconds per power point.")
@click.option("--out-dir", type=click.Path(), default=None)
@_run_guarded
def power_sweep(config_path, powers, duration, out_dir):
    """Acquire a power sweep, fit the noise decomposition, predict the CAR curve."""
    cfg = _load(config_path)
    power_list = [float(p) for p in powers.split(",")] if powers else None
    char = pipelines.run_power_sweep(cfg, powers=power_list, duration_s=duration)
    car_points = pipelines.run_car_curve(cfg, char)
    out = Path(out_dir or cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    tagio.write_power_sweep_csv(out / "power_sweep.csv", char.sweep)
    _write_car_csv(out / "car_curve.csv", car_points)
    payload = {
        **_provenance(cfg, cfg.source.rng_seed),
        "noise_fit_signal": char.fit_signal.parameters,
        "noise_fit_idler": char.fit_idler.parameters,
        "r_c_coefficient": char.r_c_coefficient,
        "pgr_coefficient": char.pgr_coefficient,
        "brightness": char.brightness,
        "bandwidth_mhz": char.bandwidth_mhz,
        "decay_ps": char.decay_ps,
        "transmission_signal_db": char.transmission_signal_db,
        "transmission_idler_db": char.transmission_idler_db,
    }
    tagio.write_json(out / "power_sweep.json", payload)
    _sweep_svg(out, char, car_points)
    click.echo(json.dumps(payload, indent=2))


@main.command("timebin-sweep")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--phases", default=None, help="Comma-separated phases (rad).")
@click.option("--duration", type=float, default=None, help="Seconds per phase point.")
@click.option("--out-dir", type=click.Path(), default=None)
@_run_guarded
def timebin_sweep(config_path, phases, duration, out_dir):
    """Phase sweep of the time-bin interferometer with visibility fit."""
    cfg = _load(config_path)
    phase_list = [float(p) for p in phases.split(",")] if phases else None
    result = pipelines.run_timebin_sweep(cfg, phases=phase_list, duration_s=duration)
    out = Path(out_dir or cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    _write_timebin_csv(out / "timebin_fringe.csv", result)
    payload = {
        **_provenance(cfg, cfg.timebin_source.rng_seed),
        "raw_visibility": result.visibility_fit["raw_visibility"],
        "raw_visibility_err": result.visibility_fit.error("raw_visibility"),
        "net_visibility": result.visibility_fit.parameters["net_visibility"],
        "net_visibility_err": result.visibility_fit.standard_errors["net_visibility"],
        "phase_offset": result.visibility_fit["phase_offset"],
        "period": result.visibility_fit.parameters["period"],
        "side_slopes": result.side_slopes,
    }
    tagio.write_json(out / "timebin_fringe.json", payload)
    svg = line_plot_svg(
        [
            ("central", result.phases.tolist(), result.central.tolist()),
            ("left", result.phases.tolist(), result.left.tolist()),
            ("right", result.phases.tolist(), result.right.tolist()),
        ],
        title="Time-bin fringe",
        xlabel="interferometer phase (rad)",
        ylabel="coincidences per point",
    )
    tagio.atomic_write_text(out / "timebin_fringe.svg", svg)
    click.echo(json.dumps(payload, indent=2))


@main.command("channel-map")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--k-range", default="-3:3", show_default=True, help="Comb order range lo:hi.")
@click.option("--temperature", type=float, default=None, help="Chip temperature (K).")
@click.option("--out", "out_path", type=click.Path(), default=None)
@_run_guarded
def channel_map(config_path, k_range, temperature, out_path):
    """Comb-line to DWDM channel alignment table."""
    cfg = _load(config_path)
    lo, hi = _parse_range(k_range)
    rows = pipelines.run_channel_map(cfg, lo, hi, temperature)
    lines = ["k,channel,detuning_ghz,frequency_thz,wavelength_nm"]
    for r in rows:
        lines.append(
            f"{r['comb_order']},{r['channel']},{r['detuning_ghz']:.4f},"
            f"{r['frequency_thz']:.6f},{r['wavelength_nm']:.4f}"
        )
    text = "\n".join(lines)
    if out_path:
        tagio.atomic_write_text(out_path, text + "\n")
    click.echo(text)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out-dir", type=click.Path(), default=None)
@_run_guarded
def report(config_path, out_dir):
    """Run the full characterization suite and write JSON/CSV/SVG outputs."""
    cfg = _load(config_path)
    bundle = pipelines.run_report(cfg)
    out = Path(out_dir or cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)

    tagio.write_json(out / "report.json", bundle["summary"])
    char = bundle["characterization"]
    tagio.write_power_sweep_csv(out / "power_sweep.csv", char.sweep)
    _write_car_csv(out / "car_curve.csv", bundle["car_points"])
    tagio.write_histogram_csv(out / "autocorrelation.csv", bundle["purity_device"].histogram)
    _write_timebin_csv(out / "timebin_fringe.csv", bundle["timebin"])
    lines = ["k,channel,detuning_ghz,frequency_thz,wavelength_nm"]
    for r in bundle["channel_map"]:
        lines.append(
            f"{r['comb_order']},{r['channel']},{r['detuning_ghz']:.4f},"
            f"{r['frequency_thz']:.6f},{r['wavelength_nm']:.4f}"
        )
    tagio.atomic_write_text(out / "channel_map.csv", "\n".join(lines) + "\n")
    _sweep_svg(out, char, bundle["car_points"])
    tb = bundle["timebin"]
    svg = line_plot_svg(
        [("central", tb.phases.tolist(), tb.central.tolist()),
         ("left", tb.phases.tolist(), tb.left.tolist()),
         ("right", tb.phases.tolist(), tb.right.tolist())],
        title="Time-bin fringe",
        xlabel="interferometer phase (rad)",
        ylabel="coincidences per point",
    )
    tagio.atomic_write_text(out / "timebin_fringe.svg", svg)
    click.echo(json.dumps(bundle["summary"], indent=2, default=float))


@main.command()
@click.option("--from-csv", "from_csv", is_flag=True, help="IN is CSV; write binary OUT.")
@click.option("--to-csv", "to_csv", is_flag=True, help="IN is binary; write CSV OUT.")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--sort", is_flag=True, help="Sort out-of-order records instead of warning.")
@click.option("--resolution", type=int, default=1, show_default=True,
              help="Tick size (ps) when importing CSV.")
@_run_guarded
def convert(from_csv, to_csv, in_path, out_path, sort, resolution):
    """Convert between the binary tag format and CSV.

    This is also the ingestion seam for external time-tag dumps: bring them
    to the two-column ``timestamp_ps,channel`` CSV schema and import.
    """
    if from_csv == to_csv:
        raise ConfigError("pass exactly one of --from-csv / --to-csv")
    if from_csv:
        stream = tagio.read_tags_csv(in_path, resolution_ps=resolution, sort=sort)
        tagio.write_tags(out_path, stream)
    else:
        stream = tagio.read_tags(in_path, sort=sort)
        tagio.write_tags_csv(out_path, stream)
    click.echo(f"wrote {len(stream)} tags to {out_path}")


def _write_car_csv(path, car_points) -> None:
    lines = ["power_mw,car_measured,car_sigma,car_predicted,pair_rate,singles_signal,singles_idler"]
    for p in car_points:
        lines.append(
            f"{p.power_mw:.6g},{p.car_measured:.4f},{p.car_sigma:.4f},"
            f"{p.car_predicted:.4f},{p.pair_rate:.4f},{p.singles_signal:.2f},{p.singles_idler:.2f}"
        )
    tagio.atomic_write_text(path, "\n".join(lines) + "\n")


def _write_timebin_csv(path, result) -> None:
    lines = ["phase_rad,central,left,right,background_per_window"]
    for i in range(result.phases.size):
        lines.append(
            f"{result.phases[i]:.6f},{result.central[i]:.0f},{result.left[i]:.0f},"
            f"{result.right[i]:.0f},{result.background_per_window[i]:.3f}"
        )
    tagio.atomic_write_text(path, "\n".join(lines) + "\n")


def _sweep_svg(out: Path, char, car_points) -> None:
    sweep = char.sweep
    svg = line_plot_svg(
        [
            ("signal singles", sweep.powers_mw.tolist(), sweep.singles_signal.tolist()),
            ("idler singles", sweep.powers_mw.tolist(), sweep.singles_idler.tolist()),
        ],
        title="Singles vs pump power",
        xlabel="pump power (mW)",
        ylabel="counts / s",
        logy=True,
    )
    tagio.atomic_write_text(out / "power_sweep.svg", svg)
    svg = line_plot_svg(
        [
            ("CAR measured", [p.power_mw for p in car_points], [p.car_measured for p in car_points]),
            ("CAR predicted", [p.power_mw for p in car_points], [p.car_predicted for p in car_points]),
            ("pair rate", [p.power_mw for p in car_points], [max(p.pair_rate, 1e-3) for p in car_points]),
        ],
        title="Coincidences and CAR vs pump power",
        xlabel="pump power (mW)",
        ylabel="CAR / pair rate (1/s)",
        logy=True,
    )
    tagio.atomic_write_text(out / "car_curve.svg", svg)


if __name__ == "__main__":
    main()

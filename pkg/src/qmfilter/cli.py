"""Command-line entry point: ``qmfilter <command> [options]``.

Exit codes: 0 success, 1 internal error, 2 configuration error, 3 data error.
Settings come from built-in defaults, then ``--config`` (a ``key=value``
file or any previous output file), then explicit flags.
"""

from __future__ import annotations

import argparse
import os
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from . import io as qio
from .core import oracle_snr
from .encoding import resource_report
from .experiments import random_data_noise_model, run_random_data
from .hybrid import compare_runs, estimate_snr, plan_segments
from .sigproc import (
    ChirpSpec,
    colored_psd,
    inject,
    lowpass_downsample,
    synth_chirp,
    synth_noise,
    welch_psd,
    whiten,
)
from .simulator import NoiseModel, make_rng

HYBRID_BACKENDS = {"hybrid-ideal": "ideal", "hybrid-sim": "statevector", "hybrid-noisy": "noisy"}
ALL_BACKENDS = ("classical", *HYBRID_BACKENDS)


class ConfigError(ValueError):
    pass


# --- option registry -------------------------------------------------------------

class _Options:
    """Collects defaults and converters so config-file values get the same treatment."""

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.defaults: dict = {}
        self.types: dict = {}
        self.choices: dict = {}

    def add(self, *flags, default=None, type=str, choices=None, help=None, flag=False):
        dest = flags[0].lstrip("-").replace("-", "_")
        self.defaults[dest] = False if flag else default
        self.types[dest] = bool if flag else type
        if choices:
            self.choices[dest] = choices
        if flag:
            self.parser.add_argument(*flags, dest=dest, action="store_true",
                                     default=argparse.SUPPRESS, help=help)
        else:
            self.parser.add_argument(*flags, dest=dest, type=type, choices=choices,
                                     default=argparse.SUPPRESS, help=help)


def _kd(value):
    if value == "auto":
        return "auto"
    return int(value)


def _seed(value):
    return None if value in (None, "", "random") else int(value)


def _common(o: _Options, *, shots=10_000, margin=0.0, kd: object = 4, kt=2, seed=True,
            backend=None, noise=True):
    if seed:
        o.add("--seed", type=_seed, help="master seed; omitted = random (printed)")
    o.add("--shots", default=shots, type=int, help="shots per (segment, chunk) run")
    o.add("--kd", default=kd, type=_kd, help="data segment length or 'auto'")
    o.add("--kt", default=kt, type=int, help="template chunk length")
    o.add("--margin", default=margin, type=float, help="extra positivity shift")
    if backend is not None:
        o.add("--backend", default=backend, type=str,
              help=f"comma separated subset of {','.join(ALL_BACKENDS)}")
    if noise:
        o.add("--p-cx", default=None, type=float,
              help="depolarizing probability per CNOT-equivalent")
        o.add("--p-ro", default=None, type=float, help="readout flip probability per bit")
    o.add("--workers", default=os.cpu_count() or 1, type=int, help="worker threads")


def build_parser():
    parser = argparse.ArgumentParser(prog="qmfilter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    registry = {}

    def command(name, help):
        p = sub.add_parser(name, help=help)
        o = _Options(p)
        o.add("--out-dir", default=".", help="directory for output files")
        o.add("--config", default=None, help="key=value file or previous output file")
        o.add("--plot", flag=True, help="also render PNG figures")
        registry[name] = o
        return o

    o = command("filter", "classical and/or hybrid matched filter of CSV inputs")
    o.add("--template", help="template time-series CSV")
    o.add("--data", help="data time-series CSV")
    _common(o, backend="classical,hybrid-ideal")
    o.add("--exact", flag=True, help="infinite-shot limit for hybrid backends")
    o.add("--shot-allocation", default="uniform", choices=("uniform", "precision"))

    o = command("appendix-c", "random 4-point data study, noiseless and noisy")
    _common(o, shots=20_000, margin=0.1, kd=4, kt=2)
    o.add("--datasets", default=100, type=int)
    o.add("--gate-total", default=0.07, type=float, help="summed gate error per circuit")
    o.add("--readout-total", default=0.07, type=float, help="readout error per circuit")

    o = command("condition", "low-pass, downsample and whiten a series")
    o.add("--input", help="time-series CSV")
    o.add("--cutoff", default=99.98, type=float, help="low-pass cutoff [Hz]")
    o.add("--out-rate", default=200.0, type=float, help="output sample rate [Hz]")
    o.add("--psd-segment", default=512, type=int)
    o.add("--psd-overlap", default=0, type=int)
    o.add("--psd", default=None, help="use this PSD CSV instead of estimating one")
    o.add("--no-whiten", flag=True)

    o = command("psd", "Welch PSD of a series")
    o.add("--input", help="time-series CSV")
    o.add("--segment", default=512, type=int)
    o.add("--overlap", default=0, type=int)

    o = command("synth", "toy chirp template and/or noisy data with an injection")
    o.add("--seed", type=_seed)
    o.add("--kind", default="both", choices=("chirp", "noise", "both"))
    o.add("--rate", default=200.0, type=float)
    o.add("--f-start", default=20.0, type=float)
    o.add("--f-end", default=60.0, type=float)
    o.add("--chirp-duration", default=0.2, type=float)
    o.add("--amplitude", default=1.0, type=float)
    o.add("--duration", default=4.0, type=float, help="noise duration [s]")
    o.add("--sigma", default=1.0, type=float, help="white noise level")
    o.add("--knee", default=0.0, type=float, help=">0 selects red noise with this knee [Hz]")
    o.add("--inject-at", default=None, type=float, help="injection time [s]")
    o.add("--scale", default=1.0, type=float)

    o = command("plan", "segmentation plan")
    o.add("--L", type=int, help="data length")
    o.add("--N", type=int, help="template length")
    _common(o, kd="auto", seed=False, noise=False)

    o = command("resources", "qubit, depth, shot and decoder counts")
    o.add("--L", type=int, help="data length")
    o.add("--N", type=int, help="template length")
    _common(o, seed=False, noise=False)

    o = command("compare", "compare an SNR series with a reference")
    o.add("--estimate", help="SNR CSV to assess")
    o.add("--truth", help="reference SNR CSV")
    return parser, registry


def resolve(argv=None) -> dict:
    """Merge defaults, config file and explicit flags into one settings dict."""
    parser, registry = build_parser()
    ns = parser.parse_args(argv)
    opts = registry[ns.command]
    explicit = {k: v for k, v in vars(ns).items() if k != "command"}
    merged = dict(opts.defaults)
    cfg_path = explicit.get("config")
    if cfg_path:
        try:
            from_file = qio.parse_config_file(cfg_path)
        except qio.DataError as exc:
            raise ConfigError(str(exc)) from None
        for key, val in from_file.items():
            key = key.replace("-", "_")
            if key in ("command", "config") or key not in opts.defaults:
                continue
            conv = opts.types[key]
            try:
                merged[key] = val if val is None or conv is bool else conv(val)
            except (TypeError, ValueError):
                raise ConfigError(f"config value {key}={val!r} is invalid") from None
            if key in opts.choices and merged[key] not in opts.choices[key]:
                raise ConfigError(f"config value {key}={val!r} not in {opts.choices[key]}")
    merged.update(explicit)
    merged["command"] = ns.command
    return merged


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _positive(cfg, *keys):
    for k in keys:
        if cfg.get(k) is not None and not cfg[k] > 0:
            raise ConfigError(f"--{k.replace('_', '-')} must be positive")


def _probability(cfg, *keys):
    for k in keys:
        if cfg.get(k) is not None and not 0 <= cfg[k] <= 1:
            raise ConfigError(f"--{k.replace('_', '-')} must lie in [0, 1]")


def _ensure_seed(cfg):
    if cfg.get("seed") is None:
        cfg["seed"] = secrets.randbits(63)
        print(f"seed={cfg['seed']}")


def _provenance(cfg) -> dict:
    return {k: v for k, v in cfg.items() if k not in ("config",)}


class _Outputs:
    """Collects rendered files and writes them only once everything succeeded."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.files: dict[str, str] = {}
        self.figures = []

    def add(self, name, text):
        self.files[name] = text

    def figure(self, fn, *args, name, **kw):
        self.figures.append((fn, args, name, kw))

    def commit(self, plot: bool):
        for name, text in self.files.items():
            qio.write_atomic(self.dir / name, text)
        if plot and self.figures:
            from . import plotting

            for fn, args, name, kw in self.figures:
                getattr(plotting, fn)(*args, self.dir / name, **kw)


def _noise_model(cfg) -> NoiseModel:
    return NoiseModel(cfg["p_cx"] if cfg.get("p_cx") is not None else 0.01,
                      cfg["p_ro"] if cfg.get("p_ro") is not None else 0.01)


def cmd_filter(cfg, out: _Outputs):
    _require(cfg, "template", "data")
    backends = [b.strip() for b in str(cfg["backend"]).split(",") if b.strip()]
    bad = [b for b in backends if b not in ALL_BACKENDS]
    if bad or not backends:
        raise ConfigError(f"unknown backend(s) {bad}; choose from {','.join(ALL_BACKENDS)}")
    _positive(cfg, "shots", "kt", "workers")
    _probability(cfg, "p_cx", "p_ro")
    if cfg["margin"] < 0:
        raise ConfigError("--margin must be >= 0")
    if any(b != "classical" for b in backends):
        _ensure_seed(cfg)

    template = qio.read_series(cfg["template"])
    data = qio.read_series(cfg["data"])
    prov = _provenance(cfg)
    results = {}
    for b in backends:
        t0 = time.perf_counter()
        if b == "classical":
            series = oracle_snr(template, data)
        else:
            plan = plan_segments(len(data), len(template), cfg["kd"], cfg["kt"], cfg["shots"])
            kind = HYBRID_BACKENDS[b]
            backend = "exact" if cfg.get("exact") else (_noise_model(cfg) if kind == "noisy" else kind)
            series = estimate_snr(template, data, plan, backend, margin=cfg["margin"],
                                  seed=cfg["seed"], workers=cfg["workers"],
                                  shot_allocation=cfg["shot_allocation"])
        dt = time.perf_counter() - t0
        results[b] = series
        out.add(f"snr_{b}.csv", qio.dumps_snr(series, prov))
        vals = series.values
        peak = int(np.argmax(np.abs(vals)))
        print(f"{b}: peak_lag={peak} peak_time={series.times[peak]:.6g} "
              f"peak_snr={vals[peak]:.6g} runtime={dt:.3f}s")
    if "classical" in results:
        for b, s in results.items():
            if b != "classical":
                print(f"{b} vs classical: {compare_runs(s, results['classical']).summary()}")
    out.figure("snr_series", results, name="snr.png", title="SNR series")


def cmd_appendix_c(cfg, out: _Outputs):
    _positive(cfg, "shots", "datasets", "kt")
    _probability(cfg, "p_cx", "p_ro", "gate_total", "readout_total")
    if cfg["kd"] == "auto":
        raise ConfigError("--kd must be an integer here")
    _ensure_seed(cfg)
    model = random_data_noise_model(cfg["gate_total"], cfg["readout_total"], cfg["kt"], cfg["kd"])
    if cfg.get("p_cx") is not None or cfg.get("p_ro") is not None:
        model = NoiseModel(model.p_two_qubit if cfg.get("p_cx") is None else cfg["p_cx"],
                           model.p_readout if cfg.get("p_ro") is None else cfg["p_ro"])
    res = run_random_data(cfg["seed"], cfg["datasets"], data_len=cfg["kd"], shots=cfg["shots"],
                          margin=cfg["margin"], k_d=cfg["kd"], k_t=cfg["kt"],
                          backends={"ideal": "ideal", "noisy": model})
    prov = _provenance(cfg)
    n_lags = cfg["kd"] - cfg["kt"] + 1
    rows = []
    for name in ("ideal", "noisy"):
        est, sig = res.estimates[name], res.sigmas[name]
        table = [(i, i // n_lags, i % n_lags, t, e, e - t, s)
                 for i, (t, e, s) in enumerate(zip(res.truth, est, sig))]
        out.add(f"scatter_{name}.csv", qio.dumps_table(
            ["index", "dataset", "lag", "truth", "estimate", "error", "sigma"], table, prov,
            backend=name, p_two_qubit=model.p_two_qubit if name == "noisy" else 0.0,
            p_readout=model.p_readout if name == "noisy" else 0.0))
        rep = res.reports[name]
        rows.append((name, rep.correlation, rep.error_correlation, int(rep.error_correlation_defined),
                     rep.max_abs_error, rep.rms_error, rep.peak_truth, rep.peak_estimate))
        print(f"{name}: {rep.summary()}")
        out.figure("scatter", res.truth, est, name=f"scatter_{name}.png",
                   title=f"{name} backend")
    out.add("comparison.csv", qio.dumps_table(
        ["backend", "correlation", "error_correlation", "error_correlation_defined",
         "max_abs_error", "rms_error", "peak_truth", "peak_estimate"], rows, prov))


def cmd_condition(cfg, out: _Outputs):
    _require(cfg, "input")
    _positive(cfg, "cutoff", "out_rate", "psd_segment")
    ts = qio.read_series(cfg["input"])
    psd = qio.loads_psd(qio.read_text(cfg["psd"]), cfg["psd"]) if cfg.get("psd") else \
        welch_psd(ts, cfg["psd_segment"], overlap=cfg["psd_overlap"])
    low = lowpass_downsample(ts, cfg["cutoff"], cfg["out_rate"])
    result = low if cfg.get("no_whiten") else whiten(low, psd)
    prov = _provenance(cfg)
    out.add("conditioned.csv", qio.dumps_series(result, prov))
    out.add("psd.csv", qio.dumps_psd(psd, prov))
    print(f"conditioned: {len(ts)} samples @ {ts.sample_rate:g} Hz -> "
          f"{len(result)} samples @ {result.sample_rate:g} Hz")
    out.figure("series", result, name="conditioned.png", title="conditioned series")
    out.figure("psd", psd, name="psd.png", title="Welch PSD")


def cmd_psd(cfg, out: _Outputs):
    _require(cfg, "input")
    _positive(cfg, "segment")
    ts = qio.read_series(cfg["input"])
    psd = welch_psd(ts, cfg["segment"], overlap=cfg["overlap"])
    out.add("psd.csv", qio.dumps_psd(psd, _provenance(cfg)))
    print(f"psd: {psd.frequencies.size} bins, df={psd.frequencies[1]:.6g} Hz")
    out.figure("psd", psd, name="psd.png", title="Welch PSD")


def cmd_synth(cfg, out: _Outputs):
    _positive(cfg, "rate", "chirp_duration", "duration")
    _ensure_seed(cfg)
    prov = _provenance(cfg)
    spec = ChirpSpec(cfg["f_start"], cfg["f_end"], cfg["chirp_duration"], cfg["amplitude"])
    try:
        spec.validate(cfg["rate"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    chirp = synth_chirp(spec, cfg["rate"])
    if cfg["kind"] in ("chirp", "both"):
        out.add("template.csv", qio.dumps_series(chirp, prov))
    if cfg["kind"] in ("noise", "both"):
        n = int(round(cfg["duration"] * cfg["rate"]))
        psd = colored_psd(cfg["knee"], 0.0, cfg["sigma"] ** 2) if cfg["knee"] > 0 else None
        data = synth_noise(n, cfg["rate"], make_rng(cfg["seed"]), psd, cfg["sigma"])
        if cfg.get("inject_at") is not None:
            data = inject(data, chirp, int(round(cfg["inject_at"] * cfg["rate"])), cfg["scale"])
        out.add("data.csv", qio.dumps_series(data, prov))
    print(f"synth: {', '.join(out.files)}")


def _plan(cfg):
    _require(cfg, "L", "N")
    _positive(cfg, "L", "N", "kt", "shots")
    try:
        return plan_segments(cfg["L"], cfg["N"], cfg["kd"], cfg["kt"], cfg["shots"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_plan(cfg, out: _Outputs):
    plan = _plan(cfg)
    rows = [(s, plan.data_starts[s], plan.owned_lags(s).start, plan.owned_lags(s).stop - 1)
            for s in range(plan.n_segments)]
    extra = {"k_d": plan.k_d, "k_t": plan.k_t, "n_chunks": plan.n_chunks}
    if plan.k_star is not None:
        extra.update(k_star=plan.k_star, k_opt=plan.k_opt)
        print(f"k*={plan.k_star:.4f} integer optimum={plan.k_opt} chosen k_d={plan.k_d}")
    else:
        print(f"k_d={plan.k_d}")
    print(f"{plan.n_segments} segments x {plan.n_chunks} chunks, "
          f"{plan.lags_per_segment} lags per segment, {plan.n_lags} lags total")
    out.add("plan.csv", qio.dumps_table(["segment", "data_start", "first_lag", "last_lag"],
                                        rows, _provenance(cfg), **extra))


def cmd_resources(cfg, out: _Outputs):
    plan = _plan(cfg)
    rep = resource_report(cfg["N"], cfg["L"], plan)
    print(rep.summary())
    out.add("resources.csv", qio.dumps_table(["quantity", "value"], rep.as_rows(),
                                             _provenance(cfg)))


def cmd_compare(cfg, out: _Outputs):
    _require(cfg, "estimate", "truth")
    est = qio.read_snr(cfg["estimate"])
    truth = qio.read_snr(cfg["truth"])
    rep = compare_runs(est, truth)
    z = rep.z_scores if rep.z_scores is not None else np.full(rep.truth.size, np.nan)
    rows = [(j, t, e, e - t, "" if np.isnan(zz) else zz)
            for j, (t, e, zz) in enumerate(zip(rep.truth, rep.estimate, z))]
    out.add("comparison.csv", qio.dumps_table(
        ["lag", "truth", "estimate", "error", "z"], rows, _provenance(cfg),
        correlation=rep.correlation, error_correlation=rep.error_correlation,
        error_correlation_defined=rep.error_correlation_defined,
        max_abs_error=rep.max_abs_error))
    print(rep.summary())


COMMANDS = {
    "filter": cmd_filter,
    "appendix-c": cmd_appendix_c,
    "condition": cmd_condition,
    "psd": cmd_psd,
    "synth": cmd_synth,
    "plan": cmd_plan,
    "resources": cmd_resources,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0) and 2
    out = _Outputs(cfg["out_dir"])
    try:
        COMMANDS[cfg["command"]](cfg, out)
        out.commit(bool(cfg.get("plot")))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (qio.DataError, ValueError, IndexError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

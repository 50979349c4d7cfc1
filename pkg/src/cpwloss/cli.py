"""Command line frontend: ingestion, fits, statistics, reports.

Subcommands mirror the analysis chain for a resonator cooldown:

    scan    locate notch dips on a wideband feedline trace
    fit     fit resonances (whole files or scan windows)
    power   fit a TLS saturation curve to a power series
    budget  forward loss budget or interface-loss decomposition
    xrd     pseudo-Voigt peak fits and texture classification
    rrr     Tc / RRR extraction from an R(T) curve
    sheet   sheet-resistance uniformity statistics
    report  group TLS fit reports by fabrication process
    synth   synthetic data with a truth sidecar, for round trips

Every command is a pure function of (inputs, config, seed): rerunning
with the same arguments rewrites byte-identical outputs. Options can
come from a plain key=value config file via --config; explicit flags
win over the file. Any error exits nonzero naming the offending file
and operation.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import median_filter

from . import dataio, filmchar, lossbudget, stats, synth, tlsloss
from .circlefit import default_frequencies, fit_resonance, notch_model, synthesize_notch
from .errors import CpwLossError, DataError, FitError

# Seed used by synth and anything stochastic when none is given.
DEFAULT_SEED = 12345

# Chip design values carried into every report for traceability.
DESIGN_CONSTANTS = {
    "conductor_width_um": 10.0,
    "gap_um": 6.0,
    "target_coupling_bandwidth_mhz": 0.36,
    "target_q_ext": 5.0e5,
}

PROXIMITY_LIMIT_HZ = 50e6  # nominal resonator spacing is 200 MHz


@dataclass
class RunConfig:
    """Merged command options (flags over config file over defaults)."""

    command: str
    inputs: tuple = ()
    out_dir: str = "."
    seed: int = DEFAULT_SEED
    jobs: int = 1
    attenuation_db: float = None
    trench_nm: float = None
    windows: str = None
    prominence_db: float = 3.0
    thickness_nm: float = None
    table: str = None
    losses: str = None
    decompose: str = None
    kind: str = None
    params: dict = field(default_factory=dict)
    design_constants: dict = field(default_factory=lambda: dict(DESIGN_CONSTANTS))

    def __post_init__(self):
        if self.jobs < 1:
            raise DataError(f"--jobs must be >= 1, got {self.jobs}")


def parse_config_file(path):
    """Plain key=value option file; '#' starts a comment."""
    values = {}
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value, got '{line}'")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


_CONFIG_TYPES = {
    "out": str, "seed": int, "jobs": int,
    "attenuation_db": float, "trench_nm": float, "windows": str,
    "prominence_db": float, "thickness_nm": float,
    "table": str, "losses": str, "decompose": str,
}


def build_config(args):
    """RunConfig from parsed argparse namespace plus optional config file."""
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key, cast in _CONFIG_TYPES.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in file_values:
            try:
                merged[key] = cast(file_values[key])
            except ValueError:
                raise DataError(f"config key {key}: cannot parse "
                                f"'{file_values[key]}' as {cast.__name__}") from None
    return RunConfig(
        command=args.command,
        inputs=tuple(getattr(args, "inputs", ()) or ()),
        out_dir=merged.get("out", "."),
        seed=merged.get("seed", DEFAULT_SEED),
        jobs=merged.get("jobs", 1),
        attenuation_db=merged.get("attenuation_db"),
        trench_nm=merged.get("trench_nm"),
        windows=merged.get("windows"),
        prominence_db=merged.get("prominence_db", 3.0),
        thickness_nm=merged.get("thickness_nm"),
        table=merged.get("table"),
        losses=merged.get("losses"),
        decompose=merged.get("decompose"),
        kind=getattr(args, "kind", None),
        params=parse_params(getattr(args, "params", ()) or ()),
    )


def parse_params(pairs):
    params = {}
    for item in pairs:
        if "=" not in item:
            raise DataError(f"synth parameter '{item}' must be key=value")
        key, value = item.split("=", 1)
        params[key.strip().replace("-", "_")] = value.strip()
    return params


def _out_path(cfg, name):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


# ---------------------------------------------------------------- scan

def scan_windows(sweep, prominence_db=3.0):
    """Locate notch dips on a wideband trace via a moving-median baseline.

    Returns (windows, mag_db, baseline_db). Each window is a dict with
    the dip center, a fitting window of +-10 estimated linewidths, and
    a proximity flag for dips closer than 50 MHz to a neighbor.
    """
    f = sweep.frequency_hz
    mag_db = 20.0 * np.log10(np.maximum(np.abs(sweep.s21), 1e-300))
    size = max(51, 2 * (f.size // 100) + 1)
    if size >= f.size:
        size = max(3, 2 * (f.size // 6) + 1)
    baseline = median_filter(mag_db, size=size, mode="nearest")
    depth = baseline - mag_db

    above = depth >= prominence_db
    windows = []
    i = 0
    while i < f.size:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < f.size and above[j + 1]:
            j += 1
        k = i + int(np.argmax(depth[i:j + 1]))
        half = depth[k] / 2.0
        left, right = k, k
        while left > 0 and depth[left - 1] >= half:
            left -= 1
        while right < f.size - 1 and depth[right + 1] >= half:
            right += 1
        df = f[1] - f[0] if f.size > 1 else 1.0
        est_lw = max(float(f[right] - f[left]), 2.0 * float(df))
        windows.append({
            "f_center_hz": float(f[k]),
            "f_lo_hz": max(float(f[0]), float(f[k] - 10.0 * est_lw)),
            "f_hi_hz": min(float(f[-1]), float(f[k] + 10.0 * est_lw)),
            "est_linewidth_hz": est_lw,
            "max_depth_db": float(depth[k]),
            "proximity_flag": False,
        })
        i = j + 1

    if not windows:
        raise FitError(f"no dips found deeper than {prominence_db} dB "
                       f"below the baseline")
    for a, b in zip(windows, windows[1:]):
        if b["f_center_hz"] - a["f_center_hz"] < PROXIMITY_LIMIT_HZ:
            a["proximity_flag"] = True
            b["proximity_flag"] = True
    return windows, mag_db, baseline


def cmd_scan(cfg):
    sweep = dataio.parse_sweep_file(cfg.inputs[0])
    windows, mag_db, baseline = scan_windows(sweep, cfg.prominence_db)
    body = {
        "n_windows": len(windows),
        "prominence_db": cfg.prominence_db,
        "windows": windows,
    }
    plot_data = {"trace": (("frequency_hz", "s21_mag_db", "baseline_db"),
                           (sweep.frequency_hz, mag_db, baseline))}
    dataio.write_report(_out_path(cfg, "scan_report.json"), "scan", body,
                        inputs=[dataio.provenance(sweep)],
                        design_constants=cfg.design_constants,
                        plot_data=plot_data)
    print(f"scan: {len(windows)} windows -> {_out_path(cfg, 'scan_report.json')}")
    return 0


# ----------------------------------------------------------------- fit

def parse_windows_arg(windows_arg):
    """Windows from a scan report path or an explicit 'lo:hi,lo:hi' string."""
    if os.path.exists(windows_arg):
        doc = dataio.read_report(windows_arg)
        try:
            return [(w["f_lo_hz"], w["f_hi_hz"]) for w in doc["body"]["windows"]]
        except (KeyError, TypeError):
            raise DataError(f"{windows_arg}: not a scan report with windows") from None
    spans = []
    for part in windows_arg.split(","):
        lo, sep, hi = part.partition(":")
        if not sep:
            raise DataError(f"window '{part}' must be lo:hi in Hz")
        spans.append((float(lo), float(hi)))
    return spans


def slice_sweep(sweep, f_lo, f_hi, label):
    mask = (sweep.frequency_hz >= f_lo) & (sweep.frequency_hz <= f_hi)
    if int(mask.sum()) < 32:
        raise DataError(f"window {label} [{f_lo:.6g}, {f_hi:.6g}] Hz holds only "
                        f"{int(mask.sum())} points, need >= 32")
    return replace(sweep,
                   frequency_hz=sweep.frequency_hz[mask].copy(),
                   s21=sweep.s21[mask].copy(),
                   source=f"{sweep.source or '<sweep>'}[{label}]")


def cmd_fit(cfg):
    items = []  # (sort_key, label, sweep)
    if cfg.windows:
        if len(cfg.inputs) != 1:
            raise DataError("--windows applies to exactly one wideband file")
        sweep = dataio.parse_sweep_file(cfg.inputs[0])
        for k, (lo, hi) in enumerate(parse_windows_arg(cfg.windows)):
            label = f"w{k}"
            try:
                sub = slice_sweep(sweep, lo, hi, label)
                items.append(((sub.resonator_id, lo), label, sub))
            except DataError as exc:
                items.append(((sweep.resonator_id, lo), label, exc))
    else:
        for path in cfg.inputs:
            sub = dataio.parse_sweep_file(path)
            items.append(((sub.resonator_id, float(sub.frequency_hz[0])),
                          str(path), sub))
    items.sort(key=lambda it: it[0])

    def run(item):
        _, label, sweep_or_exc = item
        if isinstance(sweep_or_exc, Exception):
            return label, None, sweep_or_exc
        try:
            return label, sweep_or_exc, fit_resonance(sweep_or_exc)
        except CpwLossError as exc:
            return label, sweep_or_exc, exc

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(item) for item in items]

    fits, failures, plot_data, inputs = [], [], {}, []
    for idx, (label, sweep, outcome) in enumerate(results):
        if sweep is not None:
            inputs.append(dataio.provenance(sweep))
        if isinstance(outcome, Exception):
            failures.append({"item": label, "error": str(outcome)})
            continue
        entry = outcome.as_dict()
        entry["item"] = label
        entry["resonator_id"] = sweep.resonator_id
        entry["source"] = sweep.source
        fits.append(entry)
        model = notch_model(sweep.frequency_hz, outcome.fr, outcome.Ql,
                            outcome.Qc_mag, outcome.phi, outcome.a,
                            outcome.alpha, outcome.tau)
        stem = os.path.splitext(os.path.basename(label))[0]
        safe = "".join(c if c.isalnum() else "_" for c in stem)
        plot_data[f"data_{idx}_{safe}"] = (
            ("frequency_hz", "s21_real", "s21_imag", "model_real", "model_imag"),
            (sweep.frequency_hz, sweep.s21.real, sweep.s21.imag,
             model.real, model.imag))
    body = {"n_fits": len(fits), "n_failures": len(failures),
            "fits": fits, "failures": failures}
    dataio.write_report(_out_path(cfg, "fit_report.json"), "resonance_fit",
                        body, inputs=inputs,
                        design_constants=cfg.design_constants,
                        plot_data=plot_data)
    print(f"fit: {len(fits)} ok, {len(failures)} failed "
          f"-> {_out_path(cfg, 'fit_report.json')}")
    if failures:
        for failure in failures:
            print(f"fit: {failure['item']}: {failure['error']}", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------- power

def cmd_power(cfg):
    sweeps = [dataio.parse_sweep_file(path) for path in cfg.inputs]
    points, diagnostics = tlsloss.assemble_series(sweeps, cfg.attenuation_db)
    fit = tlsloss.fit_tls(points)
    n = np.array([p.n_photon for p in points])
    delta = np.array([p.delta for p in points])
    sigma = np.array([p.sigma_delta if p.sigma_delta else np.nan for p in points])
    n_grid = np.geomspace(n.min(), n.max(), 200)
    curve = tlsloss.eval_tls_model(n_grid, fit.delta_tls, fit.n_c,
                                   fit.beta, fit.delta_hp)
    process = next((s.process for s in sweeps if s.process is not None), None)
    body = {
        "resonator_id": sweeps[0].resonator_id,
        "process": str(process) if process else None,
        "attenuation_db": cfg.attenuation_db if cfg.attenuation_db is not None
                          else sweeps[0].attenuation_db,
        "tls_fit": fit.as_dict(),
        "points": [{"n_photon": p.n_photon, "delta": p.delta,
                    "sigma_delta": p.sigma_delta, "source": p.source}
                   for p in points],
        "diagnostics": diagnostics,
    }
    plot_data = {
        "loss_vs_n": (("n_photon", "delta", "sigma_delta"), (n, delta, sigma)),
        "model_curve": (("n_photon", "delta_model"), (n_grid, curve)),
    }
    dataio.write_report(_out_path(cfg, "tls_report.json"), "tls_fit", body,
                        inputs=[dataio.provenance(s) for s in sweeps],
                        design_constants=cfg.design_constants,
                        plot_data=plot_data)
    print(f"power: delta_tls={fit.delta_tls:.4g} n_c={fit.n_c:.4g} "
          f"beta={fit.beta:.3f} -> {_out_path(cfg, 'tls_report.json')}")
    if diagnostics:
        for diag in diagnostics:
            print(f"power: {diag}", file=sys.stderr)
        return 1
    return 0


# -------------------------------------------------------------- budget

def _row_dict(row):
    return {"trench_nm": row.trench_nm, "p_sa": row.p_sa, "p_ma": row.p_ma,
            "p_ms": row.p_ms, "p_si": row.p_si}


def cmd_budget(cfg):
    if (cfg.losses is None) == (cfg.decompose is None):
        raise DataError("budget needs exactly one of --losses FILE (forward) "
                        "or --decompose FILE")
    table = lossbudget.load_table(cfg.table) if cfg.table \
        else lossbudget.load_builtin_table()

    if cfg.losses is not None:
        if cfg.trench_nm is None:
            raise DataError("forward budget needs --trench-nm")
        values = parse_config_file(cfg.losses)
        expected = set(lossbudget.LOSS_NAMES)
        given = set(values)
        if given != expected:
            raise DataError(f"{cfg.losses}: expected keys "
                            f"{sorted(expected)}, got {sorted(given)}")
        losses = lossbudget.InterfaceLosses(**{k: float(v)
                                               for k, v in values.items()})
        row = lossbudget.interpolate(table, cfg.trench_nm)
        delta = lossbudget.forward_loss(row, losses)
        body = {
            "mode": "forward",
            "trench_nm": cfg.trench_nm,
            "participation": _row_dict(row),
            "losses": {name: getattr(losses, name)
                       for name in lossbudget.LOSS_NAMES},
            "delta_tls": dataio.qty(delta),
        }
        dataio.write_report(_out_path(cfg, "budget_report.json"), "loss_budget",
                            body, design_constants=cfg.design_constants)
        print(f"budget: forward delta_tls={delta:.6g} "
              f"-> {_out_path(cfg, 'budget_report.json')}")
        return 0

    header, names, rows = dataio.read_rows(cfg.decompose)
    want_sigma = names is not None and "sigma" in names
    cols = ("trench_nm", "delta", "sigma") if want_sigma else ("trench_nm", "delta")
    parsed = dataio.float_columns(cfg.decompose, names, rows, cols)
    trench, deltas = parsed[0], parsed[1]
    sigmas = parsed[2] if want_sigma else None
    prows = [lossbudget.interpolate(table, t) for t in trench]
    result = lossbudget.decompose(prows, deltas, sigmas)
    body = {
        "mode": "decompose",
        "rows": [_row_dict(r) for r in prows],
        "deltas": list(deltas),
        "result": result.as_dict(),
    }
    dataio.write_report(_out_path(cfg, "budget_report.json"), "loss_budget",
                        body, design_constants=cfg.design_constants)
    flagged = f", unresolved: {', '.join(result.unresolved)}" if result.unresolved else ""
    print(f"budget: decomposed rank {result.rank}{flagged} "
          f"-> {_out_path(cfg, 'budget_report.json')}")
    return 0


# ----------------------------------------------------------------- xrd

def cmd_xrd(cfg):
    scan = dataio.parse_xrd_file(cfg.inputs[0])
    if cfg.windows:
        windows = []
        for part in cfg.windows.split(","):
            lo, sep, hi = part.partition(":")
            if not sep:
                raise DataError(f"xrd window '{part}' must be lo:hi in degrees")
            windows.append((float(lo), float(hi)))
    else:
        windows = list(filmchar.DEFAULT_XRD_WINDOWS)
    peaks, diagnostics, plot_data = [], [], {}
    for k, window in enumerate(windows):
        try:
            peak = filmchar.fit_peaks(scan, [window])[0]
        except FitError as exc:
            diagnostics.append(str(exc))
            continue
        peaks.append(peak)
        lo, hi = window
        mask = (scan.two_theta_deg >= lo) & (scan.two_theta_deg <= hi)
        x = scan.two_theta_deg[mask]
        model = filmchar.pseudo_voigt(x, peak.center, peak.fwhm, peak.amplitude,
                                      peak.eta, peak.baseline_intercept,
                                      peak.baseline_slope)
        plot_data[f"window_{k}"] = (("two_theta_deg", "counts", "model"),
                                    (x, scan.counts[mask], model))
    orientation = filmchar.classify_orientation(peaks)
    body = {
        "windows": [[float(w[0]), float(w[1])] for w in windows],
        "peaks": [p.as_dict() for p in peaks],
        "orientation": orientation.as_dict(),
        "diagnostics": diagnostics,
    }
    in_111 = [p for p in peaks
              if filmchar.BAND_111[0] <= p.center <= filmchar.BAND_111[1]]
    in_200 = [p for p in peaks
              if filmchar.BAND_200[0] <= p.center <= filmchar.BAND_200[1]]
    if in_111 and in_200:
        body["grain_ratio_111_over_200"] = filmchar.scherrer_ratio(
            max(in_111, key=lambda p: p.amplitude),
            max(in_200, key=lambda p: p.amplitude))
    dataio.write_report(_out_path(cfg, "xrd_report.json"), "xrd", body,
                        inputs=[dataio.provenance(scan)],
                        design_constants=cfg.design_constants,
                        plot_data=plot_data)
    print(f"xrd: {len(peaks)} peaks, orientation {orientation.orientation} "
          f"-> {_out_path(cfg, 'xrd_report.json')}")
    return 0


# ----------------------------------------------------------------- rrr

def cmd_rrr(cfg):
    sweep = dataio.parse_rt_file(cfg.inputs[0])
    result = filmchar.extract_tc_rrr(sweep)
    body = {"tc_rrr": result.as_dict()}
    plot_data = {"rt": (("temperature_k", "resistance_ohm"),
                        (sweep.temperature_k, sweep.resistance_ohm))}
    dataio.write_report(_out_path(cfg, "rrr_report.json"), "tc_rrr", body,
                        inputs=[dataio.provenance(sweep)],
                        design_constants=cfg.design_constants,
                        plot_data=plot_data)
    tc_text = "none" if result.tc is None else f"{result.tc:.3f} K"
    print(f"rrr: tc={tc_text} rrr={result.rrr:.3f} "
          f"-> {_out_path(cfg, 'rrr_report.json')}")
    return 0


# --------------------------------------------------------------- sheet

def cmd_sheet(cfg):
    maps = dataio.parse_sheet_file(cfg.inputs[0])
    result = filmchar.sheet_stats(maps)
    body = {"sheet_stats": result.as_dict(), "n_wafers": len(maps)}
    if cfg.thickness_nm is not None:
        body["resistivity_uohm_cm"] = dataio.qty(
            filmchar.resistivity(result.batch_mean_ohm_sq, cfg.thickness_nm),
            unit="uohm_cm")
        body["thickness_nm"] = cfg.thickness_nm
    dataio.write_report(_out_path(cfg, "sheet_report.json"), "sheet", body,
                        inputs=[dataio.provenance(m) for m in maps],
                        design_constants=cfg.design_constants)
    print(f"sheet: {len(maps)} wafers, mean {result.batch_mean_ohm_sq:.3f} ohm/sq "
          f"-> {_out_path(cfg, 'sheet_report.json')}")
    return 0


# -------------------------------------------------------------- report

def cmd_report(cfg):
    root = cfg.inputs[0]
    if not os.path.isdir(root):
        raise DataError(f"{root}: report expects a directory of analysis reports")
    pairs, skipped = [], []
    for dirpath, _, names in sorted(os.walk(root)):
        for name in sorted(names):
            if not name.endswith(".json"):
                continue
            path = os.path.join(dirpath, name)
            try:
                doc = dataio.read_report(path)
            except CpwLossError:
                continue
            if doc.get("report_kind") != "tls_fit":
                continue
            process_text = doc.get("body", {}).get("process")
            if not process_text:
                skipped.append({"path": path, "reason": "no process key"})
                continue
            key = dataio.parse_process(process_text)
            pairs.append((key, doc["body"]["tls_fit"]["delta_lp"]))
    if not pairs:
        raise DataError(f"{root}: no TLS fit reports with process keys found "
                        f"({len(skipped)} skipped)")
    grouped = stats.group_by_process(pairs)
    body = {
        "metric": "delta_lp",
        "n_reports": len(pairs),
        "groups": grouped.as_dict(),
        "skipped": skipped,
    }
    dataio.write_report(_out_path(cfg, "group_report.json"), "process_groups",
                        body, design_constants=cfg.design_constants)
    print(f"report: {len(pairs)} fits in {len(grouped.by_key)} process groups "
          f"-> {_out_path(cfg, 'group_report.json')}")
    return 0


# --------------------------------------------------------------- synth

def _params_float(params, defaults):
    """Merge string params over float defaults, rejecting unknown keys."""
    out = dict(defaults)
    for key, value in params.items():
        if key not in defaults:
            raise DataError(f"unknown synth parameter '{key}'; valid: "
                            f"{', '.join(sorted(defaults))}")
        if isinstance(defaults[key], str):
            out[key] = value
        else:
            out[key] = float(value)
    return out


def _write_truth(cfg, truth):
    path = _out_path(cfg, "truth.json")
    with open(path, "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_synth(cfg):
    kind = cfg.kind
    seed = cfg.seed
    written = []
    if kind == "notch":
        p = _params_float(cfg.params, {
            "fr": 5.0e9, "ql": 8.0e4, "qc": 1.6e5, "phi": 0.05,
            "a": 0.9, "alpha": 0.4, "tau": 30e-9,
            "noise": 0.0, "npoints": 1001, "span_linewidths": 10.0,
        })
        freqs = default_frequencies(p["fr"], p["ql"], p["span_linewidths"],
                                    int(p["npoints"]))
        sweep = synthesize_notch(p["fr"], p["ql"], p["qc"], p["phi"],
                                 a=p["a"], alpha=p["alpha"], tau=p["tau"],
                                 frequencies=freqs, noise_sigma=p["noise"],
                                 seed=None if p["noise"] == 0 else seed,
                                 resonator_id="R0")
        path = _out_path(cfg, "notch.dat")
        dataio.write_sweep_file(path, sweep)
        truth = dict(p, kind="notch", seed=seed)
        written = [path, _write_truth(cfg, truth)]
    elif kind == "power_series":
        p = _params_float(cfg.params, {
            "fr": 5.2e9, "qc": 2.0e5, "phi": 0.02,
            "delta_tls": 4.0e-6, "n_c": 10.0, "beta": 0.35, "delta_hp": 4.0e-7,
            "attenuation_db": 60.0, "a": 1.0, "alpha": 0.0, "tau": 30e-9,
            "noise": 0.0, "npoints": 1001, "n_powers": 12,
            "power_start_dbm": -95.0, "power_step_db": 5.0,
            "resonator_id": "R0", "process": "",
        })
        powers = [p["power_start_dbm"] + k * p["power_step_db"]
                  for k in range(int(p["n_powers"]))]
        sweeps, truth = synth.synthesize_power_series(
            fr=p["fr"], qc_mag=p["qc"], phi=p["phi"],
            delta_tls=p["delta_tls"], n_c=p["n_c"], beta=p["beta"],
            delta_hp=p["delta_hp"], powers_dbm=powers,
            attenuation_db=p["attenuation_db"], a=p["a"], alpha=p["alpha"],
            tau=p["tau"], noise_sigma=p["noise"], seed=seed,
            resonator_id=p["resonator_id"], npoints=int(p["npoints"]))
        for k, sweep in enumerate(sweeps):
            if p["process"]:
                sweep = replace(sweep, process=dataio.parse_process(p["process"]))
            path = _out_path(cfg, f"power_{k:02d}.dat")
            dataio.write_sweep_file(path, sweep)
            written.append(path)
        written.append(_write_truth(cfg, truth))
    elif kind == "feedline":
        p = _params_float(cfg.params, {
            "n_res": 9, "f_start": 4.0e9, "spacing": 200e6,
            "a": 1.0, "alpha": 0.3, "tau": 40e-9,
            "noise": 0.0, "npoints": 72001,
        })
        resonators = synth.default_feedline_resonators(
            int(p["n_res"]), p["f_start"], p["spacing"])
        sweep, truth = synth.synthesize_feedline(
            resonators, npoints=int(p["npoints"]), a=p["a"], alpha=p["alpha"],
            tau=p["tau"], noise_sigma=p["noise"], seed=seed)
        path = _out_path(cfg, "feedline.dat")
        dataio.write_sweep_file(path, sweep)
        written = [path, _write_truth(cfg, truth)]
    elif kind == "rt":
        p = _params_float(cfg.params, {
            "tc": 4.7, "width": 0.2, "r_normal": 25.0, "rrr": 4.0,
            "t_min": 2.0, "noise": 0.0,
        })
        sweep, truth = synth.synthesize_rt(
            tc=p["tc"], width=p["width"], r_normal=p["r_normal"],
            rrr=p["rrr"], t_min=p["t_min"], noise_sigma=p["noise"], seed=seed)
        path = _out_path(cfg, "rt.dat")
        dataio.write_rt_file(path, sweep)
        written = [path, _write_truth(cfg, truth)]
    elif kind == "xrd":
        p = _params_float(cfg.params, {
            "peaks": "36.9:0.4:500:0.3", "b0": 50.0, "b1": 0.0,
            "lo": 30.0, "hi": 50.0, "step": 0.01, "noise": 0.0,
        })
        peaks = []
        for part in p["peaks"].split(","):
            fields = part.split(":")
            if len(fields) != 4:
                raise DataError(f"peak '{part}' must be center:fwhm:amplitude:eta")
            peaks.append(tuple(float(v) for v in fields))
        scan, truth = synth.synthesize_xrd(
            peaks, baseline=(p["b0"], p["b1"]), two_theta_lo=p["lo"],
            two_theta_hi=p["hi"], step=p["step"], noise_sigma=p["noise"],
            seed=seed)
        path = _out_path(cfg, "xrd.dat")
        dataio.write_xrd_file(path, scan)
        written = [path, _write_truth(cfg, truth)]
    else:
        raise DataError(f"unknown synth kind '{kind}'")
    print(f"synth {kind}: wrote {len(written)} files under {cfg.out_dir}")
    return 0


# ---------------------------------------------------------------- main

HANDLERS = {
    "scan": cmd_scan, "fit": cmd_fit, "power": cmd_power,
    "budget": cmd_budget, "xrd": cmd_xrd, "rrr": cmd_rrr,
    "sheet": cmd_sheet, "report": cmd_report, "synth": cmd_synth,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cpwloss",
        description="Resonator loss analysis: circle fits, TLS power sweeps, "
                    "loss budgets, and film characterization.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", dest="out", default=None,
                        help="output directory (default: current directory)")
    common.add_argument("--config",
                        help="key=value option file; flags override it")
    common.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--jobs", type=int, default=None,
                        help="worker threads for batch fits (default 1)")

    p = sub.add_parser("scan", parents=[common],
                       help="find resonance dips on a wideband trace")
    p.add_argument("inputs", nargs=1, metavar="SWEEP")
    p.add_argument("--prominence-db", dest="prominence_db", type=float,
                   default=None, help="dip depth threshold (default 3 dB)")

    p = sub.add_parser("fit", parents=[common], help="fit notch resonances")
    p.add_argument("inputs", nargs="+", metavar="SWEEP")
    p.add_argument("--windows", default=None,
                   help="scan report path or lo:hi,lo:hi windows in Hz")

    p = sub.add_parser("power", parents=[common],
                       help="TLS saturation fit over a power series")
    p.add_argument("inputs", nargs="+", metavar="SWEEP")
    p.add_argument("--attenuation-db", dest="attenuation_db", type=float,
                   default=None, help="input line attenuation in dB")

    p = sub.add_parser("budget", parents=[common],
                       help="interface loss budget (forward or decompose)")
    p.add_argument("--trench-nm", dest="trench_nm", type=float, default=None)
    p.add_argument("--losses", default=None,
                   help="key=value file with delta_sa/ma/ms/si (forward mode)")
    p.add_argument("--decompose", default=None,
                   help="columnar file trench_nm delta [sigma] (inverse mode)")
    p.add_argument("--table", default=None,
                   help="participation table file (default: bundled)")

    p = sub.add_parser("xrd", parents=[common],
                       help="pseudo-Voigt peak fits on a diffraction scan")
    p.add_argument("inputs", nargs=1, metavar="SCAN")
    p.add_argument("--windows", default=None,
                   help="lo:hi,lo:hi windows in degrees 2theta")

    p = sub.add_parser("rrr", parents=[common],
                       help="Tc and residual resistance ratio from R(T)")
    p.add_argument("inputs", nargs=1, metavar="RT")

    p = sub.add_parser("sheet", parents=[common],
                       help="sheet resistance uniformity statistics")
    p.add_argument("inputs", nargs=1, metavar="SHEET")
    p.add_argument("--thickness-nm", dest="thickness_nm", type=float,
                   default=None, help="film thickness for resistivity")

    p = sub.add_parser("report", parents=[common],
                       help="group TLS fit reports by fabrication process")
    p.add_argument("inputs", nargs=1, metavar="DIR")

    p = sub.add_parser("synth", parents=[common],
                       help="generate synthetic data with a truth sidecar")
    p.add_argument("kind", choices=["notch", "power_series", "xrd", "rt",
                                    "feedline"])
    p.add_argument("params", nargs="*", metavar="KEY=VALUE",
                   help="generator parameters, e.g. tc=4.7 "
                        "(place them directly after the kind, before flags)")

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return HANDLERS[args.command](cfg)
    except (CpwLossError, OSError) as exc:
        print(f"cpwloss {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

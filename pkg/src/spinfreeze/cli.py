"""Command-line entry point: ``spinfreeze {scales,scan,figure2,calibrate,fit}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(non-convergence, unusable data), 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, config as cfg, fitting, protocol, spectral
from .protocol import DecayCurve, Event, Sequence
from .specfun import find_first_peak
from .units import derive_scales, to_dimensionless

log = logging.getLogger("spinfreeze")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class InputError(OSError):
    """Unreadable or malformed input data."""


def _json(obj) -> str:
    return json.dumps(cfg.json_safe(obj), indent=2, sort_keys=True) + "\n"


class Outputs:
    """Collects output files in memory and writes them with a manifest at the end."""

    def __init__(self, rc: cfg.RunConfig, command: str):
        self.rc = rc
        self.command = command
        self.files: dict[str, str] = {}
        self.extra: dict = {}

    def add(self, name, text):
        self.files[name] = text

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        checksums = {}
        for name in sorted(self.files):
            data = self.files[name].encode("utf-8")
            (out / name).write_bytes(data)
            checksums[name] = hashlib.sha256(data).hexdigest()
        manifest = {
            "tool": "spinfreeze",
            "version": __version__,
            "command": self.command,
            "config_sha256": self.rc.hash,
            "config": self.rc.raw,
            "files": checksums,
            **self.extra,
        }
        (out / "manifest.json").write_text(_json(manifest), encoding="utf-8")
        return out


def _context(rc: cfg.RunConfig):
    scales = derive_scales(rc.physical)
    return scales, to_dimensionless(rc.physical, scales)


def _curve_file(curve: DecayCurve, stem: str, fmt: str):
    return (f"{stem}.{fmt}", curve.to_csv() if fmt == "csv" else curve.to_json())


def cmd_scales(rc: cfg.RunConfig, args) -> dict:
    s, dc = _context(rc)
    report = {
        "k0_rad_per_m": s.k0,
        "spin_wave_period_um": 2 * math.pi / s.k0 * 1e6,
        "v_t_m_per_s": s.v_t,
        "tau_us": s.tau * 1e6,
        "q_lattice_rad_per_m": s.q_lattice,
        "q_lattice_over_k0": dc.q_lattice,
        "gamma_per_s": rc.physical.gamma,
        "gamma_times_tau": dc.gamma,
    }
    if args.format == "json":
        sys.stdout.write(_json(report))
    else:
        print(f"k0          = {s.k0:.6e} rad/m")
        print(f"2*pi/k0     = {report['spin_wave_period_um']:.4f} um")
        print(f"v_t         = {s.v_t:.6e} m/s")
        print(f"tau         = {report['tau_us']:.4f} us")
        print(f"q_lattice   = {s.q_lattice:.6e} rad/m ({dc.q_lattice:.4f} k0)")
        print(f"gamma       = {rc.physical.gamma:.6e} 1/s (gamma*tau = {dc.gamma:.5f})")
    return report


def storage_times_s(rc: cfg.RunConfig) -> np.ndarray:
    sc = rc.scan
    if sc["times_us"]:
        t = np.array(sc["times_us"], dtype=float)
    else:
        if sc["n_points"] < 1:
            raise cfg.ConfigError("scan.n_points must be >= 1")
        t = np.linspace(0.0, sc["t_max_us"], sc["n_points"])
    if t.size == 0:
        raise cfg.ConfigError("scan produced an empty list of storage times")
    return t * 1e-6


def build_sequences(rc: cfg.RunConfig, q: float | None = None):
    s, dc = _context(rc)
    seq = rc.sequence
    common = dict(grid=rc.grid, gamma=dc.gamma, eta_acs=seq["eta_acs"],
                  timing_convention=seq["timing_convention"], time_unit_s=s.tau)
    unmod = protocol.unmodulated_sequence(**common)
    mod = protocol.extension_sequence(seq["q"] if q is None else q, rc.area,
                                      seq["pulse_duration"], seq["substeps"], **common)
    return unmod, mod


def _scan(template: Sequence, times_s, tau, threads, label):
    t = np.asarray(times_s) / tau
    t = t[t >= template.min_storage_time - 1e-12]
    if t.size == 0:
        raise cfg.ConfigError(f"no storage times fit the '{label}' sequence")
    return protocol.scan_storage(template, t, threads=threads, label=label)


def cmd_scan(rc: cfg.RunConfig, args) -> Outputs:
    s, dc = _context(rc)
    times = storage_times_s(rc)
    fmt = args.format
    unmod, mod = build_sequences(rc)
    out = Outputs(rc, "scan")

    curve_un = _scan(unmod, times, s.tau, args.threads, "unmodulated")
    curve_mod = _scan(mod, times, s.tau, args.threads, f"modulated q={rc.sequence['q']:g}k0")
    out.add(*_curve_file(curve_un, "unmodulated", fmt))
    out.add(*_curve_file(curve_mod, "modulated", fmt))
    for q in rc.scan["q_family"]:
        _, seq_q = build_sequences(rc, q)
        curve = _scan(seq_q, times, s.tau, args.threads, f"modulated q={q:g}k0")
        out.add(*_curve_file(curve, f"modulated_q{q:.3f}", fmt))
    limit = protocol.theoretical_limit(times, rc.physical.gamma)
    out.add(*_curve_file(limit, "theoretical_limit", fmt))

    w_un = [x * 1e-6 for x in rc.scan["unmodulated_window_us"]]
    w_mod = [x * 1e-6 for x in rc.scan["modulated_window_us"]]
    fit_un = fitting.fit_gaussian_decay(curve_un, w_un, rc.scan["with_offset"])
    fit_mod = fitting.fit_gaussian_decay(curve_mod, w_mod, rc.scan["with_offset"])
    ratio = fit_mod.params["tau"] / fit_un.params["tau"]
    out.add("fits.json", _json({"unmodulated": fit_un.to_dict(), "modulated": fit_mod.to_dict(),
                                "lifetime_ratio": ratio}))
    out.extra = {"tau_s": s.tau, "lifetime_ratio": ratio}
    print(f"tau_un = {fit_un.params['tau'] * 1e6:.3f} us, tau_mod = "
          f"{fit_mod.params['tau'] * 1e6:.3f} us, ratio = {ratio:.2f}")
    return out


def figure2_sequence(rc: cfg.RunConfig) -> Sequence:
    s, dc = _context(rc)
    seq, f2 = rc.sequence, rc.figure2
    pulse = Event.modulate(seq["q"], rc.area, seq["pulse_duration"], seq["substeps"])
    events = [Event.store(), pulse, Event.wait(f2["delay"]), pulse]
    if f2["after"] > 0:
        events.append(Event.wait(f2["after"]))
    events.append(Event.readout())
    return Sequence(events, gamma=dc.gamma, grid=rc.grid, eta_acs=seq["eta_acs"],
                    time_unit_s=s.tau)


def cmd_figure2(rc: cfg.RunConfig, args) -> Outputs:
    seq = figure2_sequence(rc)
    k_max = rc.figure2["k_max"]
    fmap = spectral.build_fourier_map(seq, rc.figure2["sampling"])
    out = Outputs(rc, "figure2")
    out.add("fourier_map.csv", fmap.to_long_csv(k_max))
    out.add("fourier_map_matrix.csv", fmap.to_matrix_csv(k_max))

    profiles = spectral.marker_profiles(seq)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = sorted(profiles, key=["I", "II", "III", "IV"].index)
    w.writerow(["z_k0"] + [f"re_rho_{lab}" for lab in labels])
    z = rc.grid.z
    for i in range(z.size):
        w.writerow([repr(float(z[i]))] + [repr(float(profiles[lab][1][i].real)) for lab in labels])
    out.add("profiles.csv", buf.getvalue())
    out.extra = {"markers": {k: float(v) for k, v in fmap.markers.items()},
                 "time_unit": "tau", "wavenumber_unit": "k0"}
    print(f"fourier map: {len(fmap.times)} samples, markers "
          + ", ".join(f"{k}@{v:.2f}" for k, v in fmap.markers.items()))
    return out


def calibration_curve(rc: cfg.RunConfig, threads: int = 1):
    """Simulated pulse-length calibration: intensity versus pulse duration (s)."""
    s, dc = _context(rc)
    cal = rc.calibrate
    rate_phys = find_first_peak(2).x_peak / (cal["tau_opt_us"] * 1e-6)
    rate = rate_phys * s.tau
    ts = cal["storage_time_us"] * 1e-6 / s.tau
    if cal["max_duration_us"] > cal["storage_time_us"]:
        raise cfg.ConfigError("calibrate.max_duration_us exceeds calibrate.storage_time_us")
    durations = np.linspace(0.0, cal["max_duration_us"] * 1e-6, cal["n_points"])

    def point(d):
        seq = protocol.calibration_sequence(rc.sequence["q"], rate, d / s.tau, ts,
                                            cal["substeps"], grid=rc.grid, gamma=dc.gamma,
                                            eta_acs=1.0)
        return protocol.run_sequence(seq).intensity

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(point, durations))
    else:
        values = [point(d) for d in durations]
    return DecayCurve(durations, np.array(values), label="calibration"), rate_phys


def cmd_calibrate(rc: cfg.RunConfig, args) -> Outputs:
    curve, rate_phys = calibration_curve(rc, args.threads)
    res = fitting.fit_bessel0(curve, with_offset=rc.calibrate["with_offset"])
    out = Outputs(rc, "calibrate")
    out.add(*_curve_file(curve, "calibration_curve", args.format))
    report = res.to_dict()
    report["configured_rate"] = rate_phys
    report["rate_relative_error"] = res.rate / rate_phys - 1.0
    out.add("calibration.json", _json(report))
    print(f"rate = {res.rate:.6e} rad/s (configured {rate_phys:.6e}), "
          f"tau_opt = {res.tau_opt * 1e6:.4f} us")
    return out


def cmd_fit(rc: cfg.RunConfig, args) -> Outputs:
    if args.data is None:
        raise cfg.ConfigError("fit needs --data PATH")
    try:
        curve = fitting.load_experimental_csv(args.data)
    except (FileNotFoundError, fitting.FitError) as exc:
        raise InputError(str(exc)) from exc
    f = rc.fit
    out = Outputs(rc, "fit")
    if f["model"] == "gaussian_decay":
        res = fitting.fit_gaussian_decay(curve, [x * 1e-6 for x in f["window_us"]], f["with_offset"])
        print(f"tau = {res.params['tau'] * 1e6:.4f} +- {res.stderr['tau'] * 1e6:.4f} us")
        out.add("fit.json", _json(res.to_dict()))
    else:
        cal = fitting.fit_bessel0(curve, with_offset=f["with_offset"])
        print(f"rate = {cal.rate:.6e} rad/s, tau_opt = {cal.tau_opt * 1e6:.4f} us")
        out.add("fit.json", _json(cal.to_dict()))
    out.extra = {"data_sha256": hashlib.sha256(Path(args.data).read_bytes()).hexdigest()}
    return out


COMMANDS = {
    "scales": cmd_scales,
    "scan": cmd_scan,
    "figure2": cmd_figure2,
    "calibrate": cmd_calibrate,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinfreeze", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spinfreeze {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config scalar")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "fit":
            p.add_argument("--data", type=Path, help="CSV file to fit")
    sub.add_parser("defaults", help="print the default configuration as TOML")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "defaults":
        sys.stdout.write(cfg.dump_defaults())
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = cfg.load(args.config, args.overrides)
        if args.format is None:
            args.format = rc.raw["outputs"]["format"]
        if args.threads < 1:
            raise cfg.ConfigError("--threads must be >= 1")
        result = COMMANDS[args.command](rc, args)
        if isinstance(result, Outputs):
            path = result.write(args.out)
            log.info("wrote %d files to %s", len(result.files) + 1, path)
    except cfg.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (fitting.ConvergenceError, fitting.FitError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

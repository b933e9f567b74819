"""Command-line harness.

    python -m mpqcc simulate --seed 7 --out run/ --frames 500 --p_nu=0.5
    python -m mpqcc analyze --out run/
    python -m mpqcc sweep --out sweep/ --loss-min 40 --loss-max 70
    python -m mpqcc calibrate-signs --out cal/ --flips=+-+ --p_mu=0 --p_nu=1
    python -m mpqcc pairing-demo --out demo/

Any ``--<config key>=value`` overrides the config file, which overrides the defaults.
Every CSV ends with a ``# manifest_sha256=...`` line identifying the run.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import analytic
from .optics import click_records, dump_clicks, substream
from .pairing import coincidence_count, pair_indices, read_sifted_csv, tally, write_sifted_csv
from .phase import CalibrationError, SignConvention, write_phase_log
from .pipeline import analyze, simulate
from .security import DecoyError
from .types import ConfigError, SystemConfig, apply_overrides, load_config, validate_config

log = logging.getLogger("mpqcc")

EXIT_OK, EXIT_CONFIG, EXIT_LP, EXIT_IO = 0, 2, 3, 4
MODES = ("simulate", "analyze", "sweep", "calibrate-signs", "pairing-demo")
STREAM_DEMO = 9


class Manifest:
    """Config snapshot plus everything else that determines the outputs."""

    def __init__(self, mode: str, cfg: SystemConfig, seed: int, out: Path, params: dict):
        self.mode, self.cfg, self.seed, self.out, self.params = mode, cfg, seed, out, params

    def as_dict(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, "config": asdict(self.cfg), "params": self.params}

    @property
    def sha256(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def trailer(self) -> str:
        return f"manifest_sha256={self.sha256}"

    def write(self) -> None:
        (self.out / "manifest.json").write_text(json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n",
                                                encoding="utf-8")


def write_csv(path: Path, header, rows, manifest: Manifest) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
        fh.write(f"# {manifest.trailer}\n")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("QCC_THREADS", "1")))
    except ValueError:
        return 1


def _summary_rows(summary, acc) -> list[list]:
    b = summary.bounds
    return [["n_quantum", acc.n_quantum], ["n_trials", f"{acc.n_trials:.6e}"],
            ["s_Z_mu3", acc.s_Z_mu3], ["E_Z_AB", f"{acc.E_Z_AB:.6f}"], ["E_Z_AC", f"{acc.E_Z_AC:.6f}"],
            ["x_error", f"{acc.x_error_rate():.6f}"], ["y111_lower", f"{b.y111_lower:.6e}"],
            ["s111_lower", f"{b.s111_lower:.6e}"], ["e111ph_upper", f"{b.e111ph_upper:.6f}"],
            ["key_length", f"{summary.key_length:.6e}"], ["rate_per_pulse", f"{summary.rate_per_pulse:.6e}"],
            ["rate_bits_per_s", f"{summary.rate_bits_per_s:.6e}"]]


def _gain_rows(acc) -> list[list]:
    return [["|".join(combo), f"{count:.6g}", f"{trials:.6e}"] for combo, (count, trials) in sorted(acc.gains.items())]


def cmd_simulate(args, cfg: SystemConfig, manifest: Manifest) -> int:
    flips = _parse_flips(args.flips)
    res = simulate(cfg, args.frames, args.seed, flips=flips,
                   convention=None if args.calibrate else SignConvention(flips),
                   compensation=not args.no_compensation)
    out = manifest.out
    write_sifted_csv(out / "sifted.csv", res.batch, res.theta_total, manifest.trailer)
    write_phase_log(out / "phase_log.csv", res.run.ref_counts, res.theta_hat, res.flags, manifest.trailer)
    dump_clicks(out / "clicks.bin", click_records(res.run.click_slots, res.run.click_sides))
    acc = res.accounting()
    (out / "run.json").write_text(json.dumps({"n_quantum": acc.n_quantum, "n_trials": acc.n_trials}) + "\n",
                                  encoding="utf-8")
    write_csv(out / "gains.csv", ["combo", "count", "trials"], _gain_rows(acc), manifest)
    summary = analyze(acc, cfg)
    rows = _summary_rows(summary, acc) + [["convention", res.convention.label()], ["triples", len(res.batch)]]
    write_csv(out / "summary.csv", ["quantity", "value"], rows, manifest)
    print(f"triples={len(res.batch)} key_length={summary.key_length:.4g} rate_per_pulse={summary.rate_per_pulse:.4g}")
    return EXIT_OK


def cmd_analyze(args, cfg: SystemConfig, manifest: Manifest) -> int:
    src = Path(args.input) if args.input else manifest.out / "sifted.csv"
    meta_path = src.parent / "run.json"
    batch, theta = read_sifted_csv(src)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    acc = tally(batch, theta, meta["n_quantum"], cfg, meta["n_trials"])
    summary = analyze(acc, cfg)
    write_csv(manifest.out / "analysis.csv", ["quantity", "value"], _summary_rows(summary, acc), manifest)
    print(f"key_length={summary.key_length:.4g} rate_per_pulse={summary.rate_per_pulse:.4g}")
    return EXIT_OK


def _sweep_point(job):
    cfg, loss, n_total = job
    return analytic.analytic_point(cfg, loss, n_total)


def cmd_sweep(args, cfg: SystemConfig, manifest: Manifest) -> int:
    losses = np.round(np.arange(args.loss_min, args.loss_max + 1e-9, args.loss_step), 6)
    jobs = [(cfg, float(x), args.n_total) for x in losses]
    n = min(threads(), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(n) as pool:
            points = list(pool.map(_sweep_point, jobs))
    else:
        points = [_sweep_point(j) for j in jobs]
    write_csv(manifest.out / "sweep.csv", analytic.SWEEP_COLUMNS, analytic.sweep_rows(points), manifest)
    print(f"points={len(points)} slope={analytic.slope(points):.3f} "
          f"coincidence_slope={analytic.slope(points, coincidence=True):.3f}")
    return EXIT_OK


def cmd_calibrate(args, cfg: SystemConfig, manifest: Manifest) -> int:
    flips = _parse_flips(args.flips)
    res = simulate(cfg, args.frames, args.seed, flips=flips, convention=None)
    table = res.sign_table()
    rows = []
    for conv in SignConvention.all():
        e, k = table[conv]
        rows.append([conv.label(), e, k, f"{e / k:.6f}" if k else "", int(conv == res.convention)])
    write_csv(manifest.out / "sign_table.csv", ["convention", "errors", "kept", "x_error", "chosen"], rows, manifest)
    print(f"chosen={res.convention.label()} injected={SignConvention(flips).label()}")
    return EXIT_OK


def cmd_pairing_demo(args, cfg: SystemConfig, manifest: Manifest) -> int:
    rows = []
    for i, p in enumerate(args.p_click):
        rng = substream(args.seed, STREAM_DEMO, i)
        streams = [np.flatnonzero(rng.random(args.slots) < p) for _ in range(3)]
        total = sum(len(s) for s in streams)
        coinc = coincidence_count(*streams)
        for w in args.windows:
            paired = 3 * len(pair_indices(*streams, w))
            rows.append([p, w, args.slots, total, paired, 3 * coinc])
    write_csv(manifest.out / "pairing_demo.csv",
              ["p_click", "window_slots", "slots", "total_clicks", "paired_clicks", "coincidence_clicks"],
              rows, manifest)
    print(f"rows={len(rows)}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "sweep": cmd_sweep,
            "calibrate-signs": cmd_calibrate, "pairing-demo": cmd_pairing_demo}


def _parse_flips(text: str) -> tuple[bool, bool, bool]:
    if len(text) != 3 or set(text) - {"+", "-"}:
        raise ConfigError([f"--flips expects three of '+'/'-', got {text!r}"])
    return tuple(ch == "-" for ch in text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, default=0, help="64-bit run seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--total-loss", type=float, help="set per-arm transmittance from total loss (dB)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mpqcc", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="mode", required=True)
    s = sub.add_parser("simulate", parents=[common], help="full Monte Carlo pipeline")
    s.add_argument("--frames", type=int, default=200)
    s.add_argument("--flips", default="+++", help="injected marker sign flips per port")
    s.add_argument("--calibrate", action="store_true", help="calibrate the sign convention from X events")
    s.add_argument("--no-compensation", action="store_true")
    a = sub.add_parser("analyze", parents=[common], help="security analysis of a stored sifted CSV")
    a.add_argument("--input", help="sifted CSV (default OUT/sifted.csv)")
    w = sub.add_parser("sweep", parents=[common], help="analytic key rate versus loss")
    w.add_argument("--loss-min", type=float, default=40.0)
    w.add_argument("--loss-max", type=float, default=70.0)
    w.add_argument("--loss-step", type=float, default=2.5)
    w.add_argument("--n-total", type=float, default=analytic.N_TOTAL_DEFAULT)
    c = sub.add_parser("calibrate-signs", parents=[common], help="X error of all eight sign conventions")
    c.add_argument("--frames", type=int, default=500)
    c.add_argument("--flips", default="+++")
    d = sub.add_parser("pairing-demo", parents=[common], help="paired vs coincidence counts")
    d.add_argument("--p-click", type=float, nargs="+", default=[1e-2, 1e-3])
    d.add_argument("--windows", type=int, nargs="+", default=[100, 1000, 10000, 100000])
    d.add_argument("--slots", type=int, default=10**6)
    return p


def _split_overrides(extra: list[str]) -> dict[str, str]:
    overrides = {}
    for item in extra:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError([f"unrecognised argument {item!r}"])
        key, value = item[2:].split("=", 1)
        overrides[key.replace("-", "_")] = value
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else SystemConfig()
        if args.total_loss is not None:
            cfg = cfg.with_total_loss(args.total_loss)
        cfg = validate_config(apply_overrides(cfg, _split_overrides(extra)))
        if not 0 <= args.seed < 2**64:
            raise ConfigError([f"seed must be a 64-bit unsigned integer, got {args.seed}"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    out = Path(args.out)
    params = {k: v for k, v in vars(args).items() if k not in ("config", "seed", "out", "mode", "verbose")}
    manifest = Manifest(args.mode, cfg, args.seed, out, params)
    try:
        out.mkdir(parents=True, exist_ok=True)
        manifest.write()
        return COMMANDS[args.mode](args, cfg, manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DecoyError, CalibrationError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_LP
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line front-end.

Four subcommands cover the artifact's workflows:

``simulate``
    End-to-end key generation from a scenario file, optionally swept
    over beacon powers; emits per-node key files, a stats CSV and a
    rate figure.
``bounds``
    Monte-Carlo key-rate bounds over the same sweep; emits a CSV and a
    figure.
``experiment``
    The recorded-trace pipeline: key files, a stats CSV and a
    randomness report.
``randomness-test``
    The statistical battery applied to a stored key file.

Every CSV row carries the scenario id, the seed and the package
version.  Exit codes: 0 success, 1 secure refusal (no key emitted),
2 usage or configuration error.
"""

import argparse
import csv
import json
import os
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .amplification import HashField
from .bounds import key_rate_bounds
from .config import ConfigError, ScenarioConfig, load_config
from .pipeline import KeyGenResult, run_key_generation
from .plots import plot_bounds_sweep, plot_rate_sweep
from .randomness import TestReport, run_tests
from .reconciliation import BitSequence
from .trace import read_trace_csv, run_trace_pipeline

__all__ = ["main", "read_key_file", "write_key_file"]


# ---------------------------------------------------------------------------
# key files: one JSON header line, then the packed key bits


def write_key_file(path: str, key: BitSequence, header: Dict) -> None:
    """Store a key as a sorted single-line JSON header plus packed bits.

    Sorting the header keys and packing most-significant-bit first keep
    the file byte-exact for a given (key, header) pair.
    """
    payload = dict(header)
    payload["bits"] = len(key)
    payload["version"] = __version__
    line = json.dumps(payload, sort_keys=True, separators=(", ", ": "))
    with open(path, "wb") as fh:
        fh.write(line.encode("ascii") + b"\n")
        fh.write(key.to_bytes())


def read_key_file(path: str) -> Tuple[Dict, BitSequence]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        key = BitSequence.from_bytes(fh.read(), int(header["bits"]))
    return header, key


def _key_header(result: KeyGenResult) -> Dict:
    field = HashField(len(result.compressed.bits))
    return {
        "n": result.n_slots,
        "m": result.m_bits,
        "alpha": result.alpha,
        "rate": result.rate,
        "degree": field.degree,
        "poly_tail": field.tail,
        "hash_seed": result.hash_seed.to_bytes().hex(),
    }


# ---------------------------------------------------------------------------
# CSV plumbing


def _write_csv(path: str, fieldnames: List[str], rows: List[Dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _fmt(x) -> object:
    if x is None:
        return ""
    if isinstance(x, float):
        return "%.10g" % x
    return x


def _randomness_rows(report: TestReport, scenario_id: str, seed) -> List[Dict]:
    rows = []
    for r in report.results:
        rows.append({
            "scenario": scenario_id,
            "seed": _fmt(seed),
            "version": __version__,
            "test": r.name,
            "n": r.n_used,
            "p_value": _fmt(r.p_value),
            "passed": "" if r.passed is None else str(r.passed).lower(),
            "applicable": str(r.applicable).lower(),
        })
    return rows


_RAND_FIELDS = ["scenario", "seed", "version", "test", "n", "p_value",
                "passed", "applicable"]


def _print_randomness(report: TestReport) -> None:
    print("%-18s %10s  %s" % ("test", "p-value", "verdict"))
    for r in report.results:
        if not r.applicable:
            verdict, p = "not applicable", ""
        else:
            verdict = "pass" if r.passed else "FAIL"
            p = "%.4f" % r.p_value
        print("%-18s %10s  %s" % (r.name, p, verdict))


# ---------------------------------------------------------------------------
# subcommands


def _prefix(out_dir: str, scenario_id: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, scenario_id)


def cmd_simulate(cfg: ScenarioConfig, out_dir: str) -> int:
    prefix = _prefix(out_dir, cfg.scenario_id)
    powers = cfg.powers
    rows, rates, skips = [], [], []
    emitted = 0
    for j, p in enumerate(powers):
        rng = np.random.default_rng([cfg.seed, j])
        result = run_key_generation(
            cfg.scenario.with_power(p), rng, n=cfg.n, delta=cfg.delta,
            m_bits=cfg.m_bits, cascade_cfg=cfg.cascade,
            use_viterbi=cfg.use_viterbi, viterbi_cap=cfg.viterbi_state_cap,
        )
        rows.append({
            "scenario": cfg.scenario_id, "seed": cfg.seed, "version": __version__,
            "power": _fmt(p), "n_slots": result.n_slots,
            "transmitted": result.n_transmitted, "m_bits": result.m_bits,
            "bmr_12": _fmt(result.bmr_12), "bmr_e": _fmt(result.bmr_e),
            "residual_bmr": _fmt(result.residual_bmr),
            "t_per_direction": result.t_per_direction, "alpha": _fmt(result.alpha),
            "rate": _fmt(result.rate), "out_len": result.out_len,
            "skip_fraction": _fmt(result.skip_fraction),
            "key_match": str(result.key_match).lower(),
            "failed": str(result.failed).lower(), "reason": result.reason,
        })
        rates.append(result.rate)
        skips.append(result.skip_fraction)
        if not result.failed:
            emitted += 1
            header = _key_header(result)
            tag = "" if len(powers) == 1 else "_p%d" % j
            write_key_file("%s%s_node1.key" % (prefix, tag), result.key1.bits, header)
            write_key_file("%s%s_node2.key" % (prefix, tag), result.key2.bits, header)
    _write_csv(prefix + "_rates.csv", list(rows[0].keys()), rows)
    plot_rate_sweep(powers, rates, prefix + "_rates.png", skips)
    print("wrote %s_rates.csv (%d sweep points, %d keys emitted)"
          % (prefix, len(powers), emitted))
    if emitted == 0:
        print("no key emitted at any sweep point", file=sys.stderr)
        return 1
    return 0


def cmd_bounds(cfg: ScenarioConfig, out_dir: str) -> int:
    prefix = _prefix(out_dir, cfg.scenario_id)
    powers = cfg.powers
    rows, results = [], []
    for j, p in enumerate(powers):
        rng = np.random.default_rng([cfg.seed, j])
        rb = key_rate_bounds(cfg.scenario.with_power(p), n=cfg.bounds_n,
                             trials=cfg.bounds_trials, rng=rng)
        results.append(rb)
        rows.append({
            "scenario": cfg.scenario_id, "seed": cfg.seed, "version": __version__,
            "power": _fmt(p), "n": rb.n, "trials": cfg.bounds_trials,
            "lower": _fmt(rb.lower), "lower_stderr": _fmt(rb.lower_stderr),
            "upper": _fmt(rb.upper), "upper_stderr": _fmt(rb.upper_stderr),
            "i12": _fmt(rb.i12), "i12_stderr": _fmt(rb.i12_stderr),
            "i1e": _fmt(rb.i1e), "i1e_stderr": _fmt(rb.i1e_stderr),
            "i2e": _fmt(rb.i2e), "i2e_stderr": _fmt(rb.i2e_stderr),
            "i12_given_e": _fmt(rb.i12_given_e),
            "i12_given_e_stderr": _fmt(rb.i12_given_e_stderr),
            "skip_fraction": _fmt(rb.skip_fraction),
        })
    _write_csv(prefix + "_bounds.csv", list(rows[0].keys()), rows)
    plot_bounds_sweep(powers, results, prefix + "_bounds.png")
    print("wrote %s_bounds.csv (%d sweep points)" % (prefix, len(powers)))
    return 0


def cmd_experiment(cfg: ScenarioConfig, trace_path: str, out_dir: str) -> int:
    prefix = _prefix(out_dir, cfg.scenario_id)
    trace = read_trace_csv(trace_path)
    rng = np.random.default_rng(cfg.seed)
    result = run_trace_pipeline(trace, cfg.trace, rng)
    row = {
        "scenario": cfg.scenario_id, "seed": cfg.seed, "version": __version__,
        "n_slots": result.n_slots, "dropped": result.dropped,
        "clamped": result.clamped, "bmr_12": _fmt(result.bmr_12),
        "bmr_e": _fmt(result.bmr_e), "residual_bmr": _fmt(result.residual_bmr),
        "t_per_direction": result.t_per_direction, "alpha": _fmt(result.alpha),
        "rate": _fmt(result.rate), "out_len": result.out_len,
        "key_match": str(result.key_match).lower(),
        "failed": str(result.failed).lower(), "reason": result.reason,
    }
    _write_csv(prefix + "_experiment.csv", list(row.keys()), [row])
    if result.failed:
        print("refused to emit a key: %s" % result.reason, file=sys.stderr)
        return 1
    header = {
        "n": result.n_slots, "m": cfg.trace.gray_bits, "alpha": result.alpha,
        "rate": result.rate, "degree": len(result.hash_seed),
        "poly_tail": HashField(len(result.hash_seed)).tail,
        "hash_seed": result.hash_seed.to_bytes().hex(),
    }
    write_key_file(prefix + "_node1.key", result.key1, header)
    write_key_file(prefix + "_node2.key", result.key2, header)
    _write_csv(prefix + "_randomness.csv", _RAND_FIELDS,
               _randomness_rows(result.randomness, cfg.scenario_id, cfg.seed))
    print("wrote %s_experiment.csv, key files and randomness report" % prefix)
    _print_randomness(result.randomness)
    return 0


def cmd_randomness(keyfile: str, csv_path: Optional[str]) -> int:
    header, key = read_key_file(keyfile)
    report = run_tests(key)
    _print_randomness(report)
    if csv_path:
        scenario_id = os.path.splitext(os.path.basename(keyfile))[0]
        _write_csv(csv_path, _RAND_FIELDS,
                   _randomness_rows(report, scenario_id, None))
        print("wrote %s" % csv_path)
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lockey",
        description="Secret-key generation from shared location observations.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="end-to-end key generation")
    sim.add_argument("--config", required=True, help="TOML scenario file")
    sim.add_argument("--out", default=".", help="output directory")

    bnd = sub.add_parser("bounds", help="Monte-Carlo key-rate bounds")
    bnd.add_argument("--config", required=True, help="TOML scenario file")
    bnd.add_argument("--out", default=".", help="output directory")

    exp = sub.add_parser("experiment", help="recorded-trace pipeline")
    exp.add_argument("--trace", required=True, help="trace CSV file")
    exp.add_argument("--config", required=True, help="TOML scenario file")
    exp.add_argument("--out", default=".", help="output directory")

    rnd = sub.add_parser("randomness-test", help="battery on a stored key")
    rnd.add_argument("keyfile", help="key file to test")
    rnd.add_argument("--csv", help="also write the table as CSV")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "randomness-test":
            return cmd_randomness(args.keyfile, args.csv)
        if args.command == "experiment":
            cfg = load_config(args.config)
            return cmd_experiment(cfg, args.trace, args.out)
        cfg = load_config(args.config)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        return cmd_bounds(cfg, args.out)
    except ConfigError as e:
        print("config error: %s" % e, file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

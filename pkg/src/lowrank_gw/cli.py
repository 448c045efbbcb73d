"""Command-line entry point: ``lowrank-gw {run,validate,scale,report}``.

Exit codes: 0 success, 1 validation failure, 2 configuration or usage error.
"""
import argparse
import csv
import json
import os
import sys
import time
from contextlib import nullcontext

from .config import ConfigError, load_config
from .errors import LowRankGWError, PreconditionError, StageError

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

RESULT_FILE = "result.json"
BANDS_FILE = "bands.csv"
EXPERIMENTS_FILE = "experiments.json"
VALIDATE_FILE = "validate.json"
SCALE_FILE = "scale.json"


class UsageError(Exception):
    pass


def _threads(n):
    """Cap BLAS/OpenMP pools at ``n`` threads when threadpoolctl is available."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=n)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            vals = [r[h] for h in header] if isinstance(r, dict) else list(r)
            w.writerow([_fmt(v) for v in vals])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _out_dir(args, cfg):
    out = args.out or (cfg["output"] if cfg is not None else "results")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_run(args, cfg):
    from .pipeline import result_to_json, run_experiments, run_pipeline

    out = _out_dir(args, cfg)
    res = run_pipeline(cfg)
    payload = result_to_json(res)
    _write_json(os.path.join(out, RESULT_FILE), payload)
    header = ["index", "occupied", "eps_ks", "vxc", "sigma_sex_x", "sigma_x", "sigma_coh", "sigma_total", "eps_gw"]
    _write_csv(os.path.join(out, BANDS_FILE), header, payload["bands"])
    if cfg.experiments is not None:
        t0 = time.perf_counter()
        ex = run_experiments(res.es, cfg)
        ex["timings"] = {"experiments": time.perf_counter() - t0}
        _write_json(os.path.join(out, EXPERIMENTS_FILE), ex)
    print(f"{payload['pipeline_tag']}: {len(payload['bands'])} bands -> {out}")
    return EXIT_OK


def cmd_validate(args, cfg):
    from .validation import validate

    out = _out_dir(args, cfg)
    path = os.path.join(out, VALIDATE_FILE)
    try:
        verdicts = validate(cfg)
    except PreconditionError as exc:
        _write_json(path, {"status": "precondition_error", "error": str(exc), "checks": []})
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    passed = all(v["passed"] for v in verdicts)
    _write_json(path, {"status": "pass" if passed else "fail", "checks": verdicts})
    for v in verdicts:
        print(f"{'PASS' if v['passed'] else 'FAIL'}  {v['name']:<28} {v['system']:<10} value={v['value']}")
    return EXIT_OK if passed else EXIT_FAIL


def _parse_sizes(text, cfg):
    if text is None:
        sizes = list(cfg.scale["sizes"])
    else:
        try:
            sizes = [int(s) for s in text.split(",") if s.strip()]
        except ValueError as exc:
            raise UsageError(f"--sizes must be comma-separated integers: {exc}") from exc
    if not sizes:
        raise UsageError("scale needs at least one size")
    if sizes != sorted(sizes) or any(n < 2 or n % 2 for n in sizes):
        raise UsageError("sizes must be ascending even integers >= 2")
    return sizes


def cmd_scale(args, cfg):
    from .pipeline import run_scale

    sizes = _parse_sizes(args.sizes, cfg)
    out = _out_dir(args, cfg)
    result = run_scale(cfg, sizes)
    _write_json(os.path.join(out, SCALE_FILE), result)
    _write_scale_csv(out, result)
    print(f"low-rank slope {result['slope_lowrank']:.2f}, dense slope {result['slope_dense']:.2f}")
    return EXIT_OK


def _write_scale_csv(out, result):
    header = ["N_e", "N_r", "N_mu_vc", "lowrank_s", "dense_s", "dense_skipped"]
    _write_csv(os.path.join(out, "scale.csv"), header, result["rows"])


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read result file {path}: {exc}") from exc


def _require_keys(obj, keys, what):
    if not isinstance(obj, dict) or any(k not in obj for k in keys):
        raise ConfigError(f"{what}: schema mismatch, expected keys {keys}")


def cmd_report(args, cfg):
    out = _out_dir(args, None)
    files = args.files or [
        os.path.join(out, f) for f in (EXPERIMENTS_FILE, SCALE_FILE) if os.path.exists(os.path.join(out, f))
    ]
    if not files:
        raise ConfigError(f"no result files found in {out}")
    written = []
    for path in files:
        data = _load_json(path)
        if isinstance(data, dict) and "rows" in data and "slope_lowrank" in data:
            _write_scale_csv(out, data)
            written.append("scale.csv")
            continue
        if not isinstance(data, dict) or not any(
            k in data for k in ("k_sweep", "nodes_sweep", "delta_sweep", "singular_values_M_vc")
        ):
            raise ConfigError(f"{path}: schema mismatch, not an experiments or scale result")
        if "k_sweep" in data:
            cols = ["k_vc", "k_vn", "k_nn", "n_mu_vc", "mean_abs_error", "max_abs_error", "isdf_rel_error_vc"]
            for row in data["k_sweep"]:
                _require_keys(row, cols, "k_sweep")
            _write_csv(os.path.join(out, "k_sweep.csv"), cols, data["k_sweep"])
            written.append("k_sweep.csv")
        if "k_sensitivity" in data:
            cols = ["label", "k_vc", "k_vn", "k_nn", "mean_abs_error", "max_abs_error"]
            for row in data["k_sensitivity"]:
                _require_keys(row, cols, "k_sensitivity")
            _write_csv(os.path.join(out, "k_sensitivity.csv"), cols, data["k_sensitivity"])
            written.append("k_sensitivity.csv")
        if "nodes_sweep" in data:
            cols = ["N_lambda", "est_rel_error", "sigma_max_dev"]
            for row in data["nodes_sweep"]:
                _require_keys(row, cols, "nodes_sweep")
            _write_csv(os.path.join(out, "nodes_sweep.csv"), cols, data["nodes_sweep"])
            written.append("nodes_sweep.csv")
        if "delta_sweep" in data:
            cols = ["delta_rel", "nodes_used", "est_rel_error", "isdf_max_dev"]
            for row in data["delta_sweep"]:
                _require_keys(row, cols, "delta_sweep")
            _write_csv(os.path.join(out, "delta_sweep.csv"), cols, data["delta_sweep"])
            written.append("delta_sweep.csv")
        for key in ("singular_values_M_vc", "singular_values_chi"):
            if key in data:
                vals = data[key]
                if not isinstance(vals, list) or not all(isinstance(v, (int, float)) for v in vals):
                    raise ConfigError(f"{key}: schema mismatch, expected a list of numbers")
                _write_csv(os.path.join(out, f"{key}.csv"), ["index", "singular_value"], list(enumerate(vals)))
                written.append(f"{key}.csv")
    print("wrote " + ", ".join(written))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "scale": cmd_scale, "report": cmd_report}


def build_parser():
    p = argparse.ArgumentParser(prog="lowrank-gw", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        sp.add_argument("--out", help="output directory (overrides config 'output')")
        sp.add_argument("--threads", type=int, help="thread cap for numerical libraries")
        if name == "scale":
            sp.add_argument("--sizes", help="comma-separated electron counts, ascending")
        if name == "report":
            sp.add_argument("files", nargs="*", help="result JSON files (default: those in --out)")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        threads = args.threads if args.threads is not None else cfg["threads"]
        if threads < 1:
            raise UsageError("--threads must be >= 1")
        with _threads(threads):
            return COMMANDS[args.command](args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc.cause, PreconditionError) else EXIT_FAIL
    except PreconditionError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LowRankGWError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

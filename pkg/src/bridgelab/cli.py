"""Command-line front end.

Exit codes: 0 pass, 1 usage or domain error, 2 statistical failure.

Every option can also come from ``--config FILE``: either ``key=value``
lines (``#`` starts a comment) or a JSON report written by an earlier run,
whose ``config`` section is replayed.  Flags given on the command line win.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

from . import functionals, montecarlo, sampling
from .functionals import DomainError, IdentityKind
from .montecarlo import MCConfig

EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# key -> (type, default, help)
OPTIONS = {
    "identity": (str, None, "identity name: " + ", ".join(k.value for k in IdentityKind)),
    "alpha": (float, None, "bridge parameter alpha"),
    "beta": (float, 1.0, "coupling beta"),
    "alpha_range": (str, None, "start:stop:step, stop inclusive"),
    "paths": (int, 200_000, "number of sample paths"),
    "grid": (int, 4096, "grid size m"),
    "eps": (float, 1e-6, "truncation gap"),
    "seed": (int, 0, "64-bit master seed"),
    "antithetic": (_bool, True, "pair each path with its negation"),
    "sampler": (str, "exact", "exact, sde or time-change"),
    "rel_tol": (float, montecarlo.DEFAULT_REL_TOL, "relative tolerance of the verdict"),
    "t": (float, 1.0, "time horizon"),
    "x": (float, 0.0, "density argument"),
    "control": (_bool, False, "run the negative control"),
    "pairs": (str, "0.25,0.75;0.3,0.7;0.5,0.5", "covariance pairs 's,t;s,t;...'"),
    "scheme": (str, "geometric-to-one", "grid scheme for path dumps"),
    "out": (str, None, "output file (default: standard output)"),
}

MC_KEYS = ("paths", "grid", "eps", "seed", "antithetic", "sampler")

COMMANDS = {
    "verify": ("identity", "alpha", "beta", *MC_KEYS, "rel_tol", "out"),
    "scan": ("identity", "alpha_range", "beta", *MC_KEYS, "rel_tol", "out"),
    "power": ("alpha", "beta", *MC_KEYS, "out"),
    "density": ("t", "x", *MC_KEYS, "rel_tol", "out"),
    "ks": ("t", "control", *MC_KEYS, "out"),
    "covcheck": ("alpha", "pairs", *MC_KEYS, "out"),
    "sample": ("alpha", "scheme", "paths", "grid", "eps", "seed", "sampler", "out"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="bridgelab", description="alpha-Wiener bridge identity checks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMANDS.items():
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="key=value file or earlier JSON report")
        for key in keys:
            typ, default, text = OPTIONS[key]
            flag = "--" + key.replace("_", "-")
            if typ is _bool:
                cmd.add_argument(flag, dest=key, nargs="?", const=True, type=_bool,
                                 default=None, help=f"{text} (default {default})")
                cmd.add_argument("--no-" + key.replace("_", "-"), dest=key,
                                 action="store_false", default=None)
            else:
                cmd.add_argument(flag, dest=key, type=typ, default=None,
                                 help=f"{text} (default {default})")
    return parser


def read_config(path):
    """Options from a ``key=value`` file or a JSON report's ``config`` section."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return dict(data.get("config", data))
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def effective_config(command, args):
    keys = COMMANDS[command]
    config = {k: OPTIONS[k][1] for k in keys}
    if args.config:
        for key, value in read_config(args.config).items():
            if key not in OPTIONS:
                raise UsageError(f"unknown config key {key!r}")
            if key in config and value is not None:
                try:
                    config[key] = OPTIONS[key][0](value)
                except (TypeError, ValueError) as exc:
                    raise UsageError(f"bad value for {key}: {value!r}") from exc
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _mc(config):
    return MCConfig(n_paths=config["paths"], seed=config["seed"], grid_m=config["grid"],
                    eps=config["eps"], antithetic=config["antithetic"],
                    sampler=config["sampler"])


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".bridgelab-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        os.unlink(tmp)
        raise


def _json(payload, config):
    # the echoed config replays the run; where it was written is not part of it
    payload = dict(payload)
    payload["config"] = {k: v for k, v in config.items() if k != "out"}
    return json.dumps(payload, indent=2, allow_nan=False, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    raise TypeError(f"not serialisable: {obj!r}")


def _kind_alpha(config):
    if config["identity"] is None:
        raise UsageError("--identity is required")
    kind = IdentityKind.parse(config["identity"])
    alpha = config.get("alpha")
    if alpha is None:
        alpha = kind.fixed_alpha
        if alpha is None:
            raise UsageError(f"--alpha is required for {kind.value} ({kind.domain})")
    return kind, alpha


def parse_range(text):
    """``start:stop:step`` with the stop included (up to rounding)."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except (AttributeError, ValueError) as exc:
        raise UsageError(f"bad range {text!r}; expected start:stop:step") from exc
    if step <= 0 or stop < start:
        raise UsageError(f"empty range {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def parse_pairs(text):
    try:
        pairs = [tuple(float(v) for v in chunk.split(",")) for chunk in text.split(";") if chunk.strip()]
    except ValueError as exc:
        raise UsageError(f"bad pairs {text!r}") from exc
    if not pairs or any(len(p) != 2 for p in pairs):
        raise UsageError(f"bad pairs {text!r}; expected 's,t;s,t;...'")
    return pairs


def cmd_verify(config):
    kind, alpha = _kind_alpha(config)
    report = montecarlo.estimate_identity(kind, alpha, config["beta"], _mc(config),
                                          rel_tol=config["rel_tol"])
    _emit(_json(report.to_dict(), config), config["out"])
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_scan(config):
    if config["identity"] is None:
        raise UsageError("--identity is required")
    if config["alpha_range"] is None:
        raise UsageError("--alpha-range is required")
    kind = IdentityKind.parse(config["identity"])
    alphas = parse_range(config["alpha_range"])
    for alpha in alphas:
        functionals.check_domain(kind, alpha)
    cfg = _mc(config)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(montecarlo.CSV_HEADER)
    ok = True
    for alpha in alphas:
        report = montecarlo.estimate_identity(kind, alpha, config["beta"], cfg,
                                              rel_tol=config["rel_tol"])
        writer.writerow(report.csv_row())
        ok &= report.passed
    _emit(buf.getvalue(), config["out"])
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_power(config):
    if config["alpha"] is None:
        raise UsageError("--alpha is required")
    result = montecarlo.estimate_power_exponent(config["alpha"], config["beta"], _mc(config))
    _emit(_json(result.to_dict(), config), config["out"])
    return EXIT_PASS


def cmd_density(config):
    result = montecarlo.density_check(config["t"], config["x"], _mc(config),
                                      rel_tol=config["rel_tol"])
    _emit(_json(result.to_dict(), config), config["out"])
    return EXIT_PASS if result.verdict == "pass" else EXIT_FAIL


def cmd_ks(config):
    result = montecarlo.ks_bougerol(config["t"], _mc(config), control=config["control"])
    _emit(_json(result.to_dict(), config), config["out"])
    return EXIT_PASS if result.verdict == "pass" else EXIT_FAIL


def cmd_covcheck(config):
    if config["alpha"] is None:
        raise UsageError("--alpha is required")
    report = montecarlo.cov_check(config["alpha"], parse_pairs(config["pairs"]), _mc(config))
    _emit(_json(report.to_dict(), config), config["out"])
    return EXIT_PASS if report.verdict == "pass" else EXIT_FAIL


def cmd_sample(config):
    if config["alpha"] is None:
        raise UsageError("--alpha is required")
    if config["out"] is None:
        raise UsageError("sample needs --out for the CSV dump")
    grid = sampling.make_grid(config["grid"], config["scheme"], config["eps"])
    batch = sampling.sample_paths(config["sampler"], config["alpha"], grid,
                                  config["paths"], config["seed"])
    sampling.write_paths_csv(batch, config["out"])
    return EXIT_PASS


HANDLERS = {
    "verify": cmd_verify,
    "scan": cmd_scan,
    "power": cmd_power,
    "density": cmd_density,
    "ks": cmd_ks,
    "covcheck": cmd_covcheck,
    "sample": cmd_sample,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        config = effective_config(args.command, args)
        return HANDLERS[args.command](config)
    except (UsageError, DomainError, ValueError, TypeError) as exc:
        print(f"bridgelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except sampling.FactorizationError as exc:
        print(f"bridgelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

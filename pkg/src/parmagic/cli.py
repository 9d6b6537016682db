"""``parmagic`` command line.

Every subcommand resolves its parameters as flags > ``--config`` file >
defaults, writes the resolved set to ``<out>/config.json`` and its tables as
CSV next to it.  Feeding that file back through ``--config`` reproduces the
CSV outputs byte for byte.

Exit codes: 0 success, 2 configuration error, 3 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from collections.abc import Sequence
from fractions import Fraction
from pathlib import Path

from scipy.stats import binomtest

from .compiler import SCALING_COLUMNS, comm_scaling_experiment
from .errors import ConfigError, DomainError, ResourceError
from .games import DEFAULT_CAP, brute_force_leakage_value, disclosure_protocol, load_game
from .parbell import PARBELL_COLUMNS, run_parbell
from .protocol import (
    LEAKAGE,
    PROBE_COLUMNS,
    AdversarySpec,
    default_epsilon,
    dumps_round,
    fixed_parity_adversary,
    load_adversary,
    replay_adversary,
    run_rounds,
    run_soundness_probe,
)

log = logging.getLogger("parmagic")

EXIT_CONFIG = 2
EXIT_CAP = 3

DEFAULTS = {
    "value": {"game": "magic-square", "leakage": [0], "cap": DEFAULT_CAP, "partitions": 1, "workers": 1},
    "completeness": {"n": [1000], "delta": 0.1, "epsilon": None, "trials": 100, "seed": 0, "workers": 1},
    "scaling": {"dim": 1, "n": [16, 64, 256], "depth": [4, 8, 16], "seed": 0, "family": "brickwork", "two_process": False},
    "probe": {"adversary": "replay", "n": [50, 100, 200], "delta": 0.1, "trials": 1000, "seed": 0},
    "parbell": {
        "game": "magic-square", "plugin": None, "classical": False, "n": [100], "delta": 0.0,
        "epsilon": None, "trials": 100, "seed": 0, "cap": DEFAULT_CAP,
    },
    "round": {"n": [100], "delta": 0.1, "epsilon": None, "trials": 10, "seed": 0, "workers": 1, "two_process": False},
}
LIST_KEYS = {"n", "depth", "leakage", "epsilon"}

VALUE_COLUMNS = ("game", "leakage_bits", "value", "value_float")
COMPLETENESS_COLUMNS = (
    "n", "delta", "epsilon", "rounds", "accepted", "acceptance", "ci_low", "ci_high", "win_rate", "failure_rate",
)


# ---------------------------------------------------------------------------
# experiment functions (also used directly by tests)


def cmd_value(game: str, c: int = 0, cap: int = DEFAULT_CAP, partitions: int = 1, workers: int = 1) -> Fraction:
    return brute_force_leakage_value(load_game(game), c, cap=cap, partitions=partitions, workers=workers)


def cmd_completeness(n: int, delta: float, epsilon: float | None, trials: int, seed: int, workers: int = 1, log_sink=None) -> dict:
    """Acceptance statistics of the honest prover over ``trials`` rounds."""
    epsilon = default_epsilon(delta) if epsilon is None else epsilon
    accepted = wins = 0
    for record in run_rounds(n, delta, epsilon, trials, seed, workers):
        accepted += record["accept"]
        wins += record["win_count"]
        if log_sink is not None:
            log_sink.write(dumps_round(record) + "\n")
    ci = binomtest(accepted, trials).proportion_ci(method="exact") if trials else None
    return {
        "n": n,
        "delta": delta,
        "epsilon": epsilon,
        "rounds": trials,
        "accepted": accepted,
        "acceptance": accepted / trials if trials else float("nan"),
        "ci_low": float(ci.low) if ci else float("nan"),
        "ci_high": float(ci.high) if ci else float("nan"),
        "win_rate": wins / (n * trials) if trials else float("nan"),
        "failure_rate": 1 - wins / (n * trials) if trials else float("nan"),
    }


def resolve_adversary(name: str) -> AdversarySpec:
    builtin = {
        "replay": replay_adversary,
        "fixed-parity": fixed_parity_adversary,
        "disclosure": lambda: AdversarySpec(LEAKAGE, disclosure_protocol(), "disclosure"),
    }
    if name in builtin:
        return builtin[name]()
    if not Path(name).is_file():
        raise ConfigError(f"adversary {name!r} is neither built in ({sorted(builtin)}) nor a file")
    return load_adversary(name)


def cmd_probe(adversary: str, n_values: Sequence[int], delta: float, trials: int, seed: int) -> list[dict]:
    adv = resolve_adversary(adversary)
    return [run_soundness_probe(adv, n, delta, trials, seed).row() for n in n_values]


def cmd_scaling(dim: int, n_values, d_values, seed: int, family: str = "brickwork", two_process: bool = False) -> list[dict]:
    return comm_scaling_experiment(dim, n_values, d_values, seed, family=family, two_process=two_process)


def cmd_parbell(game: str, n_values, delta, epsilon, trials, seed, plugin=None, classical=False, cap=DEFAULT_CAP) -> list[dict]:
    spec = load_game(game)
    eps = default_epsilon(float(delta)) if epsilon is None else epsilon
    rows = []
    for n in n_values:
        run = run_parbell(spec, n, delta, trials, seed, eps, plugin, classical, cap)
        rows.extend(run.rows)
        log.info(
            "parbell n=%d mode=%s omega_c=%s omega_q=%s acceptance=%s win_rate=%s",
            n, run.mode, run.omega_c, run.omega_q, run.acceptance, run.win_rate,
        )
    return rows


# ---------------------------------------------------------------------------
# argument handling


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


FLAGS = {
    "n": {"type": _int_list, "help": "game count(s), comma separated"},
    "depth": {"type": _int_list, "help": "circuit depth(s), comma separated"},
    "dim": {"type": int, "help": "grid dimension D"},
    "delta": {"type": float},
    "epsilon": {"type": _float_list, "help": "per-gate noise, comma separated; default delta/100"},
    "trials": {"type": int, "help": "rounds per cell"},
    "seed": {"type": int},
    "cap": {"type": int, "help": "strategy enumeration cap"},
    "game": {"help": "built-in game (magic-square, chsh, constant) or a game table file"},
    "adversary": {"help": "replay, fixed-parity, disclosure, or an adversary file"},
    "two-process": {"dest": "two_process", "action": "store_true"},
    "workers": {"type": int},
    "leakage": {"type": _int_list, "help": "leakage budget(s) c in bits"},
    "partitions": {"type": int},
    "family": {"choices": ["brickwork", "random"]},
    "plugin": {"help": "quantum strategy plugin name"},
    "classical": {"action": "store_true", "help": "play the best classical strategy"},
}

SUBCOMMANDS = {
    "value": ("exact classical or leakage-assisted value", ["game", "leakage", "cap", "partitions", "workers"]),
    "completeness": ("honest prover acceptance statistics", ["n", "delta", "epsilon", "trials", "seed", "workers"]),
    "scaling": ("communication of compiled circuits", ["dim", "n", "depth", "family", "seed", "two-process"]),
    "probe": ("soundness probe of a classical adversary", ["adversary", "n", "delta", "trials", "seed"]),
    "parbell": (
        "parallel runs of a general game",
        ["game", "plugin", "classical", "n", "delta", "epsilon", "trials", "seed", "cap"],
    ),
    "round": ("honest protocol rounds as JSON lines", ["n", "delta", "epsilon", "trials", "seed", "workers", "two-process"]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parmagic", description="Parallel Magic Square experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, flags) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config written by an earlier run")
        p.add_argument("--out", help="directory for CSV, logs and config.json")
        for flag in flags:
            p.add_argument(f"--{flag}", **FLAGS[flag])
    return parser


def resolve_config(command: str, provided: dict, config_path: str | None) -> dict:
    params = dict(DEFAULTS[command])
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
        if data.get("command") != command:
            raise ConfigError(f"config is for {data.get('command')!r}, not {command!r}")
        unknown = set(data.get("params", {})) - set(params)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        params.update(data["params"])
    params.update(provided)
    for key in LIST_KEYS & set(params):
        value = params[key]
        if value is not None and not isinstance(value, list):
            params[key] = [value]
    return params


def _write_csv(path: Path | None, rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        path.write_text(text, encoding="utf-8")
    return text


def run(command: str, params: dict, out: Path | None) -> int:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(
            json.dumps({"command": command, "params": params}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    csv_path = (lambda name: out / name) if out is not None else (lambda name: None)

    if command == "value":
        rows = []
        for c in params["leakage"]:
            value = cmd_value(params["game"], c, params["cap"], params["partitions"], params["workers"])
            rows.append({"game": params["game"], "leakage_bits": c, "value": str(value), "value_float": repr(float(value))})
            print(str(value) if len(params["leakage"]) == 1 else f"c={c} {value}")
        _write_csv(csv_path("value.csv"), rows, VALUE_COLUMNS)
        return 0

    if command == "completeness":
        rows = []
        sink = open(out / "rounds.jsonl", "w", encoding="utf-8") if out is not None else None
        try:
            for n in params["n"]:
                for eps in params["epsilon"] or [None]:
                    rows.append(
                        cmd_completeness(n, params["delta"], eps, params["trials"], params["seed"], params["workers"], sink)
                    )
        finally:
            if sink is not None:
                sink.close()
        text = _write_csv(csv_path("completeness.csv"), rows, COMPLETENESS_COLUMNS)
    elif command == "scaling":
        rows = cmd_scaling(params["dim"], params["n"], params["depth"], params["seed"], params["family"], params["two_process"])
        text = _write_csv(csv_path("scaling.csv"), rows, SCALING_COLUMNS)
    elif command == "probe":
        rows = cmd_probe(params["adversary"], params["n"], params["delta"], params["trials"], params["seed"])
        text = _write_csv(csv_path("probe.csv"), rows, PROBE_COLUMNS)
    elif command == "parbell":
        eps = params["epsilon"][0] if params["epsilon"] else None
        rows = cmd_parbell(
            params["game"], params["n"], params["delta"], eps, params["trials"], params["seed"],
            params["plugin"], params["classical"], params["cap"],
        )
        text = _write_csv(csv_path("parbell.csv"), rows, PARBELL_COLUMNS)
        accepted = sum(r["accept"] for r in rows)
        print(f"accepted {accepted}/{len(rows)}", file=sys.stderr)
    else:  # round
        lines = []
        for n in params["n"]:
            eps = params["epsilon"][0] if params["epsilon"] else default_epsilon(params["delta"])
            for record in run_rounds(
                n, params["delta"], eps, params["trials"], params["seed"], params["workers"], params["two_process"]
            ):
                lines.append(dumps_round(record))
        text = "".join(line + "\n" for line in lines)
        if out is not None:
            (out / "rounds.jsonl").write_text(text, encoding="utf-8")
    if out is None:
        sys.stdout.write(text)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    logging.basicConfig(level=logging.INFO if args.pop("verbose") else logging.WARNING, format="%(message)s")
    command = args.pop("command")
    config_path = args.pop("config", None)
    out = args.pop("out", None)
    try:
        params = resolve_config(command, args, config_path)
        return run(command, params, Path(out) if out else None)
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

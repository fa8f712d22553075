"""Command-line entry point: synth, discover, train, report.

Settings resolve as command line > --config file (flat key=value lines) >
built-in defaults, and every command writes the resolved settings into the
manifest.json of its output directory.

Exit codes: 0 success, 1 bad input or configuration, 2 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evalrep, synth
from .data import DataError, load_csv
from .quality import QualityConfig
from .sdtrain import SdLossConfig, TrainConfig, TrainRunLog, train
from .search import SearchConfig, SearchError
from .seeding import stream
from .vae import VaeModel, load_model, save_model

log = logging.getLogger("latentsd")

MODE_NAMES = {"vae": "vae_only", "sd": "sd_from_scratch", "finetune": "sd_finetune"}


class UsageError(Exception):
    pass


class InvariantError(Exception):
    pass


# key -> (type, default); defaults for the search and loss follow the reference settings
SETTINGS = {
    "alpha": (float, 0.5),
    "beam_width": (int, 10),
    "depth": (int, 2),
    "top_k": (int, 10),
    "negative": (bool, False),
    "bins": (int, 4),
    "k": (int, 1),
    "lam": (float, 10.0),
    "latent_dim": (int, 16),
    "hidden": (str, "256,128"),
    "epochs": (int, 30),
    "batch_size": (int, 100),
    "lr": (float, 0.001),
    "kl_weight": (float, 1.0),
    "binning": (str, "batch"),
    "seed": (int, 0),
    "mode": (str, "sd"),
    "n": (int, 5000),
    "folds": (int, 5),
    "threads": (int, 0),
    "target": (str, "target"),
    "csv": (str, None),
    "images": (str, None),
    "targets": (str, None),
    "checkpoint": (str, None),
    "from": (str, None),
    "out": (str, None),
}

COMMAND_KEYS = {
    "synth": ["n", "seed", "out", "threads"],
    "discover": ["csv", "target", "alpha", "beam_width", "depth", "top_k", "negative", "bins", "out", "threads"],
    "train": ["images", "targets", "target", "mode", "from", "alpha", "beam_width", "depth", "top_k", "k",
              "lam", "latent_dim", "hidden", "epochs", "batch_size", "lr", "kl_weight", "binning", "seed",
              "out", "threads"],
    "report": ["checkpoint", "images", "targets", "target", "alpha", "beam_width", "depth", "top_k",
               "folds", "seed", "out", "threads"],
}


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _coerce(key: str, raw):
    kind = SETTINGS[key][0]
    try:
        return _parse_bool(raw) if kind is bool else kind(raw)
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "lambda":
            key = "lam"
        if key not in SETTINGS:
            raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
        out[key] = _coerce(key, value)
    return out


def resolve(command: str, cli_values: dict, config_path: str | None) -> tuple[dict, set]:
    """Merge defaults, config file and command line; returns (settings, keys set explicitly)."""
    keys = COMMAND_KEYS[command]
    settings = {k: SETTINGS[k][1] for k in keys}
    explicit = set()
    if config_path:
        for k, v in read_config_file(config_path).items():
            if k in settings:
                settings[k] = v
                explicit.add(k)
    for k, v in cli_values.items():
        if k in settings and v is not None:
            settings[k] = _coerce(k, v)
            explicit.add(k)
    return settings, explicit


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, settings: dict, files: list[str], extra: dict | None = None) -> Path:
    manifest = {"command": command, "config": settings,
                "files": {name: {"sha256": _sha256(out / name), "bytes": (out / name).stat().st_size}
                          for name in sorted(files)}}
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _out_dir(settings: dict) -> Path:
    if not settings.get("out"):
        raise UsageError("--out is required")
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(settings: dict, key: str) -> Path:
    value = settings.get(key)
    if not value:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    path = Path(value)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    return path


def _search_config(s: dict) -> SearchConfig:
    return SearchConfig(beam_width=s["beam_width"], max_depth=s["depth"], result_size=s["top_k"],
                        quality=QualityConfig(s["alpha"]), negative=s.get("negative", False))


def _check_report(report: evalrep.SubgroupReport) -> None:
    for row in report.rows:
        if round(row.coverage * report.n) != row.samples or round(row.target_share * row.samples) != row.positives:
            raise InvariantError(f"report row {row.label} is internally inconsistent")


def cmd_synth(s: dict) -> int:
    out = _out_dir(s)
    spec, rule = synth.FactorSpec(), synth.TargetRule()
    data = synth.generate(spec, rule, s["n"], s["seed"])
    synth.write_images(out / "images.bin", data.images, spec.height, spec.width)
    with (out / "targets.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("target\n" + "".join(f"{int(t)}\n" for t in data.targets))
    with (out / "factors.csv").open("w", encoding="utf-8", newline="") as fh:
        names = list(data.factors)
        fh.write(",".join(names + ["target"]) + "\n")
        for i in range(s["n"]):
            fh.write(",".join([str(data.factors[k][i]) for k in names] + [str(int(data.targets[i]))]) + "\n")
    observed = float(data.targets.mean())
    expected = synth.prevalence(spec, rule)
    print(f"wrote {s['n']} images to {out}")
    print(f"target rule: {rule.render()}")
    print(f"prevalence: observed {observed:.4f}, analytic {expected:.4f}")
    write_manifest(out, "synth", s, ["images.bin", "targets.csv", "factors.csv"],
                   {"prevalence": {"observed": observed, "analytic": expected}, "target_rule": rule.render()})
    return 0


def cmd_discover(s: dict) -> int:
    path = _require_file(s, "csv")
    out = _out_dir(s)
    d = load_csv(path, s["target"])
    ranked, report = evalrep.discover(d, _search_config(s), s["bins"])
    _check_report(report)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    write_manifest(out, "discover", s, ["report.json", "report.txt"])
    print(report.to_text(), end="")
    return 0


def _load_images_targets(s: dict) -> tuple[np.ndarray, int, int, np.ndarray]:
    images, height, width = synth.read_images(_require_file(s, "images"))
    targets = load_csv(_require_file(s, "targets"), s["target"]).target
    if targets.shape[0] != images.shape[0]:
        raise UsageError(f"{images.shape[0]} images but {targets.shape[0]} targets")
    return images, height, width, targets


def cmd_train(s: dict, explicit: set) -> int:
    if s["mode"] not in MODE_NAMES:
        raise UsageError(f"--mode must be one of {sorted(MODE_NAMES)}")
    mode = MODE_NAMES[s["mode"]]
    if mode == "vae_only" and "lam" in explicit and s["lam"] != 0:
        print("warning: --lambda is ignored in vae mode", file=sys.stderr)
    if mode == "sd_finetune" and not s.get("from"):
        raise UsageError("--mode finetune requires --from CHECKPOINT")
    images, height, width, targets = _load_images_targets(s)
    out = _out_dir(s)
    if mode == "sd_finetune":
        model, _, meta = load_model(_require_file(s, "from"))
        if model.input_dim != images.shape[1]:
            raise UsageError(f"checkpoint expects {model.input_dim} pixels, images have {images.shape[1]}")
    else:
        hidden = tuple(int(h) for h in s["hidden"].split(",") if h.strip())
        model = VaeModel(images.shape[1], s["latent_dim"], hidden, rng=stream(s["seed"], "init"))
    cfg = TrainConfig(mode=mode, epochs=s["epochs"], batch_size=s["batch_size"], learning_rate=s["lr"],
                      seed=s["seed"], kl_weight=s["kl_weight"],
                      sd=SdLossConfig(k=s["k"], lam=s["lam"], search=_search_config(s), binning=s["binning"]))
    run = train(model, images, targets, cfg)
    run.write(out / "train_log.jsonl")
    save_model(out / "model.ckpt", model, run.optimizer,
               {"height": height, "width": width, "mode": mode, "seed": s["seed"]})
    last = run.records[-1] if run.records else {}
    print(f"trained {mode} for {cfg.epochs} epochs: " + ", ".join(
        f"{k}={last[k]:.4f}" for k in ("recon", "kl", "sd") if k in last))
    write_manifest(out, "train", s, ["train_log.jsonl", "model.ckpt"])
    return 0


def cmd_report(s: dict) -> int:
    model, _, meta = load_model(_require_file(s, "checkpoint"))
    images, height, width, targets = _load_images_targets(s)
    if model.input_dim != images.shape[1]:
        raise UsageError(f"incompatible checkpoint: model expects {model.input_dim} pixels, "
                         f"images have {images.shape[1]}")
    out = _out_dir(s)
    found = evalrep.final_discovery(model, images, targets, _search_config(s))
    _check_report(found.report)
    files = ["report.json", "report.txt"]
    (out / "report.json").write_text(found.report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(found.report.to_text(), encoding="utf-8")

    mu = found.latents
    base, spread = mu.mean(axis=0), mu.std(axis=0)
    latent_ids = sorted({int(sel.attribute) for p in found.ranked.descriptions for sel in p})
    for j in latent_ids:
        grid = evalrep.traverse_latent(model, base, j, scale=float(spread[j]) or 1.0)
        name = f"traversal_{j:03d}.pgm"
        evalrep.write_pgm(out / name, evalrep.tile(grid.images, height, width))
        files.append(name)
    if len(found.ranked):
        avg = evalrep.average_subgroup_decode(model, found.ranked, mu, found.table)
        evalrep.write_pgm(out / "average_decodes.pgm", evalrep.tile(avg, height, width))
        files.append("average_decodes.pgm")

    probe = evalrep.linear_probe(mu, targets, folds=s["folds"], seed=s["seed"])
    recon = evalrep.reconstruction_error(model, images)
    (out / "probe.json").write_text(json.dumps({"probe": evalrep.PROBE_LABEL, "metrics": probe.to_dict()},
                                               indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "metrics.json").write_text(json.dumps({"reconstruction_error": recon}, indent=2) + "\n",
                                      encoding="utf-8")
    files += ["probe.json", "metrics.json"]
    write_manifest(out, "report", s, files)
    print(found.report.to_text(), end="")
    print(f"{evalrep.PROBE_LABEL}: precision {probe.precision:.3f} recall {probe.recall:.3f} "
          f"accuracy {probe.accuracy:.3f} f1 {probe.f1:.3f}")
    print(f"reconstruction error: {recon:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentsd", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"synth": "generate the synthetic shape dataset",
             "discover": "subgroup discovery on a CSV table",
             "train": "train a VAE (vae, sd or finetune mode)",
             "report": "subgroup report, traversals, average decodes and probe for a checkpoint"}
    for command, keys in COMMAND_KEYS.items():
        p = sub.add_parser(command, help=helps[command])
        p.add_argument("--config", help="flat key=value settings file")
        for key in keys:
            flag = "--lambda" if key == "lam" else "--" + key.replace("_", "-")
            default = SETTINGS[key][1]
            p.add_argument(flag, dest=key, default=None, metavar=key.upper(),
                           help=f"default: {default}" if default is not None else None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        settings, explicit = resolve(args.command, values, args.config)
        with _thread_limit(settings.get("threads", 0)):
            if args.command == "synth":
                return cmd_synth(settings)
            if args.command == "discover":
                return cmd_discover(settings)
            if args.command == "train":
                return cmd_train(settings, explicit)
            return cmd_report(settings)
    except (UsageError, DataError, SearchError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InvariantError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def _thread_limit(threads: int):
    if not threads:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


if __name__ == "__main__":
    sys.exit(main())

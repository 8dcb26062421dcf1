"""Command-line front end: ``flowseg {prepare,flow,repr,train,eval,report}``.

Configuration is an INI file.  Values are resolved in this order, later
winning: built-in defaults, the ``--config`` file, ``FLOWSEG_<SECTION>_<KEY>``
environment variables, command-line flags.  Unknown sections or keys are
rejected before any work starts.  Every command copies the resolved
configuration to ``<out>/config.ini``.

Exit codes: 0 success, 1 validation error, 2 missing artifact, 3 internal error.
"""
import argparse
import configparser
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

from . import dataset as ds
from . import pipeline, reference
from .augment import AugmentConfig
from .encodings import EncodingKind, NormalizationPolicy
from .errors import MissingArtifactError, ValidationError
from .flow import BoundaryPolicy, HSParams, PyramidConfig
from .metrics import STANDARD_GROUPS, MetricsRecord, average_runs, group_means
from .report import render_report
from .segnet import checkpoint
from .segnet.loss import LossWeights
from .segnet.model import NetworkConfig
from .segnet.train import STANDARD_VARIANTS, TrainConfig, VariantSpec, repeat_seeds, train
from .tiling import Blend

log = logging.getLogger("flowseg")

EXIT_OK, EXIT_VALIDATION, EXIT_MISSING, EXIT_INTERNAL = 0, 1, 2, 3
ENV_PREFIX = "FLOWSEG_"


def _ints(s):
    return [int(x) for x in s.replace(",", " ").split()]


def _words(s):
    return s.replace(",", " ").split()


def _variants(s):
    return [VariantSpec.parse(x) for x in s.split(",") if x.strip()]


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return float(s) if s.strip() else None


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


# section -> key -> (parser, default text)
SCHEMA = {
    "run": {
        "out": (str, "runs"),
        "seed": (int, "0"),
        "workers": (int, "1"),
    },
    "dataset": {
        "source": (_choice("files", "synthetic", "reference"), "files"),
        "root": (str, "data"),
        "class_map": (_choice("watershed", "indexed", "identity"), "watershed"),
        "image_template": (str, ds.IMAGE_TEMPLATE),
        "mask_template": (str, ds.MASK_TEMPLATE),
        "synth_cases": (int, "6"),
        "synth_clips": (int, "2"),
        "synth_frames": (int, "10"),
        "synth_width": (int, "128"),
        "synth_height": (int, "96"),
        "frames_per_clip": (int, "80"),
    },
    "split": {
        "train": (_ints, ""),
        "validation": (_ints, ""),
        "test": (_ints, ""),
    },
    "flow": {
        "offsets": (_ints, "1 5"),
        "tile_size": (int, "256"),
        "levels": (int, "4"),
        "scale": (float, "0.5"),
        "warp_steps": (int, "2"),
        "alpha": (float, "15"),
        "iterations": (int, "100"),
        "epsilon": (float, "1e-4"),
        "boundary": (_choice("zero", "clamp"), "zero"),
        "blend": (_choice("feather", "average"), "feather"),
    },
    "repr": {
        "encodings": (_words, "RGBof XY PC"),
        "max_px": (_opt_float, ""),
    },
    "augment": {
        "rotation_min": (float, "-0.5235987755982988"),
        "rotation_max": (float, "0.5235987755982988"),
        "p_rotation": (float, "0.2"),
        "scale_min": (float, "0.7"),
        "scale_max": (float, "1.4"),
        "p_scale": (float, "0.2"),
        "p_hflip": (float, "0.5"),
        "p_vflip": (float, "0.5"),
        "p_elastic": (float, "0.2"),
        "elastic_alpha": (float, "8"),
        "elastic_sigma": (float, "6"),
        "elastic_on_flow": (_bool, "true"),
    },
    "network": {
        "depth": (int, "3"),
        "base_width": (int, "16"),
    },
    "train": {
        "variants": (_variants, ", ".join(v.name for v in STANDARD_VARIANTS)),
        "epochs": (int, "20"),
        "batch_size": (int, "8"),
        "learning_rate": (float, "0.01"),
        "momentum": (float, "0.9"),
        "crop_size": (int, "128"),
        "repeats": (int, "4"),
        "samples_per_epoch": (int, "0"),
        "dice_w": (float, "1"),
        "ce_w": (float, "1"),
    },
    "report": {
        "source": (_choice("runs", "reference"), "runs"),
    },
}

CLASS_MAPS = {"watershed": ds.CHOLECSEG8K_WATERSHED, "indexed": ds.CHOLECSEG8K_INDEXED, "identity": ds.IDENTITY}


@dataclass
class ExperimentConfig:
    raw: Dict[str, Dict[str, str]]
    values: Dict[str, Dict[str, object]]

    def __getitem__(self, section):
        return self.values[section]

    @property
    def out(self) -> Path:
        return Path(self.values["run"]["out"])

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_dict(self.raw)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def fingerprint(self, *sections) -> str:
        picked = {s: self.raw[s] for s in sections}
        return hashlib.sha256(json.dumps(picked, sort_keys=True).encode("utf-8")).hexdigest()

    # typed views ------------------------------------------------------------

    def flow_settings(self):
        f = self["flow"]
        return pipeline.FlowSettings(
            tile_size=f["tile_size"],
            blend=Blend.LINEAR_FEATHER if f["blend"] == "feather" else Blend.AVERAGE,
            pyramid=PyramidConfig(f["levels"], f["scale"], f["warp_steps"]),
            hs=HSParams(f["alpha"], f["iterations"], f["epsilon"]),
            boundary=BoundaryPolicy(f["boundary"]))

    def norm(self):
        return NormalizationPolicy(self["repr"]["max_px"])

    def augment(self):
        a = self["augment"]
        return AugmentConfig(
            rotation_range=(a["rotation_min"], a["rotation_max"]), p_rotation=a["p_rotation"],
            scale_range=(a["scale_min"], a["scale_max"]), p_scale=a["p_scale"],
            p_hflip=a["p_hflip"], p_vflip=a["p_vflip"], p_elastic=a["p_elastic"],
            elastic_alpha=a["elastic_alpha"], elastic_sigma=a["elastic_sigma"],
            elastic_on_flow=a["elastic_on_flow"])

    def train_config(self, seed):
        t = self["train"]
        return TrainConfig(
            epochs=t["epochs"], batch_size=t["batch_size"], learning_rate=t["learning_rate"],
            momentum=t["momentum"], loss=LossWeights(t["dice_w"], t["ce_w"]), augment=self.augment(),
            crop_size=t["crop_size"], repeats=t["repeats"], seed=seed, norm=self.norm(),
            samples_per_epoch=t["samples_per_epoch"] or None)

    def network_config(self, variant, seed):
        n = self["network"]
        return NetworkConfig(in_channels=variant.in_channels, depth=n["depth"], base_width=n["base_width"], seed=seed)


def load_config(path=None, env=None, overrides=None) -> ExperimentConfig:
    """Resolve defaults, file, environment and flag overrides; validate everything."""
    env = os.environ if env is None else env
    raw = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}

    def put(section, key, value, origin):
        if section not in SCHEMA:
            raise ValidationError(f"{origin}: unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ValidationError(f"{origin}: unknown key '{key}' in [{section}]")
        raw[section][key] = value

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"config file {path} not found")
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(path.read_text(encoding="utf-8"), source=str(path))
        except configparser.Error as exc:
            raise ValidationError(f"{path}: {exc}") from None
        for section in cp.sections():
            for key, value in cp.items(section):
                put(section, key, value, str(path))
    for name, value in sorted(env.items()):
        if not name.startswith(ENV_PREFIX) or name == ENV_PREFIX + "CONFIG":
            continue
        rest = name[len(ENV_PREFIX):].lower()
        section = next((s for s in SCHEMA if rest.startswith(s + "_")), None)
        if section is None:
            raise ValidationError(f"environment variable {name} does not name a config section")
        put(section, rest[len(section) + 1:], value, f"environment {name}")
    for (section, key), value in (overrides or {}).items():
        if value is not None:
            put(section, key, str(value), "command line")

    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parse, _) in keys.items():
            try:
                values[section][key] = parse(raw[section][key])
            except ValueError as exc:
                raise ValidationError(f"[{section}] {key} = {raw[section][key]!r}: {exc}") from None
    cfg = ExperimentConfig(raw, values)
    _check(cfg)
    return cfg


def _check(cfg: ExperimentConfig):
    if cfg["run"]["workers"] < 1:
        raise ValidationError("[run] workers must be >= 1")
    if not cfg["flow"]["offsets"] or min(cfg["flow"]["offsets"]) < 1:
        raise ValidationError("[flow] offsets must be positive integers")
    for e in cfg["repr"]["encodings"]:
        try:
            EncodingKind(e)
        except ValueError:
            raise ValidationError(f"[repr] unknown encoding {e!r}") from None
    if not cfg["train"]["variants"]:
        raise ValidationError("[train] variants is empty")
    for v in cfg["train"]["variants"]:
        if v.uses_flow and v.offset not in cfg["flow"]["offsets"]:
            raise ValidationError(f"variant {v.name} needs offset {v.offset}, not in [flow] offsets")
    try:
        cfg.flow_settings()
        cfg.augment()
        cfg.train_config(0)
    except ValidationError:
        raise
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


# ---------------------------------------------------------------------------


def _manifest_path(cfg):
    return cfg.out / "manifest.jsonl"


def _load_manifest(cfg) -> ds.DatasetManifest:
    p = _manifest_path(cfg)
    if not p.exists():
        raise MissingArtifactError(f"manifest {p} not found; run 'prepare' first")
    return ds.DatasetManifest.load(p, root=Path(cfg["dataset"]["root"]))


def _split(cfg, manifest) -> ds.CaseSplit:
    s = cfg["split"]
    if s["train"] or s["validation"] or s["test"]:
        return ds.CaseSplit(tuple(s["train"]), tuple(s["validation"]), tuple(s["test"]))
    if cfg["dataset"]["source"] == "reference":
        return ds.CaseSplit.from_mapping(reference.reference_split())
    cases = manifest.cases
    if len(cases) < 3:
        raise ValidationError("need at least three cases for an automatic split; set [split] explicitly")
    # Automatic split: last case tests, the one before validates.
    return ds.CaseSplit(tuple(cases[:-2]), (cases[-2],), (cases[-1],))


def _slug(variant):
    return variant.name.replace(" ", "_")


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def cmd_prepare(cfg, out):
    d = cfg["dataset"]
    root = Path(d["root"])
    if d["source"] == "synthetic":
        params = ds.SynthParams(cases=d["synth_cases"], clips_per_case=d["synth_clips"],
                                frames_per_clip=d["synth_frames"], width=d["synth_width"],
                                height=d["synth_height"])
        stamp = root / "synthetic.json"
        want = {"seed": cfg["run"]["seed"], "params": cfg.fingerprint("dataset")}
        if stamp.exists() and json.loads(stamp.read_text(encoding="utf-8")) == want:
            log.info("synthetic dataset at %s is up to date", root)
        else:
            log.info("rendering synthetic dataset into %s", root)
            ds.synth_dataset(root, cfg["run"]["seed"], params, d["image_template"], d["mask_template"])
            _write_json(stamp, want)
    if d["source"] == "reference":
        manifest = ds.manifest_from_counts(reference.case_counts(), d["frames_per_clip"])
        total = len(manifest)
    else:
        cmap = ds.IDENTITY if d["source"] == "synthetic" else CLASS_MAPS[d["class_map"]]
        manifest = ds.build_manifest(root, cmap, d["image_template"], d["mask_template"],
                                     workers=cfg["run"]["workers"])
        total = len(manifest)
    split = _split(cfg, manifest)
    stats = ds.split_stats(manifest, split)
    manifest.save(_manifest_path(cfg))
    _write_json(out / "split.json", {"train": list(split.train), "validation": list(split.validation),
                                      "test": list(split.test)})
    _write_json(out / "stats.json", stats)
    lines = [f"{'subset':<11}{'frames':>8}{'%data':>8}{'grasper':>9}{'%':>7}{'l-hook':>8}{'%':>7}"]
    for name, s in stats.items():
        lines.append(f"{name:<11}{s['total_frames']:>8}{s['dataset_pct']:>8.2f}{s['grasper_frames']:>9}"
                     f"{s['grasper_pct']:>7.2f}{s['lhook_frames']:>8}{s['lhook_pct']:>7.2f}")
    lines.append(f"{'total':<11}{total:>8}")
    print("\n".join(lines))


def cmd_flow(cfg, out):
    manifest = _load_manifest(cfg)
    res = pipeline.compute_flows(manifest, cfg["flow"]["offsets"], cfg.flow_settings(), cfg["run"]["workers"])
    print(json.dumps(res))


def cmd_repr(cfg, out):
    manifest = _load_manifest(cfg)
    res = pipeline.render_representations(manifest, cfg["flow"]["offsets"], cfg["repr"]["encodings"], cfg.norm())
    print(json.dumps(res))


def _subsets(cfg):
    manifest = _load_manifest(cfg)
    return ds.split_by_cases(manifest, _split(cfg, manifest))


def _class_map(cfg):
    return None if cfg["dataset"]["source"] == "synthetic" else CLASS_MAPS[cfg["dataset"]["class_map"]]


def _run_key(cfg, variant, seed, manifest_text):
    h = hashlib.sha256(cfg.fingerprint("flow", "repr", "augment", "network", "train", "split").encode())
    h.update(manifest_text.encode("utf-8"))
    h.update(f"{variant.name}|{seed}".encode("utf-8"))
    return h.hexdigest()


def cmd_train(cfg, out):
    tr, va, _ = _subsets(cfg)
    index = pipeline.CompletionIndex(out / "train_index.json")
    seeds = repeat_seeds(cfg["run"]["seed"], cfg["train"]["repeats"])
    done = []
    for variant in cfg["train"]["variants"]:
        paths = [out / "checkpoints" / f"{_slug(variant)}_r{k}.fsn" for k in range(len(seeds))]
        keys = [_run_key(cfg, variant, s, tr.dumps() + va.dumps()) for s in seeds]
        if all(index.is_current(p, k) for p, k in zip(paths, keys)):
            log.info("variant=%s checkpoints up to date", variant.name)
            done += [str(p) for p in paths]
            continue
        s_tr = pipeline.load_samples(tr, variant, _class_map(cfg))
        s_va = pipeline.load_samples(va, variant, _class_map(cfg))
        for path, key, seed in zip(paths, keys, seeds):
            if index.is_current(path, key):
                continue
            log.info("variant=%s seed=%d training", variant.name, seed)
            model = train(variant, s_tr, s_va, cfg.network_config(variant, seed), cfg.train_config(seed))
            path.parent.mkdir(parents=True, exist_ok=True)
            checkpoint.save(path, model)
            index.record(path, key)
            index.save()
            done.append(str(path))
    print(json.dumps({"checkpoints": done}))


def cmd_eval(cfg, out):
    _, _, te = _subsets(cfg)
    seeds = repeat_seeds(cfg["run"]["seed"], cfg["train"]["repeats"])
    index = pipeline.CompletionIndex(out / "eval_index.json")
    written = []
    for variant in cfg["train"]["variants"]:
        samples = None
        for k in range(len(seeds)):
            ck = out / "checkpoints" / f"{_slug(variant)}_r{k}.fsn"
            if not ck.exists():
                raise MissingArtifactError(f"checkpoint {ck} not found; run 'train' first")
            dest = out / "metrics" / f"{_slug(variant)}_r{k}.json"
            key = hashlib.sha256(ck.read_bytes() + te.dumps().encode("utf-8")).hexdigest()
            if index.is_current(dest, key):
                written.append(str(dest))
                continue
            if samples is None:
                samples = pipeline.load_samples(te, variant, _class_map(cfg))
            rec = pipeline.evaluate_model(checkpoint.load(ck), samples, name=variant.name)
            _write_json(dest, {"variant": variant.name, "run": k, "record": rec.to_dict()})
            index.record(dest, key)
            index.save()
            written.append(str(dest))
            log.info("variant=%s run=%d mean_dc=%.4f", variant.name, k, rec.mean.dc)
    print(json.dumps({"metrics": written}))


def _collect_runs(cfg, out) -> Dict[str, List[MetricsRecord]]:
    runs = {}
    for variant in cfg["train"]["variants"]:
        files = sorted((out / "metrics").glob(f"{_slug(variant)}_r*.json"),
                       key=lambda p: int(p.stem.rsplit("_r", 1)[1]))
        if not files:
            raise MissingArtifactError(f"no metrics for variant {variant.name}; run 'eval' first")
        runs[variant.name] = [MetricsRecord.from_dict(json.loads(p.read_text(encoding="utf-8"))["record"])
                              for p in files]
    return runs


def cmd_report(cfg, out):
    notes = []
    if cfg["report"]["source"] == "reference":
        runs = reference.run_records()
        notes.append("Source: reference per-run results shipped with the package.")
    else:
        runs = _collect_runs(cfg, out)
    averaged = {name: average_runs(recs, name) for name, recs in runs.items()}
    groups = [group_means(averaged, g) for g in STANDARD_GROUPS if all(m in averaged for m in g.members)]
    text = render_report(list(averaged.values()), groups, out_dir=out / "report", runs=runs, notes=notes)
    print(text, end="")


COMMANDS = {
    "prepare": (cmd_prepare, "build the manifest, case split and class-balance statistics"),
    "flow": (cmd_flow, "estimate tiled optical flow for every frame and pairing offset"),
    "repr": (cmd_repr, "render RGBof / XY / PC encodings of the raw flow"),
    "train": (cmd_train, "train every variant x repeat and write checkpoints"),
    "eval": (cmd_eval, "evaluate checkpoints on the test split"),
    "report": (cmd_report, "average runs, group variants and write the report tables"),
}


def build_parser():
    env_help = (f"Environment overrides: {ENV_PREFIX}<SECTION>_<KEY>, e.g. {ENV_PREFIX}TRAIN_EPOCHS=5; "
                f"{ENV_PREFIX}CONFIG names a default config file.  Exit codes: 0 ok, 1 validation error, "
                "2 missing artifact, 3 internal error.")
    parser = argparse.ArgumentParser(prog="flowseg", description="Optical-flow-augmented instrument segmentation pipeline.", epilog=env_help)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file")
    common.add_argument("--seed", type=int, help="global seed ([run] seed)")
    common.add_argument("--workers", type=int, help="worker processes for flow ([run] workers)")
    common.add_argument("--variants", help="comma-separated variants, e.g. 'RGB, t1 XY' ([train] variants)")
    common.add_argument("--out", type=Path, help="output directory ([run] out)")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text, epilog=env_help)
    return parser


def main(argv=None, env=None) -> int:
    args = build_parser().parse_args(argv)
    env = os.environ if env is None else env
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s level=%(levelname)s logger=%(name)s %(message)s"))
    root_log = logging.getLogger("flowseg")
    root_log.handlers[:] = [handler]
    root_log.setLevel(args.log_level)
    root_log.propagate = False
    try:
        config_path = args.config or (Path(env[ENV_PREFIX + "CONFIG"]) if env.get(ENV_PREFIX + "CONFIG") else None)
        cfg = load_config(config_path, env, {
            ("run", "seed"): args.seed, ("run", "workers"): args.workers,
            ("run", "out"): args.out, ("train", "variants"): args.variants,
        })
        out = cfg.out
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(cfg.dumps(), encoding="utf-8")
        log.info("command=%s out=%s seed=%d", args.command, out, cfg["run"]["seed"])
        COMMANDS[args.command][0](cfg, out)
        log.info("command=%s done", args.command)
        return EXIT_OK
    except MissingArtifactError as exc:
        log.error("missing artifact: %s", exc)
        return EXIT_MISSING
    except (ValidationError, ValueError) as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION
    except Exception:  # noqa: BLE001 - last-resort contract for scripting
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry points.

Subcommands: gen-data, extract-missing, train, complete, eval, gradcheck,
bench.  Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import data as D
from . import geometry, metrics
from .model import (
    CompletionModel,
    ModelConfig,
    TrainSample,
    expected_parameter_count,
    get_profile,
    train_step,
)
from .model.check import end_to_end_gradient_check
from .nn.gradcheck import run_op_suite
from .nn.rng import mix as rng_mix


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} is not of the form key=value")
        key, value = pair.split("=", 1)
        out[key] = value
    return out


def _profile_from_args(args) -> ModelConfig:
    overrides = _parse_overrides(getattr(args, "set", None))
    if getattr(args, "gamma", None) is not None:
        overrides["gamma"] = str(args.gamma)
    if getattr(args, "cd", None) is not None:
        overrides["cd_variant"] = args.cd
    return get_profile(args.profile, overrides)


def cmd_gen_data(args) -> int:
    cfg = _profile_from_args(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = D.synthesize_training_set(
        args.count, cfg.gt_count, cfg.p_in, cfg.p_missing, seed=args.seed
    )
    manifest = {"profile": cfg.name, "seed": args.seed, "count": args.count, "shapes": []}
    for i, entry in enumerate(dataset):
        stem = f"shape_{i:04d}"
        files = {}
        for part in ("gt", "partial", "true_missing"):
            path = out_dir / f"{stem}.{part}.pcf"
            D.write_cloud(entry[part], path)
            files[part] = path.name
        manifest["shapes"].append(
            {
                "kind": entry["shape"].kind,
                "remove_fraction": entry["occlusion"].remove_fraction,
                "files": files,
            }
        )
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(json.dumps({"out": str(out_dir), "shapes": args.count}))
    return 0


def cmd_extract_missing(args) -> int:
    gt = D.read_cloud(args.gt)
    partial = D.read_cloud(args.partial)
    result = geometry.extract_missing_part(
        gt,
        partial,
        k_normal=args.k_normal,
        alpha=args.alpha,
        beta=args.beta,
        threshold=args.threshold,
        eigen_mode=args.eigen_mode,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if len(result.missing_idx):
        D.write_cloud(gt[result.missing_idx], out_dir / "missing.pcf")
    if len(result.existing_idx):
        D.write_cloud(gt[result.existing_idx], out_dir / "existing.pcf")
    summary = {
        "gt_count": int(gt.shape[0]),
        "partial_count": int(partial.shape[0]),
        "existing_count": int(len(result.existing_idx)),
        "missing_count": int(len(result.missing_idx)),
        "alpha": args.alpha,
        "beta": args.beta,
        "threshold": args.threshold,
        "k_normal": args.k_normal,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return 0


def _load_dataset(data_dir: Path) -> list[TrainSample]:
    manifest = json.loads((data_dir / "manifest.json").read_text())
    samples = []
    for shape in manifest["shapes"]:
        files = shape["files"]
        samples.append(
            TrainSample(
                partial=D.read_cloud(data_dir / files["partial"]),
                gt=D.read_cloud(data_dir / files["gt"]),
                true_missing=D.read_cloud(data_dir / files["true_missing"]),
            )
        )
    return samples


def run_training(
    cfg: ModelConfig,
    samples: list[TrainSample],
    steps: int,
    seed: int,
    lr: float = 5e-4,
    weight_decay: float = 5e-4,
    batch_size: int | None = None,
    lr_decay: float = 0.95,
    lr_decay_every: int = 20,
) -> tuple[CompletionModel, list[dict]]:
    """Train a fresh model; returns it plus one loss record per step.

    The learning rate decays by ``lr_decay`` every ``lr_decay_every`` steps
    (with a full batch, one step visits every shape once).
    """
    model = CompletionModel(cfg, seed=seed)
    plans = [model.sample_plans(s) for s in samples]
    batch_size = len(samples) if batch_size is None else min(batch_size, len(samples))
    log = []
    for step in range(1, steps + 1):
        if batch_size == len(samples):
            batch, batch_plans = samples, plans
        else:
            rng = np.random.default_rng(rng_mix(seed, step))
            pick = rng.choice(len(samples), size=batch_size, replace=False)
            batch = [samples[i] for i in pick]
            batch_plans = [plans[i] for i in pick]
        step_lr = lr * lr_decay ** ((step - 1) // lr_decay_every)
        bd = train_step(model, batch, step=step, seed=seed, lr=step_lr,
                        weight_decay=weight_decay, plans=batch_plans)
        log.append({"step": step, **bd.to_dict()})
    return model, log


def cmd_train(args) -> int:
    cfg = _profile_from_args(args)
    samples = _load_dataset(Path(args.data))
    model, log = run_training(
        cfg, samples, steps=args.steps, seed=args.seed,
        lr=args.lr, weight_decay=args.weight_decay, batch_size=args.batch,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "losses.jsonl", "w") as fh:
        for record in log:
            fh.write(json.dumps(record) + "\n")
    model.store.save(out_dir / "model.pxf")
    sidecar = {"config": cfg.to_dict(), "seed": args.seed, "steps": args.steps}
    (out_dir / "model.json").write_text(json.dumps(sidecar, indent=2))
    print(json.dumps({"out": str(out_dir), "first_total": log[0]["total"],
                      "final_total": log[-1]["total"]}))
    return 0


def load_model(checkpoint: str) -> CompletionModel:
    """Rebuild a model from a .pxf checkpoint and its .json sidecar."""
    ckpt = Path(checkpoint)
    sidecar = ckpt.with_suffix(".json")
    meta = json.loads(sidecar.read_text())
    cfg = ModelConfig.from_dict(meta["config"])
    model = CompletionModel(cfg, seed=meta.get("seed", 0))
    model.store.load_file(ckpt)
    return model


def cmd_complete(args) -> int:
    model = load_model(args.checkpoint)
    cfg = model.cfg
    partial = D.read_cloud(args.input)
    if partial.shape[0] != cfg.p_in:
        partial = D.resample(partial, cfg.p_in)
    result = model.complete(partial, noise_seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    D.write_cloud(partial, out_dir / "partial.pcf")
    D.write_cloud(result.coarse, out_dir / "coarse.pcf")
    D.write_cloud(result.dense, out_dir / "dense_missing.pcf")
    D.write_cloud(result.complete, out_dir / "complete.pcf")
    print(json.dumps({
        "out": str(out_dir),
        "coarse_count": int(result.coarse.shape[0]),
        "dense_count": int(result.dense.shape[0]),
        "complete_count": int(result.complete.shape[0]),
    }))
    return 0


def _eval_one(task) -> tuple[str, dict]:
    name, pred_path, gt_path, partial_path, candidate_paths, dcd_alpha, fs_thresh = task
    pred = D.read_cloud(pred_path)
    gt = D.read_cloud(gt_path)
    partial = D.read_cloud(partial_path) if partial_path else None
    candidates = [D.read_cloud(p) for p in candidate_paths] if candidate_paths else None
    report = metrics.full_report(pred, gt, partial, candidates,
                                 dcd_temperature=dcd_alpha, fscore_threshold=fs_thresh)
    return name, report.to_dict()


def _cloud_files(root: Path) -> dict[str, Path]:
    return {
        str(p.relative_to(root)): p
        for p in sorted(root.rglob("*"))
        if p.suffix in (".pcf", ".xyz")
    }


def cmd_eval(args) -> int:
    pred_path, gt_path = Path(args.pred), Path(args.gt)
    candidate_paths = (
        sorted(str(p) for p in Path(args.candidates).rglob("*") if p.suffix in (".pcf", ".xyz"))
        if args.candidates
        else None
    )

    if pred_path.is_file():
        _, report = _eval_one(("single", str(pred_path), str(gt_path),
                               args.partial, candidate_paths, args.dcd_alpha,
                               args.fscore_threshold))
        print(json.dumps(report, indent=2))
        return 0

    preds = _cloud_files(pred_path)
    gts = _cloud_files(gt_path)
    names = sorted(set(preds) & set(gts))
    if not names:
        raise ValueError(f"no matching cloud files between {pred_path} and {gt_path}")
    tasks = [
        (n, str(preds[n]), str(gts[n]), None, candidate_paths, args.dcd_alpha, args.fscore_threshold)
        for n in names
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            per_shape = dict(pool.map(_eval_one, tasks))
    else:
        per_shape = dict(map(_eval_one, tasks))

    keys = ("cd_l1", "cd_l2_x1000", "dcd", "fscore")
    global_mean = {k: float(np.mean([per_shape[n][k] for n in names])) for k in keys}
    by_category: dict[str, list[str]] = {}
    for n in names:
        category = n.split("/")[0] if "/" in n else "all"
        by_category.setdefault(category, []).append(n)
    category_means = {
        cat: {k: float(np.mean([per_shape[n][k] for n in members])) for k in keys}
        for cat, members in sorted(by_category.items())
    }
    mean_of_category_means = {
        k: float(np.mean([category_means[c][k] for c in category_means])) for k in keys
    }
    print(json.dumps({
        "per_shape": per_shape,
        "global_mean": global_mean,
        "per_category_mean": category_means,
        "mean_of_category_means": mean_of_category_means,
    }, indent=2))
    return 0


def cmd_gradcheck(args) -> int:
    results = run_op_suite(seed=args.seed)
    results.append(end_to_end_gradient_check(seed=args.seed))
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: max relative error {r.max_error:.3e} (tol {r.tolerance:.0e})")
        failed += 0 if r.passed else 1
    if failed:
        print(f"{failed} gradient checks failed", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args) -> int:
    cfg = _profile_from_args(args)
    t0 = time.perf_counter()
    model = CompletionModel(cfg, seed=args.seed)
    build_s = time.perf_counter() - t0

    actual = model.parameter_count()
    expected = expected_parameter_count(cfg)

    partial = D.resample(D.generate_shape(D.ShapeSpec("sphere", cfg.gt_count, seed=args.seed)), cfg.p_in)
    stages = {}
    t = time.perf_counter()
    existing = model.encode(partial)
    stages["encode"] = time.perf_counter() - t
    t = time.perf_counter()
    coarse_t = model.predict_coarse(existing)
    mp_tokens = model.generate_missing_tokens(existing, noise_seed=args.seed, step=0)
    stages["generate"] = time.perf_counter() - t
    t = time.perf_counter()
    pre_mp = model.refine_missing(mp_tokens, existing)
    stages["transform"] = time.perf_counter() - t
    t = time.perf_counter()
    dense_t = model.decoder(pre_mp, coarse_t)
    stages["fold"] = time.perf_counter() - t
    forward_s = sum(stages.values())

    report = {
        "profile": cfg.name,
        "parameter_count": actual,
        "expected_parameter_count": expected,
        "count_match": actual == expected,
        "build_seconds": build_s,
        "stage_seconds": stages,
        "forward_seconds": forward_s,
        "dense_count": int(dense_t.shape[0]),
    }
    print(json.dumps(report, indent=2))
    return 0 if actual == expected else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxycomplete",
                                     description="Proxy-based point cloud completion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_profile(p, train_flags=False):
        p.add_argument("--profile", default="toy", help="config profile name")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (repeatable)")
        if train_flags:
            p.add_argument("--gamma", type=float, default=None, help="alignment loss weight")
            p.add_argument("--cd", choices=("l1", "l2"), default=None, help="chamfer variant")

    p = sub.add_parser("gen-data", help="generate a synthetic training set")
    add_profile(p)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8, help="number of shapes")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("extract-missing", help="split a complete cloud against a partial scan")
    p.add_argument("gt")
    p.add_argument("partial")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--beta", type=float, default=0.8)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--k-normal", type=int, default=16)
    p.add_argument("--eigen-mode", choices=("smallest", "largest"), default="smallest")
    p.set_defaults(func=cmd_extract_missing)

    p = sub.add_parser("train", help="train a completion model")
    add_profile(p, train_flags=True)
    p.add_argument("--data", required=True, help="directory produced by gen-data")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--batch", type=int, default=None, help="batch size (default: all shapes)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("complete", help="complete a partial cloud with a trained model")
    p.add_argument("--checkpoint", required=True, help=".pxf file with .json sidecar")
    p.add_argument("--input", required=True, help="partial cloud (.pcf or .xyz)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="query noise seed")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--pred", required=True, help="cloud file or directory")
    p.add_argument("--gt", required=True, help="cloud file or directory")
    p.add_argument("--partial", default=None, help="partial input for fidelity")
    p.add_argument("--candidates", default=None, help="directory of reference shapes for MMD")
    p.add_argument("--dcd-alpha", type=float, default=1000.0, help="DCD temperature")
    p.add_argument("--fscore-threshold", type=float, default=0.01)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="parameter count and per-stage timings")
    add_profile(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Operator surface: subcommands, deterministic orchestration, artifacts.

Exit codes: 0 success, 1 validation error (including bad flags/config), 2
numerical abort. Every subcommand that writes artifacts puts them under its
output directory together with a manifest recording the effective config, its
hash, and a sha256 per emitted file; nothing in the manifest depends on wall
clock, so identical invocations produce byte-identical trees.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .backend import BACKEND
from .config import build_config, config_hash, load_config_file
from .datasets import DatasetSplit, SyntheticSpec, generate_synthetic, load_records, write_records
from .encoders import (
    LinearHead,
    LowRankAdapter,
    MlpEncoder,
    StudentEncoder,
    forward_student,
    forward_student_cached,
    forward_teacher,
    head_forward,
    head_grad,
    load_bundle,
    save_bundle,
    vjp_adapter,
)
from .errors import NumericalAbortError, ValidationError
from .grad_core import (
    MODES,
    bce_with_logits,
    directional_probe,
    feature_grad,
)
from .metrics_eval import (
    DriftReport,
    accuracy,
    export_projection_2d,
    knn_overlap,
    prior_drift,
    write_metrics_jsonl,
)
from .numerics import Rng
from .trainer import SurgeryConfig, train, with_overrides

_SWEEP_LAMBDAS = (0.0, 0.05, 0.1, 0.2, 0.5)
_ABLATE_SEEDS = 5
_DRIFT_SAMPLE = 512


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract reserves 2 for numerical
    aborts, so flag/usage errors are remapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _thread_cap() -> int:
    raw = os.environ.get("GRADSURGEON_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise ValidationError(f"GRADSURGEON_THREADS expects an integer, got {raw!r}") from None
    if cap < 1:
        raise ValidationError(f"GRADSURGEON_THREADS must be >= 1, got {cap}")
    return cap


def _run_jobs(jobs, threads: int):
    """Run callables preserving submission order in the result list."""
    if threads <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: str, command: str, config: SurgeryConfig, files) -> None:
    manifest = {
        "package": "gradsurgeon",
        "version": __version__,
        "backend": BACKEND,
        "command": command,
        "seed": config.seed,
        "config": dataclasses.asdict(config),
        "config_hash": config_hash(config),
        "files": {name: _sha256_file(os.path.join(out_dir, name)) for name in sorted(files)},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _spec_from_config(config: SurgeryConfig) -> SyntheticSpec:
    return SyntheticSpec(
        d_artifact=config.d_artifact,
        d_semantic=config.d_semantic,
        d_noise=config.d_noise,
        corr_in=config.corr_in,
        corr_out=config.corr_out,
        n_train=config.n_train,
        n_test_in=config.n_test_in,
        n_test_cross=config.n_test_cross,
        artifact_margin=config.artifact_margin,
        seed=config.seed,
    )


def _load_split(config: SurgeryConfig, data_path) -> DatasetSplit:
    if data_path is not None:
        return load_records(data_path)
    return generate_synthetic(_spec_from_config(config))


def _config_from_args(args, **extra) -> SurgeryConfig:
    file_values = load_config_file(args.config) if args.config else None
    return build_config(file_values, **extra)


def _evaluate(bundle, split: DatasetSplit, knn_k: int) -> dict:
    report = {}
    for name, records in (("in_domain", split.test_in_domain), ("cross_domain", split.test_cross_domain)):
        if not records:
            continue
        logits = [head_forward(bundle.h_img, forward_student(bundle.student, r.x)) for r in records]
        report[name] = accuracy(
            logits, [r.label for r in records], domains=[r.domain for r in records]
        ).as_dict()
    probe_records = split.test_in_domain or split.train
    sample = probe_records[:_DRIFT_SAMPLE]
    student_feats = [forward_student(bundle.student, r.x) for r in sample]
    teacher_feats = [forward_teacher(bundle.teacher, r.x) for r in sample]
    k = min(knn_k, len(sample) - 1)
    report["representation"] = DriftReport(
        mean_cosine_distance=prior_drift(student_feats, teacher_feats),
        knn_overlap=knn_overlap(student_feats, teacher_feats, k),
        k=k,
    ).as_dict()
    return report


def _train_and_report(config: SurgeryConfig, split: DatasetSplit):
    bundle, history = train(config, split)
    return bundle, history, _evaluate(bundle, split, config.knn_k)


def _write_run_artifacts(out_dir: str, config: SurgeryConfig, bundle, history, report) -> list:
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_jsonl(
        os.path.join(out_dir, "history.jsonl"), [e.as_dict() for e in history.epochs]
    )
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_bundle(bundle, os.path.join(out_dir, "checkpoint.txt"), config_echo=dataclasses.asdict(config))
    return ["history.jsonl", "report.json", "checkpoint.txt"]


def _cmd_gen_data(args) -> int:
    config = _config_from_args(args, seed=args.seed)
    split = generate_synthetic(_spec_from_config(config))
    os.makedirs(args.out, exist_ok=True)
    write_records(split, args.out)
    files = ["train.jsonl", "test_in.jsonl", "test_cross.jsonl"]
    _write_manifest(args.out, "gen-data", config, files)
    print(
        f"wrote {len(split.train)} train / {len(split.test_in_domain)} in-domain / "
        f"{len(split.test_cross_domain)} cross-domain records to {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    config = _config_from_args(
        args, seed=args.seed, mode=args.mode, lam=args.lam, epochs=args.epochs
    )
    split = _load_split(config, args.data)
    bundle, history, report = _train_and_report(config, split)
    files = _write_run_artifacts(args.out, config, bundle, history, report)
    _write_manifest(args.out, "train", config, files)
    last = history.epochs[-1]
    cross = report.get("cross_domain", {}).get("accuracy_overall")
    cross_txt = f" cross_acc={cross:.4f}" if cross is not None else ""
    print(
        f"mode={config.mode} epochs={config.epochs} final_loss={last.loss_img:.4f} "
        f"train_acc={last.train_accuracy:.4f}{cross_txt} -> {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    config = _config_from_args(args, seed=args.seed)
    bundle, _ = load_bundle(args.checkpoint)
    split = _load_split(config, args.data)
    report = _evaluate(bundle, split, config.knn_k)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "eval", config, ["report.json"])
    for section, values in sorted(report.items()):
        if "accuracy_overall" in values:
            print(f"{section}: acc={values['accuracy_overall']:.4f} ap={values['average_precision']:.4f}")
        else:
            print(
                f"{section}: drift={values['mean_cosine_distance']:.6f} "
                f"knn_overlap={values['knn_overlap']:.4f}"
            )
    return 0


def _central_diff(fn, x: np.ndarray, i: int, h: float) -> float:
    hi = np.array(x)
    lo = np.array(x)
    hi[i] += h
    lo[i] -= h
    return (fn(hi) - fn(lo)) / (2.0 * h)


def _rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


def _condition_features(head: LinearHead, f: np.ndarray, cap: float = 6.0) -> np.ndarray:
    """Shift f along w so |logit| <= cap. At saturated logits the loss is
    ~e^-|z| and central differences lose all relative accuracy to
    cancellation, so the audit probes well-conditioned points only."""
    z = head_forward(head, f)
    target = min(max(z, -cap), cap)
    if z != target:
        f = f - ((z - target) / float(np.dot(head.w, head.w))) * head.w
    return f


def _cmd_gradcheck(args) -> int:
    rng = Rng(args.seed if args.seed is not None else 0)
    h = 1e-6
    worst = {}

    err = 0.0
    for trial in range(20):
        r = rng.derive(f"feat/{trial}")
        dim = 3 + trial % 14
        w = r.gaussian(dim, 0.0, 1.0)
        b = r.gaussian(1, 0.0, 1.0)[0]
        head = LinearHead(w=w, b=b)
        f = _condition_features(head, r.gaussian(dim, 0.0, 2.0))
        label = trial % 2
        grad = feature_grad(head, f, label)
        loss = lambda v: bce_with_logits(head_forward(head, v), label)  # noqa: E731
        for i in range(dim):
            err = max(err, _rel_err(grad[i], _central_diff(loss, f, i, h)))
    worst["feature_grad"] = err

    err = 0.0
    for trial in range(20):
        r = rng.derive(f"head/{trial}")
        dim = 3 + trial % 14
        w = r.gaussian(dim, 0.0, 1.0)
        b = r.gaussian(1, 0.0, 1.0)[0]
        f = _condition_features(LinearHead(w=w, b=b), r.gaussian(dim, 0.0, 2.0))
        label = trial % 2
        grad_w, grad_b = head_grad(LinearHead(w=w, b=b), f, label)
        loss_w = lambda v: bce_with_logits(head_forward(LinearHead(w=v, b=b), f), label)  # noqa: E731
        for i in range(dim):
            err = max(err, _rel_err(grad_w[i], _central_diff(loss_w, w, i, h)))
        loss_b = lambda v: bce_with_logits(head_forward(LinearHead(w=w, b=v[0]), f), label)  # noqa: E731
        err = max(err, _rel_err(grad_b, _central_diff(loss_b, np.array([b]), 0, h)))
    worst["head_grad"] = err

    err = 0.0
    for trial in range(10):
        r = rng.derive(f"vjp/{trial}")
        d_in = 4 + trial % 4
        d_out = 4 + (trial + 2) % 4
        rank = 2 + trial % 3
        base = MlpEncoder(
            weights=[r.gaussian(d_out * d_in, 0.0, 0.7).reshape(d_out, d_in)],
            biases=[r.gaussian(d_out, 0.0, 0.1)],
        )
        adapter = LowRankAdapter(
            A=r.gaussian(rank * d_out, 0.0, 0.5).reshape(rank, d_out),
            B=r.gaussian(d_out * rank, 0.0, 0.5).reshape(d_out, rank),
            rank=rank,
            alpha=float(rank),
            dropout_rate=0.0,
        )
        enc = StudentEncoder(base=base, adapter=adapter)
        x = r.gaussian(d_in, 0.0, 1.0)
        v = r.gaussian(d_out, 0.0, 1.0)
        _, cache = forward_student_cached(enc, x, train_mode=False, rng=r)
        grads = vjp_adapter(enc, x, v, cache)

        def dot_f(a_flat, b_flat):
            trial_enc = StudentEncoder(
                base=base,
                adapter=LowRankAdapter(
                    A=a_flat.reshape(rank, d_out),
                    B=b_flat.reshape(d_out, rank),
                    rank=rank,
                    alpha=float(rank),
                    dropout_rate=0.0,
                ),
            )
            return float(np.dot(forward_student(trial_enc, x), v))

        a0 = adapter.A.ravel()
        b0 = adapter.B.ravel()
        for i in range(a0.size):
            err = max(
                err,
                _rel_err(grads.grad_A.ravel()[i], _central_diff(lambda q: dot_f(q, b0), a0, i, h)),
            )
        for i in range(b0.size):
            err = max(
                err,
                _rel_err(grads.grad_B.ravel()[i], _central_diff(lambda q: dot_f(a0, q), b0, i, h)),
            )
    worst["vjp_adapter"] = err

    probe_bad = 0
    for trial in range(100):
        r = rng.derive(f"probe/{trial}")
        dim = 3 + trial % 14
        head = LinearHead(w=r.gaussian(dim, 0.0, 1.0), b=r.gaussian(1, 0.0, 1.0)[0])
        f = _condition_features(head, r.gaussian(dim, 0.0, 2.0))
        label = trial % 2
        grad = feature_grad(head, f, label)
        loss = lambda v: bce_with_logits(head_forward(head, v), label)  # noqa: E731
        for i in range(dim):
            if abs(grad[i]) > 1e-3 and directional_probe(loss, f, i) != int(np.sign(grad[i])):
                probe_bad += 1

    failed = False
    for name, value in worst.items():
        status = "ok" if value <= 1e-5 else "FAIL"
        failed = failed or value > 1e-5
        print(f"{name:12s} max rel err = {value:.3e}  [{status}]")
    status = "ok" if probe_bad == 0 else "FAIL"
    failed = failed or probe_bad > 0
    print(f"probe_signs  mismatches  = {probe_bad}  [{status}]")
    return 1 if failed else 0


def _summary_row(config: SurgeryConfig, history, report) -> dict:
    rep = report["representation"]
    row = {
        "mode": config.mode,
        "seed": config.seed,
        "lam": config.lam,
        "train_accuracy": history.epochs[-1].train_accuracy,
        "drift": rep["mean_cosine_distance"],
        "knn_overlap": rep["knn_overlap"],
    }
    for section in ("in_domain", "cross_domain"):
        if section in report:
            row[f"{section}_accuracy"] = report[section]["accuracy_overall"]
            row[f"{section}_ap"] = report[section]["average_precision"]
    return row


def _mode_row(config: SurgeryConfig, split: DatasetSplit) -> dict:
    _, history, report = _train_and_report(config, split)
    return _summary_row(config, history, report)


def _write_csv(path: str, rows: list, columns: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = []
            for col in columns:
                value = row[col]
                cells.append(repr(value) if isinstance(value, float) else str(value))
            fh.write(",".join(cells) + "\n")


def _cmd_ablate(args) -> int:
    config = _config_from_args(args, seed=args.seed, epochs=args.epochs)
    seeds = [config.seed + i for i in range(_ABLATE_SEEDS)]
    splits = {s: generate_synthetic(_spec_from_config(with_overrides(config, seed=s))) for s in seeds}
    jobs = [
        (lambda m=mode, s=seed: _mode_row(with_overrides(config, mode=m, seed=s), splits[s]))
        for mode in MODES
        for seed in seeds
    ]
    rows = _run_jobs(jobs, _thread_cap())
    os.makedirs(args.out, exist_ok=True)
    columns = [
        "mode", "seed", "in_domain_accuracy", "cross_domain_accuracy",
        "in_domain_ap", "cross_domain_ap", "train_accuracy", "drift", "knn_overlap",
    ]
    _write_csv(os.path.join(args.out, "ablate.csv"), rows, columns)
    _write_manifest(args.out, "ablate", config, ["ablate.csv"])
    print(f"{'mode':16s} {'cross_acc':>10s} {'in_acc':>10s} {'drift':>10s} {'knn':>8s}")
    for mode in MODES:
        sel = [r for r in rows if r["mode"] == mode]
        print(
            f"{mode:16s} "
            f"{np.mean([r['cross_domain_accuracy'] for r in sel]):10.4f} "
            f"{np.mean([r['in_domain_accuracy'] for r in sel]):10.4f} "
            f"{np.mean([r['drift'] for r in sel]):10.6f} "
            f"{np.mean([r['knn_overlap'] for r in sel]):8.4f}"
        )
    return 0


def _lam_dir(lam: float) -> str:
    return f"lam_{lam:g}"


def _cmd_sweep(args) -> int:
    config = _config_from_args(args, seed=args.seed)
    split = _load_split(config, None)

    def one(lam: float) -> dict:
        run_config = with_overrides(config, mode="full", lam=lam)
        bundle, history, report = _train_and_report(run_config, split)
        sub = os.path.join(args.out, _lam_dir(lam))
        files = _write_run_artifacts(sub, run_config, bundle, history, report)
        _write_manifest(sub, "sweep", run_config, files)
        return _summary_row(run_config, history, report)

    rows = _run_jobs([lambda l=lam: one(l) for lam in _SWEEP_LAMBDAS], _thread_cap())
    os.makedirs(args.out, exist_ok=True)
    columns = [
        "lam", "cross_domain_accuracy", "in_domain_accuracy",
        "train_accuracy", "drift", "knn_overlap",
    ]
    _write_csv(os.path.join(args.out, "sweep.csv"), rows, columns)
    files = ["sweep.csv"] + [
        os.path.join(_lam_dir(lam), name)
        for lam in _SWEEP_LAMBDAS
        for name in ("history.jsonl", "report.json", "checkpoint.txt", "manifest.json")
    ]
    _write_manifest(args.out, "sweep", config, files)
    for row in rows:
        print(
            f"lam={row['lam']:<5g} cross_acc={row['cross_domain_accuracy']:.4f} "
            f"in_acc={row['in_domain_accuracy']:.4f} drift={row['drift']:.6f}"
        )
    return 0


def _cmd_export_plots(args) -> int:
    config = _config_from_args(args, seed=args.seed)
    bundle, _ = load_bundle(args.checkpoint)
    split = _load_split(config, args.data)
    records = list(split.test_in_domain) + list(split.test_cross_domain)
    if not records:
        records = list(split.train)
    os.makedirs(args.out, exist_ok=True)
    ids = [r.id for r in records]
    labels = [r.label for r in records]
    domains = [r.domain for r in records]
    student_feats = [forward_student(bundle.student, r.x) for r in records]
    teacher_feats = [forward_teacher(bundle.teacher, r.x) for r in records]
    export_projection_2d(
        student_feats, labels, domains, os.path.join(args.out, "projection_student.csv"), ids=ids
    )
    export_projection_2d(
        teacher_feats, labels, domains, os.path.join(args.out, "projection_teacher.csv"), ids=ids
    )
    _write_manifest(
        args.out, "export-plots", config, ["projection_student.csv", "projection_teacher.csv"]
    )
    print(f"wrote 2-D projections for {len(records)} records to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gradsurgeon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gradsurgeon {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def add(name, func, help_text, *, data=False, mode=False, epochs=False, checkpoint=False, out=True):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", metavar="PATH", help="key = value config file")
        p.add_argument("--seed", type=int, metavar="N")
        if mode:
            p.add_argument("--mode", choices=MODES)
            p.add_argument("--lambda", dest="lam", type=float, metavar="X")
        if epochs:
            p.add_argument("--epochs", type=int, metavar="N")
        if data:
            p.add_argument("--data", metavar="PATH", help="record directory or single .jsonl")
        if checkpoint:
            p.add_argument("--checkpoint", metavar="PATH", required=True)
        if out:
            p.add_argument("--out", metavar="DIR", default=os.path.join("runs", name))
        return p

    add("gen-data", _cmd_gen_data, "generate the synthetic benchmark record files")
    add("train", _cmd_train, "train one configuration and write history/checkpoint/report",
        data=True, mode=True, epochs=True)
    add("eval", _cmd_eval, "evaluate a checkpoint on a dataset", data=True, checkpoint=True)
    add("gradcheck", _cmd_gradcheck, "finite-difference audit of all analytic gradients", out=False)
    add("ablate", _cmd_ablate, "run all six modes over five seeds and tabulate", epochs=True)
    add("sweep", _cmd_sweep, "sweep the alignment weight over a fixed grid")
    add("export-plots", _cmd_export_plots, "export 2-D feature projections as CSV",
        data=True, checkpoint=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalAbortError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()

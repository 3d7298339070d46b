"""Batch drivers: generate phantoms, segment datasets, evaluate, compare, report.

Exit codes: 0 full success, 2 partial failure (some images failed during
segmentation), 3 evaluation error (missing predictions, empty groups), 64
usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import exchange, metrics, phantom, pipelines, stats
from .backends import PredictorContext
from .errors import MissingPredictionError, PromptsegError
from .exchange import ScoreRow, ScoreTable
from .pipelines import AMGParams
from .prompting import APGParams

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_EVAL = 3
EXIT_USAGE = 64

# image_id used for the per-dataset mean row in score tables; compare and
# report drop it before testing or ranking.
MEAN_ID = "__mean__"

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit with code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _exit_code(exc: SystemExit) -> int:
    if isinstance(exc.code, int):
        return exc.code
    return EXIT_OK if exc.code is None else EXIT_USAGE


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return _exit_code(exc)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, parser)
    except SystemExit as exc:
        return _exit_code(exc)
    except PromptsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL


def _build_parser() -> _Parser:
    parser = _Parser(prog="promptseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic dataset with ground truth")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n-images", type=int, default=5)
    p.add_argument("--n-objects", type=int, default=20)
    p.add_argument("--size", type=int, nargs=2, default=(256, 256), metavar=("H", "W"))
    p.add_argument("--shape", choices=("disk", "ellipse", "blob"), default="disk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--blur-radius", type=float, default=0.0)
    p.add_argument("--min-gap", type=int, default=2)
    p.add_argument("--radius", type=float, nargs=2, default=(4.0, 10.0), metavar=("MIN", "MAX"))
    p.add_argument("--allow-touching", action="store_true")
    p.add_argument("--name", default="phantom")
    p.add_argument("--modality", default="synthetic")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("segment", help="run a segmentation method over a manifest")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--method", required=True, choices=("apg", "apg_boundary", "ais", "amg"))
    p.add_argument("--backend", choices=("oracle", "region_grow", "external"), default="oracle")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--params", default=None, help="JSON object or path to a JSON file")
    p.add_argument("--decoder-graph", type=Path, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score predictions against manifest ground truth")
    p.add_argument("--pred-dir", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--method", default=None, help="method name for the score rows "
                   "(default: from the prediction directory's run log)")
    p.add_argument("--thresholds", default=None, help="comma-separated IoU thresholds")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="pairwise signed-rank tests between methods")
    p.add_argument("--scores", required=True, nargs="+", type=Path)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="per-dataset score tables with ranks")
    p.add_argument("--scores", required=True, nargs="+", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--svg", action="store_true", help="also write a grouped-bar chart")
    p.set_defaults(func=cmd_report)
    return parser


def cmd_phantom(args, parser) -> int:
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    items = []
    for i in range(args.n_images):
        spec = phantom.PhantomSpec(
            seed=args.seed + 2 * i,
            image_size=tuple(args.size),
            n_objects=args.n_objects,
            shape_kind=args.shape,
            min_gap=args.min_gap,
            allow_touching=args.allow_touching,
            noise_sigma=args.noise_sigma,
            blur_radius=args.blur_radius,
            radius_range=tuple(args.radius),
        )
        gt = phantom.generate(spec)
        bundle = phantom.analytic_maps(gt)
        if spec.noise_sigma > 0 or spec.blur_radius > 0:
            bundle = phantom.corrupt(
                bundle, spec.noise_sigma, spec.blur_radius, seed=args.seed + 2 * i + 1
            )
        item_id = f"img_{i:03d}"
        bundle_path = out / f"{item_id}.bundle.npz"
        gt_path = out / f"{item_id}.gt.npy"
        exchange.write_bundle(bundle, bundle_path)
        exchange.write_label_map(gt, gt_path, format="array")
        items.append(exchange.ManifestItem(id=item_id, bundle_path=bundle_path, gt_path=gt_path))
    manifest = exchange.DatasetManifest(name=args.name, modality=args.modality, items=items)
    exchange.write_manifest(manifest, out / "manifest.json")
    print(f"wrote {len(items)} phantom images to {out}")
    return EXIT_OK


def _load_params(value, parser) -> dict:
    if value is None:
        return {}
    text = value
    if not value.lstrip().startswith("{"):
        path = Path(value)
        if not path.is_file():
            parser.error(f"--params must be a JSON object or an existing file, got {value!r}")
        text = path.read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        parser.error(f"invalid params JSON: {exc}")
    if not isinstance(obj, dict):
        parser.error("params JSON must be an object")
    return obj


def _build_params(cls, raw: dict, parser):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        parser.error(f"unknown params keys: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        parser.error(f"invalid params: {exc}")


def cmd_segment(args, parser) -> int:
    manifest = exchange.read_manifest(args.manifest)
    raw = _load_params(args.params, parser)
    method = args.method
    min_separation = 3
    if method == "apg_boundary" and "min_separation" in raw:
        min_separation = int(raw.pop("min_separation"))
    if method == "amg":
        params = _build_params(AMGParams, raw, parser)
    else:
        params = _build_params(APGParams, raw, parser)

    uses_backend = method != "ais"
    if uses_backend:
        if args.backend == "external" and args.decoder_graph is None:
            parser.error("--backend external requires --decoder-graph")
        if args.backend == "oracle":
            missing = [item.id for item in manifest.items if item.gt_path is None]
            if missing:
                parser.error(
                    "oracle backend requires gt_path for every item; missing for: "
                    + ", ".join(missing)
                )

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)

    def work(item: exchange.ManifestItem):
        start = time.perf_counter()
        info: dict = {}
        bundle = exchange.read_bundle(item.bundle_path)
        if method == "ais":
            labels = pipelines.run_ais(bundle, params, info=info)
        else:
            gt = None
            if args.backend == "oracle":
                gt = exchange.read_label_map(item.gt_path)
            ctx = PredictorContext(
                bundle=bundle, ground_truth=gt, decoder_graph=args.decoder_graph
            )
            if method == "apg":
                labels = pipelines.run_apg(bundle, ctx, params, backend=args.backend, info=info)
            elif method == "apg_boundary":
                labels = pipelines.run_apg_boundary(
                    bundle, ctx, params, min_separation=min_separation,
                    backend=args.backend, info=info,
                )
            else:
                labels = pipelines.run_amg(bundle, ctx, params, backend=args.backend, info=info)
        info["time_s"] = round(time.perf_counter() - start, 6)
        return labels, info

    failed: list[str] = []
    image_logs: dict[str, dict] = {}
    with ThreadPoolExecutor(max_workers=max(args.workers, 1)) as pool:
        futures = [(item, pool.submit(work, item)) for item in manifest.items]
        for item, future in futures:
            try:
                labels, info = future.result()
            except Exception as exc:
                logger.warning("image %s failed: %s", item.id, exc)
                failed.append(item.id)
                image_logs[item.id] = {"error": str(exc)}
                continue
            exchange.write_label_map(labels, out / f"{item.id}.seg.npy", format="array")
            image_logs[item.id] = info

    run_log = {
        "method": method,
        "backend": args.backend if uses_backend else None,
        "params": dataclasses.asdict(params),
        "workers": args.workers,
        "manifest": str(args.manifest),
        "dataset": manifest.name,
        "images": image_logs,
        "failed": failed,
    }
    if method == "apg_boundary":
        run_log["params"]["min_separation"] = min_separation
    (out / "run_log.json").write_text(json.dumps(run_log, indent=2, sort_keys=True) + "\n")
    done = len(manifest.items) - len(failed)
    print(f"segmented {done}/{len(manifest.items)} images with {method}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _method_from_run_log(pred_dir: Path) -> str | None:
    log_path = pred_dir / "run_log.json"
    if not log_path.is_file():
        return None
    try:
        log = json.loads(log_path.read_text())
    except json.JSONDecodeError:
        return None
    method = log.get("method")
    backend = log.get("backend")
    if method is None:
        return None
    return f"{method}+{backend}" if backend else str(method)


def cmd_evaluate(args, parser) -> int:
    manifest = exchange.read_manifest(args.manifest)
    method = args.method or _method_from_run_log(args.pred_dir)
    if method is None:
        parser.error("--method is required when the prediction dir has no run log")
    if args.thresholds is None:
        schedule = metrics.DEFAULT_THRESHOLDS
    else:
        schedule = tuple(float(v) for v in args.thresholds.split(","))

    rows: list[ScoreRow] = []
    per_image: list[float] = []
    for item in manifest.items:
        if item.gt_path is None:
            continue
        pred_path = args.pred_dir / f"{item.id}.seg.npy"
        if not pred_path.exists():
            raise MissingPredictionError(item.id)
        score = metrics.msa(
            exchange.read_label_map(pred_path),
            exchange.read_label_map(item.gt_path),
            schedule,
        )
        rows.append(ScoreRow(manifest.name, item.id, method, score))
        per_image.append(score)
    if not per_image:
        print(f"error: manifest {manifest.name!r} has no ground-truth items", file=sys.stderr)
        return EXIT_EVAL
    mean = sum(per_image) / len(per_image)
    rows.append(ScoreRow(manifest.name, MEAN_ID, method, mean))
    table = ScoreTable(rows)

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    exchange.write_scores(table, out / "scores.csv", format="csv")
    exchange.write_scores(table, out / "scores.json", format="json")
    print(f"{manifest.name}/{method}: mean msa {mean:.6f} over {len(per_image)} images")
    return EXIT_OK


def _merged_scores(paths) -> ScoreTable:
    table = ScoreTable([])
    for path in paths:
        table.extend(exchange.read_scores(path))
    table.rows = [row for row in table.rows if row.image_id != MEAN_ID]
    return table.validate()


def cmd_compare(args, parser) -> int:
    table = _merged_scores(args.scores)
    methods = table.methods()
    if len(methods) < 2:
        parser.error("compare needs score tables covering at least two methods")
    matrix = stats.win_loss_draw(table, alpha=args.alpha)

    means = metrics.aggregate(table)
    by_method: dict[str, dict[str, float]] = {}
    for (dataset, method), value in means.items():
        by_method.setdefault(method, {})[dataset] = value
    ranks = metrics.average_rank(by_method)

    header = (
        f"paired Wilcoxon signed-rank, two-sided, zeros dropped, alpha={args.alpha:g}"
    )
    payload = {
        "test": header,
        "alpha": args.alpha,
        "average_ranks": ranks,
        "datasets": {
            dataset: {
                f"{a} vs {b}": {
                    "n_effective": r.n_effective,
                    "w": r.w_statistic,
                    "w_plus": r.w_plus,
                    "w_minus": r.w_minus,
                    "p": r.p_value,
                    "method": r.method,
                    "verdict": r.verdict,
                }
                for (a, b), r in cells.items()
            }
            for dataset, cells in matrix.items()
        },
    }
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    lines = [header, ""]
    lines.append("average ranks: " + ", ".join(f"{m}={ranks[m]:.2f}" for m in sorted(ranks)))
    for dataset in sorted(matrix):
        lines.append("")
        lines.append(f"[{dataset}]")
        for (a, b), r in sorted(matrix[dataset].items()):
            if a >= b:
                continue
            lines.append(f"  {a} vs {b}: {r.verdict} (p={r.p_value:.6g}, n={r.n_effective})")
    text = "\n".join(lines) + "\n"
    (out / "comparison.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_report(args, parser) -> int:
    table = _merged_scores(args.scores)
    means = metrics.aggregate(table)
    datasets = sorted({dataset for dataset, _ in means})
    methods = sorted({method for _, method in means})

    ranked: list[tuple[str, str, float, float]] = []
    for dataset in datasets:
        present = [m for m in methods if (dataset, m) in means]
        scores = [means[(dataset, m)] for m in present]
        order = sorted(range(len(present)), key=lambda i: -scores[i])
        ranks = [0.0] * len(present)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
                j += 1
            midrank = (i + j) / 2.0 + 1.0
            for k in range(i, j + 1):
                ranks[order[k]] = midrank
            i = j + 1
        for m, s, r in zip(present, scores, ranks):
            ranked.append((dataset, m, s, r))
    ranked.sort(key=lambda row: (row[0], row[3], row[1]))

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    csv_lines = ["dataset,method,msa,rank"]
    for dataset, method, score, rank in ranked:
        csv_lines.append(f"{dataset},{method},{score:.6f},{rank:.1f}")
    (out / "report.csv").write_text("\n".join(csv_lines) + "\n")

    payload = {
        "datasets": {
            dataset: [
                {"method": m, "msa": s, "rank": r, "top3": r <= 3}
                for d, m, s, r in ranked
                if d == dataset
            ]
            for dataset in datasets
        }
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    if args.svg:
        (out / "report.svg").write_text(_svg_chart(means, datasets, methods))
    print(f"wrote report for {len(datasets)} dataset(s) x {len(methods)} method(s) to {out}")
    return EXIT_OK


_SVG_PALETTE = (
    "#4c78a8", "#f58518", "#54a24b", "#e45756",
    "#72b7b2", "#b279a2", "#9d755d", "#bab0ac",
)


def _svg_chart(means, datasets, methods) -> str:
    """Deterministic grouped-bar chart of mean scores per dataset."""
    bar_w = 22
    group_gap = 36
    left = 56
    top = 34
    plot_h = 220
    group_w = len(methods) * bar_w
    width = left + len(datasets) * (group_w + group_gap) + 20
    height = top + plot_h + 52
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = top + plot_h * (1.0 - frac)
        parts.append(
            f'<line x1="{left}" y1="{y:.1f}" x2="{width - 12}" y2="{y:.1f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{frac:.2f}</text>'
        )
    for mi, method in enumerate(methods):
        color = _SVG_PALETTE[mi % len(_SVG_PALETTE)]
        lx = left + mi * 110
        parts.append(f'<rect x="{lx}" y="8" width="12" height="12" fill="{color}"/>')
        parts.append(f'<text x="{lx + 16}" y="18">{method}</text>')
    for di, dataset in enumerate(datasets):
        gx = left + di * (group_w + group_gap)
        for mi, method in enumerate(methods):
            if (dataset, method) not in means:
                continue
            value = means[(dataset, method)]
            bh = plot_h * value
            x = gx + mi * bar_w
            y = top + plot_h - bh
            color = _SVG_PALETTE[mi % len(_SVG_PALETTE)]
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w - 4}" height="{bh:.1f}" '
                f'fill="{color}"><title>{dataset} {method}: {value:.4f}</title></rect>'
            )
        parts.append(
            f'<text x="{gx + group_w / 2:.1f}" y="{top + plot_h + 18}" '
            f'text-anchor="middle">{dataset}</text>'
        )
    parts.append(
        f'<line x1="{left}" y1="{top + plot_h}" x2="{width - 12}" y2="{top + plot_h}" '
        'stroke="#333333" stroke-width="1"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


if __name__ == "__main__":
    raise SystemExit(main())

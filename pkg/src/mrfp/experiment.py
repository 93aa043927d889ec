"""End-to-end runs: build data, train, evaluate, run diagnostics, write reports."""

from __future__ import annotations

import json
import logging
import os
import time

import numpy as np
import torch

from . import config as cfgmod
from .config import ExperimentConfig
from .harness.backbone import SegBackbone
from .harness.data import SegDataset, make_dataset
from .harness.train import evaluate, final_stage_features, train
from .hrfp import StackSpec, hrfp_forward, sample_stack
from .metrics import export_embedding, mmd, stat_embedding
from .npplus import np_plus, sample_coeffs
from .spectral import band_delta, band_energy
from .wrapper import wrap

log = logging.getLogger(__name__)

REPORT_FORMAT = "mrfp-run-report/1"


def build_datasets(cfg: ExperimentConfig):
    size = tuple(cfg.image_size)
    sources = [make_dataset(s, cfg.n_train, size) for s in cfg.sources]
    source_eval = make_dataset(cfg.source_eval, cfg.n_eval, size)
    targets = {t.name: make_dataset(t, cfg.n_eval, size) for t in cfg.targets}
    return sources, source_eval, targets


@torch.no_grad()
def spectral_probe(backbone, images: torch.Tensor, seeds: int, osf: float = 2.0,
                   np_mean: float = 1.0, np_std: float = 0.75, bn_init_std: float = 0.5) -> dict:
    """Band-energy change of stage-0 features under NP+ and under the HRFP O1 branch.

    Returns per-seed deltas for both perturbations plus the clean report.
    """
    was_training = backbone.training
    backbone.eval()
    try:
        z = backbone.encode(images)[0]
    finally:
        backbone.train(was_training)
    clean = band_energy(z.numpy())
    spec = StackSpec(channels=z.shape[1], osf=osf, bn_init_std=bn_init_std)
    np_deltas, hrfp_deltas = [], []
    for s in range(seeds):
        coeffs = sample_coeffs(z.shape[0], z.shape[1], np_mean, np_std, seed=10_000 + s)
        np_deltas.append(band_delta(clean, band_energy(np_plus(z, coeffs).numpy())))
        o1, _ = hrfp_forward(z, sample_stack(spec, 20_000 + s))
        hrfp_deltas.append(band_delta(clean, band_energy((z + o1).numpy())))
    return {"clean": clean, "np_plus": np.array(np_deltas), "hrfp": np.array(hrfp_deltas)}


def _unique_dir(root: str, name: str) -> str:
    path = os.path.join(root, name)
    k = 1
    while os.path.exists(path):
        path = os.path.join(root, f"{name}-{k}")
        k += 1
    os.makedirs(path)
    return path


def execute(cfg: ExperimentConfig, datasets=None) -> tuple[dict, object]:
    """Train and evaluate without touching the filesystem. Returns (report, model)."""
    t0 = time.perf_counter()
    sources, source_eval, targets = datasets or build_datasets(cfg)
    backbone = SegBackbone(cfg.backbone, seed=cfg.backbone_seed)
    model = wrap(backbone, cfg.perturb)
    result = train(model, sources, cfg.train, log_every=200, logger=log)
    per_target = {name: evaluate(model, ds) for name, ds in targets.items()}
    report = {
        "format": REPORT_FORMAT,
        "name": cfg.name,
        "config": cfgmod.render(cfg),
        "seeds": {"backbone": cfg.backbone_seed, "train": cfg.train.seed,
                  "perturb": cfg.perturb.master_seed,
                  "domains": {d.name: d.seed for d in (*cfg.sources, cfg.source_eval, *cfg.targets)}},
        "miou": {
            "source": evaluate(model, source_eval).to_dict(),
            "targets": {k: v.to_dict() for k, v in per_target.items()},
            "target_average": float(np.mean([r.mean_iou for r in per_target.values()])),
        },
        "loss_trace": result.losses,
        "lr_trace": result.lrs,
        "toggle_counts": {"hrfp": int(sum(t[0] for t in result.toggles)),
                          "np_plus": int(sum(t[1] for t in result.toggles))},
    }
    diag = cfg.diagnostics
    embeddings = {}
    if diag.mmd or diag.embeddings:
        embeddings["source"] = stat_embedding(final_stage_features(model, source_eval))
        for name, ds in targets.items():
            embeddings[name] = stat_embedding(final_stage_features(model, ds))
    if diag.mmd:
        report["mmd"] = {name: mmd(embeddings["source"], embeddings[name]) for name in targets}
    if diag.spectral:
        probe = spectral_probe(model.backbone, source_eval.images[:8], diag.spectral_seeds,
                               osf=cfg.perturb.osf, np_mean=cfg.perturb.np_mean,
                               np_std=cfg.perturb.np_std, bn_init_std=cfg.perturb.bn_init_std)
        report["spectral"] = {
            "clean": probe["clean"].to_dict(),
            "np_plus_delta": probe["np_plus"].mean(axis=0).tolist(),
            "hrfp_delta": probe["hrfp"].mean(axis=0).tolist(),
            "seeds": diag.spectral_seeds,
        }
    report["wall_clock_s"] = time.perf_counter() - t0
    report["_embeddings"] = embeddings
    return report, model


def write_report(report: dict, cfg: ExperimentConfig) -> str:
    out = _unique_dir(cfg.output_dir, cfg.name)
    embeddings = report.pop("_embeddings", {})
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(report["config"])
    if "spectral" in report:
        with open(os.path.join(out, "band_delta.csv"), "w") as fh:
            fh.write("perturbation,low,mid,high\n")
            for key in ("np_plus", "hrfp"):
                vals = report["spectral"][f"{key}_delta"]
                fh.write(key + "," + ",".join(format(v, ".17g") for v in vals) + "\n")
    if "mmd" in report:
        with open(os.path.join(out, "mmd.csv"), "w") as fh:
            fh.write("target,mmd\n")
            for k, v in report["mmd"].items():
                fh.write(f"{k},{v:.17g}\n")
    if cfg.diagnostics.embeddings:
        for name, emb in embeddings.items():
            export_embedding(emb, os.path.join(out, f"embedding_{name}.txt"))
    return out


def run(config_path, seed=None, iterations=None, out=None) -> str:
    cfg = cfgmod.load(config_path).with_overrides(seed, iterations, out)
    report, _ = execute(cfg)
    return write_report(report, cfg)


# -- comparison ---------------------------------------------------------------

def load_report(path) -> dict:
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    with open(path) as fh:
        report = json.load(fh)
    if report.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path} is not a run report")
    return report


def compare(reports: list[dict]) -> dict:
    """Align per-target mIoU across reports; deltas are relative to the first."""
    if not reports:
        raise ValueError("nothing to compare")
    targets = list(reports[0]["miou"]["targets"])
    for r in reports[1:]:
        if set(r["miou"]["targets"]) != set(targets):
            raise ValueError(f"target sets differ: {targets} vs {list(r['miou']['targets'])}")
    columns = ["source", *targets, "average"]
    rows = []
    for r in reports:
        m = r["miou"]
        vals = {"source": m["source"]["mean_iou"], "average": m["target_average"]}
        vals.update({t: m["targets"][t]["mean_iou"] for t in targets})
        rows.append({"name": r["name"], "values": vals})
    base = rows[0]["values"]
    for row in rows:
        row["delta"] = {c: row["values"][c] - base[c] for c in columns}
    return {"columns": columns, "rows": rows}


def format_table(table: dict) -> str:
    cols = table["columns"]
    width = max(12, *(len(r["name"]) for r in table["rows"]))
    cw = max(9, *(len(c) for c in cols)) + 2
    head = "model".ljust(width) + "".join(c.rjust(cw) for c in cols)
    lines = [head, "-" * len(head)]
    for row in table["rows"]:
        lines.append(row["name"].ljust(width) + "".join(f"{100 * row['values'][c]:{cw}.2f}" for c in cols))
    if len(table["rows"]) > 1:
        lines.append("")
        lines.append("delta vs " + table["rows"][0]["name"])
        for row in table["rows"][1:]:
            lines.append(row["name"].ljust(width) + "".join(f"{100 * row['delta'][c]:+{cw}.2f}" for c in cols))
    return "\n".join(lines)


def inspect(report: dict) -> str:
    m = report["miou"]
    lines = [f"run: {report['name']}  ({report['wall_clock_s']:.1f}s)",
             f"source mIoU: {100 * m['source']['mean_iou']:.2f}"]
    for t, r in m["targets"].items():
        lines.append(f"target {t}: {100 * r['mean_iou']:.2f}")
    lines.append(f"target average: {100 * m['target_average']:.2f}")
    if "mmd" in report:
        lines.extend(f"mmd source->{k}: {v:.5f}" for k, v in report["mmd"].items())
    if "spectral" in report:
        s = report["spectral"]
        lines.append("band delta (low, mid, high)  NP+: " + " ".join(f"{v:+.4f}" for v in s["np_plus_delta"]))
        lines.append("band delta (low, mid, high) HRFP: " + " ".join(f"{v:+.4f}" for v in s["hrfp_delta"]))
    losses = report["loss_trace"]
    if losses:
        lines.append(f"loss: first {losses[0]:.4f}, last {losses[-1]:.4f}")
    return "\n".join(lines)

"""Fit every classical classifier twice on cached features, raw and standardized, and print both.

Reuses the feature cache of a finished run, so no backbone is re-run.
"""
import argparse
from dataclasses import replace

from jellybench.classical import SHORT_NAMES, fit
from jellybench.config import ExperimentConfig, derive_seed
from jellybench.evaluation import classification_metrics
from jellybench.experiment import Workspace

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--config", default="configs/repro.json")
parser.add_argument("--dataset-root")
parser.add_argument("--weights", choices=["imagenet", "random"])
args = parser.parse_args()

cfg = ExperimentConfig.load(args.config, dataset_root=args.dataset_root, weights=args.weights)
ws = Workspace(cfg)
train, test = ws.split.train_indices, ws.split.test_indices
print(f"{'backbone':<18}{'model':<6}{'raw A':>8}{'std A':>8}{'raw F1':>8}{'std F1':>8}")
for name in cfg.backbones:
    fm, _ = ws.features(name)
    for spec in cfg.classifiers:
        seed = derive_seed(cfg.seed, "ml", name, spec.kind)
        row = []
        for standardize in (False, True):
            model = fit(replace(spec, seed=seed, standardize=standardize), fm.data[train], fm.labels[train])
            m = classification_metrics(fm.labels[test], model.predict(fm.data[test]))
            row.append(m)
        print(f"{name:<18}{SHORT_NAMES[spec.kind]:<6}" + "".join(
            f"{100 * v:8.1f}" for v in (row[0].accuracy, row[1].accuracy, row[0].f1_macro, row[1].f1_macro)))

"""Run the full 44-cell grid and print the three tables.

    python3 scripts/reproduce.py --config configs/repro.json --dataset-root /path/to/jellyfish
"""
import argparse
import logging
from pathlib import Path

from jellybench.config import ExperimentConfig
from jellybench.experiment import run_experiment
from jellybench.report import emit_report, summary_line

parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
parser.add_argument("--config", default="configs/repro.json")
parser.add_argument("--dataset-root")
parser.add_argument("--output-dir")
parser.add_argument("--weights", choices=["imagenet", "random"])
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

cfg = ExperimentConfig.load(args.config, dataset_root=args.dataset_root, output_dir=args.output_dir,
                            weights=args.weights)
grid = run_experiment(cfg)
report = emit_report(grid, Path(cfg.output_dir) / "report")
for name in ("table1", "table2", "table3"):
    print((report / f"{name}.md").read_text())
print(summary_line(grid))

"""Write the synthetic six-species dataset used by the tests and configs/synthetic.json."""
import argparse

from jellybench.synthetic import make_synthetic_dataset

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("root", nargs="?", default="data/synthetic")
parser.add_argument("--train", type=int, default=4, help="images per class in the train folder")
parser.add_argument("--test", type=int, default=1)
parser.add_argument("--val", type=int, default=1)
parser.add_argument("--size", type=int, default=64)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

root = make_synthetic_dataset(args.root, {"train": args.train, "test": args.test, "val": args.val},
                              size=args.size, seed=args.seed)
print(f"wrote {root}")

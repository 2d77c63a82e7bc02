"""Per-layer isotropy of a synthetic dump whose anisotropy grows with depth.

Writes the layer CSV (all tokens and [CLS] rows) to stdout or ``--output``.

    python3 scripts/layer_curve.py --layers 12 --output layers.csv
"""

import argparse
import sys
from dataclasses import dataclass

from isoprobe.evaluation import layer_report, write_layer_csv
from isoprobe.synthetic import layered_dump


@dataclass
class Config:
    n_layers: int = 6
    n_sentences: int = 60
    n_tokens: int = 10
    dim: int = 16
    seed: int = 0


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--layers", type=int, default=Config.n_layers)
    p.add_argument("--sentences", type=int, default=Config.n_sentences)
    p.add_argument("--seed", type=int, default=Config.seed)
    p.add_argument("--output")
    a = p.parse_args()
    cfg = Config(n_layers=a.layers, n_sentences=a.sentences, seed=a.seed)
    dump = layered_dump(cfg.n_layers, cfg.n_sentences, cfg.n_tokens, cfg.dim, cfg.seed)
    rows = layer_report(dump)
    if a.output:
        with open(a.output, "w", newline="") as fh:
            write_layer_csv(rows, fh)
    else:
        write_layer_csv(rows, sys.stdout)


if __name__ == "__main__":
    main()

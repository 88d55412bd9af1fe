#!/usr/bin/env python3
"""Convert a Planetoid pickle set (ind.<name>.*) into the edge-list input of
`fsnc ingest --format edgelist --sparse`.

Writes edges.txt (u v), labels.txt (node label) and features.txt
(node dim value) into the output directory. Test indices missing from the
test index file get all-zero features and label 0.

    python3 scripts/planetoid_to_edgelist.py <raw_dir> <name> <out_dir>
"""

import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def load(raw, name, part):
    with open(os.path.join(raw, f"ind.{name}.{part}"), "rb") as f:
        return pickle.load(f, encoding="latin1")


def main():
    if len(sys.argv) != 4:
        sys.exit(__doc__)
    raw, name, out = sys.argv[1:]
    allx, ally, tx, ty, graph = (load(raw, name, p) for p in ("allx", "ally", "tx", "ty", "graph"))
    with open(os.path.join(raw, f"ind.{name}.test.index")) as f:
        test_idx = [int(line) for line in f if line.strip()]

    lo, hi = min(test_idx), max(test_idx)
    tx_full = sp.lil_matrix((hi - lo + 1, tx.shape[1]))
    ty_full = np.zeros((hi - lo + 1, ty.shape[1]))
    rel = [i - lo for i in test_idx]
    tx_full[rel, :] = tx
    ty_full[rel, :] = ty

    x = sp.vstack([sp.csr_matrix(allx), sp.csr_matrix(tx_full)]).tocsr()
    y = np.vstack([ally, ty_full]).argmax(axis=1)
    n = x.shape[0]
    assert len(y) == n

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "edges.txt"), "w") as f:
        for u, vs in sorted(graph.items()):
            for v in vs:
                if u < n and v < n:
                    f.write(f"{u} {v}\n")
    with open(os.path.join(out, "labels.txt"), "w") as f:
        for u, c in enumerate(y):
            f.write(f"{u} {c}\n")
    coo = x.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(os.path.join(out, "features.txt"), "w") as f:
        for k in order:
            f.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:g}\n")
    print(f"{name}: {n} nodes, {x.shape[1]} features, {ty.shape[1]} classes")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Embedding-dimension study: richness score of the humanoid template.

Lower is better (0 = embedding-space neighbor ranks reproduce geodesic
ranks exactly). The score should improve monotonically as the embedding
dimension grows from 16 to 128, with diminishing returns.
"""

import argparse
import time

from garment_retarget.fixtures import humanoid
from garment_retarget.geodesics import geodesic_matrix
from garment_retarget.isomap import isomap
from garment_retarget.metrics import RichnessInput, richness_score


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dims", type=int, nargs="+", default=[16, 32, 64, 128])
    parser.add_argument("--k", type=int, default=48, help="neighborhood size")
    parser.add_argument("--resolution", type=float, default=0.035)
    args = parser.parse_args()

    t0 = time.time()
    body = humanoid("a", resolution=args.resolution)
    geo = geodesic_matrix(body)
    print(f"template: {body.num_vertices} vertices  (geodesics {time.time() - t0:.1f}s)")
    print(f"{'dim':>5} {'richness':>10}")
    for d in args.dims:
        emb = isomap(geo, d)
        score = richness_score(RichnessInput(geo=geo, emb=emb, k=args.k))
        print(f"{d:>5} {score:>10.5f}")


if __name__ == "__main__":
    main()

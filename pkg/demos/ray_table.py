"""Count the cone rays in the seven reference planes and show the tetrahedron."""
import numpy as np

from calib6.hl_cone import RAY_TABLE, count_family_rays

for (tau, theta), expected in RAY_TABLE:
    rep = count_family_rays(tau, theta, seeds=20_000)
    print(f"tau={tau:.4f} theta={theta:.4f}: {rep.count} rays (expected {expected}), "
          f"worst residual {max(rep.residuals):.1e}")
    if rep.count == 4:
        cos = rep.cosines()[np.triu_indices(4, 1)]
        print("  pairwise cosines:", np.round(cos, 12))

"""Regenerate the frozen CSV fixtures: ``python3 tests/fixtures/make_fixtures.py``.

Only the printed values are pinned (the 15 3D Morph centroids, the 179 ilastik
objects with mean area 1136 px, the 81 traced paths with empty volumes); the
remaining columns are seeded filler that satisfies every schema invariant.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent

MORPH_CENTROIDS = [
    (13.96, 60.70, 10.30), (13.34, 107.90, 22.10), (31.61, 12.73, 20.29), (26.14, 75.27, 4.34),
    (33.37, 130.36, 5.51), (40.86, 40.09, 2.70), (67.34, 88.69, 18.98), (81.31, 53.02, 9.90),
    (71.32, 60.54, 23.08), (66.02, 17.31, 16.39), (77.67, 118.37, 29.73), (97.08, 113.77, 9.26),
    (102.06, 17.08, 12.60), (125.41, 93.71, 9.07), (98.75, 64.56, 28.30),
]
N_ILASTIK, MEAN_PX = 179, 1136
N_MANUAL = 81

MORPH_HEADER = (
    "cell_id,centroid_x_um,centroid_y_um,centroid_z_um,cell_volume_um3,territory_volume_um3,"
    "ramification_index,n_endpoints,n_branchpoints,branch_len_avg_um,branch_len_max_um,branch_len_min_um"
)


def morph_fixture(rng):
    rows = []
    for i, (x, y, z) in enumerate(MORPH_CENTROIDS, start=1):
        vol = round(float(rng.uniform(200, 1500)), 2)
        terr = round(vol * float(rng.uniform(1.5, 6.0)), 2)
        ends = int(rng.integers(2, 20))
        bps = int(rng.integers(0, ends))
        lmin = round(float(rng.uniform(0.5, 3)), 2)
        lmax = round(lmin + float(rng.uniform(2, 30)), 2)
        lavg = round((lmin + lmax) / 2, 2)
        rows.append([i, f"{x:.2f}", f"{y:.2f}", f"{z:.2f}", vol, terr, round(terr / vol, 4), ends, bps,
                     lavg, lmax, lmin])
    with (HERE / "D_stack79.csv").open("w", newline="") as fh:
        fh.write(MORPH_HEADER + "\n")
        csv.writer(fh, lineterminator="\n").writerows(rows)


def ilastik_fixture(rng):
    sizes = rng.integers(200, 2100, N_ILASTIK)
    sizes[-1] += MEAN_PX * N_ILASTIK - sizes.sum()  # pin the mean exactly
    assert sizes.min() > 0 and sizes.sum() == MEAN_PX * N_ILASTIK
    cx = rng.uniform(30.9, 993.0, N_ILASTIK)
    cy = rng.uniform(14.3, 985.9, N_ILASTIK)
    cx[0], cx[1], cy[0], cy[1] = 30.9, 993.0, 14.3, 985.9
    with (HERE / "i_stack79.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["object_id", "predicted_class", "user_class", "centroid_x", "centroid_y", "bbox_min_x",
                    "bbox_max_x", "bbox_min_y", "bbox_max_y", "size_px", "prob_cell", "prob_background"])
        for i in range(N_ILASTIK):
            half = max(1.0, float(np.sqrt(sizes[i])) / 2)
            p = round(float(rng.uniform(0.5, 1.0)), 6)
            w.writerow([i + 1, "cell", "", f"{cx[i]:.1f}", f"{cy[i]:.1f}",
                        f"{max(0.0, np.floor(cx[i] - half)):.0f}", f"{np.ceil(cx[i] + half):.0f}",
                        f"{max(0.0, np.floor(cy[i] - half)):.0f}", f"{np.ceil(cy[i] + half):.0f}",
                        int(sizes[i]), f"{p:.6f}", f"{1 - p:.6f}"])


def manual_fixture(rng):
    # a forest of primary paths, each with a few children branching off its end
    parent = {}
    pid = 1
    while pid <= N_MANUAL:
        root = pid
        pid += 1
        for _ in range(int(rng.integers(0, 4))):
            if pid > N_MANUAL:
                break
            parent[pid] = root
            pid += 1
    children = {i: [] for i in range(1, N_MANUAL + 1)}
    for c, p in parent.items():
        children[p].append(c)
    start, end = {}, {}
    for i in range(1, N_MANUAL + 1):
        s = end[parent[i]] if i in parent else rng.uniform([5, 15, 1], [160, 150, 30])
        e = np.clip(s + rng.normal(0, 6, 3), [0.5, 0.5, 0.5], [170.0, 160.0, 32.0])
        start[i], end[i] = np.round(s, 3), np.round(e, 3)
    with (HERE / "M_stack79.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "name", "start_x", "start_y", "start_z", "end_x", "end_y", "end_z",
                    "path_length", "swc_type", "parent_id", "child_ids", "fitted_volume"])
        for i in range(1, N_MANUAL + 1):
            s, e = start[i], end[i]
            length = float(np.linalg.norm(e - s)) * float(rng.uniform(1.0, 1.3))
            w.writerow([i, f"Path ({i})", *(f"{v:.3f}" for v in s), *(f"{v:.3f}" for v in e),
                        f"{length:.3f}", 3 if i in parent else 7, parent.get(i, ""),
                        ";".join(str(c) for c in children[i]), ""])


if __name__ == "__main__":
    rng = np.random.default_rng(79)
    morph_fixture(rng)
    ilastik_fixture(rng)
    manual_fixture(rng)

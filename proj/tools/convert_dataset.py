#!/usr/bin/env python3
"""Convert a scan sequence into the dataset layout read by `cello3d`.

Output layout:
  cloud_0000.csv ...   header `x,y,z`, one point per row, metres, sensor frame
  poses.csv            one row per cloud, 12 values: row-major [R | t]

Poses in the output are sensor-to-world: `T_i` maps points of cloud i into
the world frame, so the relative pose of pair (i, j) is `inv(T_i) @ T_j`.

Input assumptions (the native formats of public lidar sequences differ, so
this stub expects a pre-extracted form):
  * one text file per scan whose rows start with x, y, z (any delimiter of
    comma, space or tab; non-numeric header lines are skipped; extra columns
    such as intensity are ignored);
  * a pose file with one row per scan holding either 12 ([R | t]) or 16
    (full 4 x 4) numbers as its last values, optionally preceded by a
    timestamp or index column.
If the source stores world-to-sensor poses, pass --world-to-sensor and the
poses are inverted on the way out. Scans and poses are paired in the sorted
order of the scan file names.
"""

import argparse
import pathlib
import re
import sys

import numpy as np

_SPLIT = re.compile(r"[,\s]+")


def _numeric_rows(path):
    rows = []
    for line in path.read_text().splitlines():
        fields = [f for f in _SPLIT.split(line.strip()) if f]
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            continue  # header or comment
    return rows


def read_scan(path):
    rows = [r[:3] for r in _numeric_rows(path) if len(r) >= 3]
    if not rows:
        raise ValueError(f"{path}: no x,y,z rows")
    return np.asarray(rows)


def read_poses(path):
    poses = []
    for k, row in enumerate(_numeric_rows(path), start=1):
        if len(row) >= 16 and len(row) in (16, 17):
            m = np.asarray(row[-16:]).reshape(4, 4)
        elif len(row) in (12, 13):
            m = np.vstack([np.asarray(row[-12:]).reshape(3, 4), [0, 0, 0, 1]])
        else:
            raise ValueError(f"{path}: row {k}: expected 12 or 16 pose values")
        r = m[:3, :3]
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-6:
            raise ValueError(f"{path}: row {k}: rotation is not orthonormal")
        poses.append(m)
    return poses


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--scans", required=True, type=pathlib.Path, help="directory of scan files")
    parser.add_argument("--pattern", default="*.csv", help="scan file glob (default *.csv)")
    parser.add_argument("--poses", required=True, type=pathlib.Path, help="pose file")
    parser.add_argument("--world-to-sensor", action="store_true",
                        help="input poses map world points into the sensor frame")
    parser.add_argument("--out", required=True, type=pathlib.Path)
    args = parser.parse_args(argv)

    scans = sorted(p for p in args.scans.glob(args.pattern) if p.resolve() != args.poses.resolve())
    poses = read_poses(args.poses)
    if len(scans) != len(poses):
        parser.error(f"{len(poses)} poses for {len(scans)} scans")

    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (scan, pose) in enumerate(zip(scans, poses)):
        if args.world_to_sensor:
            pose = np.linalg.inv(pose)
        points = read_scan(scan)
        np.savetxt(args.out / f"cloud_{i:04d}.csv", points, delimiter=",", header="x,y,z",
                   comments="", fmt="%.17g")
        rows.append(pose[:3, :4].reshape(-1))
    np.savetxt(args.out / "poses.csv", np.asarray(rows), delimiter=",", fmt="%.17g")
    return 0


if __name__ == "__main__":
    sys.exit(main())

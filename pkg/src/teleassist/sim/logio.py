"""Line-delimited run logs: one header record, one record per tick, one
metrics trailer. Floats serialize via their shortest round-trip repr, so
identical runs produce byte-identical files."""

from __future__ import annotations

import json
from pathlib import Path

from ..worldmodel import GoalSet
from .scenario import ScenarioSpec


def header_record(spec: ScenarioSpec, assist: bool, seed: int) -> dict:
    w = spec.world
    return {
        "type": "header",
        "scenario": spec.name,
        "seed": seed,
        "assist": assist,
        "tick_rate_hz": spec.tick_rate,
        "constraint_tol": spec.solver.constraint_tol,
        "attach_radius": spec.attach_radius,
        "goals": [
            {
                "position": g.position.tolist(),
                "frame": g.frame.reshape(9).tolist(),
                "object": g.object_id,
            }
            for g in spec.goals
        ],
        "objects": {
            oid: {"shelf_z": o.shelf_z, "lift_height": o.lift_height}
            for oid, o in sorted(spec.objects.items())
        },
        "planes": [
            {"normal": w.planes.normals[i].tolist(), "offset": float(w.planes.offsets[i])}
            for i in range(len(w.planes))
        ],
        "ellipsoids": [
            {
                "center": e.center.tolist(),
                "orientation": e.orientation.reshape(9).tolist(),
                "scale": e.scale.tolist(),
                "margin": e.margin,
            }
            for e in w.ellipsoids
        ],
        "arms": {
            side: {
                "dh_a": m.dh_a.tolist(),
                "dh_d": m.dh_d.tolist(),
                "dh_alpha": m.dh_alpha.tolist(),
                "mount_translation": m.mount_translation.tolist(),
                "mount_rotation": m.mount_rotation.reshape(9).tolist(),
            }
            for side, m in (("left", spec.arm_left), ("right", spec.arm_right))
        },
    }


def write_log(path, records: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")


def read_log(path) -> list[dict]:
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records

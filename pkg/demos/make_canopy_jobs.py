"""Write the thick and thin five-arm canopy jobs as YAML job files.

The node geometry is a spherical hub shell with five hollow arms; the frame is
one clamped column and four loaded branches. Values come from
``fcmframe.scenarios`` so the YAML files and the scripted scenario stay in
step.

    python demos/make_canopy_jobs.py            # writes demos/jobs/canopy_*.yaml
"""

from pathlib import Path

import numpy as np
import yaml

from fcmframe.scenarios import THICK_NODE, THIN_NODE, canopy_job

HERE = Path(__file__).parent


def _v(x):
    return [round(float(c), 12) + 0.0 for c in np.asarray(x)]


def canopy_document(variant):
    job = canopy_job(variant)
    spec = job.substructures[0].spec
    frame = job.frame
    c = [0.0, 0.0, 0.0]
    arms = [{"hollow_cylinder": {"start_mm": _v(s.normal * variant.hub_inner),
                                 "end_mm": _v(s.centroid),
                                 "r_in_mm": variant.arm_r_in, "r_out_mm": variant.arm_r_out}}
            for s in spec.interfaces]
    hub = {"difference": [{"sphere": {"center_mm": c, "radius_mm": variant.hub_radius}},
                          {"sphere": {"center_mm": c, "radius_mm": variant.hub_inner}}]}
    geometry = {"difference": [{"union": [hub, *arms]},
                               {"sphere": {"center_mm": c, "radius_mm": variant.hub_inner}}]}
    p = spec.params
    return {
        "name": f"canopy-{variant.name}",
        "materials": {"steel": {"E_MPa": 2.0e5, "nu": 0.3}},
        "sections": {"arm": {"hollow_circular": {"r_in_mm": variant.arm_r_in,
                                                 "r_out_mm": variant.arm_r_out}}},
        "nodes_mm": {n: _v(x) for n, x in frame.nodes.items()},
        "elements": [{"id": e.id, "a": e.a, "b": e.b, "material": "steel", "section": "arm",
                      "ref": _v(e.ref)} for e in frame.elements],
        "supports": {"foot": ["ux", "uy", "uz", "rx", "ry", "rz"]},
        "loads": {n: {"force_N": _v(f[:3])} for n, f in frame.loads.items()},
        "substructures": [{
            "name": "node",
            "material": "steel",
            "geometry": geometry,
            "alpha_exponent": 10,
            "interfaces": [{"node": s.node_id, "centroid_mm": _v(s.centroid),
                            "normal": _v(s.normal), "radius_mm": s.radius,
                            "inner_radius_mm": s.inner_radius} for s in spec.interfaces],
            "fcm": {"resolution": list(p.resolution), "p": p.p, "depth": p.depth},
        }],
        "outputs": {"local_stress": ["node"], "vtk_subdivisions": 1},
    }


def main():
    for variant in (THICK_NODE, THIN_NODE):
        path = HERE / "jobs" / f"canopy_{variant.name}.yaml"
        header = (f"# Synthetic five-arm canopy node ({variant.name} hub shell, inner radius "
                  f"{variant.hub_inner:g} mm).\n# Generated by demos/make_canopy_jobs.py.\n")
        path.write_text(header + yaml.safe_dump(canopy_document(variant), sort_keys=False,
                                                default_flow_style=None, width=100))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()

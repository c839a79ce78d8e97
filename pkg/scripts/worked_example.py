"""Run the eight-transaction directory example end to end and print each stage."""

import argparse

from opaque_emu import AnalysisParams, analyze, worked_example_library
from opaque_emu.prototype import render_weights
from opaque_emu.service import respond

NOVEL = [
    b"{id:37,op:A,sn:Durand}",
    b"{id:512,op:S,sn:Hine}",
    b"{id:9,op:S,sn:Versteeg}",
    b"{id:4242,op:A,sn:Okafor}",
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--flat-insertions", action="store_true")
    args = ap.parse_args()

    lib = worked_example_library()
    model = analyze(lib, AnalysisParams(weighted_insertions=not args.flat_insertions))
    print("library")
    for t in lib:
        print(f"  #{t.index:<2} {t.request.decode():<32} -> {t.response.decode()}")
    for c in model.clusters:
        members = ", ".join(str(i) for i in c.member_indices)
        print(f"\ncluster {c.cluster_id}  members [{members}]  centroid #{c.centroid.index}")
        print(f"  prototype  {c.prototype.render()}")
        print(f"  fields     {[f.content for f in c.fields]}")
        print(render_weights(c.prototype, c.weights))
    print("\nnovel requests")
    for req in NOVEL:
        r = respond(model, req)
        print(f"  {req.decode():<28} cluster {r.cluster_id} d_rel={r.d_rel:.4f} -> {r.payload.decode()}")


if __name__ == "__main__":
    main()

"""Edit a scene graph and watch the layout respond.

Loads the pipeline trained by 02_curriculum_walkthrough.py, writes a scene
in the text DSL, and then performs the two classic graph edits: flipping a
spatial relation and adding an object. Box coordinates shift accordingly;
renders land next to the other demo outputs.

Run from the repo root, after demo 02:  python demos/03_scene_editing.py
"""

from pathlib import Path

from layoutforge.boxes import box_center
from layoutforge.pipeline import Pipeline
from layoutforge.pnm import write_ppm
from layoutforge.scenegraph import BELOW, SceneGraph, parse_scene_graph
from layoutforge.train import flip_edge_pair

root = Path(__file__).parent / "out"
ckpt = root / "curriculum" / "pipeline.lfck"
if not ckpt.exists():
    raise SystemExit("run demos/02_curriculum_walkthrough.py first")
out = root / "editing"
out.mkdir(parents=True, exist_ok=True)

pipeline = Pipeline.load(ckpt)
vocab = pipeline.vocab

# One edge per object pair; the reverse direction carries the second fact.
scene = """
    sun  : circle;
    crate: square;
    sun left_of crate;
    crate below sun;
"""
graph = parse_scene_graph(scene, vocab)
result = pipeline.generate(graph)
write_ppm(out / "scene.ppm", result.image)


def describe(tag, layout):
    print(tag)
    for e in layout.entries:
        cx, cy = box_center(e.box)
        print(f"  {e.instance_id:6s} {vocab.categories[e.category]:7s} "
              f"center ({cx:.2f}, {cy:.2f})")


describe("original:", result.boxes)

# Flip the horizontal relation; the subject and object should swap their
# x-order while the vertical arrangement stays put.
flipped, s, o = flip_edge_pair(graph, ("left_of", "right_of"))
result_f = pipeline.generate(flipped)
write_ppm(out / "flipped.ppm", result_f.image)
describe("after left_of -> right_of:", result_f.boxes)

x = {e.instance_id: box_center(e.box)[0] for e in result.boxes.entries}
xf = {e.instance_id: box_center(e.box)[0] for e in result_f.boxes.entries}
print(f"sun moved from x={x['sun']:.2f} to x={xf['sun']:.2f}; "
      f"order flipped: {(x['sun'] < x['crate']) != (xf['sun'] < xf['crate'])}")

# Add a third object by extending the graph; every node keeps its box and
# the newcomer gets its own. Objects are (id, category index) pairs and
# edges are (subject, relation, object) triples, so graph surgery is just
# building a new SceneGraph.
ball = ("ball", vocab.category_index("circle"))
grown = SceneGraph(graph.objects + (ball,),
                   graph.edges + ((2, BELOW, 0), (2, BELOW, 1)))
result_g = pipeline.generate(grown)
write_ppm(out / "grown.ppm", result_g.image)
describe("after adding 'ball' below everything:", result_g.boxes)
print(f"\nrenders in {out}/: scene.ppm, flipped.ppm, grown.ppm")

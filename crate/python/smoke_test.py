"""Smoke test for the roadkit Python extension.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml --release`, then
run `python python/smoke_test.py`.
"""

import json
import math

import roadkit


def main():
    cross = roadkit.RoadGraph.from_linestrings(
        [[(c, 50.0), (50.0, 50.0)] for c in (10.0, 90.0)]
        + [[(50.0, c), (50.0, 50.0)] for c in (10.0, 90.0)]
    )
    assert sorted(cross.degrees()) == [1, 1, 1, 1, 4], cross.degrees()
    again = roadkit.RoadGraph.from_json(cross.to_json())
    assert json.loads(again.to_json()) == json.loads(cross.to_json())

    mask, conn = roadkit.connectivity_label(cross, 100, 100)
    assert (mask.width, mask.height) == (100, 100)
    assert conn[50][50] == 4
    assert conn[50][30] == 2
    assert conn[0][0] == 0

    graph = roadkit.mask_to_graph(mask, min_spur=10.0)
    assert sum(d >= 3 for d in graph.degrees()) == 1, graph
    assert roadkit.apls(cross, cross) == 1.0
    assert roadkit.apls(cross, graph) > 0.9

    assert roadkit.iou(mask, mask) == 1.0
    shifted = roadkit.Mask([row[1:] + [False] for row in mask.to_rows()])
    assert roadkit.iou(mask, shifted) < 1.0
    assert roadkit.relaxed_iou(mask, shifted, rho=2.0) == 1.0

    cropped = cross.crop(0.0, 0.0, 60.0, 60.0)
    assert len(cropped.boundary) == 2

    tiles = roadkit.plan_tiles(4096, 4096)
    assert len(tiles) == 121
    assert tiles[-1][0][:2] == (3584, 3584)

    w = roadkit.inverse_boundary_weights([0.0, 1.0])
    assert math.isclose(w[0], 50.4975, abs_tol=1e-3)
    assert math.isclose(w[1], 1.4222, abs_tol=1e-3)

    plane = [[1.0, 0.0], [0.0, 1.0]]
    gt = [plane, [[1.0 - v for v in row] for row in plane]]
    loss, grad = roadkit.soft_iou_loss(gt, gt)
    assert math.isclose(loss, -1.0) and len(grad) == 8

    try:
        roadkit.RoadGraph.from_json('{"nodes": [[0, 0]], "edges": [[0, 3]]}')
    except ValueError:
        pass
    else:
        raise AssertionError("malformed graph accepted")

    print("roadkit smoke test passed")


if __name__ == "__main__":
    main()

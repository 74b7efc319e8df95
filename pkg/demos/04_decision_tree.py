"""The decision-tree baseline: normalized hat features, grid search, CART.

Instead of a head keypoint, the baseline describes each person by where the
best-overlapping hat box sits in the person's own coordinate system
(center cx/cy, relative size rw/rh, plus a has_hat flag), and lets a CART
tree decide wearer vs non-wearer. On clean synthetic scenes the tree
recovers the keypoint rule exactly; its structure shows what it learned.
"""

from hatcheck import GridSearchSpec, SceneSpec, fit, generate, grid_search
from hatcheck.cart import LeafNode, SplitNode
from hatcheck.compliance import FEATURE_NAMES, training_data_from_dataset

dataset, _ = generate(SceneSpec(n_images=10, persons_per_image=(2, 5),
                                wearer_probability=0.55, seed=11))
X, y = training_data_from_dataset(dataset)
print(f"training set: {len(X)} persons, {y.count('wearer')} wearers")

search = grid_search(X, y, GridSearchSpec(seed=0))
best = search.best
best_row = next(r for r in search.table if r.params == best)
print(f"grid search best: criterion={best.criterion}, max_depth={best.max_depth},"
      f" min_samples_split={best.min_samples_split}"
      f" (mean CV accuracy {best_row.mean_accuracy:.3f})")

tree = fit(X, y, best, feature_names=FEATURE_NAMES)
print(f"fitted tree: depth {tree.depth}, {tree.n_nodes} nodes"
      f" ({tree.n_internal} splits, {tree.n_leaves} leaves)")


def show(index=0, indent=""):
    node = tree.nodes[index]
    if isinstance(node, LeafNode):
        counts = ", ".join(f"{label}={n}" for label, n in node.counts)
        print(f"{indent}-> {node.label}  [{counts}]")
        return
    assert isinstance(node, SplitNode)
    name = tree.feature_names[node.feature]
    print(f"{indent}{name} <= {node.threshold:.3f}?")
    show(node.left, indent + "  yes: ")
    show(node.right, indent + "  no:  ")


print("\nlearned structure:")
show()

print("\ntraining accuracy:",
      sum(p == t for p, t in zip(tree.predict(X), y)) / len(y))

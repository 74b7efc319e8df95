"""Walk through the head-keypoint wearing rule on a hand-built image.

A person counts as a hard-hat wearer exactly when their head keypoint falls
inside some hard-hat box. No keypoint means the verdict is *indeterminate*:
a half-visible person must not silently become a "non-wearer".
"""

from hatcheck import BBox, Category, Instance, Keypoint, classify_rule, verdicts_to_instances

PERSON = Category(1, "person")
HAT = Category(2, "hard_hat")

instances = [
    # a compliant worker: keypoint (30, 8) sits inside the hat box
    Instance(1, 1, PERSON, BBox(10, 0, 40, 90), Keypoint(30, 8)),
    Instance(2, 1, HAT, BBox(22, 2, 16, 12)),
    # bare-headed: labeled keypoint but no hat anywhere near it
    Instance(3, 1, PERSON, BBox(70, 0, 40, 90), Keypoint(90, 8)),
    # visible from the waist down: no head keypoint at all
    Instance(4, 1, PERSON, BBox(130, 40, 40, 50)),
]

print("verdicts")
print("--------")
for verdict in classify_rule(instances):
    hat_note = f" (hat id {verdict.matched_hat.id})" if verdict.matched_hat else ""
    print(f"person {verdict.person.id}: {verdict.label}{hat_note}")

print()
print("relabeled instances for evaluation (indeterminate dropped):")
for inst in verdicts_to_instances(classify_rule(instances)):
    print(f"  id {inst.id}: {inst.category.name}")

print()
print("with keep_indeterminate=True the partial person stays a plain 'person':")
for inst in verdicts_to_instances(classify_rule(instances), keep_indeterminate=True):
    print(f"  id {inst.id}: {inst.category.name}")

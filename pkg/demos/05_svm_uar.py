"""One-vs-one SVMs trained with SMO, scored by unweighted average recall."""
import numpy as np

from aae_emotion import KernelSpec, MulticlassSvm, confusion, synth_blobs, two_proportion_test, uar

data = synth_blobs(num_classes=4, dim=10, per_class=80, separation=3.0, noise=1.0, seed=4)
train = data.subset(data.session_ids != "s1")
test = data.subset(data.session_ids == "s1")

for kernel in (KernelSpec("linear"), KernelSpec("rbf", 1.0 / data.n_features)):
    svm = MulticlassSvm.fit(train.features, train.labels, kernel, box=1.0)
    cm = confusion(test.labels, svm.predict(test.features), data.classes)
    print(f"{kernel.kind:6s} UAR {100 * uar(cm):.2f}%  ({cm.correct}/{cm.total} correct)")
    print(cm.counts)

# is 55/100 really better than 45/100? not at the 5% level
print("p-value, 55/100 vs 45/100:", round(two_proportion_test(55, 100, 45, 100), 4))

"""PCA, LDA and a plain auto-encoder as competing low-dimensional representations."""
import numpy as np

from aae_emotion import AaeConfig, lda_fit, pca_fit, synth_blobs, vanilla_ae_fit
from aae_emotion.baselines import pca_reconstruct

data = synth_blobs(num_classes=4, dim=20, per_class=200, seed=3)
x = data.features

pca = pca_fit(x, 10)
print("top PCA eigenvalues:", np.round(pca.eigenvalues[:4], 2))
for d in (2, 5, 10):
    p = pca_fit(x, d)
    err = np.mean((pca_reconstruct(p, p.project(x)) - x) ** 2)
    print(f"PCA d={d:2d} reconstruction mse {err:.4f}")

lda = lda_fit(x, data.labels, 3)
print("LDA eigenvalues (at most C-1 = 3):", np.round(lda.eigenvalues, 2))

cfg = AaeConfig(input_dim=20, code_dim=2, hidden_width=64, epochs=20, recon_lr=1e-3)
ae, logs = vanilla_ae_fit(x, cfg, np.random.default_rng(0))
print(f"auto-encoder recon mse: {logs[0].recon_mse:.3f} -> {logs[-1].recon_mse:.3f}")

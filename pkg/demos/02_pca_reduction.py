# %% [markdown]
# # Reducing wide features before the HMM
#
# Full-covariance Gaussians over thousands of dimensions are hopeless with a
# few hundred frames. `fit_pca` keeps the fewest components that explain at
# least 90% of the variance. When there are more dimensions than frames it
# works on the Gram matrix instead of the covariance.

# %%
import numpy as np

from completion_detect import fit_pca

rng = np.random.default_rng(1)
latent = rng.normal(size=(300, 6)) * [8, 5, 3, 2, 1, 0.5]
mixing = rng.normal(size=(6, 4096)) / 10
frames = latent @ mixing + 0.05 * rng.normal(size=(300, 4096))

model = fit_pca(frames, 0.90)
print(f"kept k={model.k} of D={model.input_dim}, ratio {model.variance_ratio_retained:.3f}")
print("explained variance:", np.round(model.explained_variance, 2))

# %%
reduced = model.transform(frames)
print("reduced shape:", reduced.shape)
print("orthonormal:", np.allclose(model.components @ model.components.T, np.eye(model.k)))

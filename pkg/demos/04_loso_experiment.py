# %% [markdown]
# # A leave-one-subject-out experiment end to end
#
# Write a synthetic dataset to disk, run PCA-HMM through the harness and
# read back the per-frame scores and the cumulative completion-shift curve.
# The same steps are available from the shell:
#
#     completion-detect synth --config synth.ini --out data/
#     completion-detect run --config experiment.ini
#     completion-detect report --run-dir out/

# %%
import tempfile
from pathlib import Path

from completion_detect import SynthConfig, generate, save_dataset
from completion_detect.harness import load_experiment_config, run_loso
from completion_detect.metrics import format_summary

work = Path(tempfile.mkdtemp())
dataset = generate(SynthConfig.with_separation(
    4, 6.0, noise_std=10.0, actions=("open", "pick"), subjects=5, sequences_per_subject=12, seed=4))
save_dataset(dataset, work / "manifest.csv", work / "features")

(work / "experiment.ini").write_text(
    "[experiment]\n"
    "manifest = manifest.csv\n"
    "features_dir = features\n"
    "output_dir = out\n"
    "model = pca_hmm\n"
)
result = run_loso(load_experiment_config(work / "experiment.ini"))
print(format_summary(result.summary))

# %% [markdown]
# `curve_complete.csv` holds C(i) per action; C(0) is the share of complete
# sequences detected no later than annotated.

# %%
for line in (work / "out" / "curve_complete.csv").read_text().splitlines()[48:56]:
    print(line)

# %% [markdown]
# # Frame labelling with an LSTM
#
# One hidden layer, a softmax head and plain SGD: learning rate 1e-3 for the
# first epoch and 1e-4 afterwards. Predictions are a per-frame argmax, so
# unlike the HMM the LSTM is free to flicker back to pre-completion.

# %%
import numpy as np

from completion_detect import SynthConfig, TrainConfig, generate, lstm_predict, train_lstm

data = generate(SynthConfig.with_separation(2, 10.0, noise_std=10.0, subjects=2,
                                            sequences_per_subject=40, seed=2))
train = [s.labeled() for s in data if s.meta.subject_id == "s1"]
test = [s for s in data if s.meta.subject_id == "s2"]

epoch_losses = {}
model = train_lstm(
    train,
    TrainConfig(epochs=10, hidden_size=32, seed=0),
    on_step=lambda epoch, idx, lr, loss: epoch_losses.setdefault(epoch, []).append(loss),
)
for epoch, losses in sorted(epoch_losses.items()):
    print(f"epoch {epoch + 1:2d}  mean loss {np.mean(losses):.4f}")

# %%
acc = np.mean(np.concatenate([lstm_predict(model, s.frames)[0] == s.labels() for s in test]))
print(f"held-out frame accuracy {acc:.3f}")

# %% [markdown]
# # Decoding the moment of completion with a two-state HMM
#
# A sequence starts in the *pre-completion* state and may switch, once, to
# *post-completion*. We train the supervised HMM by counting over labelled
# sequences and decode new sequences with Viterbi.

# %%
import numpy as np

from completion_detect import FeatureSequence, SequenceMeta, train_hmm, viterbi
from completion_detect.hmm import decode_completion

rng = np.random.default_rng(0)


def make(sid, length, completion):
    meta = SequenceMeta(sid, "s1", "switch", completion is not None, completion)
    x = rng.normal(size=(length, 2))
    if completion is not None:
        x[completion:] += [4.0, -3.0]
    return FeatureSequence(meta, x)


train = [make(f"t{i}", 60, int(rng.integers(15, 45)) if i % 4 else None) for i in range(24)]
hmm = train_hmm([s.labeled() for s in train])

# %% [markdown]
# The learned structure: start in pre with probability 1, never go back.

# %%
print("initial P:", np.exp(hmm.initial_log_prob))
print("transition P:\n", np.exp(hmm.transition_log_prob))

# %%
test = make("test", 50, 31)
path = viterbi(hmm, test.frames)
print("decoded path:", "".join("-+"[v] for v in path))
print("true completion 31, decoded", decode_completion(hmm, test.frames))

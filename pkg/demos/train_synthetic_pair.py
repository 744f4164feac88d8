"""Train a source/target pair on synthetic data, securely and in the clear."""

import numpy as np

from sftl import Hyperparams, LocalNet, PartyInput, predict_pair, train_pair
from sftl.data import DatasetSpec, load_and_split
from sftl.model import plaintext_train
from sftl.protocol import oracle_psi

# 300 entities, S sees 6 columns and every label, T sees 4 other columns
sp = load_and_split(DatasetSpec(n_samples=300, p_s=6, p_t=4, overlap=0.5, noise=0.2,
                                test_fraction=0.3, seed=1))
print("S rows", sp.source.X.shape, "T rows", sp.target.X.shape)
print("overlap", len(sp.overlap_ids), "labelled", len(sp.label_ids))

net_S = LocalNet.init([6, 8], 11)  # one tanh layer into an 8-dim shared space
net_T = LocalNet.init([4, 8], 12)
hp = Hyperparams(max_iter=20)

# the float reference, from the same starting weights
ref_S, ref_T = net_S.copy(), net_T.copy()
ref_losses = plaintext_train(ref_S, ref_T, sp.source, sp.target, hp)

# the two-party run; reveal_loss opens L each round so we can watch it
rS, rT, _ = train_pair(PartyInput("S", net_S, sp.source, sp.overlap_ids, sp.label_ids),
                       PartyInput("T", net_T, sp.target, sp.overlap_ids, sp.label_ids),
                       "mal", hp, reveal_loss=True)
for it, (a, b) in enumerate(zip(rS.losses, ref_losses)):
    print(f"iter {it:2d}  secure L={a:9.5f}  plain L={b:9.5f}")
print("iterations", rS.iterations, "converged", rS.converged)

m = rS.metrics[-1]
print("last iteration:", m.as_record())

# T asks for labels on its held-out rows; S never sees them
_, labels, _ = predict_pair(rS.net, sp.source, rT.net, sp.test_X_T, "mal")
plain = np.where(oracle_psi(ref_S, sp.source, ref_T, sp.test_X_T) >= 0, 1, -1)
print("secure accuracy", np.mean(labels == sp.test_y))
print("plaintext accuracy", np.mean(plain == sp.test_y))
print("agreement", np.mean(labels == plain))

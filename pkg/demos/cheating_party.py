"""What happens when one party shifts a share: every variant aborts."""

import numpy as np

from sftl import Hyperparams, LocalNet, PartyInput, train_pair
from sftl.data import DatasetSpec, load_and_split

sp = load_and_split(DatasetSpec(n_samples=40, p_s=4, p_t=3, overlap=0.6, seed=0))


def session(cheat):
    a = PartyInput("S", LocalNet.init([4, 3], 1), sp.source, sp.overlap_ids, sp.label_ids)
    b = PartyInput("T", LocalNet.init([3, 3], 2), sp.target, sp.overlap_ids, sp.label_ids)
    return train_pair(a, b, "mal", Hyperparams(max_iter=2), cheat=cheat)


rS, rT, _ = session((None, None))
print("honest:", rS.iterations, "iterations, weights norm", np.linalg.norm(rS.net.flatten()))

# share: a corrupted operand enters a multiplication
# open: a shifted share is sent while opening a masked value
# output: a shifted share is sent with the gradients
for kind in ("share", "open", "output"):
    for who, cheat in (("S", ((kind, 0), None)), ("T", (None, (kind, 0)))):
        rS, rT, _ = session(cheat)
        print(f"{who} cheats on {kind:6s} -> S: {type(rS).__name__:16s} T: {type(rT).__name__}")

# the semi-honest engine has no MACs, so the same shift goes unnoticed
a = PartyInput("S", LocalNet.init([4, 3], 1), sp.source, sp.overlap_ids, sp.label_ids)
b = PartyInput("T", LocalNet.init([3, 3], 2), sp.target, sp.overlap_ids, sp.label_ids)
rS, rT, _ = train_pair(a, b, "sh", Hyperparams(max_iter=2), cheat=(None, ("output", 0)))
print("sh engine, T cheats on output ->", type(rS).__name__)

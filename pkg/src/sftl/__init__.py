"""Secret-shared two-party federated transfer learning.

Modules: ``arith`` (ring/field and fixed point), ``sharing`` (semi-honest and
MAC-checked engines), ``preprocessing`` (dealer and cost models), ``model``
(local networks, loss and the secure joint terms), ``protocol`` (sessions),
``net`` (framed TCP), ``data``, ``bench`` and ``cli``.
"""

from .arith import FixedCodec
from .model import Hyperparams, LocalNet
from .protocol import PartyInput, predict_pair, train_pair

__version__ = "0.1.0"

__all__ = ["FixedCodec", "Hyperparams", "LocalNet", "PartyInput", "train_pair", "predict_pair"]

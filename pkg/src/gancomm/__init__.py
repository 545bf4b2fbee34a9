"""End-to-end learned transceivers over simulated channels.

Subpackages cover: a taped autodiff core (:mod:`gancomm.tensor`),
channel simulators (:mod:`gancomm.channels`), classical modulation /
coding / OFDM baselines (:mod:`gancomm.modem`, :mod:`gancomm.coding`,
:mod:`gancomm.ofdm`), learnable transmitter/receiver networks
(:mod:`gancomm.networks`), a conditional-GAN channel surrogate
(:mod:`gancomm.gan`), the alternating trainer (:mod:`gancomm.training`),
and Monte-Carlo BER evaluation (:mod:`gancomm.evaluate`).
"""

__version__ = "0.1.0"

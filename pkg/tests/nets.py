"""Hand-built networks with known robustness behaviour."""

import numpy as np

from probrobust.model import Layer, Network


def constant_net(dim=2, bias=(1.0, 0.0)):
    return Network((Layer(np.zeros((len(bias), dim)), bias, "identity"),))


def identity_net(dim=2):
    return Network((Layer(np.eye(dim), np.zeros(dim), "identity"),))


def sign_net():
    """1-D: logits (x, -x); class 0 iff x >= 0."""
    return Network((Layer([[1.0], [-1.0]], [0.0, 0.0], "identity"),))


def threshold_net(t):
    """1-D: class 1 iff x > t."""
    return Network((Layer([[0.0], [1.0]], [0.0, -t], "identity"),))


def linear_net_2d(w=(1.0, 0.0), b=-0.5):
    """2-D: class 1 iff w.x + b > 0."""
    return Network((Layer([[0.0, 0.0], list(w)], [0.0, b], "identity"),))


def bump_net(intervals, heights):
    """1-D relu net whose class-1 logit is a sum of tents, positive on the open intervals.

    A -1e-9 bias on the class-1 logit keeps rounding residue outside the tents
    from flipping exact ties; the intervals shrink by at most 1e-9 / height.
    """
    W1, b1, w2 = [], [], []
    for (a, b), h in zip(intervals, heights):
        c = (a + b) / 2
        W1 += [[1.0], [1.0], [1.0]]
        b1 += [-a, -c, -b]
        w2 += [h, -2 * h, h]
    return Network((Layer(W1, b1, "relu"), Layer([[0.0] * len(w2), w2], [0.0, -1e-9], "identity")))


def random_net(rng, sizes):
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = "identity" if i == len(sizes) - 2 else "relu"
        layers.append(Layer(rng.normal(size=(b, a)), rng.normal(size=b) * 0.5, act))
    return Network(tuple(layers))

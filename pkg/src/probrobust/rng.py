"""Counter-based random numbers keyed by ``(seed, stream, index)``.

Every draw is a pure function of its key and counter, so results never depend
on evaluation order, batch boundaries or the number of worker threads.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import mix64

_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RngKey:
    seed: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK)
        object.__setattr__(self, "stream", int(self.stream) & _MASK)

    def child(self, *tags: int) -> "RngKey":
        """Derive an independent stream; tags are small integers naming the purpose."""
        s = self.stream
        for t in tags:
            s = mix64(s ^ mix64((int(t) & _MASK) + 0x632BE59BD9B4E019))
        return RngKey(self.seed, s)

    def uniforms(self, indices, n_sub: int, sub_offset: int = 0) -> np.ndarray:
        """Uniform [0, 1) draws of shape ``(len(indices), n_sub)``.

        Row ``i`` holds sub-draws ``sub_offset .. sub_offset + n_sub - 1`` of
        counter ``indices[i]``.
        """
        indices = np.atleast_1d(np.asarray(indices, dtype=np.uint64))
        prefix = _kernels.key_prefix(self.seed, self.stream)
        return _kernels.counter_uniforms(prefix, indices, n_sub, sub_offset)

    def normals(self, indices, n: int, sub_offset: int = 0) -> np.ndarray:
        """Standard normals via Box-Muller; consumes ``2 * ceil(n / 2)`` sub-draws."""
        pairs = (n + 1) // 2
        u = self.uniforms(indices, 2 * pairs, sub_offset)
        u1 = 1.0 - u[:, 0::2]  # (0, 1]
        u2 = u[:, 1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)], axis=1)
        return z[:, :n]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream": self.stream}


# stream tags used across modules
MC = 1
SEQ = 2
AMLS = 3
LAST_PARTICLE = 4
TSR = 5
LIPSCHITZ = 6
PGD = 7
INNER_MAX = 8
TRAIN = 9
MARGINS = 10
CHECK = 11

"""Width schedule and parameter count for the trainable architectures."""

import math
import warnings
from dataclasses import dataclass
from pathlib import Path


class UnderParameterizedWarning(UserWarning):
    """d < n * m_y: no bounded-norm network can interpolate every labeling."""


@dataclass(frozen=True)
class ArchSpec:
    widths: tuple
    alpha: float = 10.0
    c_w: float = 2.0
    c_b: float = 0.01
    C: float = 4.0
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 3:
            raise ValueError("need at least one hidden layer (H >= 1)")
        if any(w != orig or w < 1 for w, orig in zip(widths, self.widths)):
            raise ValueError(f"widths must be positive integers, got {self.widths!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.c_w < 0 or self.c_b < 0:
            raise ValueError("init variances must be non-negative")
        object.__setattr__(self, "widths", widths)

    @property
    def H(self):
        return len(self.widths) - 2

    @property
    def m_x(self):
        return self.widths[0]

    @property
    def m_y(self):
        return self.widths[-1]

    @property
    def m_H(self):
        return self.widths[-2]

    def to_text(self):
        lines = [
            f"H={self.H}",
            "widths=" + ",".join(str(w) for w in self.widths),
            f"alpha={self.alpha!r}",
            f"c_w={self.c_w!r}",
            f"c_b={self.c_b!r}",
            f"C={self.C!r}",
            f"seed={self.seed}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"malformed line {raw!r}")
            kv[key.strip()] = value.strip()
        widths = tuple(int(w) for w in kv["widths"].split(","))
        spec = cls(
            widths=widths,
            alpha=float(kv.get("alpha", 10.0)),
            c_w=float(kv.get("c_w", 2.0)),
            c_b=float(kv.get("c_b", 0.01)),
            C=float(kv.get("C", 4.0)),
            seed=int(kv.get("seed", 0)),
        )
        if "H" in kv and int(kv["H"]) != spec.H:
            raise ValueError(f"H={kv['H']} disagrees with {len(widths)} widths")
        return spec

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


def schedule_log(n, H, delta):
    """ln(H n^2 / delta), the log factor shared by every width in the schedule."""
    return math.log(H * n * n / delta)


def size_widths(n, H, delta, m_x, m_y, C=4.0, *, last_width_factor=1,
                alpha=10.0, c_w=2.0, c_b=0.01, seed=0):
    """Widths m_0..m_{H+1} for the trainability construction.

    For H >= 2 the pre-layers get ceil(C^2 H^2 L), layer H-1 gets
    ceil(C^2 L) and the last hidden layer gets ``last_width_factor * n``,
    where L = ln(H n^2 / delta).  With H = 1 the input feeds the last hidden
    layer directly.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if H < 1:
        raise ValueError("H must be at least 1")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if m_x < 1 or m_y < 1:
        raise ValueError("m_x and m_y must be positive")
    if C < 1:
        raise ValueError("C must be at least 1")
    if last_width_factor < 1:
        raise ValueError("last_width_factor must be at least 1")

    L = schedule_log(n, H, delta)
    hidden = []
    if H >= 2:
        wide = math.ceil(C * C * H * H * L)
        hidden = [wide] * (H - 2) + [math.ceil(C * C * L)]
    hidden.append(int(math.ceil(last_width_factor * n)))
    spec = ArchSpec((m_x, *hidden, m_y), alpha=alpha, c_w=c_w, c_b=c_b, C=C, seed=seed)
    # the rank argument needs at least n features in the last hidden layer
    assert spec.m_H >= n
    return spec


def param_count(spec, n=None):
    """d = sum_l (m_l m_{l+1} + m_{l+1}).

    When ``n`` is given and d < n * m_y, an UnderParameterizedWarning is
    emitted.
    """
    if isinstance(spec, ArchSpec):
        widths = spec.widths
    else:
        widths = tuple(spec)
        if len(widths) < 3:
            raise ValueError("need at least one hidden layer (H >= 1)")
    d = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    if n is not None and d < n * widths[-1]:
        warnings.warn(
            f"d={d} < n*m_y={n * widths[-1]}: interpolating every labeling "
            "with bounded weights is impossible",
            UnderParameterizedWarning,
            stacklevel=2,
        )
    return d

"""Classical drive envelopes for the cavity mode and the emitter."""

from dataclasses import dataclass
import math

import numpy as np

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

KINDS = ("cw", "gaussian")
TARGETS = ("cavity", "dot", "both")


@dataclass(frozen=True)
class PulseShape:
    """Coherent drive E(t) with a fixed optical carrier.

    ``amplitude`` is the peak envelope in rad/ps (a magnitude; the optical
    phase lives in ``phase``). ``carrier`` is the laser frequency measured
    from the reference frequency, i.e. the mean of the emitter and cavity
    frequencies. ``target="both"`` couples the same field to the cavity and
    to the emitter dipole.
    """

    kind: str = "cw"
    amplitude: float = 0.0
    center: float = 0.0
    fwhm: float | None = None
    carrier: float = 0.0
    target: str = "cavity"
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"pulse kind must be one of {KINDS}, got {self.kind!r}")
        if self.target not in TARGETS:
            raise ValueError(f"pulse target must be one of {TARGETS}, got {self.target!r}")
        if not math.isfinite(self.amplitude):
            raise ValueError("drive amplitude must be finite")
        if self.amplitude < 0:
            raise ValueError("drive amplitude is a magnitude and must be >= 0; use phase for sign")
        if self.kind == "gaussian":
            if self.fwhm is None or not self.fwhm > 0:
                raise ValueError("gaussian pulse needs fwhm > 0")

    @property
    def sigma(self):
        """Standard deviation of the field envelope exp(-t^2 / 2 sigma^2)."""
        return self.fwhm * FWHM_TO_SIGMA if self.kind == "gaussian" else math.inf

    @property
    def is_cw(self):
        return self.kind == "cw"

    def envelope(self, t):
        """E(t) in rad/ps; accepts scalars or arrays."""
        if self.kind == "cw":
            if np.ndim(t):
                return np.full(np.shape(t), self.amplitude)
            return self.amplitude
        x = (np.asarray(t, dtype=float) - self.center) / self.sigma
        out = self.amplitude * np.exp(-0.5 * x * x)
        return out if np.ndim(out) else float(out)

    def area(self):
        """Integral of E(t) over all time (inf for cw)."""
        if self.kind == "cw":
            return math.inf if self.amplitude else 0.0
        return self.amplitude * self.sigma * math.sqrt(2.0 * math.pi)

    def scaled(self, factor):
        from dataclasses import replace

        return replace(self, amplitude=self.amplitude * factor)

    def with_carrier(self, carrier):
        from dataclasses import replace

        return replace(self, carrier=float(carrier))

    def end_time(self, n_sigma=6.0):
        """Time after which the envelope is negligible (inf for cw)."""
        if self.kind == "cw":
            return math.inf
        return self.center + n_sigma * self.sigma


def pi_pulse_amplitude(fwhm):
    """Peak amplitude of a Gaussian emitter drive E(t)(sigma + sigma^dag) with area pi.

    The emitter Rabi frequency is 2 E(t), so the condition is 2 * area = pi.
    """
    sigma = fwhm * FWHM_TO_SIGMA
    return math.pi / (2.0 * sigma * math.sqrt(2.0 * math.pi))

"""Structure-similarity proxy: magnitude-weighted phase correlation.

Weights come from the reference magnitude spectrum so structurally
salient frequencies dominate; the DC bin carries no phase information
and is excluded. Values are averaged over channels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .spectral import fft2


@dataclass(frozen=True)
class PhaseCorrelationReport:
    global_corr: float  # in [-1, 1]
    band: tuple | None  # per-radial-band values, None unless requested
    n_bins: int  # frequency bins contributing to the global value

    def to_json_dict(self):
        return {
            "global": self.global_corr,
            "band": list(self.band) if self.band is not None else None,
            "n_bins": self.n_bins,
        }


def _radial_index(h, w):
    fy = np.fft.fftfreq(h) * h
    fx = np.fft.fftfreq(w) * w
    return np.rint(np.hypot(fy[:, None], fx[None, :])).astype(np.int64)


def phase_correlation(reference, output, with_bands=False):
    """Weighted mean cosine of per-bin phase differences.

    global = sum(w * cos(P_ref - P_out)) / sum(w) with w the reference
    magnitude, DC excluded, averaged over channels. Invariant under
    positive amplitude-only scaling of ``output``.
    """
    reference = np.asarray(reference, dtype=np.float64)
    output = np.asarray(output, dtype=np.float64)
    if reference.shape != output.shape:
        raise ParameterError(
            f"shape mismatch: reference {reference.shape} vs output {output.shape}"
        )
    s_ref = fft2(reference)
    s_out = fft2(output)

    c, h, w = reference.shape
    keep = np.ones((h, w), dtype=bool)
    keep[0, 0] = False  # DC bin
    cos_diff = np.cos(s_ref.phase - s_out.phase)

    per_channel = []
    for ch in range(c):
        weights = s_ref.magnitude[ch][keep]
        total = weights.sum()
        if total <= 0.0:
            raise ParameterError(f"reference channel {ch} has no spectral energy")
        per_channel.append(float((weights * cos_diff[ch][keep]).sum() / total))
    global_corr = float(np.mean(per_channel))
    n_bins = int(keep.sum()) * c

    band = None
    if with_bands:
        radius = _radial_index(h, w)
        band_vals = []
        for r in range(1, int(radius.max()) + 1):
            mask = keep & (radius == r)
            if not mask.any():
                continue
            vals = []
            for ch in range(c):
                weights = s_ref.magnitude[ch][mask]
                total = weights.sum()
                if total > 0.0:
                    vals.append((weights * cos_diff[ch][mask]).sum() / total)
            if vals:
                band_vals.append(float(np.mean(vals)))
        band = tuple(band_vals)

    return PhaseCorrelationReport(global_corr=global_corr, band=band, n_bins=n_bins)

from .mixing import epm, epm_stacked, epm_weights, frozen_mixing
from .psi import Consonance, Dissonance
from .reverb import Reverb, reverb_scan, scan_chunked, scan_sequential
from .sequencer import ConvLite, Sequencer

__all__ = [
    "Consonance",
    "ConvLite",
    "Dissonance",
    "Reverb",
    "Sequencer",
    "epm",
    "epm_stacked",
    "epm_weights",
    "frozen_mixing",
    "reverb_scan",
    "scan_chunked",
    "scan_sequential",
]

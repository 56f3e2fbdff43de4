"""Speech-encoder embedding extraction into ESEQ corpora."""

__version__ = "0.1.0"

from .backend import BackendError, EncoderBackend, SyntheticBackend, WhisperBackend, load_backend
from .dataset import DatasetError, Utterance, load_dataset, load_wav, write_wav
from .formats import FormatError, read_eseq, write_eseq, write_manifest, write_spans
from .jobs import ExtractionJob, extract
from .spans import Aligner, AlignmentFailure, EvenAligner, extract_word_spans

__all__ = [
    "Aligner",
    "AlignmentFailure",
    "BackendError",
    "DatasetError",
    "EncoderBackend",
    "EvenAligner",
    "ExtractionJob",
    "FormatError",
    "SyntheticBackend",
    "Utterance",
    "WhisperBackend",
    "extract",
    "extract_word_spans",
    "load_backend",
    "load_dataset",
    "load_wav",
    "read_eseq",
    "write_eseq",
    "write_manifest",
    "write_spans",
    "write_wav",
    "__version__",
]

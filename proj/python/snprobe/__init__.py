"""Python bindings for the snprobe super neuron toolkit."""

from ._snprobe import (
    DataError,
    Dump,
    FormatError,
    InvalidArgument,
    IoError,
    NoSuperNeuronsError,
    SnprobeError,
    agreement_rate,
    confusion_counts,
    float_to_half,
    half_to_float,
    infer,
    load_manifest,
    metrics,
    modeled_speedup,
    probe,
    run_cli,
    score,
    synth,
    write_dump,
)

__all__ = [
    "DataError",
    "Dump",
    "FormatError",
    "InvalidArgument",
    "IoError",
    "NoSuperNeuronsError",
    "SnprobeError",
    "agreement_rate",
    "confusion_counts",
    "float_to_half",
    "half_to_float",
    "infer",
    "load_manifest",
    "metrics",
    "modeled_speedup",
    "probe",
    "run_cli",
    "score",
    "synth",
    "write_dump",
]

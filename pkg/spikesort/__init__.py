"""
DeepSpike — Spike Sorting
===========================
Recordings, synthetic data, detection, the two CNN stages, PCA + K-means
sorting and the CAcc metric.

Usage:
    from spikesort import SyntheticConfig, generate_synthetic, sort_recording

    recording = generate_synthetic(SyntheticConfig(noise_sigma=0.05, seed=1))
    report = sort_recording(recording, cnn1, cnn2)
    print(report.metrics.cacc)
"""

from .config import (
    ALIGN_INDEX,
    NOISE_LEVELS,
    SAMPLE_RATE_HZ,
    SEGMENT_LENGTH,
    ChannelLabel,
    EventLabel,
    SortConfig,
    SyntheticConfig,
    TemplateBank,
)
from .datasets import Corpus, artefact_corpus, channel_selection_corpus, desk_recordings
from .metrics import (
    SortingMetrics,
    TableRow,
    best_label_map,
    compute_cacc,
    downscale_power,
    downscaling_factor,
    match_events,
    results_table,
    write_table,
)
from .recording import (
    GroundTruthEvent,
    MalformedManifestError,
    NonMonotonicTimesError,
    Recording,
    RecordingFormatError,
    TruncatedDataError,
    convert_wave_clus,
    ingest_recording,
    noise_from_name,
    save_recording,
)
from .segmentation import Segments, decimate, detect_events, noise_level, segment_for_channel_selection, threshold_crossings
from .sorting import (
    ChannelSort,
    Clustering,
    InsufficientDataError,
    Projection,
    SortReport,
    channel_select,
    kmeans_cluster,
    pca_project,
    remove_artefacts,
    sort_channel,
    sort_recording,
)
from .synthetic import EventRateError, generate_synthetic, place_events, template_bank

__all__ = [
    "ALIGN_INDEX",
    "NOISE_LEVELS",
    "SAMPLE_RATE_HZ",
    "SEGMENT_LENGTH",
    "ChannelLabel",
    "ChannelSort",
    "Clustering",
    "Corpus",
    "EventLabel",
    "EventRateError",
    "GroundTruthEvent",
    "InsufficientDataError",
    "MalformedManifestError",
    "NonMonotonicTimesError",
    "Projection",
    "Recording",
    "RecordingFormatError",
    "SortConfig",
    "SortReport",
    "Segments",
    "SortingMetrics",
    "SyntheticConfig",
    "TableRow",
    "TemplateBank",
    "TruncatedDataError",
    "artefact_corpus",
    "best_label_map",
    "channel_select",
    "channel_selection_corpus",
    "compute_cacc",
    "convert_wave_clus",
    "decimate",
    "desk_recordings",
    "detect_events",
    "downscale_power",
    "downscaling_factor",
    "generate_synthetic",
    "ingest_recording",
    "kmeans_cluster",
    "match_events",
    "noise_from_name",
    "noise_level",
    "pca_project",
    "place_events",
    "remove_artefacts",
    "results_table",
    "save_recording",
    "segment_for_channel_selection",
    "sort_channel",
    "sort_recording",
    "template_bank",
    "threshold_crossings",
    "write_table",
]

__version__ = "0.1.0"

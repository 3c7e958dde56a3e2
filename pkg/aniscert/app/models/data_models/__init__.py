from .data_models import (
    DataModel,
    NoiseSpec,
    AnisoParams,
    ProbBounds,
    Certificate,
    MeasureResult,
    CountTally,
    SigmaStats,
    CertResult,
    ExampleResult,
    Dataset,
    LinearModel,
    PatternSpec,
    LayerSpec,
    CurvePoint,
    CampaignSummary,
    CampaignReport,
    CurveComparison,
    VolumeEstimate,
    CheckReport,
    TrainingSummary,
    SIGMA_MIN
)

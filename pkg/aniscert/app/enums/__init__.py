from .enum_classes import (
    NoiseFamily,
    Norm,
    NpgKind,
    SigmaVariant,
    Verdict,
    ClassifierKind,
    LayerKind,
    BinomialAlternative,
    DatasetSource
)

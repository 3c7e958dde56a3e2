import math
from enum import Enum


class NoiseFamily(str, Enum):
    """ Isotropic noise families supported by the certifier

    One of:
        GAUSSIAN,
        LAPLACE,
        EXP_LINF,
        UNIFORM_LINF,
        POWER_LAW_LINF
    """
    GAUSSIAN = 'gaussian'
    LAPLACE = 'laplace'
    EXP_LINF = 'exp_linf'
    UNIFORM_LINF = 'uniform_linf'
    POWER_LAW_LINF = 'power_law_linf'


class Norm(str, Enum):
    """ Threat-model norms """
    L1 = 'l1'
    L2 = 'l2'
    LINF = 'linf'

    @property
    def p(self) -> float:
        return {'l1': 1.0, 'l2': 2.0, 'linf': math.inf}[self.value]

    @property
    def numpy_ord(self):
        return {'l1': 1, 'l2': 2, 'linf': math.inf}[self.value]


class NpgKind(str, Enum):
    """ Noise parameter generator kinds

    ISOTROPIC is the degenerate generator (sigma = 1, mu = 0) used as the
    isotropic baseline.
    """
    ISOTROPIC = 'isotropic'
    PATTERN = 'pattern'
    DATASET_WISE = 'dataset_wise'
    CERTIFICATION_WISE = 'certification_wise'


class SigmaVariant(str, Enum):
    """ Variance term of the joint training loss

    MEAN_SIGMA targets the ALM, MIN_SIGMA targets the certified radius.
    """
    MEAN_SIGMA = 'mean_sigma'
    MIN_SIGMA = 'min_sigma'


class Verdict(str, Enum):
    CERTIFIED = 'certified'
    ABSTAIN = 'abstain'


class ClassifierKind(str, Enum):
    NN = 'nn'
    LINEAR = 'linear'
    LOOKUP = 'lookup'


class LayerKind(str, Enum):
    """ Layer kinds understood by the nn kernel """
    DENSE = 'dense'
    CONV2D = 'conv2d'
    LEAKY_RELU = 'leaky_relu'
    TANH = 'tanh'
    AMPLIFIED_TANH = 'amplified_tanh'
    SOFTMAX = 'softmax'


class BinomialAlternative(str, Enum):
    """ Alternative hypothesis of the binomial test """
    TWO_SIDED = 'two_sided'
    GREATER = 'greater'


class DatasetSource(str, Enum):
    MNIST = 'mnist'
    SYNTHETIC = 'synthetic'

from abc import ABC, abstractmethod
from typing import Any, List, Optional

from ..models.data_models import CampaignReport, CheckReport, TrainingSummary
from ..models.request_models import CampaignConfig


class BaseTrainingService(ABC):
    """ Defines common interface for training services
    """

    @abstractmethod
    def train(self, config: CampaignConfig, **kwargs) -> TrainingSummary:
        return NotImplemented


class BaseCertificationService(ABC):
    """ Provides the common interface for certification campaigns
    """

    @abstractmethod
    def certify(self, config: CampaignConfig, **kwargs) -> CampaignReport:
        return NotImplemented

    def predict(self, config: CampaignConfig, **kwargs) -> List[Optional[int]]:
        return NotImplemented


class BaseVerificationService(ABC):
    """ Provides the common interface for oracle verification suites
    """

    @abstractmethod
    def run(self, **kwargs) -> List[CheckReport]:
        return NotImplemented


class BaseServiceFactory(ABC):
    """ Provides the common interface for creating services
    """

    @abstractmethod
    def create(self, spec: Any, **kwargs) -> Any:
        return NotImplemented

    @abstractmethod
    def register(self, name: Any, product: Any, **kwargs) -> Any:
        return NotImplemented

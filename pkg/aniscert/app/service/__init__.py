from .training_services import JointTrainingService
from .certification_services import CampaignCertificationService, RequestCertificationService
from .verification_services import OracleVerificationService, VerificationServiceFactory

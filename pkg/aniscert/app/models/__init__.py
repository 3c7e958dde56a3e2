from .data_models import data_models
from .request_models import request_models
from .response_models import response_models

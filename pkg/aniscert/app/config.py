import logging
import os
from typing import List

from pydantic import BaseModel, validator
from pyaml_env import parse_config

dir_path = os.path.dirname(os.path.realpath(__file__))
app_config = parse_config(f"{dir_path}/config.yml")
config = app_config[os.getenv("APP_ENV", "local_development")]


class EngineSettings(BaseModel):
    """ Monte-Carlo engine defaults (alpha, n0, n mirror the usual certification setup) """
    alpha: float = 0.001
    n0: int = 100
    n: int = 100000
    chunk_size: int = 10000
    workers: int = 1


class NpgSettings(BaseModel):
    sigma_floor: float = 1e-3
    softmin_tau: float = 0.05
    dataset_hidden: int = 256
    constant_input_length: int = 32
    dense_block_channels: int = 16
    dense_block_depth: int = 4
    certification_gamma: float = 1.0
    dataset_gamma: float = 1.0


class TrainingSettings(BaseModel):
    lr: float = 1e-2
    batch_size: int = 128
    epochs: int = 200
    checkpoint_every: int = 10


class CurveSettings(BaseModel):
    grid_points: int = 50
    report_points: List[float] = [0.25 * i for i in range(10)]


class LoggingSettings(BaseModel):
    level: str = "INFO"
    format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    @validator("level", pre=True, always=True)
    def known_level(cls, value):
        value = str(value).upper()
        if value not in logging._nameToLevel:
            return "INFO"
        return value


engine_settings = EngineSettings.parse_obj(config.get("engine", {}))
npg_settings = NpgSettings.parse_obj(config.get("npg", {}))
training_settings = TrainingSettings.parse_obj(config.get("training", {}))
curve_settings = CurveSettings.parse_obj(config.get("curves", {}))
logging_settings = LoggingSettings.parse_obj(config.get("logging", {}))


def configure_logging(level: str = None) -> None:
    logging.basicConfig(level=level or logging_settings.level,
                        format=logging_settings.format)

from .idx import load_idx, read_idx_images, read_idx_labels, write_idx, downscale
from .synthetic import synth_gaussians, diagonal_boundary
from .results import (
    ResultRow, write_results, read_results, write_curve, read_curve,
    write_predictions, row_sizes, RESULT_COLUMNS, CURVE_COLUMNS, PREDICTION_COLUMNS
)
from .campaign_config import load_campaign_config, parse_campaign_config, SEED_ENV

"""srbench: dual-track image super-resolution benchmark toolkit."""

from .image import (ImageBuffer, LumaPlane, ResizeSpec, bicubic_resize, generate_lr,
                    load_png, rgb_to_luma, save_png, shave_border, to_luma)
from .metrics import SSIMConfig, psnr, quantize, ssim
from .niqe import (AGGDParams, NIQEModel, aggd_fit, default_model, fit_pristine_model,
                   load_model, mscn, niqe, niqe_features, save_model)
from .provider import (ProviderDescriptor, ProviderSession, evaluate,
                       shutdown, spawn_and_handshake, verify_provider)
from .scoring import (LeaderboardEntry, MetricVector, aggregate_submission,
                      combined_order, perceptual_score, rank_track)

__version__ = "0.1.0"

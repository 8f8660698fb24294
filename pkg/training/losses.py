"""
Training objective: photometric L1 + transmittance sparsity + Eikonal regularization.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Union

import torch
from pydantic import BaseModel, ConfigDict, Field

from utils.errors import NonFiniteError, RenderError
from utils.logger import get_logger

logger = get_logger(__name__)

Number = Union[float, torch.Tensor]


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda_trans: float = Field(default=0.1, ge=0.0)
    lambda_reg: float = Field(default=0.1, ge=0.0)


@dataclass
class LossTerms:
    color: torch.Tensor
    trans: torch.Tensor
    reg: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> Dict[str, float]:
        return {
            "L_color": float(self.color.detach()),
            "L_trans": float(self.trans.detach()),
            "L_reg": float(self.reg.detach()),
            "total": float(self.total.detach()),
        }


def photometric_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """
    Mean over pixels of the channel-summed absolute error.

    Args:
        pred: (P, 3) rendered intensities (post-gamma)
        gt: (P, 3) ground-truth intensities

    Raises:
        RenderError: On an empty batch or mismatched shapes
    """
    pred, gt = torch.as_tensor(pred), torch.as_tensor(gt, dtype=torch.as_tensor(pred).dtype)
    if pred.shape != gt.shape:
        raise RenderError(f"Prediction shape {tuple(pred.shape)} != target shape {tuple(gt.shape)}")
    if pred.shape[0] == 0:
        raise RenderError("photometric_loss got an empty batch")
    return (pred - gt).abs().sum(dim=-1).mean()


def sparsity_loss(seg_trans: torch.Tensor, internal: torch.Tensor) -> torch.Tensor:
    """
    Mean over pixels of sum_l |1 - T_l| over each pixel's internal segments.

    Args:
        seg_trans: (P, K) segment transmittances
        internal: (P, K) boolean mask of internal segments
    """
    seg_trans = torch.as_tensor(seg_trans)
    mask = torch.as_tensor(internal, dtype=torch.bool)
    if seg_trans.shape[0] == 0:
        return seg_trans.new_zeros(())
    per_pixel = torch.where(mask, (1.0 - seg_trans).abs(), torch.zeros_like(seg_trans)).sum(dim=-1)
    return per_pixel.mean()


def eikonal_loss(gradients: Optional[torch.Tensor]) -> torch.Tensor:
    """Mean of (|grad g| - 1)^2; an empty sample set gives 0 with a warning."""
    if gradients is None or gradients.numel() == 0:
        logger.warning("Eikonal term has no samples, using 0")
        dtype = gradients.dtype if gradients is not None else torch.float64
        return torch.zeros((), dtype=dtype)
    norms = gradients.reshape(-1, 3).norm(dim=-1)
    return ((norms - 1.0) ** 2).mean()


def total_loss(color: Number, trans: Number, reg: Number, weights: LossWeights,
               sparsity_enabled: bool = True) -> torch.Tensor:
    """
    L = L_color + lambda_trans * L_trans + lambda_reg * L_reg.

    The sparsity term is dropped entirely when sparsity_enabled is False.

    Raises:
        NonFiniteError: Naming the first non-finite component
    """
    parts = {"L_color": color, "L_reg": reg}
    if sparsity_enabled:
        parts["L_trans"] = trans
    tensors = {}
    for name, value in parts.items():
        value = value if isinstance(value, torch.Tensor) else torch.tensor(float(value),
                                                                           dtype=torch.float64)
        if not bool(torch.isfinite(value.detach()).all()):
            logger.error(f"Loss component {name} is non-finite: {value.detach()}")
            raise NonFiniteError(f"Loss component {name} is non-finite")
        tensors[name] = value

    total = tensors["L_color"] + weights.lambda_reg * tensors["L_reg"]
    if sparsity_enabled:
        total = total + weights.lambda_trans * tensors["L_trans"]
    return total

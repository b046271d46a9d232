"""Batched numpy-in / numpy-out inference over a trained network."""
from __future__ import annotations

import numpy as np
import torch

from .model import TwoBranchNet


def images_to_tensor(images: np.ndarray) -> torch.Tensor:
    """(N, H, W, 3) float array in [0, 1] -> (N, 3, H, W) float32 tensor."""
    arr = np.ascontiguousarray(np.asarray(images, dtype=np.float32).transpose(0, 3, 1, 2))
    return torch.from_numpy(arr)


@torch.no_grad()
def predict_arrays(
    net: TwoBranchNet, images: np.ndarray, batch_size: int = 8
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the network over a stack of images.

    Returns (seg_maps (N, H, W), edge_maps (N, H/4, W/4), scores (N,)).
    """
    was_training = net.training
    net.eval()
    segs, edges, scores = [], [], []
    try:
        for start in range(0, len(images), batch_size):
            batch = images_to_tensor(images[start : start + batch_size])
            pred = net(batch)
            segs.append(pred.seg_map.numpy())
            edges.append(pred.edge_map.numpy())
            scores.append(pred.image_score.numpy())
    finally:
        if was_training:
            net.train()
    if not segs:
        h = w = 0
        return (
            np.zeros((0, h, w), np.float32),
            np.zeros((0, h, w), np.float32),
            np.zeros((0,), np.float32),
        )
    return np.concatenate(segs), np.concatenate(edges), np.concatenate(scores)

"""
Feature distance between 2D and 3D points and the dense cost matrix D.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .array_io import write_container
from .errors import DimensionMismatch
from .segmentation import SegmentLabels

logger = logging.getLogger(__name__)

DEFAULT_TAU = 1e3


@dataclass(frozen=True, eq=False)
class FeatureField:
    """
    Descriptors of one shape as consumed by the cost matrix.

    labels is None when segment gating is disabled.
    """

    hks: np.ndarray
    wks: np.ndarray
    labels: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.hks.shape[0]

    @property
    def d(self) -> int:
        return self.hks.shape[1]

    @classmethod
    def from_descriptors(cls, hks, wks, labels: Optional[SegmentLabels] = None) -> 'FeatureField':
        return cls(hks=hks.values, wks=wks.values,
                   labels=None if labels is None else labels.labels)


@dataclass(frozen=True, eq=False)
class CostMatrix:
    D: np.ndarray
    tau: float

    @property
    def shape(self):
        return self.D.shape

    def save(self, file_path: str):
        write_container(file_path, {'D': self.D, 'tau': np.array([self.tau])})


def feature_distance(fm_hks: np.ndarray, fm_wks: np.ndarray, seg_m: Optional[int],
                     fn_hks: np.ndarray, fn_wks: np.ndarray, seg_n: Optional[int],
                     tau: float = DEFAULT_TAU) -> float:
    """
    L1(HKS) + L1(WKS) within a segment, tau across segments.

    Raises:
        DimensionMismatch: If descriptor widths differ
    """
    fm_hks, fm_wks = np.asarray(fm_hks), np.asarray(fm_wks)
    fn_hks, fn_wks = np.asarray(fn_hks), np.asarray(fn_wks)
    if fm_hks.shape != fn_hks.shape or fm_wks.shape != fn_wks.shape:
        raise DimensionMismatch(
            f"Descriptor widths differ: {fm_hks.shape}/{fm_wks.shape} vs {fn_hks.shape}/{fn_wks.shape}"
        )
    if seg_m is not None and seg_n is not None and seg_m != seg_n:
        return float(tau)
    return float(np.abs(fm_hks - fn_hks).sum() + np.abs(fm_wks - fn_wks).sum())


def build_cost_matrix(feat_m: FeatureField, feat_n: FeatureField,
                      tau: float = DEFAULT_TAU) -> CostMatrix:
    """
    Dense m x n cost matrix between curve features and mesh features.

    Args:
        feat_m: Features on the curve (m rows)
        feat_n: Features on the mesh (n rows)
        tau: Penalty for points in different segments

    Returns:
        CostMatrix

    Raises:
        DimensionMismatch: If descriptor widths differ
        ValueError: If gating is active and tau does not exceed the largest
            possible in-segment distance
    """
    if feat_m.hks.shape[1] != feat_n.hks.shape[1] or feat_m.wks.shape[1] != feat_n.wks.shape[1]:
        raise DimensionMismatch(
            f"Descriptor widths differ: {feat_m.hks.shape[1]}+{feat_m.wks.shape[1]} "
            f"vs {feat_n.hks.shape[1]}+{feat_n.wks.shape[1]}"
        )

    gated = feat_m.labels is not None and feat_n.labels is not None
    bound = feat_m.hks.shape[1] + feat_m.wks.shape[1]
    if gated and tau <= bound:
        raise ValueError(f"tau={tau} must exceed the maximal feature distance {bound}")

    D = cdist(np.hstack([feat_m.hks, feat_m.wks]),
              np.hstack([feat_n.hks, feat_n.wks]), metric='cityblock')
    if gated:
        D[feat_m.labels[:, None] != feat_n.labels[None, :]] = tau

    logger.debug("Cost matrix %dx%d (gating %s)", D.shape[0], D.shape[1],
                 'on' if gated else 'off')
    return CostMatrix(D=D, tau=float(tau))

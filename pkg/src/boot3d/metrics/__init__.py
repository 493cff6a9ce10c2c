from ..geometry.bvh import BvhIndex, build_bvh, closest_point
from .distance import IcpResult, icp_align, interocular_distance, nme, procrustes, proxy_interocular
from .report import EvalPair, NmeReport, NmeRow, bucket_of, evaluate_pair, evaluate_pairs

__all__ = ["BvhIndex", "build_bvh", "closest_point", "IcpResult", "icp_align", "interocular_distance", "nme",
           "procrustes", "proxy_interocular", "EvalPair", "NmeReport", "NmeRow", "bucket_of", "evaluate_pair",
           "evaluate_pairs"]

"""3DmFV: point clouds encoded as sum/max/min Fisher-gradient statistics on a grid GMM."""
from .corrupt import CorruptionSpec
from .encoder import (FisherVector, Mfv, encode_3dmfv, encode_batch, encode_fv,
                      finalize_normalization, per_point_gradients, to_grid_tensor)
from .gmm import GMM, build_grid_gmm, fit_gmm_em, soft_assignment
from .reconstruct import PlaneParams, recover_plane, recover_single_point

__version__ = "0.1.0"

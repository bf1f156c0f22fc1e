from .config import ArchConfig
from .decoders import DepthDecoder, DepthState, SemanticDecoder, level_intrinsics
from .encoder import PyramidEncoder, analytic_encoder_parameter_count
from .joint import JointDepthSegNet, JointOutput, joint_forward, count_parameters
from .layers import dinl, pscv, sncv, split_normalize

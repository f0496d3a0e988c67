"""Smooth mixture-of-bumps flows on compact intervals and circles.

Core pieces: infinitely differentiable monotone bump mixtures with
analytic jets, vectorized multi-bin inversion, inverse-function-theorem
gradients through the black-box inverse, a small reverse-mode tape for
conditioner networks and second-order losses, coupling-layer flows,
training harnesses (likelihood, reverse KL, force matching), and
symplectic dynamics using the flow density as a potential.
"""

from .flow import CouplingLayer, FlowModel, build_model
from .implicit import (InverseCallRecord, backward_input, backward_params,
                       inverse_forward, inverse_mixed_second_param,
                       inverse_second_derivative, inverse_third_derivative)
from .ramps import RampSpec, ramp_eval, sigmoid_eval
from .rootfind import (NotConverged, RootFindConfig, TargetOutOfBracket,
                       bench_rootfind, invert_params, multibin_invert)
from .targets import CubeMap, ToyPotential, mh_sample
from .training import (Adam, Dataset, TrainConfig, TrainingDiverged,
                       cutoff_lambda, evaluate, generate_dataset,
                       kish_efficiency, train)
from .transforms import (AffineMap, MixtureParams, MixtureTransform,
                         TransformerConfig, TransformJet, bump_forward,
                         constrain)

__version__ = "0.1.0"

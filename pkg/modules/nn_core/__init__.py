from .tensor import Tensor, as_tensor, check_finite, check_shape
from .model import (ClassifierHead, DenseLayer, EncoderModel, encode, forward_batch,
                    loss_and_probs, softmax_rows)
from .backprop import (GradientSet, backward, backward_encoder, diag_hessian_rows,
                       head_backward, head_forward)
from .optimizer import SGDMomentum, sgd_step
from .checkpoint import CHECKPOINT_VERSION, load_checkpoint, save_checkpoint

"""Gradient-trained hard oblique decision trees."""
import os

# BLAS reads its thread count once, when numpy is first imported
if os.environ.get("SEMTREE_NUM_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["SEMTREE_NUM_THREADS"])

from ._backend import BACKEND
from .grad import Gradients, RegressorBank, cls_backward, cls_forward, reg_backward, reg_forward
from .selectors import SelectorMode, hardmax, ste, topk, topk_backward
from .semnet import PathMasks, SemNet, build_masks, check_theorem1, class_logits, forward_logits, from_tree, to_tree
from .train import TrainPlan, TrainReport, train_classification, train_regression, train_regression_ste
from .tree import ObliqueTree, TreeFormatError, TreeTopology, load_tree, save_tree

__version__ = "0.1.0"

"""Class-label-regularized adversarial auto-encoders for emotion features.

The package bundles a small numpy neural-network core, a Gaussian-mixture
prior, the adversarial auto-encoder itself, PCA/LDA/auto-encoder baselines,
an SMO-trained SVM, dataset I/O and a leave-one-session-out experiment
harness.
"""
from .aae import AaeConfig, AdversarialAutoencoder, EpochLog, fit_aae
from .baselines import (
    LdaModel,
    PcaModel,
    VanillaAutoencoder,
    lda_fit,
    lda_project,
    pca_fit,
    pca_project,
    pca_reconstruct,
    vanilla_ae_encode,
    vanilla_ae_fit,
)
from .data import (
    Dataset,
    FoldPlan,
    load_arff,
    load_csv,
    make_session_folds,
    save_arff,
    save_csv,
    standardize_apply,
    standardize_fit,
    synth_blobs,
)
from .errors import (
    AaeError,
    DegenerateInputError,
    DivergedTrainingError,
    ParseError,
    SchemaError,
    ShapeError,
    UsageError,
    ValidationError,
)
from .experiment import ExperimentConfig, ExperimentReport, TuningGrid, run_table1, run_table2
from .metrics import ConfusionMatrix, confusion, two_proportion_test, uar
from .nn import Adam, SGD, DenseLayer, Network, gradient_check
from .prior import GaussianComponent, MixturePrior, default_layout
from .svm import BinarySvm, KernelSpec, MulticlassSvm, svm_fit, svm_predict

__version__ = "0.1.0"

"""Self-supervised SAR despeckling from single speckled images.

Pipeline: simulate or ingest speckled data -> adversarially train a pair
generator -> emit speckled-to-speckled pairs -> train a despeckler with the
Noise2Noise strategy -> optionally iterate with the despeckler as pair-base
producer -> evaluate with full-reference and region-based metrics.
"""

from .adversarial import (
    AdversarialConfig,
    compute_pair_bases,
    critic_step,
    generate_s2s_dataset,
    generator_step,
    train_adversarial,
)
from .checkpoint import (
    CheckpointConfigError,
    CheckpointError,
    CheckpointFormatError,
    CheckpointVersionError,
    load_checkpoint,
    save_checkpoint,
)
from .dataio import (
    Dataset,
    crop_patches,
    export_image,
    load_dataset,
    load_image,
    save_dataset,
    synthesize_corpus,
)
from .losses import LossValue, cycle_loss, generator_objective, mse_loss, tv_loss, wgan_loss
from .metrics import (
    MetricValue,
    Region,
    enl,
    epd_roa,
    evaluate_reference,
    evaluate_regions,
    mor,
    psnr,
    read_regions,
    report_to_text,
    ssim,
    tcr_deviation,
    write_regions,
)
from .n2n import N2NConfig, PsdiResult, despeckle, psdi_round, train_despeckler
from .networks import (
    DiscriminatorConfig,
    DnCNNConfig,
    ModelHandle,
    NestedUNetConfig,
    build_model,
    forward,
    has_batch_norm,
)
from .seeds import derive_seed, philox
from .speckle import S2SPair, SpeckleField, apply_speckle, make_s2s_pair, sample_speckle_field
from .trainlog import TrainLog

__version__ = "0.1.0"

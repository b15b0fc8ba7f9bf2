from .checkpoint import Checkpoint, CheckpointError, SpecMismatchError, load_checkpoint, read_meta, save_checkpoint
from .losses import (
    LossConfig,
    Mode,
    adversarial_loss,
    discriminator_forward,
    generator_forward,
    l1_rgb,
    nchw_to_nhwc,
    nhwc_to_nchw,
    total_generator_loss,
)
from .networks import (
    DiscriminatorSpec,
    GeneratorSpec,
    PatchDiscriminator,
    SpecError,
    UNetGenerator,
    build_discriminator,
    build_generator,
    expected_discriminator_trace,
    expected_generator_trace,
    shape_trace,
)

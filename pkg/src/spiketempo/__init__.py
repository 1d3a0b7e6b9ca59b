"""Spiking-network toolkit: delay-convolution modules, temporal grouping,
length-mismatched residuals, surrogate-gradient training, and
energy/throughput profiling."""

__version__ = "0.1.0"

from ._kernels import backend as kernel_backend
from .errors import (
    ConfigError,
    IngestionError,
    NumericError,
    ShapeError,
    SpikeTempoError,
    TrainingDiverged,
)
from .lif import LifParams, LifState, heaviside, lif_forward, lif_step, surrogate_grad
from .network import (
    ActivationRecord,
    BatchNormParams,
    DelayLayer,
    HiddenSpec,
    Network,
    NetworkSpec,
    TrPlacement,
    batchnorm_forward,
    build_network,
    count_parameters,
    delay_conv_forward,
    dropout_forward,
    load_checkpoint,
    load_network_spec,
    network_forward,
    save_checkpoint,
    save_network_spec,
)
from .profiling import (
    EnergyReport,
    ThroughputReport,
    count_ac_ops,
    count_mac_flops,
    energy,
    throughput,
)
from .raster import (
    Dataset,
    EventStream,
    SpikeRaster,
    SynthSpec,
    bin_events,
    default_synth_spec,
    gen_event_streams,
    gen_synthetic,
    load_event_file,
    load_raster_cache,
    save_event_file,
    save_raster_cache,
    split_dataset,
)
from .temporal import (
    TrConfig,
    max_pool_time,
    nar_align,
    nar_residual,
    tr_apply,
    tr_no_overlap,
    tr_oracle,
    tr_overlap,
)
from .training import (
    GradCheckReport,
    TrainConfig,
    TrainRun,
    backward,
    evaluate,
    grad_check,
    loss_cross_entropy,
    train,
)

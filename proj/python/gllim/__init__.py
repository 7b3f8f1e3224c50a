"""Locally-linear Gaussian mixture regression with a Potts-MRF spatial prior."""

from ._core import (  # noqa: F401
    BicRecord,
    Component,
    Dims,
    ForwardModel,
    GllimError,
    InverseModel,
    NeighborGraph,
    PottsField,
    SpatialPredictResult,
    TrainReport,
    bic,
    crossval_protocol,
    dof,
    estimate_psi,
    forward_density,
    generate_image,
    generate_synthetic_model,
    load_model,
    mean_field_prior,
    nrmse,
    paired_ttest,
    potts_energy,
    predict,
    predict_spatial,
    psi_gradient,
    psi_objective,
    sample_dataset,
    save_model,
    select_lw,
    to_forward,
    train,
)

__version__ = "0.1.0"

"""Exact decision features of piecewise linear classifiers from prediction APIs."""

from .api import (
    BudgetExhausted,
    HttpApi,
    InProcessApi,
    PredictionApi,
    ProtocolError,
    QueryLedger,
    TransportError,
    connect_http,
    metered,
    serve_http,
    wrap_in_process,
)
from .interpreters import (
    DecisionFeatures,
    OpenApiResult,
    SampleCloud,
    gradient_baselines,
    lime_interpret,
    naive_interpret,
    openapi_interpret,
    zoo_interpret,
)
from .linsys import (
    CoreParams,
    SaturationError,
    SingularSystemError,
    check_overdetermined,
    make_equation,
    solve_determined,
)
from .metrics import (
    ablation_curve,
    cosine_consistency,
    l1_exactness,
    region_difference,
    weight_difference,
)
from .models import (
    BoundaryError,
    LocalLinearForm,
    ModelTree,
    ReluNet,
    ReluNetSpec,
    build_relu_net,
    build_synthetic_plm,
    fit_model_tree,
    ground_truth_decision_features,
    load_model,
    random_relu_net,
    save_model,
    softmax,
)
from .render import render_heatmap

__version__ = "0.1.0"

"""juliadim: parabolic implosion and Hausdorff-dimension bounds for z**d + c.

The package locates real parabolic (saddle-node) parameters of the even-degree
unicritical family, computes attracting/repelling Fatou coordinates and the
Lavaurs maps of the implosion, assembles the associated contracting branch
system, estimates the dimension exponent it carries, and renders Julia and
Julia-Lavaurs sets.
"""

__version__ = "0.1.0"

from juliadim.dynamics import (  # noqa: F401
    ESCAPE_CEILING,
    ConvergenceError,
    Cycle,
    Family,
    Jet,
    PeriodError,
    evaluate,
    evaluate_jet,
    find_cycle,
    iterate,
)
from juliadim.parabolic import (  # noqa: F401
    ParabolicData,
    connectedness_interval,
    local_form,
    locate_parabolic,
)
from juliadim.fatou import (  # noqa: F401
    BasinError,
    FatouEvaluator,
    WindowEscape,
)
from juliadim.lavaurs import (  # noqa: F401
    LavaursMap,
    SigmaSolution,
    find_sigma,
    implosion_fit,
    lavaurs_eval,
)
from juliadim.ifs import (  # noqa: F401
    IfsBranch,
    IfsSystem,
    build_system,
    build_window,
    choose_base_ball,
    separation_check,
)
from juliadim.dimension import (  # noqa: F401
    moran_bounds,
    persistence_check,
    pressure_sum,
    theta_bracket,
    theta_estimate,
)
from juliadim.render import (  # noqa: F401
    Grid,
    GridSpec,
    centered_spec,
    render_julia,
    render_julia_lavaurs,
)

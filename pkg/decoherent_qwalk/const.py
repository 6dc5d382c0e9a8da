"""Constants for the decoherent quantum walk simulator."""

import math

DOMAIN = "decoherent_qwalk"

# Coin angle of the Hadamard walk: K(pi/4) is the Hadamard matrix.
HADAMARD_THETA = math.pi / 4
DEFAULT_THETA = HADAMARD_THETA
# Symmetric initial chirality (1/sqrt2)(1, i); gives P_n(t) = P_-n(t).
DEFAULT_QUBIT: tuple[complex, complex] = (1 / math.sqrt(2), 1j / math.sqrt(2))

# Tolerances
QUBIT_NORM_TOL = 1e-12  # new_state / measure_chirality_y input check
DIST_NORM_TOL = 1e-6  # moments() input check
STATE_NORM_TOL = 1e-10  # asserted after coherent / broken-link evolution
KERNEL_MISMATCH_TOL = 1e-12  # warn when the two collapse-sign kernels differ

# ---------------------------------------------------------------------------
# Reference constants. Defaults only: every fit that re-estimates one of them
# reports its own value next to the default.
# ---------------------------------------------------------------------------

# sigma^2(t) ~ C t^2 for the coherent walk from DEFAULT_QUBIT.
COHERENT_C = 0.293
# D_bl = K (1 - p) / p, linear regression over p in {0.01 .. 0.40}.
BROKEN_LINK_K = 0.40
# gamma = 0.73 p / (1 - p), from equating C/gamma with D_bl (0.293 / 0.40).
GAMMA_P_COEFF = 0.73

# Above this link-breaking probability the wavefunction stays confined near
# the origin and diffusion fits are unreliable.
CONFINEMENT_P = 0.5

# brownian_variance switches to its Taylor series below this gamma*t.
BROWNIAN_SERIES_THRESHOLD = 1e-4

# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

QUADRATIC_FIT_MIN_START = 10
# Relative RMS residual above which a quadratic fit is flagged poor.
QUADRATIC_FIT_MAX_REL_RESIDUAL = 0.05
DIFFUSION_FIT_MIN_SAMPLES = 10
# Tail starts at this multiple of the coherence time (or of 1/gamma).
DIFFUSION_TAIL_FACTOR = 4
CONFIDENCE_LEVEL = 0.95

CROSSOVER_SLOPE_THRESHOLD = 1.5  # midpoint of the exponents 2 and 1
CROSSOVER_WINDOW = 0.2  # centred log-log slope over [t(1-w), t(1+w)]
CROSSOVER_MIN_TIME = 10

GAUSS_NEWTON_MAX_ITER = 200
GAUSS_NEWTON_STEP_TOL = 1e-10
GAUSS_NEWTON_MIN_DAMPING = 1e-12
# A rejected step is a stall unless its predicted decrease is below this
# fraction of the cost or its log-parameter size is below the second value.
GAUSS_NEWTON_STALL_TOL = 1e-8
GAUSS_NEWTON_STALL_STEP = 1e-6
# Initial guess: C from the ballistic stretch, gamma from the tail slope.
# The stretch ends where sigma^2 first reaches this fraction of slope * t, or
# where the increment of sigma^2 first falls below this fraction of the last one.
BROWNIAN_GUESS_LINE_FRACTION = 0.5
BROWNIAN_GUESS_INCREMENT_DROP = 0.5
BROWNIAN_GUESS_MIN_SAMPLES = 3
BROWNIAN_GUESS_TAIL_FRACTION = 0.5
# gamma times the sample spacing may not exceed this.
BROWNIAN_MAX_GAMMA_SPACING = 1.0
# A free fit further than this factor from the guess in C or gamma holds C
# at its ballistic estimate and refits gamma alone.
BROWNIAN_ANCHOR_FACTOR = 2.0

# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

# Trajectories per work unit. Fixed so that the merge order, and therefore the
# floating-point result, does not depend on the worker count.
ENSEMBLE_CHUNK_SIZE = 64
ENV_THREADS = "QWALK_THREADS"
DEFAULT_THREADS = 1

MODEL_COHERENT = "coherent"
MODEL_MEASURED = "measured"
MODEL_BROKEN_LINKS = "broken_links"
MODEL_CLASSICAL = "classical"
MODELS = (MODEL_COHERENT, MODEL_MEASURED, MODEL_BROKEN_LINKS, MODEL_CLASSICAL)

SCHEDULE_PERIODIC = "periodic"
SCHEDULE_UNIFORM = "uniform_random"
SCHEDULE_EXPLICIT = "explicit"

# CLI subcommand names for the models
MODEL_ALIASES = {
    "coherent": MODEL_COHERENT,
    "measure": MODEL_MEASURED,
    "links": MODEL_BROKEN_LINKS,
    "classical": MODEL_CLASSICAL,
}

PRESET_FIG2 = "fig2"
PRESET_FIG4 = "fig4"
PRESET_FIG5 = "fig5"
PRESET_FIG6 = "fig6"
PRESET_FIG7 = "fig7"
PRESET_INTERVALS = "intervals"
PRESET_DIFFUSION_LAW = "diffusion_law"
PRESET_NAMES = (
    PRESET_FIG2,
    PRESET_FIG4,
    PRESET_FIG5,
    PRESET_FIG6,
    PRESET_FIG7,
    PRESET_INTERVALS,
    PRESET_DIFFUSION_LAW,
)

# ---------------------------------------------------------------------------
# Configuration keys (ExperimentConfig / embedded result metadata)
# ---------------------------------------------------------------------------

CONF_MODEL = "model"
CONF_STEPS = "steps"
CONF_TRAJECTORIES = "trajectories"
CONF_SEED = "seed"
CONF_THETA = "theta"
CONF_QUBIT = "qubit"
CONF_PERIOD = "period"
CONF_INTERVAL_UNIFORM = "interval_uniform"
CONF_INTERVALS = "intervals"
CONF_P = "p"
CONF_OUTPUT_PATH = "output_path"
CONF_OUTPUT_FORMAT = "output_format"
CONF_PRESET = "preset"
CONF_THREADS = "threads"
CONF_SNAPSHOTS = "snapshots"

FORMAT_CSV = "csv"
FORMAT_JSON = "json"
OUTPUT_FORMATS = (FORMAT_CSV, FORMAT_JSON)

DEFAULT_STEPS = 200
DEFAULT_TRAJECTORIES = 1000
DEFAULT_SEED = 0
DEFAULT_OUTPUT_FORMAT = FORMAT_CSV

# Preset ensemble sizes: measurement runs use 10^4 trajectories, broken-link
# runs 2x10^3 (override with --trajectories).
PRESET_MEASURED_TRAJECTORIES = 10_000
PRESET_LINKS_TRAJECTORIES = 2_000

# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------

RESULT_COMMENT = "#"
RECORD_VARIANCE = "variance"
RECORD_DISTRIBUTION = "distribution"
RECORD_FIT = "fit"
RECORD_OVERLAY = "overlay"
VARIANCE_COLUMNS = ("t", "sigma2", "stderr", "mean_trajectory_sigma2")
DISTRIBUTION_COLUMNS = ("n", "P_n")
FIT_COLUMNS = ("parameter", "value", "ci_low", "ci_high")
OVERLAY_COLUMNS = ("t", "sigma2", "brownian_sigma2", "relative_error")

# Log file handler (CLI --log-file)
LOG_MAX_BYTES = 1 * 1024 * 1024
LOG_BACKUP_COUNT = 2
LOG_FORMAT = "%(asctime)s  %(levelname)-8s  [%(name)s]  %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"

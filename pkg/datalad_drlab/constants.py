# A module to store all constants

# Initial law families
DIRAC_MIXTURE = "dirac-mixture"
HEAVY_TAIL_ALPHA = "heavy-tail-alpha"
HEAVY_TAIL_BETA = "heavy-tail-beta"
FINITE = "finite"
LAW_KINDS = (DIRAC_MIXTURE, HEAVY_TAIL_ALPHA, HEAVY_TAIL_BETA, FINITE)

# Convolution methods
METHOD_AUTO = "auto"
METHOD_QUADRATIC = "quadratic"
METHOD_FFT = "fft"

# Truncation modes
TRUNC_FLOOR = "floor"
TRUNC_NONE = "none"

# Profile normalizations
NORM_PAPER4 = "paper-4"
NORM_SURVIVAL = "survival-matched"

# Fit models
MODEL_LOGLOG = "loglog"
MODEL_LOGLOGLOG = "logloglog"

# Result flags
FLAG_UNRELIABLE = "unreliable"
FLAG_BOUNDARY = "boundary"
FLAG_WIDE = "wide-bracket"
FLAG_INVERTED = "inverted-bracket"
FLAG_NON_POSITIVE = "non-positive"
FLAG_NON_MONOTONE = "non-monotone"

# Pmf serialization keys
KEY_K_MAX = "k_max"
KEY_K_MIN = "k_min"
KEY_Q = "q"
KEY_LOST_MASS = "lost_mass"
KEY_LOST_TILTED_MASS = "lost_tilted_mass"
KEY_BASE = "base"

# Monte Carlo observables
OBS_SURVIVAL = "survival"
OBS_COND_PMF = "cond_pmf"
OBS_N = "N"
OBS_N_POWER = "N^%d"
OBS_N0 = "N0"
OBS_N0_INDICATOR = "N0*1{X=%d}"
OBS_BIASED = "(1+X)2^X*N"
OBS_BIASED_K = "(1+X)2^X*N[k=%d]"
OBS_EXP_LAMBDA = "exp(lambda*N)[lambda=%r]"

# Run config keys
EXPERIMENT = "experiment"
FAMILY = "family"
KIND = "kind"
SEED = "seed"
N_MAX = "n_max"
REPS = "reps"
PARENTS = "parents"
OUT_DIR = "out_dir"
TRUNCATION = "truncation"
OPTIONS = "options"

# Output files
MANIFEST = "manifest.json"

# Environment
THREADS_ENV = "DR_LAB_THREADS"

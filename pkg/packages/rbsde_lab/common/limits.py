# Hard limits that are not meant to be tuned per run

# Largest N for which all 2^N lattice paths may ever be enumerated
MAX_ENUMERATION_STEPS = 24

# Largest N accepted by the exhaustive stopping-time oracle
MAX_STOPPING_ORACLE_STEPS = 10

# Bracket doublings allowed before the implicit step gives up
MAX_BRACKET_DOUBLINGS = 200

# Relative step used for finite-difference generator derivatives
FD_REL_STEP = 1e-7

# Tolerance for exact identities that only suffer float roundoff
EXACT_TOL = 1e-12

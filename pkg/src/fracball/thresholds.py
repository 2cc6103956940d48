"""Pass/fail thresholds used by the experiments and the acceptance tests.

Every report compares against these names only; nothing else in the
package hard-codes an acceptance tolerance.
"""

# 1. normalisation constant against its Gamma closed form
CONST_REL_TOL = 1e-5
CONST_TIME_S = 10.0

# 2. c_{2,alpha}/(1 - alpha) -> 4/pi
LIMIT_ALPHA = 0.995
LIMIT_ALPHAS = (0.9, 0.99, 0.995)
LIMIT_REL_TOL = 0.02
LIMIT_TIME_S = 10.0

# 3. zero locus, alpha -> 1 limit, convexity of the symbol
ZERO_LOCUS_FACTOR = 10.0
SYMBOL_LIMIT_REL_TOL = 0.03
SYMBOL_LIMIT_CASE = (0.5, 3, 0.99, 0.25)      # sigma, N, alpha, expected
CONVEXITY_POINTS = 9
SYMBOL_TIME_S = 30.0

# 4. pointwise operator against the symbol
OPERATOR_REL_TOL = 1e-3
OPERATOR_CASES = 15
OPERATOR_TIME_S = 60.0

# 5. torsion oracle
TORSION_RESOLUTION = 64
TORSION_SUP_REL_TOL = 0.02
TORSION_CENTER_REL_TOL = 0.02
TORSION_DOUBLING_FACTOR = 1.5
TORSION_TIME_S = 120.0

# 6. Poisson/Green identity
POISSON_GREEN_REL_TOL = 0.03
POISSON_GREEN_POINTS = 20
POISSON_GREEN_S = (0.1, 0.5, 1.0)
POISSON_GREEN_MARGIN = 0.05        # "interior": distance to the sphere at least this
POISSON_GREEN_TIME_S = 120.0

# 7. existence regime
EXISTENCE_SLOPE = -1.0
EXISTENCE_SLOPE_TOL = 0.15
AXIS_WINDOW = (0.05, 0.4)
TWO_INIT_FACTOR = 10.0
WEAK_RESIDUAL_TOL = 0.05
EXISTENCE_TIME_S = 300.0

# 8. monotonicity in s
SWEEP_S = (0.4, 0.2, 0.1, 0.05)
MONO_FACTOR = 10.0                 # eps_mono = MONO_FACTOR * tol_residual
SWEEP_TIME_S = 300.0

# 9. nonexistence regime
BLOWUP_P = 1.2
BLOWUP_PROBE_T = 0.5
BLOWUP_GROWTH = 1.5
REFUSED_P = 1.4
BLOWUP_TIME_S = 300.0

# 10. symmetry and monotonicity of a stored solution
SYMMETRY_REL_TOL = 0.05
MONOTONE_SLACK_FRACTION = 0.01
SYMMETRY_TIME_S = 60.0

# 11. cone lower bounds
CONE_R2_MIN = 0.9
CONE_TIME_S = 60.0

# 12. vanishing as alpha -> 1
VANISH_DIM = 3
VANISH_P = 5.0
VANISH_ALPHAS = (0.6, 0.8, 0.9)
VANISH_MIN_RADIUS = 0.05
VANISH_K_RADIUS = 0.5              # K = {|x - e_N| <= 0.5}
VANISH_RESOLUTION = 32
VANISH_CLUSTERING = 1.5            # fan angles pushed toward the sphere
VANISH_TIME_S = 600.0

# 13. mollifier chain
MOLLIFIER_S = 0.5
MOLLIFIER_N = (8, 16, 32)
MOLLIFIER_SOLVE_REL_TOL = 0.03
MOLLIFIER_TIME_S = 300.0

# 14. infrastructure
INFRA_TIME_S = 60.0

# solver defaults
SOLVE_TOL = 1e-9
RESOLUTION = 32

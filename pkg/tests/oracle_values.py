"""Reference numbers computed independently (mpmath, brute-force grids) and frozen."""

SIGMOID_MINUS_QUARTER = 0.437823499114201895972676362097
GAMMA_UNIT = 0.196611933241481852537424733586
INV_GAMMA_UNIT = 5.08616126963048755695581124151
SQRT_1_25 = 1.11803398874989484820458683437
# sqrt(1 - 2 eps^2) / eps
WELFARE_RATIO = {0.1: 9.89949493661166534161182106947,
                 0.01: 99.9899994999499937491248687294,
                 0.001: 999.998999999499999499999374999}
# medians of three draws from [0,4], [1,2], [3,5] on a 50^3 grid
MEDIAN_INTERVAL_GRID = (1.0, 4.0)
# min of <theta, (1,-1)> over [1,2] x [-3,-1] on a 100x100 grid
PESSIMISTIC_VALUE_GRID = 2.0
# mixed maxmin weight on action b equalizing utilities 0.75 p and 0.5 - 0.125 p
MAXMIN_MIX_B = 4.0 / 7.0

"""Bandwidth efficiency of five multicarrier schemes versus frame length.

Prints the closed-form efficiency of TDM, FDM, CP-OFDM, ODDM (with its
cyclic extension) and CP-ODDM for M = 512 over a range of N, at two
roll-off values. At rho = 0.1 the CP-ODDM excess bandwidth costs more than
the per-symbol CP of CP-OFDM; at rho = 0.05 it no longer does.
"""

from oddmlab.metrics import EfficiencyParams, efficiency

M, L, K, Q = 512, 20, 11, 16
for rho in (0.1, 0.05):
    D = -(-2 * Q // M)
    print(f"rho = {rho}")
    print(f"{'N':>5} {'TDM':>8} {'FDM':>8} {'CP-OFDM':>8} {'ODDM':>8} {'CP-ODDM':>8}")
    for N in (8, 16, 32, 64, 128):
        row = [
            efficiency(EfficiencyParams("TDM", M, N, rho=rho, Q=Q)),
            efficiency(EfficiencyParams("FDM", M, N, K_lobes=K)),
            efficiency(EfficiencyParams("CP-OFDM", M, N, K_lobes=K, L=L)),
            efficiency(EfficiencyParams("ODDM", M, N, rho=rho, Q=Q, L=L, D=D)),
            efficiency(EfficiencyParams("CP-ODDM", M, N, rho=rho, Q=Q, L=L)),
        ]
        print(f"{N:>5} " + " ".join(f"{v:8.4f}" for v in row))
    print()

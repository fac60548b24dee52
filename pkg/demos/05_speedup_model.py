#!/usr/bin/env python3
"""The communication-cost speedup model S(K).

Communication is priced at rho gradient-computation times per exchanged
vector, with 2(K-1) vectors every H steps.  At target accuracy eps -> 0
the model reduces to S(K) = K / (1 + 2 rho (K-1)/H): infrequent averaging
(large H) recovers most of the ideal linear speedup.  At coarse accuracy
the iterate-drift penalty of large H shows up and the best H becomes
finite.
"""

from localsgd import iterations_estimate, speedup

RHO = 25.0
KS = (1, 2, 4, 8, 16, 32)
HS = (1, 4, 16, 64)

for eps, title in ((0.0, "eps -> 0 (long runs)"), (0.001, "eps = 0.001 (short runs)")):
    print(f"\nS(K) at {title}, rho={RHO}")
    print(f"{'K':>4} " + " ".join(f"H={H:<8}" for H in HS))
    for K in KS:
        row = " ".join(f"{speedup(K, H, eps, RHO):<10.4f}" for H in HS)
        print(f"{K:>4} {row}")

print("\nsteps-to-accuracy model T(eps, H, K) at eps = 0.001:")
print(f"{'K':>4} " + " ".join(f"H={H:<10}" for H in HS))
for K in KS:
    row = " ".join(f"{iterations_estimate(0.001, H, K):<12.1f}" for H in HS)
    print(f"{K:>4} {row}")

print("\nat eps -> 0 the largest H wins for every K; at coarse accuracy the")
print("drift term (the H^2 K inside the square root) caps how large H can be.")

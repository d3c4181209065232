"""No rule escapes the trade-off.

With fair-coin supply and one unit of demand per round, any rule whose
allocations stay within [a, a + delta] has a floor on its inefficiency.
If the whole range is below or above one half, the floor is a constant.
If it straddles one half, the floor is a binomial tail that shrinks like
exp(-c * delta * M), matching what bang-bang achieves.
"""

from fairstock.analysis import binomial_tail_bound, epoch_lower_bound

for a, delta, M in [(0.2, 0.1, 10), (0.7, 0.1, 10), (0.5, 1 / 9, 9), (0.45, 0.1, 20), (0.45, 0.1, 40)]:
    r = epoch_lower_bound(a, delta, M)
    floor = r.W_lb if r.case == 1 else r.V_lb
    print(f"a={a:.2f} delta={delta:.3f} M={M:3d}  case {r.case}  floor {floor:.3e}  epoch {r.L_used}")

# the tail estimate used for the straddling case
print("\nL    t   exact tail      exp(-16 t^2/L)/15")
for L, t in [(16, 2), (64, 8), (200, 25)]:
    b = binomial_tail_bound(L, t)
    print(f"{L:<4d} {t:<3d} {b.exact_tail:.3e}       {b.bound:.3e}")

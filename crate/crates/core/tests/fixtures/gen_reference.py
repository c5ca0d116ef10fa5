"""Regenerates the high-precision reference values used by the bounds tests.

    python3 gen_reference.py
"""
import mpmath as mp

mp.mp.dps = 60


def f(p):
    p = mp.mpf(p)
    return (1 - p / 2) * mp.log((2 - p) / (1 - p)) - mp.log(2)


def table(pg, pb, kappa, rho, c, L, m_max):
    J = (rho - mp.mpf(1) / 2) * c / 6 * mp.sqrt(L)
    q0 = 1 - pg
    pk = lambda k: 1 - q0 ** (k + 1)
    out = []
    for m in range(1, m_max + 1):
        x = pb**m * pg ** (kappa * (m - 1))
        out.append((0, m, x))
        for k in range(1, m):
            x = (1 - (1 - x) ** J) * pk(k) ** (kappa * (m - k - 1))
            out.append((k, m, x))
        out.append((m, m, 1 - (1 - x) ** J))
    return out


with open("cramer_f.csv", "w") as fh:
    fh.write("p,f\n")
    for i in range(1, 101):
        p = mp.mpf(i) / 101
        fh.write(f"{mp.nstr(p, 20)},{mp.nstr(f(p), 25)}\n")
    for p in ["1e-8", "1e-4", "0.999", "0.999999"]:
        fh.write(f"{p},{mp.nstr(f(mp.mpf(p)), 25)}\n")

# (name, p_G, p_B, kappa, rho, c as (num, den), L, m_max)
cases = [
    ("a", "0.99", "0.01", 3, "0.7", (1, 6), 10**6, 12),
    ("b", "0.9", "0.3", 2, "0.8", (1, 2), 400, 10),
]
with open("recursion.csv", "w") as fh:
    fh.write("case,p_good,p_bad,kappa,rho,c_num,c_den,L,k,m,p,one_minus_p\n")
    for name, pg, pb, kappa, rho, (cn, cd), L, m_max in cases:
        rows = table(mp.mpf(pg), mp.mpf(pb), mp.mpf(kappa), mp.mpf(rho), mp.mpf(cn) / cd, L, m_max)
        for k, m, x in rows:
            fh.write(f"{name},{pg},{pb},{kappa},{rho},{cn},{cd},{L},{k},{m},{mp.nstr(x, 25)},{mp.nstr(1 - x, 25)}\n")

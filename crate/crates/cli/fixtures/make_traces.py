"""Regenerates the synthetic traces used by fit.toml (noiseless forward models)."""
import cmath
import math

C0 = 299_792_458.0


def index_model(a, b, t, t_c):
    return a * math.sqrt(1 + b / math.sqrt(1 - (t / t_c) ** 4))


def eo_response_db(f, n_m, n_o, length, coef):
    alpha = coef * f / 1e9 / (10 / math.log(10))  # dB/m -> Np/m
    dk = 2 * math.pi * f * (n_m - n_o) / C0
    q = alpha / 2 - 1j * dk
    m = abs((1 - cmath.exp(-q * length)) / (q * length))
    return 20 * math.log10(m)


with open("index_vs_temperature.csv", "w") as out:
    out.write("temperature_K,n_m\n")
    for i in range(30):
        t = 2.0 + 5.9 * i / 29
        out.write(f"{t!r},{index_model(2.066, 0.19, t, 8.0)!r}\n")

with open("s21_trace.csv", "w") as out:
    out.write("freq_GHz,s21_dB\n")
    for i in range(1, 401):
        f = 0.05 * i
        ripple = 0.4 * (1 - math.cos(2 * math.pi * f / 0.6)) / 2
        out.write(f"{f!r},{-0.2 * f * 0.1 - ripple!r}\n")

with open("eo_response.csv", "w") as out:
    out.write("freq_GHz,response_dB\n")
    for i in range(1, 401):
        f = 0.1 * i
        out.write(f"{f!r},{eo_response_db(f * 1e9, 2.0, 2.28, 0.1, 0.5)!r}\n")

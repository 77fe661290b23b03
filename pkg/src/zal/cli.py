"""Command-line front end.

    zal --command eval --n 2 --sigma 0.5 --t 0,10,30
    zal --command verify-convolution --out conv.csv
    zal --command resonator --T 1e16 --beta 0 --out summary.json
    zal --command scan --T 1e16 --t-lo 20 --t-hi 200 --step 0.5
    zal --command moments --n 0 --sigma 0.5 --T 1000
    zal --command bounds-table --n 1 --sigma 0.6 --t 100,1000

Settings come from flags, then a key=value config file (--config), then defaults.
Exit codes: 0 ok, 2 usage/domain error, 3 infeasible parameters, 4 precision failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from zal import argument, bounds, convolution, resonator
from zal.cache import EvalCache, resolve_cache_path
from zal.errors import DomainError, ZalError

log = logging.getLogger("zal")

COMMANDS = ("eval", "scan", "resonator", "verify-convolution", "moments", "bounds-table")

DEFAULTS = {
    "n": "0",
    "sigma": "0.5",
    "t": None,
    "t_lo": None,
    "t_hi": None,
    "step": None,
    "T": "1e16",
    "beta": "0",
    "sigma_mode": "half",
    "d": "0.1",
    "threads": "1",
    "seed": "0",
    "out": "-",
    "cache": None,
    "q": "10",
    "grid": "default",
    "rho": repr(convolution.RHO_PILOT),
}

RESONATOR_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["T", "beta", "kappa", "sigma", "N", "window", "primes", "size_P", "mode",
                 "alpha", "checks", "gcd_ratio", "gcd_shape", "implied_c", "bracket"],
    "properties": {
        "T": {"type": "number"},
        "beta": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "kappa": {"type": "number"},
        "sigma": {"type": "number"},
        "N": {"type": "integer", "minimum": 1},
        "window": {
            "type": "object",
            "required": ["lo", "hi", "K_max", "subwindows"],
            "properties": {
                "lo": {"type": "number"}, "hi": {"type": "number"},
                "K_max": {"type": "integer"},
                "subwindows": {"type": "array", "items": {
                    "type": "object", "required": ["k", "lo", "hi", "primes"]}},
            },
        },
        "primes": {"type": "array", "items": {"type": "integer"}},
        "f": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "f_above_one": {"type": "array", "items": {"type": "integer"}},
        "size_P": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["exact", "sampled"]},
        "alpha": {"type": "array", "items": {"type": "number"}},
        "size_M": {"type": "number"},
        "size_Mprime": {"type": ["integer", "null"]},
        "sum_f2_M": {"type": ["number", "null"]},
        "sum_f2_support": {"type": "number"},
        "sum_r2": {"type": ["number", "null"]},
        "gcd_ratio": {"type": "number", "minimum": 0},
        "gcd_shape": {"type": "number"},
        "implied_c": {"type": "number"},
        "bracket": {"type": "array"},
        "checks": {"type": "object", "additionalProperties": {"type": ["boolean", "null"]}},
        "estimates": {"type": "object"},
    },
}


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    output_path: str = "-"
    cache_path: str | None = None
    threads: int = 1
    seed: int = 0
    explicit: frozenset = frozenset()  # keys given by flag or config file

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise DomainError(f"unknown command {self.command!r}")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")

    def get(self, key, conv=str):
        v = self.params.get(key)
        if v is None:
            return None
        try:
            return conv(v)
        except ValueError:
            raise DomainError(f"cannot parse {key}={v!r}") from None

    def floats(self, key) -> list[float] | None:
        v = self.params.get(key)
        if v is None:
            return None
        return [_num(x) for x in str(v).split(",") if x.strip()]

    def ints(self, key) -> list[int] | None:
        v = self.params.get(key)
        if v is None:
            return None
        try:
            return [int(x) for x in str(v).split(",") if x.strip()]
        except ValueError:
            raise DomainError(f"cannot parse {key}={v!r}") from None


def _num(x) -> float:
    try:
        return float(x)
    except ValueError:
        raise DomainError(f"not a number: {x!r}") from None


def read_config(path) -> dict:
    """Plain key=value lines; '#' starts a comment; keys may use '-' or '_'."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zal", description=__doc__.split("\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    S = argparse.SUPPRESS
    p.add_argument("--command", choices=COMMANDS, default=S)
    p.add_argument("--n", default=S, help="order of S_n; comma list allowed (integer >= 0)")
    p.add_argument("--sigma", default=S, help="real part, 1/2 <= sigma <= 1; comma list allowed")
    p.add_argument("--t", default=S, help="height(s) t, comma separated (dimensionless)")
    p.add_argument("--t-lo", dest="t_lo", default=S, help="grid start")
    p.add_argument("--t-hi", dest="t_hi", default=S, help="grid end (inclusive)")
    p.add_argument("--step", default=S, help="grid spacing")
    p.add_argument("--T", dest="T", default=S, help="resonator height T (e.g. 1e16); moment upper limit")
    p.add_argument("--beta", default=S, help="resonator beta in [0, 1)")
    p.add_argument("--sigma-mode", dest="sigma_mode", choices=("half", "edge"), default=S,
                   help="resonator sigma: 1/2 or 1/2 + 1/log log N")
    p.add_argument("--d", default=S, help="constant d in (0,1) for beta_k and the prime-sum bracket")
    p.add_argument("--q", default=S, help="scan: number of top candidates")
    p.add_argument("--grid", default=S, help="verify-convolution grid: default | pilot")
    p.add_argument("--rho", default=S, help="verify-convolution calibration scalar")
    p.add_argument("--threads", default=S, help="worker threads (>= 1)")
    p.add_argument("--seed", default=S, help="seed for sampled/jittered modes")
    p.add_argument("--out", default=S, help="output file, '-' for stdout")
    p.add_argument("--cache", default=S, help="CSV evaluation cache (else $ZAL_CACHE)")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def make_config(argv=None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    verbose = args.pop("verbose")
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg_path = args.pop("config")
    merged = dict(DEFAULTS)
    merged["command"] = None
    from_file = read_config(cfg_path) if cfg_path else {}
    merged.update(from_file)
    merged.update(args)
    command = merged.pop("command")
    if command is None:
        raise DomainError("--command is required")
    cache = resolve_cache_path(merged.get("cache"))
    try:
        threads, seed = int(merged["threads"]), int(merged["seed"])
    except ValueError:
        raise DomainError("threads and seed must be integers") from None
    return RunConfig(command, merged, merged["out"], str(cache) if cache else None, threads, seed,
                     frozenset(from_file) | frozenset(args))


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


class _Out:
    def __init__(self, path):
        self.path = path

    def __enter__(self):
        self.fh = sys.stdout if self.path == "-" else open(self.path, "w", newline="")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()
        else:
            self.fh.flush()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    with _Out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def _heights(cfg: RunConfig) -> list[float]:
    ts = cfg.floats("t")
    if ts is not None:
        return ts
    lo, hi, step = (cfg.get(k, _num) for k in ("t_lo", "t_hi", "step"))
    if None in (lo, hi, step):
        raise DomainError("give --t or all of --t-lo/--t-hi/--step")
    return resonator.scan_grid(lo, hi, step).tolist()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _cached(cache, kind, n, sigma, t, compute):
    if cache is None:
        return compute()
    hit = cache.get(kind, n, sigma, t, 0.0)
    if hit is not None:
        return hit[0], hit[2]
    v, e = compute()
    cache.put(kind, n, sigma, t, 0.0, v, 0.0, e)
    return v, e


def _eval_point(n, sigma, t, cache):
    if t == 0:
        if n == 0:
            a = b = (0.0, 0.0)
        else:
            d = argument.delta(n, sigma)
            a = b = (d.value, d.err_est)
    elif n == 0:
        a = _cached(cache, "S", 0, sigma, t,
                    lambda: tuple(float(x[0]) for x in argument.S_array(sigma, [t])))
        h = 1e-4

        def deriv():
            v, e = argument.S_n_integral_array(1, sigma, [t - h, t + h])
            return float((v[1] - v[0]) / (2 * h)), float((e[0] + e[1]) / (2 * h) + h * h)

        b = _cached(cache, "S-deriv", 0, sigma, t, deriv)
    else:
        def rep():
            r = argument.S_n_integral(n, sigma, t)
            return r.value, r.err_est

        def rec():
            r = argument.S_n_recursive(n, sigma, t)
            return r.value, r.err_est

        a = _cached(cache, "Sn-integral", n, sigma, t, rep)
        b = _cached(cache, "Sn-recursive", n, sigma, t, rec)
    dval = argument.delta(n, sigma).value if n >= 1 else None
    env = bounds.envelope_strip(n, sigma, abs(t)) if abs(t) > math.e else None
    return [n, sigma, t, a[0], a[1], b[0], b[1], abs(a[0] - b[0]), dval, env]


def cmd_eval(cfg: RunConfig) -> int:
    ns = cfg.ints("n")
    sigmas = cfg.floats("sigma")
    ts = _heights(cfg)
    for s in sigmas:
        if not 0.5 <= s <= 1:
            raise DomainError(f"sigma must lie in [1/2, 1], got {s}")
    if any(n < 0 for n in ns):
        raise DomainError("n must be >= 0")
    cache = EvalCache(cfg.cache_path) if cfg.cache_path else None
    pts = [(n, s, t) for n in ns for s in sigmas for t in ts]
    rows = _pmap(lambda p: _eval_point(*p, cache), pts, cfg.threads)
    write_csv(cfg.output_path, ["n", "sigma", "t", "value", "err", "value_alt", "err_alt",
                                "abs_diff", "delta", "envelope_strip"], rows)
    return 0


CONV_HEADER = ["n", "sigma", "t", "L", "lhs", "rhs", "residual", "v_term", "k_l1", "band",
               "pass", "lhs_err", "rhs_err", "method", "reason"]


def default_convolution_grid():
    s2 = 0.5 + 1 / math.log(math.log(1000))
    return {"n": (0, 1, 2), "sigma": (0.5, s2), "t": (30.0, 100.0, 500.0)}


def cmd_verify_convolution(cfg: RunConfig) -> int:
    grid_name = cfg.get("grid")
    if grid_name == "default":
        grid = dict(default_convolution_grid())
    elif grid_name == "pilot":
        grid = dict(convolution.PILOT_GRID)
    else:
        raise DomainError(f"unknown grid {grid_name!r} (default | pilot)")
    for key, parse in (("n", cfg.ints), ("sigma", cfg.floats), ("t", cfg.floats)):
        if key in cfg.explicit:
            grid[key] = tuple(parse(key))
    rho = cfg.get("rho", _num)
    pts = [(n, s, t) for n in grid["n"] for s in grid["sigma"] for t in grid["t"]]

    def run(p):
        n, s, t = p
        if t == 0:
            return [n, s, t] + [None] * 10 + ["", "t≠0 required"]
        r = convolution.convolution_report(n, s, t)
        band = r.band(rho)
        L = math.log(math.log(abs(t)))
        return [n, s, t, L, r.lhs, r.rhs, r.residual, r.v_term, r.k_l1, band,
                int(r.residual <= band), r.lhs_err, r.rhs_err, r.method, ""]

    rows = _pmap(run, pts, cfg.threads)
    write_csv(cfg.output_path, CONV_HEADER, rows)
    ok = all(r[10] == 1 for r in rows if r[14] == "")
    return 0 if ok else 1


def resonator_summary(T, beta, sigma_mode, d=0.1, seed=0, grid_points=1000) -> dict:
    params = resonator.build_params(T, beta, sigma_mode)
    window = resonator.build_window(params)
    w = resonator.build_weights(params, window)
    rset = resonator.enumerate_M(params, w, window, seed=seed)
    fp = np.array([w(p) for p in window.primes])
    sum_support = float(np.prod(1 + fp**2))
    ratio = resonator.gcd_sum_ratio(rset)
    shape = resonator.gcd_shape(params)
    brackets = []
    for k in range(1, window.K_max + 1):
        if window.windows[k - 1][2]:
            brackets.append(resonator.prime_sum_bracket(params, k, d, window))
    out = {
        "T": params.T, "beta": params.beta, "kappa": params.kappa, "sigma": params.sigma,
        "N": params.N,
        "window": {"lo": window.lo, "hi": window.hi, "K_max": window.K_max,
                   "subwindows": [{"k": k, "lo": a, "hi": b, "primes": list(ps)}
                                  for k, (a, b, ps) in enumerate(window.windows, 1)]},
        "primes": list(window.primes),
        "f": {str(p): w(p) for p in window.primes},
        "f_above_one": [p for p in window.primes if w(p) > 1],
        "size_P": len(window.primes),
        "mode": "exact" if rset.exact else "sampled",
        "alpha": [resonator.alpha_k(k, params) for k in range(1, window.K_max + 1)],
        "sum_f2_support": sum_support,
        "gcd_ratio": ratio, "gcd_shape": shape, "implied_c": ratio / shape,
        "bracket": brackets,
    }
    if rset.exact:
        resonator.build_Mprime(rset)
        sum_f2 = math.fsum((rset.f**2).tolist())
        sum_r2 = math.fsum((rset.r**2).tolist())
        ts = np.linspace(0.0, 1000.0, grid_points)
        r0 = float(np.sum(rset.r))
        r2 = resonator.R2_eval(rset, ts)
        out.update({
            "size_M": rset.size, "size_Mprime": len(rset.M_prime), "sum_f2_M": sum_f2,
            "sum_r2": sum_r2,
            "checks": {
                "i_Mprime_le_M_le_N": len(rset.M_prime) <= rset.size <= params.N,
                "ii_sum_r2_le_4_sum_f2": sum_r2 <= 4 * sum_f2,
                "iii_R2_le_R0_2": bool(np.all(r2 <= r0 * r0 * (1 + 1e-12))),
                "divisor_closed": rset.divisor_closed(),
            },
        })
    else:
        est = rset.estimates
        out.update({
            "size_M": est["size_M"], "size_Mprime": None, "sum_f2_M": est["mass_M"] * sum_support,
            "sum_r2": None,
            "checks": {"i_Mprime_le_M_le_N": est["size_M"] <= params.N,
                       "ii_sum_r2_le_4_sum_f2": None, "iii_R2_le_R0_2": None,
                       "divisor_closed": None},
            "estimates": est,
        })
    return out


def cmd_resonator(cfg: RunConfig) -> int:
    summary = resonator_summary(cfg.get("T", _num), cfg.get("beta", _num), cfg.get("sigma_mode"),
                                cfg.get("d", _num), cfg.seed)
    text = json.dumps(summary, indent=2, sort_keys=True)
    with _Out(cfg.output_path) as fh:
        fh.write(text + "\n")
    return 0


def cmd_scan(cfg: RunConfig) -> int:
    params = resonator.build_params(cfg.get("T", _num), cfg.get("beta", _num), cfg.get("sigma_mode"))
    rset = resonator.build_Mprime(resonator.enumerate_M(params, seed=cfg.seed))
    lo, hi, step = (cfg.get(k, _num) for k in ("t_lo", "t_hi", "step"))
    if None in (lo, hi, step):
        raise DomainError("scan needs --t-lo, --t-hi and --step")
    n = cfg.ints("n")[0]
    recs = resonator.search_extreme(n, params, rset, lo, hi, step, q=cfg.get("q", int),
                                    threads=cfg.threads)
    write_csv(cfg.output_path, ["t", "sigma", "n", "R2", "Sn"],
              [[r.t, r.sigma, r.n, r.R2, r.Sn] for r in recs])
    return 0


def cmd_moments(cfg: RunConfig) -> int:
    T = cfg.get("T", _num)
    rows = []
    for n in cfg.ints("n"):
        for s in cfg.floats("sigma"):
            v = argument.moment_L1(n, s, T)
            rows.append([n, s, T, v, v / (T * math.log(T))])
    write_csv(cfg.output_path, ["n", "sigma", "T", "moment_L1", "ratio_T_log_T"], rows)
    return 0


def cmd_bounds_table(cfg: RunConfig) -> int:
    ts = _heights(cfg)
    rows = []
    for n in cfg.ints("n"):
        for s in cfg.floats("sigma"):
            for t in ts:
                cp = bounds.C_pm(n, s, t, 1)
                cm = bounds.C_pm(n, s, t, -1)
                env = bounds.envelope_strip(n, s, t)
                sn = argument.S_n(n, s, t)
                rows.append([n, s, t, cp, cm, bounds.envelope_littlewood(n, t), env, sn,
                             abs(sn) / env])
    write_csv(cfg.output_path, ["n", "sigma", "t", "C_plus", "C_minus", "envelope_littlewood",
                                "envelope_strip", "S_n", "implied_constant"], rows)
    return 0


HANDLERS = {
    "eval": cmd_eval,
    "scan": cmd_scan,
    "resonator": cmd_resonator,
    "verify-convolution": cmd_verify_convolution,
    "moments": cmd_moments,
    "bounds-table": cmd_bounds_table,
}


def main(argv=None) -> int:
    try:
        cfg = make_config(argv)
        return HANDLERS[cfg.command](cfg)
    except SystemExit as e:  # argparse
        return int(e.code or 0)
    except ZalError as e:
        print(f"zal: {e}", file=sys.stderr)
        return e.exit_code
    except (ValueError, OSError) as e:
        print(f"zal: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

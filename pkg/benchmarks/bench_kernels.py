"""Timing comparison of the compiled and pure-numpy integration kernels.

Builds a reduced model of a nonlinear chain, then times the reduced
force/tangent assembly and the implicit Newmark loop in both backends on
identical inputs, checking that the trajectories agree to machine
precision.

Run: python benchmarks/bench_kernels.py [--n-dof 60] [--steps 2000]
"""

import argparse
import time

import numpy as np

from genrom._kernels import _ref
from genrom.config import CampaignConfig
from genrom.fom import integrate_newmark
from genrom.reduction import compute_pod
from genrom.rom import galerkin_project

try:
    from genrom._kernels import _core
except ImportError:
    _core = None


def build_inputs(n_dof: int, order: int, n_steps: int, dt: float):
    cfg = CampaignConfig.from_dict({
        "chain": {"n_dof": n_dof},
        "twin": {"n_sensors": min(10, n_dof)},
        "time": {"dt": dt, "n_steps": n_steps},
    })
    system = cfg.build_system()
    space = cfg.build_space()
    p = space.nominal()
    hist = integrate_newmark(system, p, dt, min(300, n_steps))
    basis = compute_pod(hist.displacement, 1e-12, min_order=order,
                        max_order=order).modes
    red = galerkin_project(system, basis)
    times = np.arange(n_steps + 1) * dt
    f_red = basis.T @ system.external_force(times, p)
    c_red = np.ascontiguousarray(basis.T @ system.damping_matrix(p) @ basis)
    k_lin, k_cub = system.element_stiffness(p)
    return {
        "m_red": red.m_red,
        "c_red": c_red,
        "dmat": red.dmat,
        "k_lin": np.ascontiguousarray(k_lin[red.element_ids]),
        "k_cub": np.ascontiguousarray(k_cub[red.element_ids]),
        "weights": red.weights,
        "f_red": np.ascontiguousarray(f_red),
        "dt": dt,
    }


def time_newmark(module, inp, repeat: int):
    r = inp["m_red"].shape[0]
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = module.newmark_reduced(
            inp["m_red"], inp["c_red"], inp["dmat"], inp["k_lin"],
            inp["k_cub"], inp["weights"], inp["f_red"], inp["dt"],
            0.25, 0.5, 1e-8, 1e-10, 25, np.zeros(r), np.zeros(r))
        best = min(best, time.perf_counter() - t0)
    return best, result


def time_force(module, inp, repeat: int, calls: int = 2000):
    r = inp["m_red"].shape[0]
    rng = np.random.default_rng(0)
    qs = rng.standard_normal((calls, r)) * 0.01
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for q in qs:
            module.reduced_force_tangent(q, inp["dmat"], inp["k_lin"],
                                         inp["k_cub"], inp["weights"])
        best = min(best, (time.perf_counter() - t0) / calls)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-dof", type=int, default=60)
    ap.add_argument("--order", type=int, default=8)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    inp = build_inputs(args.n_dof, args.order, args.steps, args.dt)
    n_el = inp["k_lin"].shape[0]
    print(f"chain: {args.n_dof} dofs, {n_el} elements, basis order "
          f"{args.order}, {args.steps} steps")

    t_ref_f = time_force(_ref, inp, args.repeat)
    t_ref_n, res_ref = time_newmark(_ref, inp, args.repeat)
    print(f"{'kernel':<28s} {'numpy':>12s} {'compiled':>12s} {'speedup':>9s}")
    if _core is None:
        print(f"{'force/tangent (per call)':<28s} {t_ref_f * 1e6:>10.1f}us "
              f"{'n/a':>12s} {'n/a':>9s}")
        print(f"{'newmark loop':<28s} {t_ref_n * 1e3:>10.1f}ms "
              f"{'n/a':>12s} {'n/a':>9s}")
        print("compiled extension not available")
        return 0

    t_core_f = time_force(_core, inp, args.repeat)
    t_core_n, res_core = time_newmark(_core, inp, args.repeat)
    dq = np.max(np.abs(np.asarray(res_ref[0]) - np.asarray(res_core[0])))
    it_ref, it_core = res_ref[3], res_core[3]
    print(f"{'force/tangent (per call)':<28s} {t_ref_f * 1e6:>10.1f}us "
          f"{t_core_f * 1e6:>10.1f}us {t_ref_f / t_core_f:>8.1f}x")
    print(f"{'newmark loop':<28s} {t_ref_n * 1e3:>10.1f}ms "
          f"{t_core_n * 1e3:>10.1f}ms {t_ref_n / t_core_n:>8.1f}x")
    print(f"trajectory agreement: max |dq| = {dq:.3e} "
          f"(iterations {it_ref} vs {it_core})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

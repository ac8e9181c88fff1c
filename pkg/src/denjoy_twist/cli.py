"""Command-line surface: build the system, run verification suites, emit data.

Subcommands: build | verify | regularity | portrait | manifolds | diffusion,
each driven by one config file plus --set overrides. Exit codes: 0 all checks
pass, 1 a check failed, 2 construction or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .circle_map import (RigidRotation, build_circle_homeo, derivative_jump_scan,
                         derivative_jump_table, dump_orbit_csv,
                         rotation_number_estimate, wandering_interval_check)
from .config import ConfigError, RunConfig, load_config, parse_float_list
from .layout import SemiConjugacy, build_gap_table, dump_gap_table_csv
from .profiles import calibrate_profiles, export_profile_csv
from .reporting import ReportBuilder, write_report
from .sequences import (ConstructionError, SeqParams, build_sequences,
                        dump_sequences_csv, recurrence_residuals,
                        verify_sequence_estimates)
from .twist_map import (build_twist_system, curve_side_check, diffusion_probe,
                        dump_json, dump_phase_portrait_csv, dump_segments_csv,
                        manifold_iterate_check, manifold_segment,
                        orbit_convergence_check)


class BuiltSystem:
    """Everything cmd_* needs, built once per invocation."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        p = cfg["params"]
        self.rigid = p["mode"] == "rigid_rotation"
        if self.rigid:
            self.profiles = None
            self.seqs = None
            self.table = None
            self.g = RigidRotation(p["omega"])
            self.system = build_twist_system(self.g)
        else:
            self.profiles = calibrate_profiles(p["quadrature_tolerance"])
            self.seqs = build_sequences(cfg.seq_params)
            self.table = build_gap_table(self.seqs)
            self.g = build_circle_homeo(self.table, self.seqs, self.profiles,
                                        swap_gamma=p["swap_gamma"])
            self.system = build_twist_system(self.g, self.table, self.seqs,
                                             self.profiles)

    def summary(self) -> dict:
        if self.rigid:
            return {"mode": "rigid_rotation", "omega": self.cfg["params"]["omega"]}
        return {
            "mode": "full",
            "a_C": self.seqs.a_C,
            "residual_mass": self.seqs.residual_mass,
            "alpha1": self.seqs.alpha1,
            "alpha0": self.seqs.alpha0,
            "m1_adjusted": self.seqs.m1_adjusted,
            "n_pieces": self.g.n_pieces,
            "patch_widths": list(self.g.patch_widths),
        }


def _outdir(cfg: RunConfig, override=None) -> str:
    d = override or cfg["output"]["directory"]
    os.makedirs(d, exist_ok=True)
    return d


def cmd_build(cfg: RunConfig, outdir: str) -> int:
    t0 = time.time()
    built = BuiltSystem(cfg)
    rb = ReportBuilder(cfg.echo())
    rb.set_summary(**built.summary())
    rb.add_timing("build", time.time() - t0)
    if not built.rigid and cfg["output"]["write_csv"]:
        dump_sequences_csv(built.seqs, os.path.join(outdir, "sequences.csv"))
        dump_gap_table_csv(built.table, os.path.join(outdir, "gaps.csv"))
        export_profile_csv(built.profiles, os.path.join(outdir, "profiles.csv"))
    if not built.rigid:
        est = verify_sequence_estimates(built.seqs, cfg.seq_params)
        dump_json(est, os.path.join(outdir, "estimates.json"))
    write_report(rb.finish(), os.path.join(outdir, "build.json"))
    return 0


def _verify_full(built: BuiltSystem, rb: ReportBuilder) -> None:
    cfg = built.cfg
    sysm, seqs, g, table = built.system, built.seqs, built.g, built.table
    v = cfg["verify"]
    tol = cfg.tol
    p = cfg["params"]

    t0 = time.time()
    inv = sysm.verify_invariant_curve(v["invariance_samples"], seed=p["seed"])
    rb.check_leq("invariance_residual", inv["max_residual"],
                 tol("invariance_residual"))
    invt = sysm.verify_invariant_curve(v["invariance_samples"],
                                       seed=p["seed"] + 1, translate=1)
    rb.check_leq("invariance_residual_translated", invt["max_residual"],
                 tol("invariance_residual"))
    rb.add_timing("invariance", time.time() - t0)

    t0 = time.time()
    n = v["rotation_n"]
    worst = 0.0
    for x0 in parse_float_list(v["rotation_starts"]):
        worst = max(worst, abs(rotation_number_estimate(g, x0, n) - p["omega"]))
    rb.check_leq("rotation_number_gap_times_n", worst * n, 1.0,
                 detail={"n": n})
    rb.add_timing("rotation", time.time() - t0)

    est = verify_sequence_estimates(seqs, cfg.seq_params)
    rb.check_true("sequence_estimates", est["pass"], detail=est["estimates"])
    rb.check_true("sign_pattern", est["estimates"]["sign_pattern"]["pass"])
    rb.check_leq("beta_scaled_bound",
                 est["estimates"]["beta_forward"]["max_scaled"], p["B"])
    rb.check_leq("recurrence_residual", float(recurrence_residuals(seqs).max()),
                 tol("recurrence_residual"))

    # zero-seed oracle: rebuilding the sequences with alpha1 = 0 reproduces K
    base = cfg.seq_params
    seqs0 = build_sequences(SeqParams(
        omega=base.omega, delta=base.delta, bigC=base.bigC, bigB=base.bigB,
        truncation_M=base.truncation_M, alpha1_policy="zero",
        tolerances=base.tolerances))
    rb.check_leq("zero_seed_fixed_point",
                 float(np.max(np.abs(seqs0.beta_arr - seqs0.K_arr[1:]))),
                 tol("zero_seed_drift"))

    t0 = time.time()
    lin = sysm.phi_linearity_check()
    rb.check_leq("phi_fit_deviation", lin["max_fit_deviation"],
                 tol("phi_fit_deviation"))
    rb.check_leq("phi_slope_deviation", lin["max_slope_deviation"],
                 tol("phi_slope_deviation"))
    rb.check_leq("phi_local_offset_k1", lin["local_offset_dev_k1"],
                 tol("phi_fit_deviation"))
    rb.add_timing("linearity", time.time() - t0)

    t0 = time.time()
    mi = manifold_iterate_check(sysm, min(v["manifold_k_max"], table.M - 2))
    rb.check_leq("manifold_image_distance", mi["max_image_distance"],
                 tol("manifold_map"))
    rb.check_leq("manifold_ratio_error", mi["max_ratio_error"],
                 tol("contraction_ratio"))
    cs = curve_side_check(sysm)
    rb.check_leq("curve_side_formula", cs["max_formula_dev"], tol("curve_side"))
    rb.check_true("curve_side_strict", cs["strict_sign_ok"],
                  detail={"zone_below_curve": cs["zone_below_curve"]})
    oc = orbit_convergence_check(sysm, float(table.ell_of(1)) / 16.0, 20)
    rb.check_leq("orbit_convergence_rel", oc["max_rel_ratio_error"],
                 tol("orbit_convergence_rel"))
    rb.add_timing("manifolds", time.time() - t0)

    t0 = time.time()
    jt = derivative_jump_table(g)
    worst_jump = 0.0
    for k, _left, _right, jump in jt:
        expected = float(seqs.alpha(k))
        if g.local[k].gamma_kind == "minus":
            expected = -expected
        worst_jump = max(worst_jump, abs(jump - expected))
    rb.check_leq("jump_match", worst_jump, tol("jump_match"))
    sc = derivative_jump_scan(g, v["jump_scan_samples"], seed=p["seed"] + 2)
    rb.check_leq("jump_no_spurious", sc["max_offmid_jump"], tol("jump_detect"))
    rb.add_timing("jumps", time.time() - t0)

    t0 = time.time()
    rb.check_leq("roundtrip", sysm.roundtrip_check(v["roundtrip_samples"],
                                                   seed=p["seed"] + 3),
                 tol("roundtrip"))
    rb.check_leq("det_df", sysm.det_check(v["det_samples"], seed=p["seed"] + 4,
                                          step=v["fd_step"]), tol("det_df"))
    vt = sysm.vertical_translation_check(seed=p["seed"] + 5)
    rb.check_leq("vertical_translate_theta", vt["max_theta_dev"], 0.0)
    rb.check_leq("vertical_translate_r", vt["max_r_dev"],
                 tol("vertical_translate_r"))
    tw = sysm.twist_check(seed=p["seed"] + 6, step=v["fd_step"])
    rb.check_leq("twist_positive", abs(tw["max_fd_dev"]), tol("twist_fd"))
    rb.check_leq("phi_periodicity", sysm.periodicity_check(seed=p["seed"] + 7),
                 tol("phi_periodicity"))
    rb.check_leq("phi_mean", abs(sysm.mean_check()),
                 seqs.residual_mass + tol("mean_budget_extra"))
    rb.add_timing("structural", time.time() - t0)

    j = SemiConjugacy(table)
    worst = 0.0
    for k in range(-table.M, table.M):
        x = float(table.mu_of(k))
        d = j.eval(g.eval(x)) - (j.eval(x) + p["omega"])
        worst = max(worst, abs(d - round(d)))
    rb.check_leq("semiconjugacy_midpoints", worst, tol("semiconjugacy"))

    wr = wandering_interval_check(g, min(50, table.M))
    rb.check_leq("wandering_forward", wr["max_endpoint_deviation_forward"],
                 tol("wandering"))
    rb.check_leq("wandering_backward", wr["max_endpoint_deviation_backward"],
                 tol("wandering"))
    rb.check_true("wandering_lengths_decreasing", wr["lengths_decreasing"])


def _verify_rigid(built: BuiltSystem, rb: ReportBuilder) -> None:
    cfg = built.cfg
    sysm, g = built.system, built.g
    v, p = cfg["verify"], cfg["params"]
    rng = np.random.default_rng(p["seed"])
    xs = rng.random(1000)
    rb.check_leq("phi_identically_zero",
                 float(np.max(np.abs(sysm.phi.eval_many(xs)))), 1e-15)
    inv = sysm.verify_invariant_curve(v["invariance_samples"], seed=p["seed"])
    rb.check_leq("invariance_residual", inv["max_residual"],
                 cfg.tol("invariance_residual"))
    est = rotation_number_estimate(g, 0.25, 1000)
    rb.check_leq("rotation_number_exact", abs(est - p["omega"]), 1e-12)
    rb.check_leq("roundtrip", sysm.roundtrip_check(1000, seed=p["seed"] + 1),
                 cfg.tol("roundtrip"))
    rb.check_leq("det_df", sysm.det_check(200, seed=p["seed"] + 2),
                 cfg.tol("det_df"))


def cmd_verify(cfg: RunConfig, outdir: str) -> int:
    t0 = time.time()
    built = BuiltSystem(cfg)
    rb = ReportBuilder(cfg.echo())
    rb.set_summary(**built.summary())
    rb.add_timing("build", time.time() - t0)
    if built.rigid:
        _verify_rigid(built, rb)
    else:
        _verify_full(built, rb)
    report = rb.finish()
    write_report(report, os.path.join(outdir, "verify.json"))
    for entry in report["checks"]:
        print(f"[{'PASS' if entry['pass'] else 'FAIL'}] {entry['name']}: "
              f"{entry['measured']} (tolerance {entry['tolerance']})")
    print(f"overall: {'PASS' if report['pass'] else 'FAIL'}")
    return 0 if report["pass"] else 1


def cmd_regularity(cfg: RunConfig, outdir: str) -> int:
    built = BuiltSystem(cfg)
    if built.rigid:
        raise ConfigError("regularity scan requires mode=full")
    r = cfg["regularity"]
    rb = ReportBuilder(cfg.echo())
    rb.set_summary(**built.summary())
    t0 = time.time()
    rep = built.system.second_derivative_scan(n_grid=r["grid"],
                                              fd_step_rel=r["fd_step_rel"])
    rb.add_timing("scan", time.time() - t0)
    summ = rep.summary()
    rb.set_summary(regularity=summ)
    rep.to_csv(os.path.join(outdir, "regularity.csv"))
    rb.check_true("tail_below_head", summ["tail_below_head"],
                  detail={"sup_tail": summ["sup_tail"],
                          "sup_head": summ["sup_head"]})
    rb.check_leq("term_sum_vs_fd_rel", summ["max_rel_fd_dev"],
                 cfg.tol("regularity_term_rel"))
    factor = r["compare_C_factor"]
    if factor and factor > 0:
        cfg2 = RunConfig(sections={s: dict(kv) for s, kv in cfg.sections.items()})
        cfg2.sections["params"]["C"] = cfg["params"]["C"] * factor
        built2 = BuiltSystem(cfg2)
        t0 = time.time()
        rep2 = built2.system.second_derivative_scan(n_grid=r["grid"],
                                                    fd_step_rel=r["fd_step_rel"])
        rb.add_timing("scan_big_C", time.time() - t0)
        summ2 = rep2.summary()
        ratios = {
            "sup_all_ratio": summ["sup_all"] / summ2["sup_all"],
            "sup_off_crossing_ratio":
                summ["sup_off_crossing"] / summ2["sup_off_crossing"],
        }
        rb.set_summary(c_comparison=dict(ratios, big_C=cfg2["params"]["C"],
                                         regularity_big_C=summ2))
        # the uniform-in-C smallness governs the gaps away from the symmetry
        # crossing (where the two-sided estimates fail by construction); the
        # all-gaps ratio is reported alongside but not asserted
        rb.check_geq("c_comparison_off_crossing",
                     ratios["sup_off_crossing_ratio"],
                     cfg.tol("c_comparison_factor_min"),
                     detail=ratios)
    report = rb.finish()
    write_report(report, os.path.join(outdir, "regularity.json"))
    print(f"regularity: {'PASS' if report['pass'] else 'FAIL'} "
          f"(sup_all={summ['sup_all']:.4g}, tail={summ['sup_tail']:.4g})")
    return 0 if report["pass"] else 1


def cmd_portrait(cfg: RunConfig, outdir: str) -> int:
    built = BuiltSystem(cfg)
    po, p = cfg["portrait"], cfg["params"]
    rng = np.random.default_rng(p["seed"])
    orbits = []
    for _ in range(po["orbits"]):
        th = rng.random()
        r0 = float(built.system.curve_height(th)) + rng.uniform(
            -po["r_band"], po["r_band"])
        orbits.append((th, r0))
    dump_phase_portrait_csv(built.system, orbits, po["steps"],
                            os.path.join(outdir, "portrait.csv"),
                            curve_samples=po["curve_samples"])
    print(f"portrait: {po['orbits']} orbits x {po['steps']} steps written")
    return 0


def cmd_manifolds(cfg: RunConfig, outdir: str) -> int:
    built = BuiltSystem(cfg)
    if built.rigid:
        raise ConfigError("manifold checks require mode=full")
    m = cfg["manifolds"]
    rb = ReportBuilder(cfg.echo())
    rb.set_summary(**built.summary())
    k_max = min(m["k_max"], built.table.M - 2)
    dump_segments_csv(built.system, -k_max, k_max,
                      os.path.join(outdir, "segments.csv"))
    mi = manifold_iterate_check(built.system, k_max)
    rb.check_leq("manifold_image_distance", mi["max_image_distance"],
                 cfg.tol("manifold_map"))
    rb.check_leq("manifold_ratio_error", mi["max_ratio_error"],
                 cfg.tol("contraction_ratio"))
    rb.check_leq("manifold_base_orbit", mi["max_base_orbit_error"],
                 cfg.tol("manifold_map"))
    cs = curve_side_check(built.system)
    rb.check_leq("curve_side_formula", cs["max_formula_dev"],
                 cfg.tol("curve_side"))
    rb.check_true("curve_side_strict", cs["strict_sign_ok"],
                  detail={"zone_below_curve": cs["zone_below_curve"]})
    seg = manifold_segment(built.system, 1, "stable")
    oc = orbit_convergence_check(built.system, seg.x_half_width / 2.0,
                                 min(20, built.table.M - 1))
    rb.check_leq("orbit_convergence_rel", oc["max_rel_ratio_error"],
                 cfg.tol("orbit_convergence_rel"))
    report = rb.finish()
    write_report(report, os.path.join(outdir, "manifolds.json"))
    print(f"manifolds: {'PASS' if report['pass'] else 'FAIL'}")
    return 0 if report["pass"] else 1


def cmd_diffusion(cfg: RunConfig, outdir: str) -> int:
    built = BuiltSystem(cfg)
    if built.rigid:
        raise ConfigError("diffusion probe requires mode=full")
    d = cfg["diffusion"]
    if str(d["theta0"]) == "mu1":
        theta0 = float(built.table.mu_of(1)) + float(built.table.ell_of(1)) / 16.0
    else:
        theta0 = float(d["theta0"])
    thresholds = tuple(parse_float_list(d["thresholds"]))
    reports = []
    for off in parse_float_list(d["offsets"]):
        pr = diffusion_probe(built.system, theta0, off, d["n"],
                             thresholds=thresholds)
        reports.append(pr.as_dict())
    out = {"schema_version": 1, "config": cfg.echo(), "probes": reports}
    dump_json(out, os.path.join(outdir, "diffusion.json"))
    for pr in reports:
        print(f"diffusion offset={pr['offset']:+.3e}: "
              f"max excursion {pr['max_excursion']:.6e} over {pr['n_steps']} steps")
    return 0


_COMMANDS = {
    "build": cmd_build,
    "verify": cmd_verify,
    "regularity": cmd_regularity,
    "portrait": cmd_portrait,
    "manifolds": cmd_manifolds,
    "diffusion": cmd_diffusion,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="denjoy-twist",
        description="Build and verify the twist map with a Denjoy-type "
                    "invariant graph.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--set", action="append", default=[], metavar="S.K=V",
                        help="override a config value (section.key=value)")
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        outdir = _outdir(cfg, args.out)
        return _COMMANDS[args.command](cfg, outdir)
    except (ConfigError, ConstructionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

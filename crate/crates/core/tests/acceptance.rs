//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any FAIL.

use std::process::ExitCode;
use std::time::Instant;

use mlmc_core::model::{DriftModel, Payoff, ProblemSpec};
use mlmc_core::optimize::{brute_force_level, cost_functionals, optimal_plan_from, CostFunctionals};
use mlmc_core::quadrature::{integrate, Tolerance};
use mlmc_core::rng::sample_stream;
use mlmc_core::simulate::LevelPlan;
use mlmc_core::validate::{
    check_concentration, check_estimator_mgf, check_malliavin_formula, check_mgf_malliavin, check_mgf_u,
    check_mse, check_strong_error, check_sup_integral_mgf, concentration_report, default_alpha_grid,
    orlicz_norm, orlicz_report, psi_e, replicate_errors, BoundCheckReport, DeviationSetup,
};

const SEED: u64 = 20240601;
const EPS_GRID: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

fn unit() -> ProblemSpec {
    ProblemSpec::ou(0.0, 1.0).unwrap()
}

fn shifted() -> ProblemSpec {
    ProblemSpec::ou(1.0, 1.0).unwrap()
}

fn identity() -> Payoff {
    Payoff::linear(vec![1.0], 1.0).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn describe(r: &BoundCheckReport) -> String {
    r.flatten()
        .iter()
        .map(|c| {
            let pts: Vec<String> = c
                .points
                .iter()
                .map(|p| format!("{}:{:.4e}±{:.1e}<= {:.4e}", p.grid_value, p.empirical, p.std_error, p.theoretical))
                .collect();
            format!("{} [{}]", c.bound_name, pts.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn strong_error() -> Outcome {
    let r = check_strong_error(&unit(), 2, &[4, 8, 16, 32], 100_000, SEED).unwrap();
    let slope = r.summary["slope"];
    Outcome {
        pass: r.passed() && (slope + 2.0).abs() <= 0.3,
        detail: format!("slope {slope:.3}; {}", describe(&r)),
    }
}

fn mse() -> Outcome {
    let r = check_mse(&shifted(), &identity(), 2, 0.05, 200, SEED).unwrap();
    let rmse = r.points[0].empirical;
    Outcome {
        pass: r.passed() && rmse <= 0.05,
        detail: format!("rmse {rmse:.4e}; {}", describe(&r)),
    }
}

fn bias_order() -> Outcome {
    let mut pass = true;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut lines = Vec::new();
    for eps in EPS_GRID {
        let cf = cost_functionals(&shifted(), &identity(), 2, eps).unwrap();
        let plan = optimal_plan_from(&cf).unwrap();
        let x = 2f64.powi(-(plan.l_eps as i32));
        let (lo, hi) = (cf.lower_envelope(), cf.upper_envelope());
        let inside = eps < cf.c1() && lo < x && x < hi;
        pass &= inside;
        lines.push(format!("eps {eps}: L {} {lo:.3e} < {x:.3e} < {hi:.3e}", plan.l_eps));
        xs.push(eps.ln());
        ys.push((cf.bias_scale() * x).ln());
    }
    let slope = mlmc_core::validate::stats::ols_slope(&xs, &ys);
    pass &= (slope - 4.0 / 3.0).abs() <= 0.1;
    Outcome {
        pass,
        detail: format!("slope {slope:.4}; {}", lines.join("; ")),
    }
}

fn cost_scaling() -> Outcome {
    let scaled: Vec<f64> = EPS_GRID
        .iter()
        .map(|&eps| {
            let cf = cost_functionals(&shifted(), &identity(), 2, eps).unwrap();
            optimal_plan_from(&cf).unwrap().predicted_cost * eps * eps
        })
        .collect();
    let max = scaled.iter().copied().fold(0.0, f64::max);
    let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome {
        pass: max / min < 3.0,
        detail: format!("cost*eps^2 = {scaled:.2?}, ratio {:.3}", max / min),
    }
}

fn mgf_u() -> Outcome {
    let r = check_mgf_u(&unit(), 2, 16, &[0.25, 0.5, 1.0], 0.0, 100_000, SEED).unwrap();
    Outcome {
        pass: r.passed(),
        detail: describe(&r),
    }
}

fn mgf_malliavin() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [0.1, 0.5] {
        let rep = check_mgf_malliavin(&unit(), 2, 16, r, 0, &[0.25, 0.5, 1.0], 100_000, SEED).unwrap();
        pass &= rep.passed();
        parts.push(format!("r={r}: {}", describe(&rep)));
    }
    let fd = check_malliavin_formula(&unit(), 16, &[0.1, 0.5], 0, 100, SEED).unwrap();
    pass &= fd.passed();
    parts.push(describe(&fd));
    let sine = ProblemSpec::new(vec![0.4], 1.0, DriftModel::smooth_sine(1.0, 1).unwrap()).unwrap();
    let fd2 = check_malliavin_formula(&sine, 16, &[0.1, 0.5], 0, 100, SEED).unwrap();
    pass &= fd2.passed();
    parts.push(format!("sine drift: {}", describe(&fd2)));
    Outcome {
        pass,
        detail: parts.join(" | "),
    }
}

fn estimator_mgf() -> Outcome {
    let fractions = [-1.0, -0.5, 0.5, 1.0];
    let plan0 = LevelPlan::new(2, vec![100]).unwrap();
    let r0 = check_estimator_mgf(&shifted(), &identity(), &plan0, &fractions, 10_000, SEED).unwrap();
    let gaussian = r0
        .points
        .iter()
        .all(|p| (p.empirical - p.theoretical).abs() <= 3.0 * p.std_error);
    let cf = cost_functionals(&shifted(), &identity(), 2, 0.1).unwrap();
    let plan = optimal_plan_from(&cf).unwrap().level_plan();
    let r = check_estimator_mgf(&shifted(), &identity(), &plan, &fractions, 10_000, SEED + 1).unwrap();
    Outcome {
        pass: gaussian && r.passed(),
        detail: format!("L=0 two-sided: {} | eps=0.1: {}", describe(&r0), describe(&r)),
    }
}

fn concentration_and_orlicz() -> (Outcome, Outcome) {
    let (p, f) = (shifted(), identity());
    let setup = DeviationSetup::new(&p, &f, 2, 0.1, None).unwrap();
    let errors = replicate_errors(&p, &f, &setup.plan, SEED, 10_000).unwrap();
    let grid = default_alpha_grid(setup.alpha_max(), 8);
    let tail = concentration_report(&setup, &f, p.t, &errors, &grid, SEED).unwrap();
    // Same entry point through the public check, on a small set.
    let small = check_concentration(&p, &f, 2, 0.1, None, 200, None, SEED).unwrap();
    let conc = Outcome {
        pass: tail.passed() && small.points.len() == 8,
        detail: format!("{}; flags {:?}", describe(&tail), tail.flags),
    };

    let orl = orlicz_report(&p, &f, &setup, &errors, SEED).unwrap();
    let main_ok = orl.all_satisfied();
    let det = (orlicz_norm(&[0.7; 32]) - 0.7).abs() < 1e-9;
    let oracle = gaussian_orlicz_oracle();
    let z: Vec<f64> = (0..1_000_000u64).map(|k| sample_stream(SEED, 7, k).standard_normal()).collect();
    let gauss = orlicz_norm(&z);
    let gauss_ok = (gauss / oracle - 1.0).abs() < 0.01;
    let orlicz = Outcome {
        pass: main_ok && orl.companions[0].all_satisfied() && det && gauss_ok,
        detail: format!(
            "{}; informational={} flags {:?}; gaussian {gauss:.5} vs oracle {oracle:.5}",
            describe(&orl),
            orl.informational,
            orl.flags
        ),
    };
    (conc, orlicz)
}

fn gaussian_orlicz_oracle() -> f64 {
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let g = |c: f64| {
        integrate(|z| 2.0 * phi(z) * psi_e(z / c), 0.0, 60.0, Tolerance::default())
            .unwrap()
            .value
            - 1.0
    };
    let (mut lo, mut hi) = (0.5, 5.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn appendix() -> Outcome {
    let r = check_sup_integral_mgf(&[1.0], 1.0, 1_000_000, 1 << 12, SEED).unwrap();
    let p = &r.points[0];
    let lower = 1.0 / (0.75f64).sqrt();
    let ok = p.empirical >= lower - 3.0 * p.std_error && p.empirical <= 2f64.sqrt() + 3.0 * p.std_error;
    Outcome {
        pass: ok && r.passed(),
        detail: format!("{} (lower {lower:.5})", describe(&r)),
    }
}

/// Root of `h` by bisection over all of `(0, 1 ∧ β_ε)`, geometric while the
/// interval spans more than a factor two.
fn h_root_wide(cf: &CostFunctionals) -> f64 {
    let (mut lo, mut hi) = (1e-300f64, cf.beta_eps.min(1.0));
    while hi - lo > 1e-13 * hi {
        let mid = if hi > 2.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if cf.h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn optimizer_oracle() -> Outcome {
    let mut pass = true;
    let mut bad = Vec::new();
    let mut level_zero = 0;
    for i in 0..50u64 {
        let mut rng = sample_stream(SEED, 11, i);
        let m = 2 + (rng.uniform() * 7.0) as u32;
        let t = 0.2 + 2.8 * rng.uniform();
        let k = 0.1 + 1.9 * rng.uniform();
        let x0 = -2.0 + 4.0 * rng.uniform();
        let eps = 10f64.powf(-5.0 + 5.5 * rng.uniform());
        let p = ProblemSpec::new(vec![x0], t, DriftModel::linear_decay(k, 1).unwrap()).unwrap();
        let f = Payoff::linear(vec![1.0], 1.0).unwrap();
        let cf = cost_functionals(&p, &f, m, eps).unwrap();
        let plan = optimal_plan_from(&cf).unwrap();
        let brute = brute_force_level(&cf, 60);
        let mut ok = brute == Some(plan.l_eps);
        if let (Some(x), Some((lo, hi))) = (plan.x_star, plan.root_bracket) {
            let wide = h_root_wide(&cf);
            ok &= lo <= wide && wide <= hi && (wide / x - 1.0).abs() < 1e-9;
        } else {
            level_zero += 1;
        }
        if !ok {
            bad.push(format!("#{i} m={m} eps={eps:.3e}: L {} vs {brute:?}", plan.l_eps));
        }
        pass &= ok;
    }
    Outcome {
        pass,
        detail: format!("50 cases, {level_zero} on the L=0 branch; mismatches {bad:?}"),
    }
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: u32, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id:>2}] {name} ({secs:.1}s): {}", out.detail);
        all &= out.pass;
    };
    report(1, "strong error", &mut strong_error);
    report(2, "mse of the optimal plan", &mut mse);
    report(3, "bias order", &mut bias_order);
    report(4, "cost scaling", &mut cost_scaling);
    report(5, "max-gap mgf", &mut mgf_u);
    report(6, "malliavin-gap mgf and product formula", &mut mgf_malliavin);
    report(7, "estimator mgf", &mut estimator_mgf);
    let mut pair = None;
    report(8, "concentration", &mut || {
        let (c, o) = concentration_and_orlicz();
        pair = Some(o);
        c
    });
    report(9, "orlicz norm", &mut || pair.take().expect("criterion 8 ran"));
    report(10, "sup of stochastic integral mgf", &mut appendix);
    report(11, "optimizer oracle equivalence", &mut optimizer_oracle);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

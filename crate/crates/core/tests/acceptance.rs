//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use nonlocal_lab::cantor::{cantor_function, cantor_space, fat_cantor, run_counterexample};
use nonlocal_lab::energy::{sobolev_energy, tv};
use nonlocal_lab::functional::{estimate_constants, evaluate, sweep, EvalMode, EvalOptions};
use nonlocal_lab::grid::{random_piecewise_linear, Generator, GridFunction};
use nonlocal_lab::mollifier::{check_admissibility, CheckOptions, Condition, MollifierFamily, Normalization, Verdict};
use nonlocal_lab::reduce::Workers;
use nonlocal_lab::smoothing::{cover, discrete_convolve, partition_of_unity, verify_lip_bound};
use nonlocal_lab::space::{default_doubling_scales, estimate_doubling, DomainMask, MetricMeasureSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit(n: usize) -> MetricMeasureSpace {
    MetricMeasureSpace::uniform_interval(n).unwrap()
}

fn identity_calibration() -> Outcome {
    let s = unit(4096);
    let f = GridFunction::from_fn(&s, |x| x).unwrap();
    let family = MollifierFamily::indicator(1.0, &[0.1, 0.05, 0.01], Normalization::MuBall).unwrap();
    let full = DomainMask::full(&s);
    let workers = Workers::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for i in 0..family.len() {
        let start = Instant::now();
        let v = evaluate(&s, &f, &family, i, &full, &EvalOptions::default(), &workers).unwrap().value;
        let secs = start.elapsed().as_secs_f64();
        ok &= (v - 1.0).abs() <= 0.01 && secs < 1.0;
        parts.push(format!("r={} value={v:.6} ({secs:.3}s)", family.params()[i]));
    }
    verdict(ok, parts.join(", "))
}

fn step_identity() -> Outcome {
    let s = unit(4096);
    let f = Generator::Step { at: 0.5, height: 1.0 }.build(&s).unwrap();
    let family = MollifierFamily::indicator(1.0, &[0.1, 0.05, 0.025, 0.0125], Normalization::Lebesgue1d).unwrap();
    let r = sweep(&s, &f, &family, &DomainMask::full(&s), 3, &EvalOptions::default(), &Workers::default()).unwrap();
    let last = *r.values.last().unwrap();
    verdict((last - 1.0).abs() <= 0.02, format!("values {:?}, smallest radius {last:.6} vs TV 1", r.values))
}

fn sobolev_case() -> Outcome {
    let n = 4096;
    let s = unit(n);
    let f = Generator::Power { power: 2.0 }.build(&s).unwrap();
    let family = MollifierFamily::window(2.0, &[0.1, 0.05, 0.02, 0.01, 0.005]).unwrap();
    let r = sweep(&s, &f, &family, &DomainMask::full(&s), 3, &EvalOptions::default(), &Workers::default()).unwrap();
    let target = 4.0 / 3.0;
    let tail_ok = (r.tail_lo - target).abs() <= 0.02 * target && (r.tail_hi - target).abs() <= 0.02 * target;
    let e1 = sobolev_energy(&f, &s, 2.0).unwrap().value;
    let s2 = unit(2 * n);
    let e2 = sobolev_energy(&Generator::Power { power: 2.0 }.build(&s2).unwrap(), &s2, 2.0).unwrap().value;
    let refine_ok = (e1 - e2).abs() <= 0.005 * e2;
    verdict(
        tail_ok && refine_ok,
        format!(
            "tail [{:.6}, {:.6}] vs 4/3 (tail ok: {tail_ok}); sobolev n={n} {e1:.6}, 2n {e2:.6} (refinement ok: {refine_ok})",
            r.tail_lo, r.tail_hi
        ),
    )
}

fn fractional_certification() -> Outcome {
    let s = unit(1024);
    let p = 1.0;
    let params: Vec<f64> = (1..=10).map(|i| 1.0 - 2f64.powi(-i)).collect();
    let family = MollifierFamily::fractional(p, &params).unwrap();
    let full = DomainMask::full(&s);
    let workers = Workers::default();
    let report = check_admissibility(&family, &s, &[0.5, 0.1], &full, &CheckOptions::default(), &workers).unwrap();
    let mut nu_err: f64 = 0.0;
    for row in &report.nu_mass {
        for (v, &si) in row.values.iter().zip(&params) {
            let exact = si * row.delta.powf(p * (1.0 - si));
            nu_err = nu_err.max((v.unwrap() - exact).abs());
        }
    }
    let cd = estimate_doubling(&s, &default_doubling_scales(&s)).unwrap();
    let max_sum = report.majorant_sums.iter().copied().fold(0.0, f64::max);
    let ring = MollifierFamily::ring(p, 5, 0.25, 0.05).unwrap();
    let ring_report = check_admissibility(&ring, &s, &[0.5, 0.1], &full, &CheckOptions::default(), &workers).unwrap();
    let ring_fails = ring_report.verdict == Verdict::Fail && ring_report.failed.contains(&Condition::LowerBound);
    let ok = nu_err <= 1e-3 && max_sum <= 4.0 * cd && report.verdict == Verdict::Pass && ring_fails;
    verdict(
        ok,
        format!(
            "nu-mass max error {nu_err:.2e}; majorant max {max_sum:.4} vs 4 C_d = {:.4}; verdict {:?}; ring verdict {:?} failing {:?}",
            4.0 * cd,
            report.verdict,
            ring_report.verdict,
            ring_report.failed
        ),
    )
}

fn counterexample() -> Outcome {
    let start = Instant::now();
    let workers = Workers::new(4);
    let r = 2f64.powi(-9);
    let report = run_counterexample(3, 1 << 14, &[4.0 * r, 2.0 * r, r], 0.05, &workers).unwrap();
    let fine = run_counterexample(3, 1 << 15, &[r], 0.05, &workers).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let v = *report.functional_values.last().unwrap();
    let v_fine = fine.functional_values[0];
    let oracle = 8.0 * fat_cantor(3).unwrap().length(3);
    let ok = v >= 2.0 * 0.95 * report.tv_reference
        && (v - oracle).abs() <= 0.1 * oracle
        && (v_fine - oracle).abs() <= 0.1 * oracle
        && (report.bump_ratio - 1.0).abs() <= 0.05
        && secs < 60.0;
    verdict(
        ok,
        format!(
            "functional {v:.6} (n=2^15: {v_fine:.6}) vs 8 L_3 = {oracle}; bound 2(1-0.05)*{} ; bump ratio {:.6}; {secs:.2}s",
            report.tv_reference, report.bump_ratio
        ),
    )
}

fn smoothing_suite() -> Outcome {
    // R n and 0.4 R n are integers at every scale, so the greedy centers are evenly spaced
    let n = 2000;
    let uniform = unit(n);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut suite: Vec<(String, MetricMeasureSpace, GridFunction)> = vec![
        ("ramp", Generator::Ramp { slope: 1.0, offset: 0.0 }),
        ("square", Generator::Power { power: 2.0 }),
        ("sqrt", Generator::Power { power: 0.5 }),
        ("step", Generator::Step { at: 0.5, height: 1.0 }),
        ("offcenter step", Generator::Step { at: 0.37, height: -2.0 }),
        ("tent", Generator::Tent { left: 0.375, right: 0.625, height: 1.0 }),
        ("pl-1", random_piecewise_linear(&mut rng, 6)),
        ("pl-2", random_piecewise_linear(&mut rng, 9)),
        ("pl-3", random_piecewise_linear(&mut rng, 12)),
    ]
    .into_iter()
    .map(|(name, g)| (name.to_string(), uniform.clone(), g.build(&uniform).unwrap()))
    .collect();
    let spec = fat_cantor(3).unwrap();
    let cs = cantor_space(&spec, n).unwrap();
    let cf = cantor_function(&spec, &cs).unwrap().f;
    suite.push(("cantor".into(), cs, cf));

    let workers = Workers::default();
    let radii = [0.1, 0.05, 0.025];
    let (mut cases, mut lip_pass, mut max_classes) = (0, 0, 0);
    let mut failures = Vec::new();
    for (name, s, f) in &suite {
        let u = DomainMask::interval(s, 0.25, 0.75).unwrap();
        let mut errors = Vec::new();
        for &r in &radii {
            let cov = cover(s, &u, r, None, 2.0).unwrap();
            for w in cov.centers.windows(2) {
                let (a, b) = (w[0], w[1]);
                if (a..=b).any(|z| s.dist(z, a) < r / 5.0 && s.dist(z, b) < r / 5.0) {
                    failures.push(format!("{name} R={r}: seeds {a},{b} overlap"));
                }
            }
            max_classes = max_classes.max(cov.n_classes);
            let pou = partition_of_unity(s, &cov).unwrap();
            for x in cov.target.indices() {
                let total: f64 = pou.phi.iter().map(|g| g[x]).sum();
                if (total - 1.0).abs() > 1e-10 {
                    failures.push(format!("{name} R={r}: partition sums to {total} at {x}"));
                    break;
                }
            }
            let h = discrete_convolve(s, f, &cov, &pou).unwrap();
            errors.push(u.indices().map(|x| (h[x] - f[x]).abs() * s.mass(x)).sum::<f64>());
            for p in [1.0, 2.0] {
                cases += 1;
                let rep = verify_lip_bound(s, f, &cov, &pou, p, None, &workers).unwrap();
                if rep.pass {
                    lip_pass += 1;
                } else {
                    failures.push(format!("{name} R={r} p={p}: measured {:?} > {}", rep.measured_constant, rep.theoretical_constant));
                }
            }
        }
        if !errors.windows(2).all(|w| w[1] < w[0]) {
            failures.push(format!("{name}: L1 errors {errors:?} not strictly decreasing"));
        }
    }
    if max_classes > 256 {
        failures.push(format!("{max_classes} overlap classes"));
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} functions x {} scales; max overlap classes {max_classes}; Lipschitz bound {lip_pass}/{cases}{}",
            suite.len(),
            radii.len(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

fn random_space(rng: &mut ChaCha8Rng) -> MetricMeasureSpace {
    match rng.gen_range(0..3) {
        0 => unit(rng.gen_range(16..200)),
        1 => {
            let w: Vec<f64> = (0..rng.gen_range(16..200)).map(|_| rng.gen_range(1..4) as f64).collect();
            MetricMeasureSpace::weighted_interval(&w).unwrap()
        }
        _ => {
            let n = rng.gen_range(8..60);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
            let mass: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
            MetricMeasureSpace::from_points(&pts, mass).unwrap()
        }
    }
}

fn random_family(rng: &mut ChaCha8Rng, interval: bool) -> MollifierFamily {
    let p = [1.0, 1.5, 2.0][rng.gen_range(0..3)];
    let r = rng.gen_range(0.05..0.6);
    match rng.gen_range(0..if interval { 4 } else { 3 }) {
        0 => MollifierFamily::fractional(p, &[rng.gen_range(0.1..0.9)]).unwrap(),
        1 => MollifierFamily::window(p, &[r]).unwrap(),
        2 => MollifierFamily::indicator(p, &[r], Normalization::MuBall).unwrap(),
        _ => MollifierFamily::indicator(p, &[r], Normalization::Lebesgue1d).unwrap(),
    }
}

fn property_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pools = [Workers::new(1), Workers::new(2), Workers::new(8)];
    let pruned = EvalOptions::default();
    let dense = EvalOptions {
        mode: EvalMode::Dense,
        ..EvalOptions::default()
    };
    let mut failures: Vec<String> = Vec::new();
    let cases = 1000;
    for case in 0..cases {
        let s = random_space(&mut rng);
        let family = random_family(&mut rng, s.is_interval());
        let p = family.p();
        // dyadic values and integer shifts keep differences exact
        let f = GridFunction::new((0..s.len()).map(|_| rng.gen_range(-2048i32..=2048) as f64 / 1024.0).collect());
        let omega = DomainMask::new((0..s.len()).map(|_| rng.gen_bool(0.8)).collect());
        let sub = DomainMask::new((0..s.len()).map(|x| omega.contains(x) && rng.gen_bool(0.7)).collect());
        let eval = |g: &GridFunction, m: &DomainMask, o: &EvalOptions, w: &Workers| evaluate(&s, g, &family, 0, m, o, w).unwrap().value;
        let base = eval(&f, &omega, &pruned, &pools[0]);

        let shift = rng.gen_range(-8i32..=8) as f64;
        if eval(&f.map(|v| v + shift), &omega, &pruned, &pools[0]) != base {
            failures.push(format!("case {case}: shift by {shift} changed the value"));
        }
        let c: f64 = rng.gen_range(-3.0..3.0);
        let scaled = eval(&f.map(|v| c * v), &omega, &pruned, &pools[0]);
        let expect = c.abs().powf(p) * base;
        if (scaled - expect).abs() > 1e-12 * expect.abs().max(f64::MIN_POSITIVE) {
            failures.push(format!("case {case}: scaling by {c} gave {scaled} vs {expect}"));
        }
        let smaller = eval(&f, &sub, &pruned, &pools[0]);
        if smaller > base * (1.0 + 1e-12) {
            failures.push(format!("case {case}: sub-mask value {smaller} > {base}"));
        }
        let d = eval(&f, &omega, &dense, &pools[0]);
        if (d - base).abs() > 1e-10 * base.abs().max(f64::MIN_POSITIVE) {
            failures.push(format!("case {case}: dense {d} vs pruned {base}"));
        }
        for w in &pools[1..] {
            let v = eval(&f, &omega, &pruned, w);
            if v.to_bits() != base.to_bits() {
                failures.push(format!("case {case}: {} workers gave {v} vs {base}", w.threads()));
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{cases} cases, {} violations{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

fn comparability() -> Outcome {
    let n = 4096;
    let s = unit(n);
    let full = DomainMask::full(&s);
    let workers = Workers::default();
    let radii = [0.01, 0.005, 0.0025];
    let families = [
        // at n = 4096, larger s loses kernel mass below the grid spacing and
        // smaller s loses more to truncation at the ends of [0, 1]
        ("fractional", MollifierFamily::fractional(1.0, &[0.7, 0.75, 0.8]).unwrap()),
        ("window", MollifierFamily::window(1.0, &radii).unwrap()),
        ("indicator", MollifierFamily::indicator(1.0, &radii, Normalization::MuBall).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut range = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    let mut failures = Vec::new();
    for k in 0..20 {
        let pieces = rng.gen_range(2..10);
        let f = random_piecewise_linear(&mut rng, pieces).build(&s).unwrap();
        let e = tv(&f, &s, 0.0).unwrap();
        for (j, (name, family)) in families.iter().enumerate() {
            let sw = sweep(&s, &f, family, &full, 3, &EvalOptions::default(), &workers).unwrap();
            let est = estimate_constants(&sw, &e).unwrap();
            let (c1, c2) = (est.c1_hat.unwrap(), est.c2_hat.unwrap());
            range[j] = (range[j].0.min(c1), range[j].1.max(c2));
            let (lo, hi) = if *name == "indicator" { (0.95, 1.05) } else { (0.5, 2.0) };
            if !(c1 <= c2 && c1 >= lo && c2 <= hi) {
                failures.push(format!("f{k} {name}: [{c1:.4}, {c2:.4}] outside [{lo}, {hi}]"));
            }
        }
    }
    let summary: Vec<String> = families
        .iter()
        .zip(&range)
        .map(|((name, _), (lo, hi))| format!("{name} [{lo:.4}, {hi:.4}]"))
        .collect();
    verdict(
        failures.is_empty(),
        format!(
            "20 functions; {}{}",
            summary.join(", "),
            if failures.is_empty() { String::new() } else { format!("; {} violations, first: {}", failures.len(), failures[0]) }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("identity calibration", identity_calibration),
        ("step function 1D identity", step_identity),
        ("Sobolev case", sobolev_case),
        ("fractional family certification", fractional_certification),
        ("fat Cantor counterexample", counterexample),
        ("smoothing suite", smoothing_suite),
        ("invariance properties", property_suite),
        ("two-sided comparability", comparability),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} [{secs:.1}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

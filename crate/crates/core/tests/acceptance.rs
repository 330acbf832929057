mod common;

use std::f64::consts::PI;
use std::time::Instant;

use pwavg::averaging::{
    analyze, averaged_f1, check_h, degree_interval_sign, degree_winding, evaluate_point, sample_f1, AveragingConfig,
    DegreeDomain,
};
use pwavg::flow::{integrate, IntegratorConfig};
use pwavg::model::{builtin_proposition1, builtin_proposition1_polar, PiecewiseModel, Prop1Coeffs};
use pwavg::shooting::{epsilon_sweep, ShootingConfig};
use pwavg::variational::{
    compare_modes, expansion_residual, first_order_response, flow_jacobian_fd, state_transition, VariationalMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn pinned_polar() -> PiecewiseModel {
    builtin_proposition1_polar(&Prop1Coeffs::pinned(), (0.05, 1.0))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn averaged_exactness() -> Outcome {
    let start = Instant::now();
    let m = pinned_polar();
    let s = sample_f1(&m, 50, &AveragingConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let err = (0..s.alphas.len())
        .map(|i| (s.f1(i).unwrap()[0] - (2.0 * PI * s.alphas[i][0] - 2.0)).abs())
        .fold(0.0, f64::max);
    ensure(s.alphas.len() == 50, || format!("{} samples", s.alphas.len()))?;
    ensure(err <= 1e-8, || format!("max error {err:e}"))?;
    ensure(elapsed < 10.0, || format!("took {elapsed:.2} s"))?;
    Ok(format!("max |f1 - (2 pi a - 2)| = {err:.2e} over 50 points in {elapsed:.2} s"))
}

fn root_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let cfg = AveragingConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let c = common::random_coefficients(&mut rng);
        let expected = 4.0 * (c.minus.a[1] - c.plus.a[1])
            / (PI * (c.plus.b[0] + c.minus.b[0] + c.plus.c[1] + c.minus.c[1]));
        let m = builtin_proposition1_polar(&c, (0.05, 1.0));
        let a = analyze(&m, 20, &cfg).map_err(|e| e.to_string())?;
        let inside: Vec<_> = a.zeros.candidates.iter().filter(|z| z.inside).collect();
        ensure(inside.len() == 1, || format!("{} zeros in V for {:?}", inside.len(), c.to_vec()))?;
        let err = (inside[0].a[0] - expected).abs();
        ensure(err <= 1e-8, || format!("zero {} vs predicted {expected}", inside[0].a[0]))?;
        worst = worst.max(err);
    }
    Ok(format!("3 random coefficient sets, max |a - predicted| = {worst:.2e}"))
}

fn sweep_convergence() -> Outcome {
    let start = Instant::now();
    let coeffs = Prop1Coeffs::pinned();
    let m = builtin_proposition1_polar(&coeffs, (0.05, 1.0));
    let z_a = [1.0 / PI, 0.0];
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let table = epsilon_sweep(&m, &z_a, &eps, &ShootingConfig::default()).map_err(|e| e.to_string())?;
    let orbits: Vec<_> = table.successes().collect();
    ensure(orbits.len() == 4, || format!("only {} of 4 orbits found", orbits.len()))?;
    let worst = orbits.iter().map(|o| o.verified_residual.max(o.residual)).fold(0.0, f64::max);
    ensure(worst <= 1e-10, || format!("residual {worst:e}"))?;
    let dist: Vec<f64> = orbits.iter().map(|o| o.distance_to_za.unwrap()).collect();
    ensure(dist.windows(2).all(|w| w[1] < w[0]), || format!("distances {dist:?}"))?;
    let p = table.fitted_order.ok_or("no fitted order")?;
    ensure((0.8..=1.5).contains(&p), || format!("order {p}"))?;
    let last = orbits[3];
    let norm = last.z_eps[0].abs();
    ensure((norm - 1.0 / PI).abs() <= 1e-3, || format!("|(u,v)(0)| = {norm}"))?;

    // Same orbit in Cartesian coordinates: the first return to the positive
    // half-axis reproduces the starting point.
    let cart = builtin_proposition1(&coeffs);
    let cfg = IntegratorConfig::default().tightened(1e-2);
    let z0 = [last.z_eps[0], 0.0, last.z_eps[1]];
    let traj = integrate(&cart, &z0, last.eps, (0.0, 2.5 * PI), &cfg).map_err(|e| e.to_string())?;
    let ret = traj.events.get(1).ok_or("no return crossing")?;
    let gap = ret.state.iter().zip(&z0).fold(0.0f64, |g, (a, b)| g.max((a - b).abs()));
    ensure(gap <= 1e-8, || format!("Cartesian return misses by {gap:e}"))?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 60.0, || format!("took {elapsed:.1} s"))?;
    Ok(format!(
        "order {p:.3}, residual <= {worst:.1e}, |(u,v)(0)| - 1/pi = {:.1e}, Cartesian return gap {gap:.1e}, {elapsed:.2} s",
        norm - 1.0 / PI
    ))
}

fn expansion_property() -> Outcome {
    let m = pinned_polar();
    let cfg = IntegratorConfig::default().tightened(1e-2);
    let man = m.manifold.as_ref().unwrap();
    let mut summary = Vec::new();
    for alpha in man.grid(5) {
        let z = man.point(&alpha).unwrap();
        let y1 = first_order_response(&m, &z, m.period, &cfg).map_err(|e| e.to_string())?.value;
        let ratios = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&e| expansion_residual(&m, &z, e, &y1, &cfg).map(|r| r / e))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        ensure(ratios.windows(2).all(|w| w[1] < w[0]), || {
            format!("ratios {ratios:?} at alpha = {alpha:?}")
        })?;
        summary.push(format!("{:.1e}", ratios[2]));
    }
    Ok(format!("r/eps decreasing at 5 points, r/eps at 1e-4: {}", summary.join(" ")))
}

fn hypothesis_certificates() -> Outcome {
    let m = pinned_polar();
    let cfg = AveragingConfig::default();
    let target = (2.0 * PI).exp() - 1.0;
    let (mut h, mut d, mut h3) = (0.0f64, 0.0f64, 0.0f64);
    for alpha in m.manifold.as_ref().unwrap().grid(7) {
        let per = check_h(&m, &alpha, &cfg).map_err(|e| e.to_string())?;
        let r = evaluate_point(&m, &alpha, &cfg).map_err(|e| e.to_string())?;
        ensure(r.pass && per.pass, || format!("hypotheses fail at {alpha:?}: {r:?}"))?;
        h = h.max(per.periodicity_residual.unwrap());
        let h2 = r.h2.unwrap();
        ensure(h2.upper_right_norm <= 1e-8, || format!("upper block norm {:e}", h2.upper_right_norm))?;
        d = d.max((h2.det_delta - target).abs());
        h3 = h3.max(r.h3.unwrap().max_residual);
    }
    ensure(h <= 1e-10, || format!("H residual {h:e}"))?;
    ensure(d <= 1e-8, || format!("|det Delta - (e^2pi - 1)| = {d:e}"))?;
    ensure(h3 <= 1e-9, || format!("H3 residual {h3:e}"))?;
    Ok(format!("H {h:.1e}, |Delta - (e^2pi - 1)| {d:.1e}, H3 {h3:.1e} on 7 manifold points"))
}

fn variational_oracle() -> Outcome {
    let cfg = IntegratorConfig::default();
    let mut parts = Vec::new();
    for (name, m, z, t) in [
        ("pendulum", common::pendulum(), vec![0.7, -0.2], 3.0),
        ("polar", pinned_polar(), vec![0.4, 0.1], 2.0 * PI),
    ] {
        let y = state_transition(&m, &z, t, VariationalMode::Plain, &cfg).map_err(|e| e.to_string())?;
        let fd = flow_jacobian_fd(&m, &z, t, 0.0, 1e-6, &cfg).map_err(|e| e.to_string())?;
        let err = (y - fd).amax();
        ensure(err <= 1e-6, || format!("{name}: error {err:e}"))?;
        parts.push(format!("{name} {err:.1e}"));
    }
    let cmp = compare_modes(&common::kink(), &[0.5, 0.0], 1.0, 1e-6, 1e-6, &cfg).map_err(|e| e.to_string())?;
    let matching = cmp.matching();
    ensure(matching.len() == 1, || cmp.summary())?;
    ensure(cmp.summary().starts_with(&matching[0].to_string()), || cmp.summary())?;
    parts.push(format!("kink: {}", cmp.summary()));
    Ok(parts.join(", "))
}

fn event_accuracy() -> Outcome {
    let m = builtin_proposition1(&Prop1Coeffs::pinned());
    let cfg = IntegratorConfig::default();
    let traj = integrate(&m, &[1.0, 0.0, 0.0], 0.0, (0.0, 2.0 * PI), &cfg).map_err(|e| e.to_string())?;
    let times = traj.crossing_times();
    ensure(times.len() == 2, || format!("times {times:?}"))?;
    let err = (times[0] - PI).abs().max((times[1] - 2.0 * PI).abs());
    ensure(err <= 1e-10, || format!("times {times:?}"))?;
    Ok(format!("crossings at pi and 2 pi within {err:.1e}"))
}

fn degree_suite() -> Outcome {
    let interval = DegreeDomain::Box(vec![(-1.0, 1.0)]);
    let id = degree_interval_sign(|x: &[f64]| Ok::<_, String>(vec![x[0]]), &interval, 1e-8).map_err(|e| e.to_string())?;
    let neg = degree_interval_sign(|x: &[f64]| Ok::<_, String>(vec![-x[0]]), &interval, 1e-8).map_err(|e| e.to_string())?;
    ensure(id.degree == 1, || format!("identity gives {}", id.degree))?;
    ensure(neg.degree == -1, || format!("-x gives {}", neg.degree))?;
    let disk = DegreeDomain::Ball {
        center: vec![0.0, 0.0],
        radius: 1.0,
    };
    let id2 = degree_winding(|x: &[f64]| Ok::<_, String>(x.to_vec()), &disk, 1e-8, 40).map_err(|e| e.to_string())?;
    ensure(id2.degree == 1, || format!("planar identity gives {}", id2.degree))?;
    let sq = |x: &[f64]| Ok::<_, String>(vec![x[0] * x[0] - x[1] * x[1], 2.0 * x[0] * x[1]]);
    let w = degree_winding(sq, &disk, 1e-8, 40).map_err(|e| e.to_string())?;
    let oracle = common::angle_sum_degree(|x, y| (x * x - y * y, 2.0 * x * y), (0.0, 0.0), 1.0, 4096);
    ensure(w.degree == 2 && oracle == 2, || format!("winding {} vs angle sum {oracle}", w.degree))?;
    Ok(format!(
        "identity +1, -x -1, planar identity +1, z^2 {} (angle-sum oracle {oracle})",
        w.degree
    ))
}

fn classical_reduction() -> Outcome {
    let m = common::quadrature_model();
    let cfg = AveragingConfig::default();
    let mut worst = 0.0f64;
    for alpha in m.manifold.as_ref().unwrap().grid(5) {
        let f = averaged_f1(&m, &alpha, &cfg).map_err(|e| e.to_string())?;
        let exact = common::quadrature_oracle(&alpha);
        let err = (f[0] - exact[0]).abs().max((f[1] - exact[1]).abs());
        ensure(err <= 1e-9, || format!("alpha = {alpha:?}: {f:?} vs {exact:?}"))?;
        worst = worst.max(err);
    }
    Ok(format!("f1 matches exact quadrature on 25 points within {worst:.1e}"))
}

fn exprlang_corpus() -> Outcome {
    let corpus = common::fuzz_corpus(2024, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let failures: Vec<String> = corpus
        .iter()
        .filter_map(|src| common::check_expression(src, &mut rng, 10).err())
        .collect();
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok("200 expressions x 10 points: derivatives and printer round-trip agree".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("averaged function exactness", averaged_exactness),
        ("root formula", root_formula),
        ("epsilon-sweep convergence", sweep_convergence),
        ("expansion property", expansion_property),
        ("hypothesis certificates", hypothesis_certificates),
        ("variational oracle", variational_oracle),
        ("event accuracy", event_accuracy),
        ("degree suite", degree_suite),
        ("classical-averaging reduction", classical_reduction),
        ("exprlang fuzz corpus", exprlang_corpus),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! per-criterion lines are always printed; exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use wiener_transport::gaussian::{sample_standard, DensityField, GaussianSpace, Provenance, SampleCloud};
use wiener_transport::harness::{execute, ExperimentConfig};
use wiener_transport::inequalities::{
    d1_flow_report, gauge_report, talagrand_report, D1FlowConfig, Region, TalagrandConfig, Verdict,
};
use wiener_transport::maps::{
    brenier_from_standard, duality_residual, energy_identity_check, potential_of, projection_ladder, AffineTransport,
    FnPotential, LadderConfig, Potential, QuadraticPotential,
};
use wiener_transport::monge_ampere::{
    det2, entropy_transport_check, hessian_eigenvalues, interpolation_check, jacobian_residual, submartingale_trace,
    ConditionedPotential, InterpolationConfig,
};
use wiener_transport::ot::{check_cyclic_monotone, solve_exact, support_pairs, CostOrder, MonotoneConfig};
use wiener_transport::polar::{factorize, minimality_check, planar_rotation, random_orthogonal, CandidateKind, LinearMap, RotationCandidate};
use wiener_transport::rng;
use wiener_transport::stats::normal_cdf;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn cloud(dim: usize, n: usize, seed: u64) -> SampleCloud {
    sample_standard(&GaussianSpace::new(dim).unwrap(), n, seed).unwrap()
}

fn brute_force_cost(x: &SampleCloud, y: &SampleCloud, order: CostOrder) -> f64 {
    fn go(k: usize, perm: &mut Vec<usize>, x: &SampleCloud, y: &SampleCloud, order: CostOrder, best: &mut f64) {
        let n = perm.len();
        if k == n {
            let c: f64 = (0..n).map(|i| order.cost(x.point(i), y.point(perm[i]))).sum();
            *best = best.min(c);
            return;
        }
        for i in k..n {
            perm.swap(k, i);
            go(k + 1, perm, x, y, order, best);
            perm.swap(k, i);
        }
    }
    let mut perm: Vec<usize> = (0..x.len()).collect();
    let mut best = f64::INFINITY;
    go(0, &mut perm, x, y, order, &mut best);
    best / x.len() as f64
}

/// Random small cloud pairs: sizes 2..=7, dimensions 1..=3.
fn small_pairs() -> Vec<(Arc<SampleCloud>, Arc<SampleCloud>)> {
    let mut r = rng::stream(rng::derive_seed(1, "acceptance-pairs"), 0);
    (0..50u64)
        .map(|k| {
            let n = r.gen_range(2..=7);
            let d = r.gen_range(1..=3);
            let shift: f64 = r.gen_range(-1.0..1.0);
            let x = cloud(d, n, 100 + k);
            let y = cloud(d, n, 200 + k).map_points(d, Provenance::Gaussian, |p| p.iter().map(|v| 1.5 * v + shift).collect()).unwrap();
            (Arc::new(x), Arc::new(y))
        })
        .collect()
}

fn c1_exact_solver() -> Outcome {
    let mut worst: f64 = 0.0;
    for (x, y) in small_pairs() {
        for order in [CostOrder::Two, CostOrder::One] {
            let k = ok(solve_exact(x.clone(), y.clone(), order))?;
            let brute = brute_force_cost(&x, &y, order);
            let rel = (k.cost() - brute).abs() / brute.max(1e-300);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-10, || format!("worst relative gap {worst:.3e}"))?;
    Ok(format!("50 pairs x 2 costs, worst relative gap {worst:.1e}"))
}

fn c2_cyclic_monotone() -> Outcome {
    let cfg = MonotoneConfig::default();
    let mut cycles = 0;
    for (x, y) in small_pairs() {
        let k = ok(solve_exact(x, y, CostOrder::Two))?;
        let r = ok(check_cyclic_monotone(&support_pairs(&k), &cfg))?;
        ensure(r.monotone && r.exhaustive, || format!("{r:?}"))?;
        cycles += r.cycles_tested;
    }
    let pts = cloud(2, 6, 9);
    let anti: Vec<(Vec<f64>, Vec<f64>)> = pts.rows().map(|p| (p.to_vec(), p.iter().map(|v| -v).collect())).collect();
    let r = ok(check_cyclic_monotone(&anti, &cfg))?;
    ensure(!r.monotone && r.violating_cycle.is_some(), || format!("(x, -x) not flagged: {r:?}"))?;
    Ok(format!("{cycles} cycles certified on 50 couplings; (x, -x) flagged with sum {:.3}", r.worst_cycle_sum))
}

/// Random presets with positive densities, dimensions up to 8.
fn random_presets(count: usize) -> Vec<(String, usize)> {
    let mut r = rng::stream(rng::derive_seed(3, "acceptance-presets"), 0);
    let list = |r: &mut rand_chacha::ChaCha8Rng, k: usize, lo: f64, hi: f64| {
        (0..k).map(|_| format!("{:.3}", r.gen_range(lo..hi))).collect::<Vec<_>>().join(",")
    };
    (0..count)
        .map(|i| {
            let d = r.gen_range(1..=8);
            match i % 5 {
                0 | 1 => (format!("shift:{}", list(&mut r, d, -1.0, 1.0)), d),
                2 | 3 => {
                    let k = r.gen_range(1..=d);
                    (format!("scale:{}", list(&mut r, k, 0.5, 2.0)), d)
                }
                _ => {
                    let d = d.min(2);
                    let factors: Vec<String> = (0..d)
                        .map(|_| {
                            // 1 + c1 h1 + c2 h2 stays positive when |c1| < 2 sqrt(a (1 - a)), a = c2 / sqrt 2.
                            let c2: f64 = r.gen_range(0.05..0.6);
                            let a = c2 / 2f64.sqrt();
                            let c1 = r.gen_range(-0.9..0.9) * 2.0 * (a * (1.0 - a)).sqrt();
                            format!("{c1:.4},{c2:.4}")
                        })
                        .collect();
                    (format!("hermite-poly:{}", factors.join(";")), d)
                }
            }
        })
        .collect()
}

fn c3_talagrand() -> Outcome {
    let cfg = TalagrandConfig::default();
    let presets = random_presets(100);
    for (i, (spec, d)) in presets.iter().enumerate() {
        let l = ok(DensityField::parse(spec, *d))?;
        let r = ok(talagrand_report(&l, 4096, 1000 + i as u64, &cfg))?;
        ensure(r.passes(), || format!("{spec} (d = {d}) violated: {r:?}"))?;
        if spec.starts_with("shift") {
            ensure(r.verdict == Verdict::HoldsWithEquality, || format!("{spec} does not saturate: {r:?}"))?;
        }
    }
    let l = ok(DensityField::parse("scale:2", 1))?;
    let r = ok(talagrand_report(&l, 4096, 7, &cfg))?;
    let expected = (4.0 - 1.0 - 2.0 * 2f64.ln()) - 1.0;
    ensure((r.slack - expected).abs() <= 3.0 * r.pooled_stderr, || {
        format!("scale:2 slack {:.4} vs {expected:.4} +/- {:.4}", r.slack, r.pooled_stderr)
    })?;
    Ok(format!(
        "100 presets hold, shifts saturate; scale:2 slack {:.4} +/- {:.4} (exact {expected:.4})",
        r.slack, r.pooled_stderr
    ))
}

fn c4_gauge() -> Outcome {
    let half0 = Region::parse("halfspace:1,0", 2).unwrap();
    let r0 = ok(gauge_report(&half0, 1.0, 40_000, 11))?;
    let (mu0, q0, _) = half0.oracle(1.0).ok_or("no oracle")?;
    ensure((mu0 - 0.5).abs() < 1e-9 && ((-q0 / 2.0).exp() - (-0.25f64).exp()).abs() < 1e-9, || {
        format!("oracle at a = 0: mu {mu0}, E q^2 {q0}")
    })?;
    ensure(r0.measure_a.value <= (-q0 / 2.0).exp() + 3.0 * r0.measure_a.stderr, || format!("{r0:?}"))?;
    ensure(r0.measure_a.within(mu0, 3.0) && r0.bound.passes(), || format!("{r0:?}"))?;

    let half2 = Region::parse("halfspace:1,2", 2).unwrap();
    let r2 = ok(gauge_report(&half2, 1.0, 40_000, 12))?;
    let (mu2, q2, _) = half2.oracle(1.0).ok_or("no oracle")?;
    ensure((mu2 - normal_cdf(-2.0)).abs() < 1e-9, || format!("oracle mu(A) = {mu2}"))?;
    ensure(r2.measure_a.value <= (-q2 / 2.0).exp() + 3.0 * r2.measure_a.stderr, || format!("{r2:?}"))?;
    ensure(r2.measure_a.within(mu2, 3.0) && r2.bound.passes(), || format!("{r2:?}"))?;

    let configs = [
        ("halfspace:1,0", 2, 0.5),
        ("halfspace:1,0", 2, 1.0),
        ("halfspace:1,-1", 2, 1.5),
        ("halfspace:1,1,1", 3, 0.8),
        ("halfspace:0,1,0.5", 4, 2.0),
        ("ballc:1.5", 2, 0.5),
        ("ballc:2", 3, 1.0),
        ("ballc:1,0,2", 3, 0.7),
        ("ballc:3", 5, 0.3),
        ("halfspace:2,-1,0.3", 8, 0.25),
    ];
    for (k, (spec, d, eps)) in configs.iter().enumerate() {
        let region = ok(Region::parse(spec, *d))?;
        let r = ok(gauge_report(&region, *eps, 20_000, 20 + k as u64))?;
        ensure(r.separation.passes() && r.bound.passes(), || format!("{spec} eps {eps}: {r:?}"))?;
    }
    Ok(format!(
        "a=0: {:.4} <= {:.4}; a=2: {:.5} <= {:.4}; separation on 10 configs",
        r0.measure_a.value,
        (-q0 / 2.0).exp(),
        r2.measure_a.value,
        (-q2 / 2.0).exp()
    ))
}

fn c5_d1_flow() -> Outcome {
    let l = ok(DensityField::parse("hermite-poly:0,0.7071067811865476", 1))?;
    let cfg = D1FlowConfig {
        steps: 1000,
        start_points: 100,
        ..Default::default()
    };
    let r = ok(d1_flow_report(&l, 4096, 5, &cfg))?;
    let target = 0.5 * (2.0 / std::f64::consts::PI).sqrt();
    ensure(r.exact_lhs && r.report.passes(), || format!("{:?}", r.report))?;
    ensure(r.report.rhs.within(target, 3.0), || format!("rhs {:?} vs {target}", r.report.rhs))?;
    ensure(r.endpoint_error <= 1e-3 && r.constancy_error <= 1e-3 && !r.blow_up, || {
        format!("endpoint {:.3e}, constancy {:.3e}", r.endpoint_error, r.constancy_error)
    })?;
    Ok(format!(
        "lhs {:.4} <= rhs {:.4} +/- {:.4}; Lambda_01 = L to {:.1e}",
        r.report.lhs.value, r.report.rhs.value, r.report.rhs.stderr, r.endpoint_error
    ))
}

fn c6_ladder() -> Outcome {
    let l = ok(DensityField::parse("scale:2,2,2", 8))?;
    let r = ok(projection_ladder(&l, &[1, 2, 3, 8], 2048, 6, &LadderConfig::default()))?;
    let expected = [1.0, 2.0, 3.0, 3.0];
    for (v, e) in r.values.iter().zip(expected) {
        ensure((v - e).abs() <= 0.1 * e, || format!("levels {:?}", r.values))?;
    }
    ensure(r.is_monotone(2.0), || format!("not monotone: {:?} +/- {:?}", r.values, r.stderrs))?;
    Ok(format!("levels {:?}", r.values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()))
}

fn c7_duality_energy() -> Outcome {
    let presets = [("shift:0.7,-0.4", 2), ("scale:2,0.5", 2), ("gaussian:0.3,-0.2/2,0.5,0.5,1", 2), ("scale:2", 1)];
    let mut worst_on: f64 = 0.0;
    let mut worst_off = f64::INFINITY;
    for (k, (spec, d)) in presets.iter().enumerate() {
        let law = DensityField::parse(spec, *d).unwrap().gaussian_law().unwrap();
        let t = ok(brenier_from_standard(&law))?;
        let x = Arc::new(cloud(*d, 300, 70 + k as u64));
        let y = Arc::new(ok(x.map_points(*d, Provenance::Pushforward, |p| t.apply(p)))?);
        let coupling = ok(solve_exact(x, y, CostOrder::Two))?;
        let r = ok(duality_residual(&ok(potential_of(&t))?, &coupling, &Default::default()))?;
        worst_on = worst_on.max(r.on_support_max_abs);
        worst_off = worst_off.min(r.off_support_min);
    }
    ensure(worst_on <= 1e-9 && worst_off >= -1e-9, || format!("on {worst_on:.3e}, off {worst_off:.3e}"))?;

    // Energy identity against an independent target cloud; the 1-D exact
    // solver is the sorted matching, so n = 4096 is cheap.
    let mut worst_gap: f64 = 0.0;
    for (k, spec) in ["scale:2", "gaussian:0.5/0.25", "scale:0.5"].iter().enumerate() {
        let law = DensityField::parse(spec, 1).unwrap().gaussian_law().unwrap();
        let t = ok(brenier_from_standard(&law))?;
        let x = Arc::new(cloud(1, 4096, 80 + k as u64));
        let y = Arc::new(ok(cloud(1, 4096, 90 + k as u64).map_points(1, Provenance::Pushforward, |p| law.push(p)))?);
        let coupling = ok(solve_exact(x, y, CostOrder::Two))?;
        let e = energy_identity_check(&coupling, ok(potential_of(&t))?.phi.as_ref());
        worst_gap = worst_gap.max(e.relative_gap);
    }
    ensure(worst_gap <= 0.05, || format!("energy gap {worst_gap:.3}"))?;
    Ok(format!("on-support {worst_on:.1e}, off-support min {worst_off:.3}, energy gap {:.2}%", 100.0 * worst_gap))
}

fn quadratic(b: &[f64], d: usize) -> QuadraticPotential {
    QuadraticPotential::new(DMatrix::from_row_slice(d, d, b), DVector::zeros(d), 0.0).unwrap()
}

fn c8_monge_ampere() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, (spec, d)) in [("shift:0.6,-0.8,0.3", 3), ("scale:2", 1), ("gaussian:0.3,-0.2/2,0.5,0.5,1", 2)].iter().enumerate() {
        let l = ok(DensityField::parse(spec, *d))?;
        let t = ok(brenier_from_standard(&l.gaussian_law().unwrap()))?;
        let r = ok(jacobian_residual(&l, &t, &cloud(*d, 2000, 40 + k as u64)))?;
        ensure(r.summary.invalid_points.is_empty(), || format!("{spec}: invalid points"))?;
        worst = worst.max(r.summary.max_abs_residual);
        ensure(r.summary.det2_min >= 0.0 && r.summary.det2_max <= 1.0, || format!("{spec}: {:?}", r.summary))?;
    }
    ensure(worst <= 1e-8, || format!("residual {worst:.3e}"))?;

    // det_2 of random 1-convex Hessians, including the -I boundary.
    let mut r = rng::stream(rng::derive_seed(8, "acceptance-det2"), 0);
    let x = [0.0; 4];
    for _ in 0..500 {
        let g = DMatrix::from_fn(4, 4, |_, _| r.gen_range(-1.0..1.0));
        let sym = (&g + g.transpose()) * 0.5;
        let min = sym.clone().symmetric_eigen().eigenvalues.min();
        let h = sym + DMatrix::identity(4, 4) * (-1.0 - min + r.gen_range(0.0..0.5));
        let eig = ok(hessian_eigenvalues(&h, &x))?;
        let v = det2(&eig);
        ensure((0.0..=1.0).contains(&v), || format!("det2 {v} for eigenvalues {eig:?}"))?;
    }

    // t -> log det_2(I + t Hess phi) on a fine grid.
    let ts: Vec<f64> = (0..40).map(|k| k as f64 / 40.0).collect();
    let potentials: Vec<Arc<dyn Potential>> = vec![
        Arc::new(quadratic(&[-1.0, 0.0, 0.0, 3.0], 2)),
        Arc::new(quadratic(&[0.5, 0.4, 0.4, -0.6], 2)),
        Arc::new(FnPotential::new(2, |x| 0.8 * (x[0].cos() + x[1].cos()) + 0.1 * x[0] * x[1])),
    ];
    let c = cloud(2, 300, 48);
    for phi in &potentials {
        let rep = ok(interpolation_check(phi.as_ref(), None, &ts, &c, &InterpolationConfig::default()))?;
        ensure(rep.worst_log_det2_increase <= 1e-10, || format!("log det2 increase {:.3e}", rep.worst_log_det2_increase))?;
    }
    Ok(format!("max |Lambda (L o T) - 1| = {worst:.1e}; det2 in [0, 1]; log det2 nonincreasing"))
}

fn c9_interpolation() -> Outcome {
    let l = ok(DensityField::parse("scale:2", 1))?;
    let t = ok(brenier_from_standard(&l.gaussian_law().unwrap()))?;
    let phi = ok(potential_of(&t))?.phi;
    let c = cloud(1, 2000, 91);
    let r = ok(interpolation_check(phi.as_ref(), Some(&t), &[0.5], &c, &InterpolationConfig::default()))?;
    let residual = r.levels[0].max_residual.ok_or("no residual")?;
    ensure(residual <= 1e-9, || format!("residual {residual:.3e}"))?;

    let boundary = quadratic(&[-1.0, 0.0, 0.0, -1.0], 2);
    let ts = [0.0, 0.25, 0.5, 0.75, 0.9];
    let b = ok(interpolation_check(&boundary, None, &ts, &cloud(2, 200, 92), &InterpolationConfig::default()))?;
    for lvl in &b.levels {
        ensure(lvl.monotone && (lvl.min_monotonicity - (1.0 - lvl.t)).abs() <= 1e-12, || {
            format!("t = {}: constant {} vs {}", lvl.t, lvl.min_monotonicity, 1.0 - lvl.t)
        })?;
    }
    Ok(format!("t = 0.5 residual {residual:.1e}; boundary constant equals 1 - t at {} times", ts.len()))
}

fn c10_entropy_transport() -> Outcome {
    let u1 = DensityField::unit(1).unwrap();
    let u2 = DensityField::unit(2).unwrap();
    for (k, spec) in ["shift:0.6,0.8", "shift:-1.5,0.2", "shift:0.1"].iter().enumerate() {
        let l = ok(DensityField::parse(spec, 2))?;
        let r = ok(entropy_transport_check(&u2, &l, 4096, 100 + k as u64))?;
        ensure(r.verdict == Verdict::HoldsWithEquality, || format!("{spec}: {r:?}"))?;
    }
    let l = ok(DensityField::parse("scale:2", 1))?;
    let r = ok(entropy_transport_check(&u1, &l, 4096, 103))?;
    let expected = ((4.0 - 1.0 - 2.0 * 2f64.ln()) - 1.0) / 2.0;
    ensure(r.verdict == Verdict::Holds && (r.slack - expected).abs() <= 3.0 * r.pooled_stderr, || {
        format!("slack {:.4} vs {expected:.4} +/- {:.4}", r.slack, r.pooled_stderr)
    })?;
    Ok(format!("shifts at equality; scale:2 slack {:.4} +/- {:.4} (exact {expected:.4})", r.slack, r.pooled_stderr))
}

fn c11_submartingale() -> Outcome {
    let c3 = cloud(3, 4096, 110);
    for spec in ["quadratic:1,0.5,0,0.5,-0.5,0.2,0,0.2,2", "quadratic:-1,0,0,0,-1,0,0,0,-1", "quadratic:3,1,1,1,3,1,1,1,3"] {
        let phi = ok(ConditionedPotential::parse(spec, 3))?;
        let tr = ok(submartingale_trace(&phi, &[0, 1, 2, 3], &c3, 1e-10))?;
        let worst = tr.min_gaps.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        ensure(worst <= 1e-10, || format!("{spec}: gap {worst:.3e}"))?;
    }
    let phi = ok(ConditionedPotential::parse("abs:1", 2))?;
    let tr = ok(submartingale_trace(&phi, &[0, 1, 2], &cloud(2, 4096, 111), 1e-10))?;
    let expected = (2.0 / std::f64::consts::PI).sqrt();
    let inc = tr.mean_increments[0];
    ensure(inc.within(expected, 3.0) && tr.submartingale, || format!("increment {inc:?} vs {expected}"))?;
    Ok(format!("quadratic gaps 0; |x_1| gap {:.4} +/- {:.4} (exact {expected:.4})", inc.value, inc.stderr))
}

fn c12_polar() -> Outcome {
    let mut lines = Vec::new();
    for (k, (d, angle, shift)) in [(2, 30.0, vec![1.0, -0.5]), (3, 110.0, vec![0.2, 0.0, 2.0])].into_iter().enumerate() {
        let v = ok(LinearMap::planar(d, angle, 1.0, &shift))?;
        let f = ok(factorize(&v, 4096, 120 + k as u64))?;
        let rot = planar_rotation(d, angle);
        let eye = DMatrix::<f64>::identity(d, d);
        ensure((f.transport.matrix() - &eye).amax() <= 1e-9, || format!("T is not I + h: {}", f.transport.matrix()))?;
        let h = AffineTransport::shift(&shift);
        ensure((f.transport.offset() - h.offset()).amax() <= 1e-9, || "T has the wrong shift".into())?;
        ensure((f.rotation_matrix() - &rot).amax() <= 1e-9, || "s is not R".into())?;
        ensure(f.identity_residual <= 1e-9, || format!("identity residual {:.3e}", f.identity_residual))?;
        ensure(f.rotation_test.pass, || format!("rotation test {:?}", f.rotation_test))?;
        let alpha = RotationCandidate::new(f.rotation_matrix(), CandidateKind::Orthogonal);
        let candidates: Vec<RotationCandidate> = (0..20)
            .map(|j| RotationCandidate::new(random_orthogonal(d, 130 + k as u64, j), CandidateKind::Orthogonal))
            .collect();
        let table = ok(minimality_check(&v, &alpha, &candidates, 4096, 140 + k as u64))?;
        ensure(table.minimal, || format!("not minimal: {table:?}"))?;
        lines.push(format!("d={d} M_v(alpha) {:.3}", table.alpha.value));
    }
    Ok(format!("T = I + h, s = R recovered; {}", lines.join(", ")))
}

fn c13_reproducibility() -> Outcome {
    let configs = [
        r#"{"kind": "talagrand", "preset": "gauss-mixture:0.5,1,1/0.5,1,-1", "dim": 2, "n": 512, "seed": 1}"#,
        r#"{"kind": "talagrand", "preset": "hermite-poly:0.2,0.3", "dim": 1, "n": 2048, "seed": 2}"#,
        r#"{"kind": "gauge", "dim": 3, "n": 5000, "seed": 3, "params": {"region": "ballc:2"}}"#,
        r#"{"kind": "d1flow", "preset": "hermite-poly:0.2,0.3;0,0.25", "dim": 2, "n": 256, "seed": 4, "params": {"start_points": 8, "steps": 200}}"#,
        r#"{"kind": "ladder", "preset": "scale:2,2", "dim": 3, "n": 300, "seed": 5}"#,
        r#"{"kind": "jacobian", "preset": "gaussian:0.3,-0.2/2,0.5,0.5,1", "dim": 2, "n": 3000, "seed": 6}"#,
        r#"{"kind": "interpolation", "preset": "scale:2,0.5", "dim": 2, "n": 1500, "seed": 7}"#,
        r#"{"kind": "polar", "dim": 3, "n": 2000, "seed": 8}"#,
        r#"{"kind": "monotone", "preset": "scale:2,0.5", "dim": 2, "n": 40, "seed": 9, "params": {"cycle_budget": 20000}}"#,
        r#"{"kind": "entropy-transport", "preset": "scale:2", "dim": 1, "n": 3000, "seed": 10}"#,
        r#"{"kind": "submartingale", "dim": 4, "n": 3000, "seed": 11}"#,
    ];
    let in_pool = |threads: usize, c: &ExperimentConfig| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| execute(c).and_then(|o| o.payload_bytes()))
    };
    for text in configs {
        let c = ok(ExperimentConfig::from_json(text))?;
        let one = ok(in_pool(1, &c))?;
        let again = ok(in_pool(1, &c))?;
        let four = ok(in_pool(4, &c))?;
        ensure(one == again, || format!("{} differs between reruns", c.kind.name()))?;
        ensure(one == four, || format!("{} differs between 1 and 4 threads", c.kind.name()))?;
    }
    Ok(format!("{} configs byte-identical across reruns and 1 vs 4 threads", configs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("exact solver matches brute force", c1_exact_solver),
        ("cyclic monotonicity of optimal supports", c2_cyclic_monotone),
        ("transport-entropy inequality", c3_talagrand),
        ("gauge concentration bounds", c4_gauge),
        ("d1 flow bound and flow constancy", c5_d1_flow),
        ("projection ladder", c6_ladder),
        ("duality relations and energy identity", c7_duality_energy),
        ("Monge-Ampere residual and det2", c8_monge_ampere),
        ("displacement interpolation", c9_interpolation),
        ("entropy-transport inequality", c10_entropy_transport),
        ("conditioning submartingale", c11_submartingale),
        ("polar factorization", c12_polar),
        ("reproducibility across threads", c13_reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (title, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS [{secs:6.1}s] {title}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL [{secs:6.1}s] {title}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

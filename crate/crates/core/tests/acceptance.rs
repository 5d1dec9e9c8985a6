#![allow(clippy::needless_range_loop)]

//! Acceptance run: one PASS/FAIL line per criterion, each backed by an oracle
//! that does not go through the code path it checks.

use std::process::ExitCode;

use anchorage::algebroid::{
    anchor_apply, base_names, bracket_difference, reconstruct_from_differential, AlgebroidSpec, DifferentialOf,
    DualSection, ScaledField, Section,
};
use anchorage::expr::{indexed_names, Expr};
use anchorage::hj::hj_equivalence_check;
use anchorage::mechanics::{
    el_field, integrate_el, legendre, riemannian_spray, Lagrangian, MechanicalHamiltonian, MechanicalLagrangian,
    VelPoint,
};
use anchorage::poisson::{
    bundle_names, integrate_hamilton, poisson_bracket, BasePullback, BundleFunction, LinearFunction,
};
use anchorage::poisson::{PhaseFunction, PhasePoint};
use anchorage::random::{self, MetricKind};
use anchorage::snake::{
    calibrate_bracket_sign, charm, end_map, extremal_regular, g_bracket, horizontal_velocity, kinetic, pair_count,
    pair_index, snake_bracket_defect, triple_relation_defect, GVector, HeadCurve, SnakeConfig,
};
use anchorage::suite::{property_suite, Thresholds};
use anchorage::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

#[derive(Clone, Copy)]
enum Bound {
    Below,
    Above,
    Zero,
}

struct Part {
    label: &'static str,
    value: f64,
    threshold: f64,
    bound: Bound,
}

impl Part {
    fn below(label: &'static str, value: f64, threshold: f64) -> Self {
        Part {
            label,
            value,
            threshold,
            bound: Bound::Below,
        }
    }

    fn above(label: &'static str, value: f64, threshold: f64) -> Self {
        Part {
            label,
            value,
            threshold,
            bound: Bound::Above,
        }
    }

    fn zero(label: &'static str, value: f64) -> Self {
        Part {
            label,
            value,
            threshold: 0.0,
            bound: Bound::Zero,
        }
    }

    fn pass(&self) -> bool {
        match self.bound {
            Bound::Below => self.value < self.threshold,
            Bound::Above => self.value > self.threshold,
            Bound::Zero => self.value == 0.0,
        }
    }
}

struct Criterion {
    id: usize,
    title: &'static str,
    run: fn() -> Result<Vec<Part>>,
    /// Parts that are expected to fail, with the reason.
    known: Option<(&'static [&'static str], &'static str)>,
}

fn rng(stream: u64) -> ChaCha8Rng {
    random::stream(SEED, stream)
}

fn unit_box(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    random::point(rng, n, -1.0, 1.0)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Anchor read straight from the expression table.
fn anchor_oracle(spec: &AlgebroidSpec, x: &[f64]) -> Vec<f64> {
    spec.anchor_exprs().iter().map(|e| e.eval_at(x).unwrap()).collect()
}

/// Full `[γ·m² + α·m + β]` table filled from the stored upper entries.
fn structure_oracle(spec: &AlgebroidSpec, x: &[f64]) -> Vec<f64> {
    let m = spec.m();
    let mut c = vec![0.0; m * m * m];
    for (g, a, b, e) in spec.structure_entries() {
        let v = e.eval_at(x).unwrap();
        c[g * m * m + a * m + b] = v;
        c[g * m * m + b * m + a] = -v;
    }
    c
}

/// `ρ(s)` as a base vector.
fn anchored(spec: &AlgebroidSpec, s: &Section, x: &[f64]) -> Vec<f64> {
    let (n, m) = (spec.n(), spec.m());
    let rho = anchor_oracle(spec, x);
    let sx = s.eval_f64(x).unwrap();
    (0..n).map(|i| (0..m).map(|a| rho[i * m + a] * sx[a]).sum()).collect()
}

/// `[s1,s2]^γ = ρ(s1)s2^γ − ρ(s2)s1^γ + C^γ_{αβ} s1^α s2^β`.
fn bracket_oracle(spec: &AlgebroidSpec, s1: &Section, s2: &Section, x: &[f64]) -> Vec<f64> {
    let m = spec.m();
    let (v1, v2) = (anchored(spec, s1, x), anchored(spec, s2, x));
    let (a, b) = (s1.eval_f64(x).unwrap(), s2.eval_f64(x).unwrap());
    let c = structure_oracle(spec, x);
    (0..m)
        .map(|g| {
            let d2 = dot(&s2.components()[g].gradient_at(x).unwrap(), &v1);
            let d1 = dot(&s1.components()[g].gradient_at(x).unwrap(), &v2);
            let mut ct = 0.0;
            for al in 0..m {
                for be in 0..m {
                    ct += c[g * m * m + al * m + be] * a[al] * b[be];
                }
            }
            d2 - d1 + ct
        })
        .collect()
}

fn random_specs(rng: &mut ChaCha8Rng, count: usize) -> Vec<AlgebroidSpec> {
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=4);
            let m = rng.random_range(1..=4);
            random::polynomial_spec(rng, n, m)
        })
        .collect()
}

fn phase(text: &str, n: usize, m: usize) -> PhaseFunction {
    PhaseFunction::parse(text, n, m).unwrap()
}

fn coordinate_relations() -> Result<Vec<Part>> {
    let mut rng = rng(1);
    let (mut x_xi, mut x_x, mut xi_xi): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for spec in random_specs(&mut rng, 10) {
        let (n, m) = (spec.n(), spec.m());
        let xs: Vec<PhaseFunction> = (1..=n).map(|i| phase(&format!("x{i}"), n, m)).collect();
        let xis: Vec<PhaseFunction> = (1..=m).map(|a| phase(&format!("xi{a}"), n, m)).collect();
        for _ in 0..100 {
            let p = PhasePoint::new(unit_box(&mut rng, n), unit_box(&mut rng, m));
            let rho = anchor_oracle(&spec, &p.x);
            let c = structure_oracle(&spec, &p.x);
            for i in 0..n {
                for a in 0..m {
                    let v = poisson_bracket(&spec, &xs[i], &xis[a], &p)?;
                    x_xi = x_xi.max((v - rho[i * m + a]).abs());
                }
                for j in 0..n {
                    x_x = x_x.max(poisson_bracket(&spec, &xs[i], &xs[j], &p)?.abs());
                }
            }
            for a in 0..m {
                for b in 0..m {
                    let v = poisson_bracket(&spec, &xis[a], &xis[b], &p)?;
                    let cxi: f64 = (0..m).map(|g| c[g * m * m + a * m + b] * p.xi[g]).sum();
                    xi_xi = xi_xi.max((v + cxi).abs());
                }
            }
        }
    }
    Ok(vec![
        Part::below("|{x^i,ξ_α} − ρ^i_α|", x_xi, 1e-12),
        Part::below("|{x^i,x^j}|", x_x, 1e-13),
        Part::below("|{ξ_α,ξ_β} + C^γ_αβ ξ_γ|", xi_xi, 1e-12),
    ])
}

fn linear_correspondence() -> Result<Vec<Part>> {
    let mut rng = rng(1);
    let mut lit_lin: f64 = 0.0;
    let mut lit_pull: f64 = 0.0;
    let mut sgn_lin: f64 = 0.0;
    let mut sgn_pull: f64 = 0.0;
    for spec in random_specs(&mut rng, 10) {
        let (n, m) = (spec.n(), spec.m());
        let vars = base_names(n);
        for _ in 0..100 {
            let s1 = random::section(&mut rng, n, m);
            let s2 = random::section(&mut rng, n, m);
            let f = Expr::parse(&random::polynomial(&mut rng, &vars, 2, 2.0), &vars).unwrap();
            let p = PhasePoint::new(unit_box(&mut rng, n), unit_box(&mut rng, m));
            let phi_br = dot(&p.xi, &bracket_oracle(&spec, &s1, &s2, &p.x));
            let pb = poisson_bracket(&spec, &LinearFunction(&s1), &LinearFunction(&s2), &p)?;
            lit_lin = lit_lin.max((phi_br - pb).abs());
            sgn_lin = sgn_lin.max((phi_br + pb).abs());
            let lie = dot(&f.gradient_at(&p.x).unwrap(), &anchored(&spec, &s1, &p.x));
            let pull = poisson_bracket(&spec, &LinearFunction(&s1), &BasePullback(&f), &p)?;
            lit_pull = lit_pull.max((pull - lie).abs());
            sgn_pull = sgn_pull.max((pull + lie).abs());
        }
    }
    Ok(vec![
        Part::below("|Φ[s1,s2] − {Φs1,Φs2}|", lit_lin, 1e-10),
        Part::below("|{Φs,f∘τ} − (L_s f)∘τ|", lit_pull, 1e-10),
        Part::below("|Φ[s1,s2] + {Φs1,Φs2}|", sgn_lin, 1e-10),
        Part::below("|{Φs,f∘τ} + (L_s f)∘τ|", sgn_pull, 1e-10),
    ])
}

fn differential_round_trip() -> Result<Vec<Part>> {
    let mut rng = rng(3);
    let (mut rho_err, mut c_err): (f64, f64) = (0.0, 0.0);
    for spec in random_specs(&mut rng, 10) {
        for _ in 0..20 {
            let x = unit_box(&mut rng, spec.n());
            let r = reconstruct_from_differential(&DifferentialOf(&spec), &x)?;
            rho_err = rho_err.max(max_diff(&r.rho, &anchor_oracle(&spec, &x)));
            c_err = c_err.max(max_diff(&r.structure, &structure_oracle(&spec, &x)));
        }
    }
    Ok(vec![
        Part::below("recovered ρ", rho_err, 1e-10),
        Part::below("recovered C", c_err, 1e-10),
    ])
}

fn affine_structure() -> Result<Vec<Part>> {
    let mut rng = rng(4);
    let mut worst: f64 = 0.0;
    let mut oracle: f64 = 0.0;
    for _ in 0..5 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(2..=3);
        let vars = base_names(n);
        let rows: Vec<Vec<String>> = (0..n)
            .map(|_| (0..m).map(|_| random::polynomial(&mut rng, &vars, 2, 2.0)).collect())
            .collect();
        let mut build = || {
            let mut b = AlgebroidSpec::builder(n, m).anchor(&rows);
            for g in 0..m {
                for a in 0..m {
                    for be in a + 1..m {
                        b = b.structure(g, a, be, random::polynomial(&mut rng, &vars, 2, 2.0));
                    }
                }
            }
            b.build().unwrap()
        };
        let (sa, sb) = (build(), build());
        for _ in 0..20 {
            let s1 = random::section(&mut rng, n, m);
            let s2 = random::section(&mut rng, n, m);
            let f = Expr::parse(&random::expression(&mut rng, &vars, 3), &vars).unwrap();
            let x = unit_box(&mut rng, n);
            let fx = f.eval_at(&x).unwrap();
            let diff = bracket_difference(&sa, &sb, &s1, &s2, &x)?;
            let base: Vec<f64> = diff.iter().map(|v| fx * v).collect();
            let left = bracket_difference(&sa, &sb, &ScaledField { f: &f, s: &s1 }, &s2, &x)?;
            let right = bracket_difference(&sa, &sb, &s1, &ScaledField { f: &f, s: &s2 }, &x)?;
            worst = worst.max(max_diff(&left, &base)).max(max_diff(&right, &base));
            let (ca, cb) = (structure_oracle(&sa, &x), structure_oracle(&sb, &x));
            let (a, b) = (s1.eval_f64(&x).unwrap(), s2.eval_f64(&x).unwrap());
            let expect: Vec<f64> = (0..m)
                .map(|g| {
                    let mut acc = 0.0;
                    for al in 0..m {
                        for be in 0..m {
                            let k = g * m * m + al * m + be;
                            acc += (ca[k] - cb[k]) * a[al] * b[be];
                        }
                    }
                    acc
                })
                .collect();
            oracle = oracle.max(max_diff(&diff, &expect));
        }
    }
    Ok(vec![
        Part::below("tensoriality defect", worst, 1e-10),
        Part::below("difference vs (C_A − C_B)(s1,s2)", oracle, 1e-10),
    ])
}

fn hamiltonian_energy() -> Result<Vec<Part>> {
    let mut rng = rng(5);
    let (mut drift, mut flow): (f64, f64) = (0.0, 0.0);
    for _ in 0..3 {
        let n = rng.random_range(1..=2);
        let m = rng.random_range(1..=2);
        let spec = random::polynomial_spec(&mut rng, n, m);
        let vars = bundle_names(n, m, "xi");
        let h = phase(&random::polynomial(&mut rng, &vars, 2, 1.0), n, m);
        let f = phase(&random::polynomial(&mut rng, &vars, 2, 2.0), n, m);
        let p0 = PhasePoint::new(
            random::point(&mut rng, n, -0.5, 0.5),
            random::point(&mut rng, m, -0.5, 0.5),
        );
        let traj = integrate_hamilton(&spec, &h, &p0, 1.0, 1e-3)?;
        let split = |r: &[f64]| PhasePoint::new(r[..n].to_vec(), r[n..n + m].to_vec());
        let h0 = h.eval(&p0.x, &p0.xi)?;
        for r in &traj.rows {
            let p = split(r);
            drift = drift.max((h.eval(&p.x, &p.xi)? - h0).abs());
        }
        for k in (1..traj.len() - 1).step_by(10) {
            let (a, b) = (split(&traj.rows[k - 1]), split(&traj.rows[k + 1]));
            let dt = traj.times[k + 1] - traj.times[k - 1];
            let fd = (f.eval(&b.x, &b.xi)? - f.eval(&a.x, &a.xi)?) / dt;
            flow = flow.max((fd - poisson_bracket(&spec, &f, &h, &split(&traj.rows[k]))?).abs());
        }
    }
    Ok(vec![
        Part::below("h drift", drift, 1e-8),
        Part::below("dF/dt − {F,h}", flow, 1e-5),
    ])
}

fn legendre_push() -> Result<Vec<Part>> {
    let mut rng = rng(6);
    let mut worst: f64 = 0.0;
    for kind in [MetricKind::Flat, MetricKind::Diagonal] {
        for tangent in [true, false] {
            let spec = random::riemannian_spec(&mut rng, 2, 2, kind, tangent);
            let (n, m) = (spec.n(), spec.m());
            let vp0 = VelPoint::new(
                random::point(&mut rng, n, -0.5, 0.5),
                random::point(&mut rng, m, -0.5, 0.5),
            );
            let el = integrate_el(&spec, &MechanicalLagrangian(&spec), &vp0, 1.0, 1e-3)?;
            let p0 = legendre(&spec, &MechanicalLagrangian(&spec), &vp0)?;
            let ham = integrate_hamilton(&spec, &MechanicalHamiltonian(&spec), &p0, 1.0, 1e-3)?;
            let g = spec.metric_exprs().unwrap();
            for (a, b) in el.rows.iter().zip(&ham.rows) {
                let (x, u) = (&a[..n], &a[n..n + m]);
                let gx: Vec<f64> = g.iter().map(|e| e.eval_at(x).unwrap()).collect();
                let mut pushed = x.to_vec();
                pushed.extend((0..m).map(|al| (0..m).map(|be| gx[al * m + be] * u[be]).sum::<f64>()));
                let d: Vec<f64> = pushed.iter().zip(&b[..n + m]).map(|(p, q)| p - q).collect();
                worst = worst.max(norm(&d));
            }
        }
    }
    Ok(vec![Part::below("sup phase distance", worst, 1e-6)])
}

fn rigid_body_lagrangian(inertia: &[f64]) -> Lagrangian {
    let text = format!(
        "0.5*({:?}*u1^2 + {:?}*u2^2 + {:?}*u3^2)",
        inertia[0], inertia[1], inertia[2]
    );
    Lagrangian::parse(&text, 1, 3).unwrap()
}

fn rigid_body() -> Result<Vec<Part>> {
    let mut rng = rng(7);
    let spec = AlgebroidSpec::so3(1);
    let mut pointwise: f64 = 0.0;
    for _ in 0..10 {
        let inertia = random::point(&mut rng, 3, 1.0, 3.0);
        let l = rigid_body_lagrangian(&inertia);
        for _ in 0..10 {
            let u = unit_box(&mut rng, 3);
            let (_, ud) = el_field(&spec, &l, &VelPoint::new(vec![0.0], u.clone()))?;
            let iu: Vec<f64> = inertia.iter().zip(&u).map(|(a, b)| a * b).collect();
            let cross = [
                iu[1] * u[2] - iu[2] * u[1],
                iu[2] * u[0] - iu[0] * u[2],
                iu[0] * u[1] - iu[1] * u[0],
            ];
            let iud: Vec<f64> = inertia.iter().zip(&ud).map(|(a, b)| a * b).collect();
            pointwise = pointwise.max(max_diff(&iud, &cross));
        }
    }
    let inertia = random::point(&mut rng, 3, 1.0, 3.0);
    let l = rigid_body_lagrangian(&inertia);
    let traj = integrate_el(&spec, &l, &VelPoint::new(vec![0.0], unit_box(&mut rng, 3)), 5.0, 1e-3)?;
    let casimir = |r: &[f64]| (0..3).map(|a| (inertia[a] * r[1 + a]).powi(2)).sum::<f64>();
    let energy = |r: &[f64]| 0.5 * (0..3).map(|a| inertia[a] * r[1 + a] * r[1 + a]).sum::<f64>();
    let (c0, e0) = (casimir(&traj.rows[0]), energy(&traj.rows[0]));
    let cd = traj.rows.iter().map(|r| (casimir(r) - c0).abs()).fold(0.0, f64::max);
    let ed = traj.rows.iter().map(|r| (energy(r) - e0).abs()).fold(0.0, f64::max);
    Ok(vec![
        Part::below("I u̇ − (Iu)×u", pointwise, 1e-10),
        Part::below("‖Iu‖² drift", cd, 1e-8),
        Part::below("H_L drift", ed, 1e-8),
    ])
}

fn spray_vs_el() -> Result<Vec<Part>> {
    let mut rng = rng(8);
    let mut worst: f64 = 0.0;
    for kind in [
        MetricKind::Flat,
        MetricKind::Diagonal,
        MetricKind::General,
        MetricKind::General,
    ] {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=3);
        let tangent = rng.random_bool(0.25);
        let spec = random::riemannian_spec(&mut rng, n, m, kind, tangent);
        for _ in 0..25 {
            let vp = VelPoint::new(unit_box(&mut rng, spec.n()), unit_box(&mut rng, spec.m()));
            let (xa, a) = riemannian_spray(&spec, &vp)?;
            let (xb, b) = el_field(&spec, &MechanicalLagrangian(&spec), &vp)?;
            let rho_u = anchor_apply(&spec, &vp.x, &vp.u)?;
            worst = worst
                .max(max_diff(&a, &b))
                .max(max_diff(&xa, &xb))
                .max(max_diff(&xa, &rho_u));
        }
    }
    Ok(vec![Part::below("spray − el_field", worst, 1e-9)])
}

fn spray_homogeneity() -> Result<Vec<Part>> {
    let mut rng = rng(9);
    let mut worst: f64 = 0.0;
    for kind in [MetricKind::Flat, MetricKind::Diagonal, MetricKind::General] {
        let spec = random::riemannian_spec(&mut rng, 2, 3, kind, false);
        let m = spec.m();
        let g = spec.metric_exprs().unwrap();
        let mut terms = Vec::new();
        for a in 0..m {
            for b in 0..m {
                terms.push(format!("({})*u{}*u{}", g[a * m + b].source(), a + 1, b + 1));
            }
        }
        let l = Lagrangian::parse(&format!("0.5*({})", terms.join(" + ")), 2, m)?;
        for _ in 0..10 {
            let vp = VelPoint::new(unit_box(&mut rng, 2), unit_box(&mut rng, m));
            let (_, base) = el_field(&spec, &l, &vp)?;
            for lambda in [0.5, 2.0, 3.0] {
                let scaled = VelPoint::new(vp.x.clone(), vp.u.iter().map(|v| lambda * v).collect());
                let (_, s) = el_field(&spec, &l, &scaled)?;
                let d: Vec<f64> = s.iter().zip(&base).map(|(p, q)| p - lambda * lambda * q).collect();
                worst = worst.max(norm(&d));
            }
        }
    }
    Ok(vec![Part::below("‖u̇(λu) − λ²u̇(u)‖", worst, 1e-10)])
}

fn hj_two_way() -> Result<Vec<Part>> {
    let mut rng = rng(10);
    let (mut hj, mut lift): (f64, f64) = (0.0, 0.0);
    for _ in 0..5 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=3);
        let vars = base_names(n);
        let rows: Vec<Vec<String>> = (0..n)
            .map(|_| (0..m).map(|_| random::polynomial(&mut rng, &vars, 2, 1.0)).collect())
            .collect();
        let spec = AlgebroidSpec::builder(n, m).anchor(&rows).build()?;
        let h = phase(&random::polynomial(&mut rng, &indexed_names("xi", m), 3, 1.0), n, m);
        let w = DualSection::constant(&unit_box(&mut rng, m), n);
        let r = hj_equivalence_check(&spec, &h, &w, &random::point(&mut rng, n, -0.5, 0.5), 1.0, 1e-3)?;
        hj = hj.max(r.hj_defect);
        lift = lift.max(r.lift_deviation);
    }
    let spec = AlgebroidSpec::tangent_bundle(2);
    let h = phase("0.5*(xi1^2 + xi2^2)", 2, 2);
    let w = DualSection::parse(&["x1", "0"], 2)?;
    let (mut co, mut below_oracle, total) = (0usize, 0usize, 20usize);
    let (mut min_hj, mut min_lift) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..total {
        let x0 = loop {
            let p = unit_box(&mut rng, 2);
            if p[0].abs() > 0.2 {
                break p;
            }
        };
        let r = hj_equivalence_check(&spec, &h, &w, &x0, 1.0, 1e-3)?;
        if r.hj_defect > 1e-3 && r.lift_deviation > 1e-3 {
            co += 1;
        }
        // d(½x1²) = (x1, 0) along a base curve that starts at x0.
        if r.hj_defect < x0[0].abs() - 1e-12 {
            below_oracle += 1;
        }
        min_hj = min_hj.min(r.hj_defect);
        min_lift = min_lift.min(r.lift_deviation);
    }
    Ok(vec![
        Part::below("constant family hj_defect", hj, 1e-12),
        Part::below("constant family lift_deviation", lift, 1e-10),
        Part::above("counter family min hj_defect", min_hj, 1e-3),
        Part::above("counter family min lift_deviation", min_lift, 1e-3),
        Part::zero("counter family cases without co-failure", (total - co) as f64),
        Part::zero("counter family hj_defect below |x1(0)|", below_oracle as f64),
    ])
}

/// `E_i(u)_k = e_i − ⟨e_i, u_k⟩ u_k`.
fn e_oracle(cfg: &SnakeConfig, i: usize) -> Vec<Vec<f64>> {
    cfg.segments()
        .iter()
        .map(|u| {
            let mut v: Vec<f64> = u.iter().map(|c| -u[i] * c).collect();
            v[i] += 1.0;
            v
        })
        .collect()
}

fn snake_brackets() -> Result<Vec<Part>> {
    let mut rng = rng(11);
    let d = 4;
    let configs: Vec<SnakeConfig> = (0..20)
        .map(|_| {
            let n = rng.random_range(2..=5);
            let lengths = random::point(&mut rng, n, 0.5, 1.5);
            random::snake_config(&mut rng, d, &lengths, 1e-3)
        })
        .collect::<Result<_>>()?;
    let sign = calibrate_bracket_sign(&configs[0]);
    let disagreements = configs.iter().filter(|c| calibrate_bracket_sign(c) != sign).count();
    let (mut fd, mut analytic): (f64, f64) = (0.0, 0.0);
    for cfg in &configs {
        for i in 0..d {
            let ei = e_oracle(cfg, i);
            for j in i + 1..d {
                fd = fd.max(snake_bracket_defect(cfg, i, j, sign)?);
                // DE_j[E_i] − DE_i[E_j] = ⟨e_i,u⟩E_j − ⟨e_j,u⟩E_i, segment by segment.
                let ej = e_oracle(cfg, j);
                for (k, u) in cfg.segments().iter().enumerate() {
                    let exact: Vec<f64> = (0..d).map(|c| u[i] * ej[k][c] - u[j] * ei[k][c]).collect();
                    let claim: Vec<f64> = (0..d).map(|c| sign * (u[j] * ei[k][c] - u[i] * ej[k][c])).collect();
                    analytic = analytic.max(max_diff(&exact, &claim));
                }
            }
        }
    }
    let mut triple: f64 = 0.0;
    for cfg in &configs[..3] {
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    if j != k {
                        triple = triple.max(triple_relation_defect(cfg, i, j, k, sign)?);
                    }
                }
            }
        }
    }
    Ok(vec![
        Part::zero("configs disagreeing with the calibrated sign", disagreements as f64),
        Part::below("finite-difference bracket defect", fd, 1e-5),
        Part::below("analytic bracket vs calibrated relation", analytic, 1e-12),
        Part::below("triple relation defect", triple, 1e-4),
    ])
}

fn snake_charm() -> Result<Vec<Part>> {
    let mut rng = rng(12);
    let (d, n) = (3, 5);
    let cfg = random::snake_config(&mut rng, d, &[1.0; 5], 1e-2)?;
    let dir = random::unit_vector(&mut rng, d);
    let c0 = end_map(&cfg);
    let exprs: Vec<String> = c0
        .iter()
        .zip(&dir)
        .map(|(c, v)| format!("({c:?}) + ({:?})*t", 0.5 * v))
        .collect();
    let path = charm(&cfg, &HeadCurve::parse(&exprs)?, 1.0, 1e-3)?;
    let traj = &path.trajectory;
    let (mut track, mut unit): (f64, f64) = (0.0, 0.0);
    for (t, r) in traj.times.iter().zip(&traj.rows) {
        let mut tip = vec![0.0; d];
        for k in 0..n {
            let u = &r[k * d..(k + 1) * d];
            unit = unit.max((norm(u) - 1.0).abs());
            tip.iter_mut().zip(u).for_each(|(a, b)| *a += b);
        }
        let head: Vec<f64> = c0.iter().zip(&dir).map(|(c, v)| c + 0.5 * t * v).collect();
        track = track.max(norm(&tip.iter().zip(&head).map(|(a, b)| a - b).collect::<Vec<_>>()));
    }
    let (mut deficit, mut infeasible): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let idx = rng.random_range(0..traj.len());
        let row = &traj.rows[idx];
        let u: Vec<Vec<f64>> = (0..n).map(|k| row[k * d..(k + 1) * d].to_vec()).collect();
        let at = SnakeConfig::new(vec![1.0; n], u.clone())?;
        let z: Vec<Vec<f64>> = u
            .iter()
            .map(|uk| {
                let r = unit_box(&mut rng, d);
                let c = dot(&r, uk);
                r.iter().zip(uk).map(|(a, b)| a - c * b).collect()
            })
            .collect();
        let push: Vec<f64> = (0..d).map(|c| z.iter().map(|zk| zk[c]).sum()).collect();
        let (hz, _) = horizontal_velocity(&at, &push)?;
        let amp = rng.random_range(0.01..1.0);
        let w: Vec<Vec<f64>> = z
            .iter()
            .zip(&hz)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| amp * (p - q)).collect())
            .collect();
        for (wk, uk) in w.iter().zip(&u) {
            infeasible = infeasible.max(dot(wk, uk).abs());
        }
        let wsum: Vec<f64> = (0..d).map(|c| w.iter().map(|wk| wk[c]).sum()).collect();
        infeasible = infeasible.max(norm(&wsum));
        let v = &path.velocities[idx];
        let perturbed: Vec<Vec<f64>> = v
            .iter()
            .zip(&w)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
            .collect();
        deficit = deficit.max(kinetic(&path.lengths, v) - kinetic(&path.lengths, &perturbed));
    }
    Ok(vec![
        Part::below("tracking error", track, 1e-6),
        Part::below("unit-norm drift", unit, 1e-9),
        Part::below("perturbation feasibility defect", infeasible, 1e-10),
        Part::below("energy gained by a feasible perturbation", deficit, 1e-12),
    ])
}

fn snake_extremals() -> Result<Vec<Part>> {
    let mut rng = rng(13);
    let (d, dt) = (4, 1e-3);
    let (mut sigma, mut xi): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let s0 = unit_box(&mut rng, d);
        let sd = unit_box(&mut rng, d);
        let x0 = unit_box(&mut rng, pair_count(d));
        let xd = unit_box(&mut rng, pair_count(d));
        let t = rng.random_range(0.0..2.0);
        let at = |t: f64| extremal_regular(&s0, &sd, &x0, &xd, t).unwrap();
        let ((sa, xa), (sb, xb), (sc, xc)) = (at(t - dt), at(t), at(t + dt));
        for k in 0..d {
            sigma = sigma.max(((sa[k] - 2.0 * sb[k] + sc[k]) / (dt * dt)).abs());
        }
        for j in 0..d {
            for l in j + 1..d {
                let p = pair_index(j, l, d);
                let acc = (xa[p] - 2.0 * xb[p] + xc[p]) / (dt * dt);
                xi = xi.max((acc - sd[j] * sd[l]).abs());
            }
        }
    }
    let (_, example) = extremal_regular(&[0.0, 0.0], &[1.0, 1.0], &[0.0], &[0.0], 2.0)?;
    Ok(vec![
        Part::below("|σ̈|", sigma, 1e-6),
        Part::below("|ξ̈ − σ̇σ̇ᵀ|", xi, 1e-6),
        Part::zero("|ξ_12(2) − 2|", (example[0] - 2.0).abs()),
    ])
}

fn flat(g: &GVector) -> Vec<f64> {
    [g.sigma.clone(), g.xi.clone()].concat()
}

fn g_algebra() -> Result<Vec<Part>> {
    let mut rng = rng(14);
    let d = 6;
    let mut jacobi: f64 = 0.0;
    for _ in 0..1000 {
        let a = random::gvector(&mut rng, d);
        let b = random::gvector(&mut rng, d);
        let c = random::gvector(&mut rng, d);
        let terms = [
            flat(&g_bracket(&a, &g_bracket(&b, &c)?)?),
            flat(&g_bracket(&b, &g_bracket(&c, &a)?)?),
            flat(&g_bracket(&c, &g_bracket(&a, &b)?)?),
        ];
        for k in 0..terms[0].len() {
            jacobi = jacobi.max((terms[0][k] + terms[1][k] + terms[2][k]).abs());
        }
    }
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let combo = |parts: &[(f64, GVector)]| {
        let mut out = vec![0.0; d + pair_count(d)];
        for (s, g) in parts {
            out.iter_mut().zip(flat(g)).for_each(|(o, v)| *o += s * v);
        }
        out
    };
    let (eps, om) = (|i| GVector::epsilon(d, i), |i, j| GVector::omega(d, i, j));
    let mut table: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let got = flat(&g_bracket(&eps(i), &eps(j))?);
            table = table.max(max_diff(&got, &combo(&[(1.0, om(i, j))])));
            for k in 0..d {
                let got = flat(&g_bracket(&eps(i), &om(j, k))?);
                let want = combo(&[(delta(i, j), eps(k)), (-delta(i, k), eps(j))]);
                table = table.max(max_diff(&got, &want));
                for l in 0..d {
                    let got = flat(&g_bracket(&om(i, j), &om(k, l))?);
                    let want = combo(&[
                        (delta(i, l), om(j, k)),
                        (delta(j, k), om(i, l)),
                        (-delta(i, k), om(j, l)),
                        (-delta(j, l), om(i, k)),
                    ]);
                    table = table.max(max_diff(&got, &want));
                }
            }
        }
    }
    Ok(vec![
        Part::below("Jacobi defect", jacobi, 1e-12),
        Part::below("basis relations", table, 1e-15),
    ])
}

/// Richardson-extrapolated central difference of `f` along coordinate `i`.
fn fd_partial(e: &Expr, x: &[f64], i: usize) -> f64 {
    let central = |h: f64| {
        let (mut p, mut m) = (x.to_vec(), x.to_vec());
        p[i] += h;
        m[i] -= h;
        (e.eval_at(&p).unwrap() - e.eval_at(&m).unwrap()) / (2.0 * h)
    };
    let h = 1e-3;
    (4.0 * central(h / 2.0) - central(h)) / 3.0
}

fn seeded_artifacts() -> Result<Vec<Vec<u8>>> {
    let mut rng = rng(15);
    let spec = random::polynomial_spec(&mut rng, 2, 2);
    let h = phase(&random::polynomial(&mut rng, &bundle_names(2, 2, "xi"), 2, 1.0), 2, 2);
    let p0 = PhasePoint::new(
        random::point(&mut rng, 2, -0.5, 0.5),
        random::point(&mut rng, 2, -0.5, 0.5),
    );
    let ham = integrate_hamilton(&spec, &h, &p0, 0.5, 1e-3)?.to_csv()?;
    let cfg = random::snake_config(&mut rng, 3, &[1.0; 4], 1e-2)?;
    let c0 = end_map(&cfg);
    let head: Vec<String> = c0.iter().map(|c| format!("({c:?}) + 0.1*t")).collect();
    let snake = charm(&cfg, &HeadCurve::parse(&head)?, 0.5, 1e-3)?.trajectory.to_csv()?;
    let tb = AlgebroidSpec::tangent_bundle(2);
    let hj = hj_equivalence_check(
        &tb,
        &phase("0.5*(xi1^2 + xi2^2)", 2, 2),
        &DualSection::parse(&["x1", "0"], 2)?,
        &[0.5, 0.1],
        0.5,
        1e-3,
    )?;
    let hj = serde_json::to_string_pretty(&hj).unwrap();
    let suite = property_suite(7, &Thresholds::default()).to_json()?;
    Ok([ham, snake, hj, suite].into_iter().map(String::into_bytes).collect())
}

fn parser_and_determinism() -> Result<Vec<Part>> {
    let mut rng = rng(16);
    let vars = base_names(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let e = Expr::parse(&random::expression(&mut rng, &vars, 4), &vars).unwrap();
        let x = unit_box(&mut rng, 3);
        let grad = e.gradient_at(&x).unwrap();
        for (i, g) in grad.iter().enumerate() {
            let fd = fd_partial(&e, &x, i);
            worst = worst.max((g - fd).abs() / g.abs().max(1.0));
        }
    }
    let (a, b) = (seeded_artifacts()?, seeded_artifacts()?);
    let differing = a.iter().zip(&b).filter(|(p, q)| p != q).count();
    Ok(vec![
        Part::below("derivative vs finite differences (relative)", worst, 1e-6),
        Part::zero("artifacts differing across seeded runs", differing as f64),
    ])
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "coordinate Poisson relations",
        run: coordinate_relations,
        known: None,
    },
    Criterion {
        id: 2,
        title: "linear functions and the bracket",
        run: linear_correspondence,
        known: Some((
            &["|Φ[s1,s2] − {Φs1,Φs2}|", "|{Φs,f∘τ} − (L_s f)∘τ|"],
            "the coordinate relations of criterion 1 force {Φs1,Φs2} = −Φ[s1,s2] and {Φs, f∘τ} = −(L_s f)∘τ",
        )),
    },
    Criterion {
        id: 3,
        title: "differential round trip",
        run: differential_round_trip,
        known: None,
    },
    Criterion {
        id: 4,
        title: "affine structure of brackets",
        run: affine_structure,
        known: None,
    },
    Criterion {
        id: 5,
        title: "Hamiltonian energy and flow",
        run: hamiltonian_energy,
        known: None,
    },
    Criterion {
        id: 6,
        title: "Euler–Lagrange vs Hamilton",
        run: legendre_push,
        known: None,
    },
    Criterion {
        id: 7,
        title: "rigid body",
        run: rigid_body,
        known: None,
    },
    Criterion {
        id: 8,
        title: "Riemannian spray",
        run: spray_vs_el,
        known: None,
    },
    Criterion {
        id: 9,
        title: "spray homogeneity",
        run: spray_homogeneity,
        known: None,
    },
    Criterion {
        id: 10,
        title: "Hamilton–Jacobi two-way check",
        run: hj_two_way,
        known: None,
    },
    Criterion {
        id: 11,
        title: "snake bracket relations",
        run: snake_brackets,
        known: None,
    },
    Criterion {
        id: 12,
        title: "snake charm",
        run: snake_charm,
        known: None,
    },
    Criterion {
        id: 13,
        title: "snake extremals",
        run: snake_extremals,
        known: None,
    },
    Criterion {
        id: 14,
        title: "coefficient algebra",
        run: g_algebra,
        known: None,
    },
    Criterion {
        id: 15,
        title: "differentiation and determinism",
        run: parser_and_determinism,
        known: None,
    },
];

fn main() -> ExitCode {
    let results: Vec<Result<Vec<Part>>> = std::thread::scope(|s| {
        let handles: Vec<_> = CRITERIA.iter().map(|c| s.spawn(c.run)).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("criterion panicked"))
            .collect()
    });
    let mut ok = true;
    for (c, res) in CRITERIA.iter().zip(results) {
        let parts = match res {
            Ok(p) => p,
            Err(e) => {
                println!("FAIL  {:>2}. {}: error: {e}", c.id, c.title);
                ok = false;
                continue;
            }
        };
        let pass = parts.iter().all(Part::pass);
        println!("{}  {:>2}. {}", if pass { "PASS" } else { "FAIL" }, c.id, c.title);
        for p in &parts {
            let need = match p.bound {
                Bound::Below => format!("< {:.0e}", p.threshold),
                Bound::Above => format!("> {:.0e}", p.threshold),
                Bound::Zero => "= 0".into(),
            };
            let mark = if p.pass() { "ok " } else { "BAD" };
            println!("        {mark} {}: {:.3e} (need {need})", p.label, p.value);
        }
        match c.known {
            None => ok &= pass,
            Some((labels, reason)) => {
                let as_known = parts.iter().all(|p| p.pass() != labels.contains(&p.label));
                if as_known {
                    println!("        known failure: {reason}");
                } else {
                    println!("        known failure did not reproduce as recorded");
                    ok = false;
                }
            }
        }
    }
    if ok {
        println!("acceptance: all criteria met apart from recorded known failures");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected result");
        ExitCode::FAILURE
    }
}

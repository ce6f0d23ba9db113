//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the libtest
//! harness so the lines always reach the output.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use harmap_core::demos::{demo_grid, grassmann_demo, singular_curve, sphere_demo, uniton_pairs};
use harmap_core::dpw::{
    alpha_prime, extended_solution, harmonic_map, maurer_cartan, verify_extended_solution,
    verify_harmonic, ExtendedSolution, PipelineOptions,
};
use harmap_core::dressing::{
    completion_limit_experiment, dress_plus, sequence_converges, DEFAULT_A_SEQUENCE,
};
use harmap_core::grassmann::{
    add_uniton_unchecked, adjoint_duality_defect, backward_uniton, cartan_embed, cartan_invert,
    derivative_identity_check, finite_type_gauss_theorem, gauss_bundle, involution_defect,
    uniton_theorem, Direction, GAUSS_RANK_TOL,
};
use harmap_core::grid::{tabulate, Field, Grid, SubbundleField, FD_MARGIN};
use harmap_core::iwasawa::{iwasawa_factorize, iwasawa_with, IwasawaOptions};
use harmap_core::matrix::{c64, identity, matrix_exp, unit, ComplexMatrix, C64};
use harmap_core::potential::{gauge_action, GaugeMap, PolyLoop, Potential};
use harmap_core::LaurentLoop;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail, with the reason recorded in the decisions ledger.
const DOCUMENTED_FAILURES: &[u32] = &[9];

struct Line {
    id: u32,
    pass: bool,
    text: String,
}

fn line(id: u32, checks: &[(&str, f64, bool)]) -> Line {
    let pass = checks.iter().all(|c| c.2);
    let text = checks
        .iter()
        .map(|(name, v, ok)| format!("{name} = {v:.3e}{}", if *ok { "" } else { " (!)" }))
        .collect::<Vec<_>>()
        .join(", ");
    Line { id, pass, text }
}

fn below(name: &'static str, v: f64, tol: f64) -> (&'static str, f64, bool) {
    (name, v, v < tol)
}

fn above(name: &'static str, v: f64, tol: f64) -> (&'static str, f64, bool) {
    (name, v, v > tol)
}

fn scalar_exp_loop(f: impl Fn(C64) -> C64, trunc: usize) -> LaurentLoop {
    let s = 256;
    let vals: Vec<C64> = (0..s)
        .map(|j| f(C64::from_polar(1.0, 2.0 * PI * j as f64 / s as f64)).exp())
        .collect();
    let coeffs = (-40..=40)
        .map(|k: i32| {
            let c: C64 = vals
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    v * C64::from_polar(1.0, -2.0 * PI * (k as f64) * j as f64 / s as f64)
                })
                .sum();
            ComplexMatrix::from_element(1, 1, c / s as f64)
        })
        .collect();
    LaurentLoop::new(1, -40, coeffs, trunc).unwrap().trim(1e-18)
}

fn sup_on_circle(a: &LaurentLoop, b: &LaurentLoop) -> f64 {
    (0..64)
        .map(|j| {
            let lam = C64::from_polar(1.0, 2.0 * PI * (j as f64 + 0.25) / 64.0);
            (a.eval(lam).unwrap() - b.eval(lam).unwrap()).norm()
        })
        .fold(0.0, f64::max)
}

fn random_loop(rng: &mut ChaCha8Rng, n: usize, bw: i32) -> LaurentLoop {
    let coeffs = (-bw..=bw)
        .map(|k| {
            let mut m = ComplexMatrix::from_fn(n, n, |_, _| {
                c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            m *= c64(0.25 * 0.5f64.powi(k.abs()) / n.max(2) as f64, 0.0);
            if k == 0 {
                m += identity(n);
            }
            m
        })
        .collect();
    LaurentLoop::new(n, -bw, coeffs, 32).unwrap()
}

fn random_gauge(rng: &mut ChaCha8Rng, n: usize) -> PolyLoop {
    let terms = (0..=2)
        .map(|j| {
            let coeffs = (0..=2)
                .map(|_| {
                    ComplexMatrix::from_fn(n, n, |_, _| {
                        c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    }) * c64(0.08, 0.0)
                })
                .collect();
            let mut l = LaurentLoop::new(n, 0, coeffs, 32).unwrap();
            if j == 0 {
                l = l.add(&LaurentLoop::identity(n, 32));
            }
            l
        })
        .collect();
    PolyLoop::new(terms).unwrap()
}

fn alpha_check(ext: &ExtendedSolution, mu: &Potential) -> f64 {
    let ap = alpha_prime(&ext.b, mu).unwrap();
    let g = ext.phi.grid;
    harmap_core::grid::Stat::over(&g, FD_MARGIN, |i, j| {
        (maurer_cartan(&ext.phi, i, j).0.coeff(0) - ap.at(i, j)).norm()
    })
    .max
}

fn criterion_1() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut res, mut unit_based, mut purity): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..50 {
        let n = rng.gen_range(1..=4);
        let bw = rng.gen_range(1..=8);
        let g = random_loop(&mut rng, n, bw);
        let it = iwasawa_with(&g, &IwasawaOptions::default()).unwrap();
        res = res.max(sup_on_circle(&g, &it.phi.mul(&it.b).unwrap()));
        unit_based = unit_based
            .max(it.phi.unitary_circle_defect(64))
            .max(it.phi.based_defect());
        purity = purity
            .max(it.b.mass_below(0))
            .max(it.plus_defect / g.l1_norm().max(1.0));
    }
    let a = c64(0.7, -0.4);
    let (phi, b) = iwasawa_factorize(&scalar_exp_loop(|l| a / l, 48), 48).unwrap();
    let abelian = sup_on_circle(
        &phi,
        &scalar_exp_loop(|l| a / l - a.conj() * l + a.conj() - a, 48),
    )
    .max(sup_on_circle(
        &b,
        &scalar_exp_loop(|l| a.conj() * l + a - a.conj(), 48),
    ));
    line(
        1,
        &[
            below("round trip", res, 1e-8),
            below("unitary/based", unit_based, 1e-9),
            below("plus purity", purity, 1e-10),
            below("abelian", abelian, 1e-10),
        ],
    )
}

struct Shared {
    sphere: ExtendedSolution,
    grassmann: ExtendedSolution,
}

fn criteria_2_3_5(shared: &Shared) -> Vec<Line> {
    let grid = demo_grid();
    let sphere_mu = sphere_demo().potential();
    let r = verify_extended_solution(&shared.sphere.phi);
    let (mut support, mut structural) = (r.support.max, r.structural.max);
    let mut alpha: f64 = alpha_check(&shared.sphere, &sphere_mu);
    let mut harmonic_uniton: f64 = 0.0;
    let (mut dist, mut conds, mut closure): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for pair in uniton_pairs().unwrap() {
        let th = uniton_theorem(&pair.mu, &pair.frame, &grid, &PipelineOptions::default()).unwrap();
        let gauged_mu =
            gauge_action(&GaugeMap::Uniton(pair.frame.clone()), &pair.mu, &grid).unwrap();
        let r = verify_extended_solution(&th.gauged.phi);
        support = support.max(r.support.max);
        structural = structural.max(r.structural.max);
        alpha = alpha.max(alpha_check(&th.gauged, &gauged_mu));
        if pair.name == "finite_type_e13" {
            harmonic_uniton = verify_harmonic(&harmonic_map(&th.gauged.phi)).unwrap().max;
        }
        dist = dist.max(th.distance.max);
        conds = conds
            .max(th.conditions.cond_a.max)
            .max(th.conditions.cond_b.max);
        closure = closure
            .max(th.converse_closure.max)
            .max(th.converse_recovery.max);
    }
    let harmonic_sphere = verify_harmonic(&harmonic_map(&shared.sphere.phi))
        .unwrap()
        .max;
    let g = Grid::centered(0.5, 17);
    let x = unit(2, 0, 1) - unit(2, 1, 0);
    let control = Field {
        grid: g,
        values: g
            .points()
            .map(|(_, _, z)| matrix_exp(&(&x * c64(z.norm_sqr(), 0.0))))
            .collect(),
    };
    let negative = verify_harmonic(&control).unwrap().max;
    vec![
        line(
            2,
            &[
                below("support", support, 1e-5),
                below("structural", structural, 1e-5),
                below("alpha'", alpha, 1e-6),
            ],
        ),
        line(
            3,
            &[
                below("sphere", harmonic_sphere, 1e-4),
                below("uniton demo", harmonic_uniton, 1e-4),
                above("control", negative, 1e-2),
            ],
        ),
        line(
            5,
            &[
                below("distance", dist, 1e-6),
                below("conditions", conds, 1e-6),
                below("converse", closure, 1e-6),
            ],
        ),
    ]
}

fn criterion_4() -> Line {
    let grid = Grid::centered(0.5, 9);
    let mu = sphere_demo().potential();
    let opts = PipelineOptions::default();
    let base = extended_solution(&mu, &grid, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let h = random_gauge(&mut rng, 2);
        let dressed = dress_plus(
            &h.eval(c64(0.0, 0.0)),
            &base.phi,
            &IwasawaOptions::default(),
        )
        .unwrap();
        let gauged = gauge_action(&GaugeMap::plus(h, 1e-12).unwrap(), &mu, &grid).unwrap();
        let direct = extended_solution(&gauged, &grid, &opts).unwrap();
        worst = worst.max(dressed.distance(&direct.phi, 0).max);
    }
    line(4, &[below("distance", worst, 1e-6)])
}

fn criteria_6_7(shared: &Shared) -> Vec<Line> {
    let (mut square, mut round): (f64, f64) = (0.0, 0.0);
    let (mut derivative, mut duality): (f64, f64) = (0.0, 0.0);
    let mut uniton_gap = f64::NAN;
    for (ft, ext) in [
        (sphere_demo(), &shared.sphere),
        (grassmann_demo(), &shared.grassmann),
    ] {
        let q0 = ft.q0.clone().unwrap();
        let phi = harmonic_map(&ext.phi);
        square = square.max(involution_defect(&phi, &q0).max);
        let psi = cartan_invert(&phi, &q0, 1e-7).unwrap();
        let again = cartan_embed(&psi, &q0).unwrap();
        round = round.max(
            cartan_invert(&again, &q0, 1e-9)
                .unwrap()
                .distance(&psi, 0)
                .max,
        );
        derivative = derivative.max(derivative_identity_check(&psi, &phi).unwrap().max);
        duality = duality.max(adjoint_duality_defect(&psi).max);
        if q0.nrows() == 3 {
            let g = gauss_bundle(&psi, Direction::Backward, GAUSS_RANK_TOL).unwrap();
            let ell = backward_uniton(&psi, GAUSS_RANK_TOL).unwrap();
            let added = add_uniton_unchecked(&ext.phi, &ell, None).unwrap();
            let tilde = cartan_invert(&harmonic_map(&added), &q0, 1e-7).unwrap();
            uniton_gap = tilde.distance(&g.bundle, g.margin).max;
        }
    }
    vec![
        line(
            6,
            &[
                below("(Q0 phi)^2 - I", square, 1e-7),
                below("round trip", round, 1e-12),
            ],
        ),
        line(
            7,
            &[
                below("derivative identity", derivative, 1e-5),
                below("duality", duality, 1e-8),
                below("backward uniton", uniton_gap, 1e-5),
            ],
        ),
    ]
}

fn criterion_8() -> Line {
    let th = finite_type_gauss_theorem(
        &sphere_demo(),
        &demo_grid(),
        &PipelineOptions::default(),
        1e-7,
    )
    .unwrap();
    line(
        8,
        &[
            below("distance", th.distance.max, 1e-5),
            below("fundamental forms", th.forms_sum.max, 1e-5),
        ],
    )
}

fn criterion_9() -> Line {
    let grid = Grid::centered(0.5, 17);
    let ft = grassmann_demo();
    let v = ft.ker_eta().unwrap();
    let rep = completion_limit_experiment(
        &ft.potential(),
        &v,
        &DEFAULT_A_SEQUENCE,
        &grid,
        &PipelineOptions::default(),
    )
    .unwrap();
    let col = |f: fn(&harmap_core::dressing::CompletionRow) -> f64| {
        rep.rows.iter().map(f).collect::<Vec<_>>()
    };
    let (d, big) = (col(|r| r.delta), col(|r| r.big_delta));
    let ratio = |v: &[f64]| v[v.len() - 1] / v[0];
    let mut l = line(
        9,
        &[
            below("delta ratio", ratio(&d), 1e-1),
            below("Delta ratio", ratio(&big), 1e-1),
        ],
    );
    l.pass = sequence_converges(&d) && sequence_converges(&big);
    l.text += &format!("; rows {}", serde_json::to_string(&rep.rows).unwrap());
    l
}

fn criterion_10(shared: &Shared) -> Line {
    let grid = demo_grid();
    let ft = sphere_demo();
    let psi = cartan_invert(
        &harmonic_map(&shared.sphere.phi),
        ft.q0.as_ref().unwrap(),
        1e-7,
    )
    .unwrap();
    let curve = singular_curve().unwrap();
    let delta = tabulate(grid, |_, _, z| curve.projection_jet(z).unwrap().pi);
    let sum = SubbundleField::from_projections(
        grid,
        2,
        psi.projections
            .iter()
            .zip(&delta.values)
            .map(|(a, b)| {
                let mut out = ComplexMatrix::zeros(4, 4);
                out.view_mut((0, 0), (2, 2)).copy_from(a);
                out.view_mut((2, 2), (2, 2)).copy_from(b);
                out
            })
            .collect(),
    );
    let g = gauss_bundle(&sum, Direction::Forward, GAUSS_RANK_TOL).unwrap();
    let clean = gauss_bundle(&psi, Direction::Forward, GAUSS_RANK_TOL).unwrap();
    let flagged = g.rank_drops.contains(&grid.anchor());
    Line {
        id: 10,
        pass: flagged && clean.rank_drops.is_empty(),
        text: format!(
            "rank drop flagged at z = 0: {flagged}, flagged points {}, clean demo flags {}",
            g.rank_drops.len(),
            clean.rank_drops.len()
        ),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let opts = PipelineOptions::default();
    let shared = Shared {
        sphere: extended_solution(&sphere_demo().potential(), &demo_grid(), &opts).unwrap(),
        grassmann: extended_solution(&grassmann_demo().potential(), &demo_grid(), &opts).unwrap(),
    };
    let mut lines = vec![criterion_1()];
    lines.extend(criteria_2_3_5(&shared));
    lines.push(criterion_4());
    lines.extend(criteria_6_7(&shared));
    lines.push(criterion_8());
    lines.push(criterion_9());
    lines.push(criterion_10(&shared));
    lines.sort_by_key(|l| l.id);
    let mut unexpected = 0;
    for l in &lines {
        let documented = DOCUMENTED_FAILURES.contains(&l.id);
        let tag = if l.pass { "PASS" } else { "FAIL" };
        let note = if !l.pass && documented {
            " [documented in decisions ledger]"
        } else {
            ""
        };
        println!("{tag} criterion {}: {}{note}", l.id, l.text);
        if !l.pass && !documented {
            unexpected += 1;
        }
    }
    println!("acceptance finished in {:.1?}", start.elapsed());
    if unexpected > 0 {
        println!("{unexpected} criteria failed unexpectedly");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

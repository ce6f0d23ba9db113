use std::path::Path;

use harmap_core::dpw::{
    extended_solution, harmonic_map, verify_extended_solution, verify_harmonic, PipelineOptions,
};
use harmap_core::dressing::{
    completion_limit_experiment, dress_extended, dress_plus, residue_defect, sequence_converges,
    CompletionRow, SimpleFactor, DEFAULT_A_SEQUENCE,
};
use harmap_core::grassmann::{
    adjoint_duality_defect, derivative_identity_check, finite_type_gauss_theorem, gauss_iterate,
    uniton_theorem, GAUSS_RANK_TOL,
};
use harmap_core::grid::{Grid, LoopField, Stat};
use harmap_core::iwasawa::IwasawaOptions;
use harmap_core::potential::{gauge_action, BuiltPotential, GaugeMap, PolyFrame, PolyLoop};
use harmap_core::{c64, ComplexMatrix, Error, LaurentLoop};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{CompleteBlock, DressBlock, ExperimentConfig, GaussBlock, Tolerances};

pub enum Failure {
    Config(String),
    Numerical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Numerical(e)
    }
}

fn config<T>(r: Result<T, impl std::fmt::Display>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Config(e.to_string()))
}

/// Files to write, in order, and whether every threshold was met.
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub passed: bool,
}

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub seed: u64,
    pub base_dir: &'a Path,
}

impl Context<'_> {
    fn tol(&self) -> Tolerances {
        self.cfg.tolerances
    }

    fn grid(&self) -> Grid {
        self.cfg.grid
    }

    fn potential(&self) -> Result<BuiltPotential, Failure> {
        let spec = self
            .cfg
            .potential
            .as_ref()
            .ok_or_else(|| Failure::Config("missing \"potential\"".into()))?;
        let built = config(spec.build(self.cfg.trunc))?;
        if built.potential.n() != self.cfg.n {
            return Err(Failure::Config(format!(
                "potential has n = {}, config says {}",
                built.potential.n(),
                self.cfg.n
            )));
        }
        Ok(built)
    }

    fn matrix(&self, what: &str, m: &ComplexMatrix) -> Result<(), Failure> {
        if m.nrows() != self.cfg.n || m.ncols() > self.cfg.n {
            return Err(Failure::Config(format!(
                "{what} must have {} rows and at most as many columns",
                self.cfg.n
            )));
        }
        Ok(())
    }
}

struct Report {
    command: &'static str,
    checks: Map<String, Value>,
    details: Map<String, Value>,
    passed: bool,
}

impl Report {
    fn new(command: &'static str) -> Report {
        Report {
            command,
            checks: Map::new(),
            details: Map::new(),
            passed: true,
        }
    }

    fn check(&mut self, name: &str, value: f64, threshold: f64) {
        let ok = value < threshold;
        self.passed &= ok;
        self.checks.insert(
            name.into(),
            json!({ "value": value, "threshold": threshold, "passed": ok }),
        );
    }

    fn stat(&mut self, name: &str, s: Stat, threshold: f64) {
        self.check(name, s.max, threshold);
        self.detail(name, &s);
    }

    fn detail(&mut self, name: &str, v: &impl Serialize) {
        self.details.insert(
            name.into(),
            serde_json::to_value(v).expect("report values serialize"),
        );
    }

    fn finish(self, ctx: &Context, mut files: Vec<(String, String)>) -> Outcome {
        let cfg = ctx.cfg;
        let report = json!({
            "command": self.command,
            "schema": crate::config::CONFIG_SCHEMA,
            "n": cfg.n,
            "grid": cfg.grid,
            "trunc": cfg.trunc,
            "checks": self.checks,
            "details": self.details,
            "passed": self.passed,
        });
        let text = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
        files.push(("report.json".into(), text));
        Outcome {
            files,
            passed: self.passed,
        }
    }
}

fn opts() -> PipelineOptions {
    PipelineOptions::default()
}

fn unitary_stat(phi: &LoopField) -> Stat {
    Stat::over(&phi.grid, 0, |i, j| phi.at(i, j).unitary_circle_defect(64))
}

pub fn run(ctx: &Context) -> Result<Outcome, Failure> {
    let built = ctx.potential()?;
    let (tol, grid) = (ctx.tol(), ctx.grid());
    let ext = extended_solution(&built.potential, &grid, &opts())?;
    let phi = harmonic_map(&ext.phi);
    let mut r = Report::new("run");
    r.check(
        "extended",
        verify_extended_solution(&ext.phi).worst(),
        tol.extended,
    );
    r.detail("extended_report", &verify_extended_solution(&ext.phi));
    r.stat("harmonic", verify_harmonic(&phi)?, tol.harmonic);
    r.check("reconstruction", ext.reconstruction, tol.membership);
    r.check("unitary", ext.unitary_defect, tol.membership);
    r.check("based", ext.based_defect, tol.membership);
    r.check("holonomy", ext.holonomy_defect, tol.membership);
    r.stat("phi_unitary", phi.unitary_defect(), tol.membership);
    if let Some(q0) = built.finite_type.as_ref().and_then(|ft| ft.q0.as_ref()) {
        r.stat(
            "involution",
            harmap_core::grassmann::involution_defect(&phi, q0),
            tol.identity,
        );
    }
    r.detail("integration_method", &ext.integration_method);
    let files = vec![
        ("psi.json".into(), ext.psi.to_json()),
        ("phi.json".into(), ext.phi.to_json()),
        ("b.json".into(), ext.b.to_json()),
        ("phi_map.csv".into(), phi.to_csv()),
    ];
    Ok(r.finish(ctx, files))
}

pub fn uniton(ctx: &Context) -> Result<Outcome, Failure> {
    let built = ctx.potential()?;
    let block = ctx
        .cfg
        .uniton
        .as_ref()
        .ok_or_else(|| Failure::Config("missing \"uniton\" block".into()))?;
    let terms: Vec<ComplexMatrix> = block.frame.iter().map(|m| m.0.clone()).collect();
    for t in &terms {
        ctx.matrix("uniton.frame terms", t)?;
    }
    let frame = config(PolyFrame::new(terms))?;
    let (tol, grid) = (ctx.tol(), ctx.grid());
    let th = uniton_theorem(&built.potential, &frame, &grid, &opts())?;
    let mut r = Report::new("uniton");
    r.stat("distance", th.distance, tol.identity);
    r.stat("converse_closure", th.converse_closure, tol.identity);
    r.stat("converse_recovery", th.converse_recovery, tol.identity);
    r.stat("admissibility", th.converse.admissibility, tol.identity);
    r.stat("condition_a", th.conditions.cond_a, tol.extended);
    r.stat("condition_b", th.conditions.cond_b, tol.extended);
    r.stat("dbar_defect", th.converse.dbar_defect, tol.extended);
    r.check(
        "added_extended",
        verify_extended_solution(&th.added).worst(),
        tol.extended,
    );
    let files = vec![
        ("phi_gauged.json".into(), th.gauged.phi.to_json()),
        ("phi_added.json".into(), th.added.to_json()),
        ("uniton_bundle.csv".into(), th.ell_hat.to_csv()),
    ];
    Ok(r.finish(ctx, files))
}

pub fn gauss(ctx: &Context) -> Result<Outcome, Failure> {
    let built = ctx.potential()?;
    let ft = built
        .finite_type
        .filter(|ft| ft.q0.is_some())
        .ok_or_else(|| Failure::Config("gauss needs a finite-type potential with Q0".into()))?;
    let block = ctx.cfg.gauss.clone().unwrap_or_default();
    if block.steps == 0 {
        return Err(Failure::Config("gauss.steps must be positive".into()));
    }
    let (tol, grid) = (ctx.tol(), ctx.grid());
    let th = finite_type_gauss_theorem(&ft, &grid, &opts(), tol.identity)?;
    let iterates = gauss_iterate(&th.psi, block.direction, block.steps, GAUSS_RANK_TOL)?;
    let phi = harmonic_map(&th.base.phi);
    let mut r = Report::new("gauss");
    r.stat("theorem_distance", th.distance, tol.extended);
    r.stat("forms_sum", th.forms_sum, tol.extended);
    r.stat(
        "derivative_identity",
        derivative_identity_check(&th.psi, &phi)?,
        tol.extended,
    );
    r.stat(
        "adjoint_duality",
        adjoint_duality_defect(&th.psi),
        tol.identity,
    );
    r.stat("involution", th.involution, tol.identity);
    let GaussBlock { direction, steps } = block;
    let summary: Vec<Value> = iterates
        .iter()
        .enumerate()
        .map(|(k, g)| {
            json!({
                "step": k + 1,
                "generic_rank": g.generic_rank,
                "rank_drops": g.rank_drops,
                "min_sigma": g.min_sigma,
                "margin": g.margin,
            })
        })
        .collect();
    r.detail("direction", &direction);
    r.detail("steps", &steps);
    r.detail("iterates", &summary);
    r.detail("backward_rank", &th.gauss.generic_rank);
    let mut files = vec![("psi.csv".to_string(), th.psi.to_csv())];
    files.extend(
        iterates
            .iter()
            .enumerate()
            .map(|(k, g)| (format!("gauss_{}.csv", k + 1), g.bundle.to_csv())),
    );
    Ok(r.finish(ctx, files))
}

/// `h(z) = I + Σ_{j,k ≤ 2} z^j λ^k C_{jk}` with entries of `C_{jk}` in `[−0.08, 0.08]²`.
fn random_gauge(seed: u64, n: usize, trunc: usize) -> Result<PolyLoop, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = (0..=2)
        .map(|j| {
            let coeffs = (0..=2)
                .map(|_| {
                    ComplexMatrix::from_fn(n, n, |_, _| {
                        c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    }) * c64(0.08, 0.0)
                })
                .collect();
            let l = LaurentLoop::new(n, 0, coeffs, trunc)?;
            Ok(if j == 0 {
                l.add(&LaurentLoop::identity(n, trunc))
            } else {
                l
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    PolyLoop::new(terms)
}

fn gauge_from_terms(ctx: &Context, block: &DressBlock) -> Result<PolyLoop, Failure> {
    let (n, trunc) = (ctx.cfg.n, ctx.cfg.trunc);
    let Some(terms) = &block.gauge else {
        return config(random_gauge(ctx.seed, n, trunc));
    };
    let degree = terms.iter().map(|t| t.zpow).max().unwrap_or(0);
    let mut coeffs = vec![LaurentLoop::zero(n, trunc); degree + 1];
    for t in terms {
        if t.coeff.n() != n {
            return Err(Failure::Config("dress.gauge loops must be n × n".into()));
        }
        coeffs[t.zpow] = coeffs[t.zpow].add(&t.coeff.clone().with_trunc(trunc));
    }
    config(PolyLoop::new(coeffs))
}

pub fn dress(ctx: &Context) -> Result<Outcome, Failure> {
    let built = ctx.potential()?;
    let block = ctx.cfg.dress.clone().unwrap_or_default();
    let gauge = config(GaugeMap::plus(gauge_from_terms(ctx, &block)?, 1e-12))?;
    let GaugeMap::Plus(h) = &gauge else {
        unreachable!("plus gauge")
    };
    let h0 = h.eval(c64(0.0, 0.0));
    let simple = match &block.simple {
        Some(s) => {
            ctx.matrix("dress.simple.V", &s.v.0)?;
            Some(config(SimpleFactor::new(c64(s.a[0], s.a[1]), &s.v.0))?)
        }
        None => None,
    };
    let (tol, grid) = (ctx.tol(), ctx.grid());
    let mu = &built.potential;
    let base = extended_solution(mu, &grid, &opts())?;
    let iw = IwasawaOptions {
        trunc: ctx.cfg.trunc,
        ..IwasawaOptions::default()
    };
    let dressed = dress_plus(&h0, &base.phi, &iw)?;
    let direct = extended_solution(&gauge_action(&gauge, mu, &grid)?, &grid, &opts())?;
    let mut r = Report::new("dress");
    r.stat(
        "plus_distance",
        dressed.distance(&direct.phi, 0),
        tol.identity,
    );
    r.check(
        "plus_extended",
        verify_extended_solution(&dressed).worst(),
        tol.extended,
    );
    r.detail("seeded_gauge", &block.gauge.is_none());
    let mut files = vec![("phi_dressed_plus.json".to_string(), dressed.to_json())];
    if let Some(sf) = simple {
        let out = dress_extended(&sf, mu, &base)?;
        r.stat("simple_tail", out.tail, tol.identity);
        r.check(
            "simple_extended",
            verify_extended_solution(&out.phi).worst(),
            tol.extended,
        );
        r.stat(
            "simple_residue",
            residue_defect(&sf, mu, &base.b, &out.subspaces)?,
            tol.identity,
        );
        files.push(("phi_dressed_simple.json".into(), out.phi.to_json()));
    }
    Ok(r.finish(ctx, files))
}

pub fn complete(ctx: &Context) -> Result<Outcome, Failure> {
    let built = ctx.potential()?;
    let block: CompleteBlock = ctx.cfg.complete.clone().unwrap_or_default();
    let v = match (&block.v, &built.finite_type) {
        (Some(v), _) => v.0.clone(),
        (None, Some(ft)) => config(ft.ker_eta())?,
        (None, None) => {
            return Err(Failure::Config(
                "complete needs \"V\" or a finite-type potential".into(),
            ))
        }
    };
    ctx.matrix("complete.V", &v)?;
    let seq = block
        .a_sequence
        .clone()
        .unwrap_or_else(|| DEFAULT_A_SEQUENCE.to_vec());
    if seq.len() < 2 {
        return Err(Failure::Config(
            "complete.a_sequence needs at least two values".into(),
        ));
    }
    let rep = completion_limit_experiment(&built.potential, &v, &seq, &ctx.grid(), &opts())?;
    let col = |f: fn(&CompletionRow) -> f64| rep.rows.iter().map(f).collect::<Vec<_>>();
    let mut r = Report::new("complete");
    r.passed = rep.passed;
    r.detail("rows", &rep.rows);
    r.detail("delta_converges", &sequence_converges(&col(|x| x.delta)));
    r.detail(
        "Delta_converges",
        &sequence_converges(&col(|x| x.big_delta)),
    );
    r.detail(
        "Delta_circle_converges",
        &sequence_converges(&col(|x| x.circle_delta)),
    );
    let rows = serde_json::to_string_pretty(&rep.rows).expect("rows serialize") + "\n";
    Ok(r.finish(ctx, vec![("completion.json".into(), rows)]))
}

pub fn verify(ctx: &Context) -> Result<Outcome, Failure> {
    let block = ctx
        .cfg
        .verify
        .as_ref()
        .ok_or_else(|| Failure::Config("missing \"verify\" block".into()))?;
    let path = ctx.base_dir.join(&block.phi);
    let text =
        config(std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display())))?;
    let phi: LoopField =
        config(serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display())))?;
    if phi.grid != ctx.grid() {
        return Err(Failure::Config(
            "the stored field lives on a different grid than the config".into(),
        ));
    }
    if phi.values.len() != phi.grid.len() || phi.values.iter().any(|l| l.n() != ctx.cfg.n) {
        return Err(Failure::Config(
            "the stored field does not match the grid and n".into(),
        ));
    }
    let tol = ctx.tol();
    let mut r = Report::new("verify");
    r.check(
        "extended",
        verify_extended_solution(&phi).worst(),
        tol.extended,
    );
    r.detail("extended_report", &verify_extended_solution(&phi));
    r.stat(
        "harmonic",
        verify_harmonic(&harmonic_map(&phi))?,
        tol.harmonic,
    );
    r.stat("unitary", unitary_stat(&phi), tol.membership);
    Ok(r.finish(ctx, Vec::new()))
}

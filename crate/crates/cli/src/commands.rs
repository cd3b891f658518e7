//! One function per subcommand. Each writes a JSON report and its CSV curves
//! into the output directory and says whether the experiment passed.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::{json, Value};
use sqfn_core::dyadic::{
    build_lattice, default_truncation, validate_cover, validate_lattice, whitney_cover, ConeIndex, DyadicLattice,
    WhitneyCover,
};
use sqfn_core::estimates::{
    atomic_hp_test, bpsfe_pipeline, check_local_tb, estimate_sfe_with_family, lp_sweep, weak_lp_indicator_test,
    LambdaGrid, PipelineParams, SurfaceBall, TbFamily, TestFamily,
};
use sqfn_core::geom::{big_pieces_witness, generate};
use sqfn_core::io::{lattice_tree, read_digest, write_cloud, write_cover, write_curve};
use sqfn_core::operators::{EnergyEvaluator, SurfaceFunction};
use sqfn_core::qm::{default_centers, default_radii, log_grid};
use sqfn_core::{check_adr, AdrSet, KernelSpec};

use crate::config::{ConfigError, RunConfig};

/// Samples used by the cover completeness check.
const COVER_SAMPLES: usize = 2000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] sqfn_core::Error),
    #[error("artifact {path} was written with config digest {found}, this run has {expected}")]
    Digest {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use sqfn_core::Error as E;
        match self {
            Self::Io(_) | Self::Json(_) | Self::Core(E::Io(_) | E::Csv(_) | E::Json(_)) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Generate the point cloud (cloud.csv)
    Gen,
    /// Estimate the ADR constant of the cloud
    CheckAdr,
    /// Build and validate the dyadic lattice
    Lattice,
    /// Build and validate the Whitney cover of the complement
    Cover,
    /// Estimate the square-function constant over a test family
    Sfe,
    /// Check the local T(b) conditions with b_Q = 1_Q
    Tb,
    /// Run the big-pieces pipeline
    Bpsfe,
    /// Distribution curves of the cone square function of ball indicators
    WeakLp,
    /// Cone square-function L^p ratios for p in p_list
    LpSweep,
    /// Cone square function of random Hardy-space atoms
    HpAtoms,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gen => "gen",
            Self::CheckAdr => "check-adr",
            Self::Lattice => "lattice",
            Self::Cover => "cover",
            Self::Sfe => "sfe",
            Self::Tb => "tb",
            Self::Bpsfe => "bpsfe",
            Self::WeakLp => "weak-lp",
            Self::LpSweep => "lp-sweep",
            Self::HpAtoms => "hp-atoms",
        }
    }
}

/// Whether an experiment met its declared condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    Fail(String),
}

struct Run<'a> {
    cfg: &'a RunConfig,
    digest: String,
    out: &'a Path,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn report(&self, command: Command, outcome: &Outcome, result: impl Serialize) -> CliResult<()> {
        let (status, reason) = match outcome {
            Outcome::Pass => ("pass", Value::Null),
            Outcome::Fail(r) => ("fail", Value::String(r.clone())),
        };
        let doc = json!({
            "command": command.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "status": status,
            "failure": reason,
            "config_digest": self.digest,
            "config": self.cfg.echo,
            "result": result,
        });
        let path = self.path(&format!("{}.json", command.name().replace('-', "_")));
        serde_json::to_writer_pretty(File::create(&path)?, &doc)?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn curve(&self, name: &str, columns: [&str; 2], xs: &[f64], ys: &[f64]) -> CliResult<()> {
        write_curve(File::create(self.path(name))?, columns, xs, ys, &self.digest)?;
        Ok(())
    }

    fn cloud(&self) -> CliResult<AdrSet> {
        let e = generate(&self.cfg.geometry)?;
        info!("cloud: {} points, diam {:.4}, resolution {:.3e}", e.len(), e.diam(), e.resolution());
        Ok(e)
    }

    fn lattice(&self, e: &AdrSet) -> CliResult<DyadicLattice> {
        Ok(build_lattice(e, self.cfg.depth)?)
    }

    fn cover(&self, e: &AdrSet, lattice: &DyadicLattice) -> CliResult<WhitneyCover> {
        let r = self.cfg.truncation_radius.unwrap_or_else(|| default_truncation(e));
        let eps = self.cfg.eps_min.unwrap_or(4.0 * e.resolution());
        let mut cover = whitney_cover(e, r, eps)?;
        cover.assign(lattice, self.cfg.c_assign)?;
        info!("cover: {} cells", cover.len());
        Ok(cover)
    }

    fn family(&self, e: &AdrSet, lattice: &DyadicLattice) -> TestFamily {
        let mut fam = TestFamily::generate(e, lattice, &self.cfg.family, self.cfg.seed);
        for _ in 0..self.cfg.family_zeros {
            let k = fam.len();
            fam.items.push(sqfn_core::estimates::TestFunction::Dense(SurfaceFunction::zeros(e)));
            fam.labels.push(format!("zero{k}"));
        }
        fam
    }
}

/// Refuses to mix artifacts from different configurations in one directory.
pub fn check_digests(out: &Path, digest: &str) -> CliResult<()> {
    let Ok(entries) = fs::read_dir(out) else {
        return Ok(());
    };
    for entry in entries {
        let path = entry?.path();
        let found = match path.extension().and_then(|s| s.to_str()) {
            Some("csv") => read_digest(&path)?,
            Some("json") => serde_json::from_reader::<_, Value>(File::open(&path)?)
                .ok()
                .and_then(|v| v.get("config_digest").and_then(Value::as_str).map(str::to_string)),
            _ => None,
        };
        if let Some(found) = found.filter(|f| f != digest) {
            return Err(CliError::Digest {
                path,
                found,
                expected: digest.to_string(),
            });
        }
    }
    Ok(())
}

pub fn run(command: Command, cfg: &RunConfig) -> CliResult<Outcome> {
    let digest = cfg.digest();
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out)?;
    check_digests(out, &digest)?;
    let run = Run { cfg, digest, out };
    let kernel = || -> CliResult<KernelSpec> { Ok(cfg.kernel.build()?) };
    match command {
        Command::Gen => gen(&run),
        Command::CheckAdr => adr(&run),
        Command::Lattice => lattice(&run),
        Command::Cover => cover(&run),
        Command::Sfe => sfe(&run, &kernel()?),
        Command::Tb => tb(&run, &kernel()?),
        Command::Bpsfe => bpsfe(&run, &kernel()?),
        Command::WeakLp => weak_lp(&run, &kernel()?),
        Command::LpSweep => lp(&run, &kernel()?),
        Command::HpAtoms => hp(&run, &kernel()?),
    }
}

fn gen(run: &Run) -> CliResult<Outcome> {
    let e = run.cloud()?;
    write_cloud(File::create(run.path("cloud.csv"))?, &e, &run.digest)?;
    let result = json!({
        "kind": run.cfg.geometry.kind_name(),
        "points": e.len(),
        "diam": e.diam(),
        "resolution": e.resolution(),
        "dim": e.dim(),
        "expected_adr_const": e.adr_const(),
        "labelled": e.labels().is_some(),
    });
    run.report(Command::Gen, &Outcome::Pass, result)?;
    Ok(Outcome::Pass)
}

fn adr(run: &Run) -> CliResult<Outcome> {
    let e = run.cloud()?;
    let report = check_adr(&e, &default_radii(&e, run.cfg.adr_radii), &default_centers(&e, run.cfg.adr_centers))?;
    let claimed = e.adr_const();
    let outcome = if report.passes(claimed) {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("measured ADR constant {} exceeds {claimed}", report.best_const))
    };
    let radii: Vec<f64> = report.per_radius_ratios.iter().map(|r| r.radius).collect();
    let hi: Vec<f64> = report.per_radius_ratios.iter().map(|r| r.max_ratio).collect();
    let lo: Vec<f64> = report.per_radius_ratios.iter().map(|r| r.min_ratio).collect();
    run.curve("adr_upper.csv", ["radius", "max_ratio"], &radii, &hi)?;
    run.curve("adr_lower.csv", ["radius", "min_ratio"], &radii, &lo)?;
    run.report(Command::CheckAdr, &outcome, json!({ "claimed": claimed, "adr": report }))?;
    Ok(outcome)
}

fn lattice(run: &Run) -> CliResult<Outcome> {
    let e = run.cloud()?;
    let lat = run.lattice(&e)?;
    let check = validate_lattice(&e, &lat);
    serde_json::to_writer(File::create(run.path("lattice_tree.json"))?, &lattice_tree(&lat, &run.digest))?;
    let gens: Vec<i32> = (lat.kappa_e()..=lat.finest_generation()).collect();
    let counts: Vec<f64> = gens.iter().map(|&k| lat.generation(k).len() as f64).collect();
    let gx: Vec<f64> = gens.iter().map(|&k| k as f64).collect();
    run.curve("lattice_generations.csv", ["generation", "cubes"], &gx, &counts)?;
    let outcome = if check.ok() {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("{} lattice violations", check.violations.len()))
    };
    let result = json!({
        "kappa_e": lat.kappa_e(),
        "depth": lat.depth(),
        "cubes": lat.cubes().len(),
        "cubes_per_generation": counts,
        "c_in": lat.c_in(),
        "c_out": lat.c_out(),
        "truncated": lat.truncated(),
        "validation": check,
    });
    run.report(Command::Lattice, &outcome, result)?;
    Ok(outcome)
}

fn cover(run: &Run) -> CliResult<Outcome> {
    let e = run.cloud()?;
    let lat = run.lattice(&e)?;
    let cover = run.cover(&e, &lat)?;
    let check = validate_cover(&e, &cover, Some(&lat), COVER_SAMPLES, run.cfg.seed)?;
    write_cover(File::create(run.path("cover.csv"))?, &cover, &run.digest)?;
    let mut sides: Vec<f64> = cover.cells().iter().map(|c| c.side).collect();
    sides.sort_by(|a, b| b.total_cmp(a));
    sides.dedup();
    let counts: Vec<f64> = sides
        .iter()
        .map(|&s| cover.cells().iter().filter(|c| c.side == s).count() as f64)
        .collect();
    run.curve("cover_sides.csv", ["side", "cells"], &sides, &counts)?;
    let outcome = if check.ok() {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("{} cover violations", check.violations.len()))
    };
    let result = json!({
        "cells": cover.len(),
        "truncation_radius": cover.truncation_radius(),
        "eps_min": cover.eps_min(),
        "finest_side": cover.finest_side(),
        "c_assign": cover.c_assign(),
        "unassigned": cover.assignment().iter().filter(|a| a.is_none()).count(),
        "validation": check,
    });
    run.report(Command::Cover, &outcome, result)?;
    Ok(outcome)
}

fn sfe(run: &Run, theta: &KernelSpec) -> CliResult<Outcome> {
    let e = run.cloud()?;
    let lat = run.lattice(&e)?;
    let cover = run.cover(&e, &lat)?;
    let ev = EnergyEvaluator::new(&e, theta, &cover)?;
    let fam = run.family(&e, &lat);
    let mut description = run.cfg.family.describe();
    if run.cfg.family_zeros > 0 {
        description.push_str(&format!(", zeros={}", run.cfg.family_zeros));
    }
    let report = estimate_sfe_with_family(&ev, &lat, &fam, &description, run.cfg.seed)?;
    let idx: Vec<f64> = (0..report.per_function.len()).map(|i| i as f64).collect();
    let ratios: Vec<f64> = report.per_function.iter().map(|r| r.ratio).collect();
    run.curve("sfe_ratios.csv", ["function", "ratio"], &idx, &ratios)?;
    let outcome = if report.best_ratio.is_finite() {
        Outcome::Pass
    } else {
        Outcome::Fail("square-function ratio is not finite".into())
    };
    run.report(Command::Sfe, &outcome, &report)?;
    Ok(outcome)
}

fn tb(run: &Run, theta: &KernelSpec) -> CliResult<Outcome> {
    let e = run.cloud()?;
    let lat = run.lattice(&e)?;
    let cover = run.cover(&e, &lat)?;
    let ev = EnergyEvaluator::new(&e, theta, &cover)?;
    let fam = TbFamily::indicators(&e, &lat, run.cfg.tb_big_c0, run.cfg.tb_small_c0);
    let report = check_local_tb(&ev, &lat, &fam)?;
    let cubes: Vec<f64> = report.per_cube.iter().map(|c| c.cube as f64).collect();
    let tents: Vec<f64> = report.per_cube.iter().map(|c| c.tent_ratio).collect();
    run.curve("tb_tent.csv", ["cube", "tent_ratio"], &cubes, &tents)?;
    let outcome = if report.pass {
        Outcome::Pass
    } else {
        Outcome::Fail(report.failures.first().cloned().unwrap_or_else(|| "T(b) conditions fail".into()))
    };
    run.report(Command::Tb, &outcome, &report)?;
    Ok(outcome)
}

fn bpsfe(run: &Run, theta: &KernelSpec) -> CliResult<Outcome> {
    let e = run.cloud()?;
    let lat = run.lattice(&e)?;
    let cover = run.cover(&e, &lat)?;
    let ev = EnergyEvaluator::new(&e, theta, &cover)?;
    let witness = big_pieces_witness(&e, &lat);
    let params = PipelineParams {
        eta_required: run.cfg.bpsfe_eta,
        big_c0: run.cfg.tb_big_c0,
        small_c0: run.cfg.tb_small_c0,
        family: run.cfg.family.clone(),
        seed: run.cfg.seed,
    };
    let report = bpsfe_pipeline(&ev, &lat, &witness, &params)?;
    let labels: Vec<f64> = report.pieces.iter().map(|p| p.label as f64).collect();
    let c2: Vec<f64> = report.pieces.iter().map(|p| p.c2).collect();
    run.curve("bpsfe_pieces.csv", ["label", "c2"], &labels, &c2)?;
    let outcome = if !report.flagged.is_empty() {
        Outcome::Fail(format!("{} cubes lack a big piece with eta >= {}", report.flagged.len(), report.eta_required))
    } else if !report.tb.pass {
        Outcome::Fail("T(b) conditions fail for b_Q built from the big pieces".into())
    } else {
        Outcome::Pass
    };
    run.report(Command::Bpsfe, &outcome, &report)?;
    Ok(outcome)
}

/// Balls around the middle of the cloud, radii log-spaced in `[16h, diam/4]`.
fn test_balls(e: &AdrSet, count: usize) -> Vec<SurfaceBall> {
    let hi = e.diam() / 4.0;
    let lo = (16.0 * e.resolution()).min(hi / 2.0);
    log_grid(lo, hi, count)
        .into_iter()
        .map(|radius| SurfaceBall {
            center: e.len() / 2,
            radius,
        })
        .collect()
}

fn weak_lp(run: &Run, theta: &KernelSpec) -> CliResult<Outcome> {
    let e = run.cloud()?;
    let lat = run.lattice(&e)?;
    let cover = run.cover(&e, &lat)?;
    let ev = EnergyEvaluator::new(&e, theta, &cover)?;
    let cones = ConeIndex::build(&e, &cover, run.cfg.kappa)?;
    let balls = test_balls(&e, run.cfg.weak_balls);
    let curves = weak_lp_indicator_test(
        &ev,
        &cones,
        run.cfg.weak_p,
        &balls,
        &LambdaGrid::Auto {
            count: run.cfg.weak_lambdas,
        },
    )?;
    for (k, c) in curves.iter().enumerate() {
        run.curve(&format!("weak_lp_{k}.csv"), ["lambda", "measure"], &c.lambdas, &c.measures)?;
    }
    run.report(Command::WeakLp, &Outcome::Pass, json!({ "p": run.cfg.weak_p, "curves": curves }))?;
    Ok(Outcome::Pass)
}

fn lp(run: &Run, theta: &KernelSpec) -> CliResult<Outcome> {
    let e = run.cloud()?;
    let lat = run.lattice(&e)?;
    let cover = run.cover(&e, &lat)?;
    let ev = EnergyEvaluator::new(&e, theta, &cover)?;
    let cones = ConeIndex::build(&e, &cover, run.cfg.kappa)?;
    let rows = lp_sweep(&ev, &lat, &cones, &run.cfg.p_list, &run.family(&e, &lat))?;
    let ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    run.curve("lp_sweep.csv", ["p", "ratio"], &ps, &ratios)?;
    let outcome = if ratios.iter().all(|r| r.is_finite()) {
        Outcome::Pass
    } else {
        Outcome::Fail("an L^p ratio is not finite".into())
    };
    run.report(Command::LpSweep, &outcome, json!({ "rows": rows }))?;
    Ok(outcome)
}

fn hp(run: &Run, theta: &KernelSpec) -> CliResult<Outcome> {
    let e = run.cloud()?;
    let lat = run.lattice(&e)?;
    let cover = run.cover(&e, &lat)?;
    let ev = EnergyEvaluator::new(&e, theta, &cover)?;
    let cones = ConeIndex::build(&e, &cover, run.cfg.kappa)?;
    let report = atomic_hp_test(&ev, &cones, run.cfg.hp_p, run.cfg.hp_atoms, run.cfg.seed)?;
    let radii: Vec<f64> = report.atoms.iter().map(|a| a.ball.radius).collect();
    let values: Vec<f64> = report.atoms.iter().map(|a| a.value).collect();
    run.curve("hp_atoms.csv", ["radius", "value"], &radii, &values)?;
    let outcome = if report.sup.is_finite() {
        Outcome::Pass
    } else {
        Outcome::Fail("atom values are not uniformly bounded".into())
    };
    run.report(Command::HpAtoms, &outcome, &report)?;
    Ok(outcome)
}

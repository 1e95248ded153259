use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use polyvem::benchmark::{run, BenchmarkSpec, Problem, StopReason};
use polyvem::indicators::IndicatorKind;
use polyvem::meshgen::MeshKind;
use polyvem::vem::PlaneCondition;
use polyvem::Execution;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProblemArg {
    Punch,
    PlateHole,
    LDomain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeshArg {
    Structured,
    Voronoi,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IndicatorArg {
    Db,
    Eb,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlaneArg {
    Strain,
    Stress,
}

/// Adaptive coarsening benchmarks for the virtual element method.
#[derive(Debug, Parser)]
#[command(name = "polyvem", version)]
struct Args {
    #[arg(long, value_enum, default_value = "punch")]
    problem: ProblemArg,
    #[arg(long, value_enum, default_value = "structured")]
    mesh: MeshArg,
    /// Cells per side (structured) or seed count (voronoi).
    #[arg(long, default_value_t = 20)]
    density: usize,
    #[arg(long, value_enum, default_value = "db")]
    indicator: IndicatorArg,
    /// Percentage of eligible patches coarsened per step.
    #[arg(long, default_value_t = 20.0)]
    threshold: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Cells per side of the reference solution grid.
    #[arg(long, default_value_t = 128)]
    reference_density: usize,
    #[arg(long, value_enum, default_value = "strain")]
    plane: PlaneArg,
    #[arg(long, default_value_t = polyvem::benchmark::DEFAULT_HOLE_SIDE)]
    hole_side: f64,
    /// Where reference solutions are cached between runs.
    #[arg(long, default_value = ".polyvem-cache")]
    cache_dir: PathBuf,
    /// Skip the uniform-mesh comparison curve.
    #[arg(long)]
    no_uniform: bool,
    #[arg(long)]
    sequential: bool,
}

impl Args {
    fn spec(&self) -> BenchmarkSpec {
        BenchmarkSpec {
            problem: match self.problem {
                ProblemArg::Punch => Problem::Punch,
                ProblemArg::PlateHole => Problem::PlateHole,
                ProblemArg::LDomain => Problem::LDomain,
            },
            mesh_kind: match self.mesh {
                MeshArg::Structured => MeshKind::Structured,
                MeshArg::Voronoi => MeshKind::Voronoi,
            },
            density: self.density,
            indicator: match self.indicator {
                IndicatorArg::Db => IndicatorKind::Displacement,
                IndicatorArg::Eb => IndicatorKind::Energy,
            },
            threshold: self.threshold,
            max_steps: self.steps,
            rng_seed: self.rng_seed,
            output_dir: Some(self.out.clone()),
            reference_density: self.reference_density,
            reference_cache: Some(self.cache_dir.clone()),
            plane: match self.plane {
                PlaneArg::Strain => PlaneCondition::Strain,
                PlaneArg::Stress => PlaneCondition::Stress,
            },
            hole_side: self.hole_side,
            uniform_curve: !self.no_uniform,
            exec: if self.sequential { Execution::Sequential } else { Execution::Parallel },
        }
    }
}

fn main() -> Result<()> {
    let args = Args::parse();
    let spec = args.spec();
    let out = run(&spec).with_context(|| format!("{} benchmark failed", spec.problem))?;
    println!("{:>5} {:>7} {:>7} {:>12} {:>12}", "step", "n_v", "n_el", "h1", "energy");
    for r in out.records() {
        println!("{:>5} {:>7} {:>7} {:>12.5e} {:>12.5e}", r.step, r.n_v, r.n_el, r.h1_error, r.energy_error);
    }
    if out.stop == StopReason::NoEligiblePatches {
        println!("stopped early: no patch could be coarsened");
    }
    println!("outputs written to {}", args.out.display());
    Ok(())
}

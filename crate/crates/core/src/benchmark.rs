//! Benchmark problems and the adaptive coarsening driver.

use std::fmt::{self, Write as _};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector2;

use crate::coarsening::{coarsen_step, CoarseningConfig, StepReport};
use crate::error::{Error, Result};
use crate::indicators::{
    global_energy_error, h1_contributions, patch_indicators, recover_stress_with, GradientPart, IndicatorKind,
    ReferenceField,
};
use crate::mesh::io::{write_text, VtkWriter};
use crate::mesh::{pt, PolyMesh};
use crate::meshgen::{generate, Domain, MeshKind};
use crate::parallel::Execution;
use crate::reference::{load_or_solve, solve_reference, RefField};
use crate::vem::{assemble_with, solve, BvpSpec, Dirichlet, Material, Neumann, PlaneCondition, Region, SolutionField};

pub const PUNCH_LOAD: f64 = 0.675;
pub const PUNCH_WIDTH: f64 = 0.2;
pub const PLATE_TRACTION: f64 = 0.2;
pub const L_THICKNESS: f64 = 0.25;
pub const L_DISPLACEMENT: f64 = 0.5;
pub const DEFAULT_HOLE_SIDE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Punch,
    PlateHole,
    LDomain,
}

impl Problem {
    pub const ALL: [Problem; 3] = [Problem::Punch, Problem::PlateHole, Problem::LDomain];
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "punch" => Ok(Problem::Punch),
            "plate_hole" | "plate" => Ok(Problem::PlateHole),
            "l_domain" | "l" => Ok(Problem::LDomain),
            _ => Err(Error::UnknownProblem(s.to_string())),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Punch => "punch",
            Problem::PlateHole => "plate_hole",
            Problem::LDomain => "l_domain",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub problem: Problem,
    pub mesh_kind: MeshKind,
    /// Cells per side (structured) or seed count (Voronoi).
    pub density: usize,
    pub indicator: IndicatorKind,
    /// Percentage of eligible patches marked per step.
    pub threshold: f64,
    pub max_steps: usize,
    pub rng_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub reference_density: usize,
    /// Directory for cached reference solutions; `None` always re-solves.
    pub reference_cache: Option<PathBuf>,
    pub plane: PlaneCondition,
    pub hole_side: f64,
    /// Also solve on uniform meshes of density, density/2, ... for comparison.
    pub uniform_curve: bool,
    pub exec: Execution,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            problem: Problem::Punch,
            mesh_kind: MeshKind::Structured,
            density: 20,
            indicator: IndicatorKind::Displacement,
            threshold: 20.0,
            max_steps: 10,
            rng_seed: 0,
            output_dir: None,
            reference_density: 128,
            reference_cache: None,
            plane: PlaneCondition::Strain,
            hole_side: DEFAULT_HOLE_SIDE,
            uniform_curve: true,
            exec: Execution::default(),
        }
    }
}

impl BenchmarkSpec {
    pub fn new(problem: Problem) -> Self {
        BenchmarkSpec { problem, ..Default::default() }
    }

    /// File name of the cached reference solution.
    pub fn reference_key(&self, material: &Material) -> String {
        let plane = match material.plane {
            PlaneCondition::Strain => "strain",
            PlaneCondition::Stress => "stress",
        };
        let hole = match self.problem {
            Problem::PlateHole => format!("_hole{}", self.hole_side),
            _ => String::new(),
        };
        format!("{}{hole}_E{}_nu{}_{plane}_n{}.ref", self.problem, material.e, material.nu, self.reference_density)
    }
}

fn seg(a: (f64, f64), b: (f64, f64)) -> Region {
    Region::Segment(pt(a.0, a.1), pt(b.0, b.1))
}

pub fn build_benchmark(spec: &BenchmarkSpec) -> Result<(Domain, BvpSpec, Material)> {
    let material = Material::new(1.0, 0.3, spec.plane)?;
    let bvp = match spec.problem {
        Problem::Punch => {
            let (a, b) = (0.5 - 0.5 * PUNCH_WIDTH, 0.5 + 0.5 * PUNCH_WIDTH);
            let d = Domain::rectangle(1.0, 1.0, vec![pt(a, 1.0), pt(b, 1.0), pt(0.5, 0.0)])?;
            BvpSpec::new(d)
                .with_dirichlet(Dirichlet::fixed(seg((0., 0.), (1., 0.)), [false, true]))
                .with_dirichlet(Dirichlet::fixed(Region::Point(pt(0.5, 0.0)), [true, true]))
                .with_dirichlet(Dirichlet::fixed(seg((0., 1.), (1., 1.)), [true, false]))
                .with_neumann(Neumann::uniform(seg((a, 1.), (b, 1.)), Vector2::new(0.0, -PUNCH_LOAD)))
        }
        Problem::PlateHole => {
            let d = Domain::plate_with_hole(1.0, spec.hole_side, vec![])?;
            BvpSpec::new(d)
                .with_dirichlet(Dirichlet::fixed(seg((0., 0.), (0., 1.)), [true, false]))
                .with_dirichlet(Dirichlet::fixed(Region::Point(pt(0.0, 0.0)), [true, true]))
                .with_neumann(Neumann::uniform(seg((1., 0.), (1., 1.)), Vector2::new(PLATE_TRACTION, 0.0)))
        }
        Problem::LDomain => {
            let t = L_THICKNESS;
            let d = Domain::l_shape(1.0, t, vec![])?;
            BvpSpec::new(d)
                .with_dirichlet(Dirichlet::fixed(seg((0., 0.), (1., 0.)), [false, true]))
                .with_dirichlet(Dirichlet::fixed(seg((0., 0.), (0., 1.)), [true, false]))
                .with_dirichlet(Dirichlet::fixed(Region::Point(pt(0.0, 0.0)), [true, true]))
                .with_dirichlet(Dirichlet::constant(seg((0., 1.), (t, 1.)), [false, true], Vector2::new(0.0, L_DISPLACEMENT)))
                .with_dirichlet(Dirichlet::constant(seg((1., 0.), (1., t)), [true, false], Vector2::new(L_DISPLACEMENT, 0.0)))
        }
    };
    Ok((bvp.domain.clone(), bvp, material))
}

/// Reference solution for a benchmark, read from or written to the cache
/// directory when one is configured.
pub fn benchmark_reference(spec: &BenchmarkSpec, bvp: &BvpSpec, material: &Material) -> Result<RefField> {
    match &spec.reference_cache {
        Some(dir) => load_or_solve(dir.join(spec.reference_key(material)), bvp, material, spec.reference_density),
        None => solve_reference(bvp, material, spec.reference_density),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub step: usize,
    pub n_v: usize,
    pub n_el: usize,
    /// Patches marked and coarsened in the step that produced this mesh.
    pub marked: usize,
    pub coarsened: usize,
    pub aborted: usize,
    pub h1_error: f64,
    pub energy_error: f64,
    pub wall_time: f64,
}

pub const CSV_HEADER: &str = "step,n_v,n_el,marked,coarsened,aborted,h1_error,energy_error";

impl ConvergenceRecord {
    /// CSV row without the wall time, so repeated runs produce equal files.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.12e},{:.12e}",
            self.step, self.n_v, self.n_el, self.marked, self.coarsened, self.aborted, self.h1_error, self.energy_error
        )
    }
}

/// Everything computed on one mesh of a run.
#[derive(Debug, Clone)]
pub struct StepData {
    pub record: ConvergenceRecord,
    pub mesh: PolyMesh,
    pub solution: SolutionField,
    /// Per-element H1 error (square root of the element contribution).
    pub element_h1: Vec<f64>,
    pub report: Option<StepReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformPoint {
    pub density: usize,
    pub n_v: usize,
    pub n_el: usize,
    pub h1_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    NoEligiblePatches,
    /// The energy indicator needs a stress recovery the mesh no longer supports.
    RecoveryFailure,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub steps: Vec<StepData>,
    pub uniform: Vec<UniformPoint>,
    pub stop: StopReason,
}

impl RunOutput {
    pub fn records(&self) -> Vec<ConvergenceRecord> {
        self.steps.iter().map(|s| s.record.clone()).collect()
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for st in &self.steps {
            s.push_str(&st.record.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Solves, estimates and records one mesh.
fn evaluate_mesh(
    mesh: &PolyMesh,
    bvp: &BvpSpec,
    material: &Material,
    reference: &dyn ReferenceField,
    exec: Execution,
) -> Result<(SolutionField, Vec<f64>, f64, f64)> {
    let sol = solve(mesh, material, &assemble_with(mesh, material, bvp, exec)?)?;
    let h1: Vec<f64> = h1_contributions(mesh, &sol, reference, GradientPart::Full, exec)?;
    let total = h1.iter().sum::<f64>().sqrt();
    // too few elements left for a linear stress fit
    let energy = match recover_stress_with(mesh, &sol, exec) {
        Ok(rec) => global_energy_error(mesh, &sol, &rec, material),
        Err(Error::RecoveryFailure(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok((sol, h1.into_iter().map(f64::sqrt).collect(), total, energy))
}

/// H1 errors of solutions on uniform meshes of `density`, halved while at
/// least 4.
pub fn uniform_curve(
    spec: &BenchmarkSpec,
    bvp: &BvpSpec,
    material: &Material,
    reference: &dyn ReferenceField,
) -> Result<Vec<UniformPoint>> {
    let mut out = Vec::new();
    let mut d = spec.density;
    while d >= 4 {
        let mesh = generate(&bvp.domain, spec.mesh_kind, d, spec.rng_seed)?;
        let (_, _, h1, _) = evaluate_mesh(&mesh, bvp, material, reference, spec.exec)?;
        out.push(UniformPoint { density: d, n_v: mesh.n_nodes(), n_el: mesh.n_elements(), h1_error: h1 });
        d /= 2;
    }
    Ok(out)
}

/// Runs the coarsening loop against a given reference field. `sink` sees
/// every step as soon as it is computed.
pub fn run_with(
    spec: &BenchmarkSpec,
    bvp: &BvpSpec,
    material: &Material,
    reference: &dyn ReferenceField,
    mut sink: impl FnMut(&StepData) -> Result<()>,
) -> Result<RunOutput> {
    let config = CoarseningConfig::new(spec.indicator, spec.threshold, spec.max_steps)?;
    let mut mesh = generate(&bvp.domain, spec.mesh_kind, spec.density, spec.rng_seed)?;
    let mut steps: Vec<StepData> = Vec::new();
    let mut report: Option<StepReport> = None;
    let stop;
    loop {
        let t0 = Instant::now();
        let (solution, element_h1, h1_error, energy_error) = evaluate_mesh(&mesh, bvp, material, reference, spec.exec)?;
        let r = report.clone().unwrap_or_default();
        let data = StepData {
            record: ConvergenceRecord {
                step: steps.len() + 1,
                n_v: mesh.n_nodes(),
                n_el: mesh.n_elements(),
                marked: r.marked,
                coarsened: r.coarsened,
                aborted: r.aborted,
                h1_error,
                energy_error,
                wall_time: t0.elapsed().as_secs_f64(),
            },
            mesh,
            solution,
            element_h1,
            report: report.take(),
        };
        sink(&data)?;
        if steps.len() == spec.max_steps {
            steps.push(data);
            stop = StopReason::MaxSteps;
            break;
        }
        match coarsen_step(&data.mesh, &data.solution, material, &config, spec.exec) {
            Ok((next, rep)) => {
                mesh = next;
                report = Some(rep);
                steps.push(data);
            }
            Err(Error::NoEligiblePatches) => {
                steps.push(data);
                stop = StopReason::NoEligiblePatches;
                break;
            }
            Err(Error::RecoveryFailure(_)) => {
                steps.push(data);
                stop = StopReason::RecoveryFailure;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let uniform = if spec.uniform_curve { uniform_curve(spec, bvp, material, reference)? } else { Vec::new() };
    Ok(RunOutput { steps, uniform, stop })
}

/// Writes the mesh, VTK fields and CSV row of one step.
fn write_step(dir: &Path, data: &StepData, material: &Material, spec: &BenchmarkSpec) -> Result<()> {
    let k = data.record.step;
    write_text(&data.mesh, dir.join(format!("mesh_step{k}.txt")))?;
    let indicator: Vec<f64> = match patch_indicators(&data.mesh, &data.solution, material, spec.indicator, spec.exec) {
        Ok(recs) => recs.iter().map(|r| if r.indicator.is_finite() { r.indicator } else { -1.0 }).collect(),
        Err(Error::RecoveryFailure(_)) => vec![-1.0; data.mesh.n_nodes()],
        Err(e) => return Err(e),
    };
    let log_h1: Vec<f64> = data.element_h1.iter().map(|&x| x.max(1e-300).log10()).collect();
    let u = data.solution.displacement_pairs();
    VtkWriter::new(&data.mesh)
        .title(format!("{} step {k}", spec.problem))
        .point_vectors("u", &u)
        .point_scalars("indicator", &indicator)
        .cell_scalars("h1_error", &data.element_h1)
        .cell_scalars("log10_h1_error", &log_h1)
        .write(dir.join(format!("mesh_step{k}.vtk")))?;
    let csv = dir.join("convergence.csv");
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(csv)?;
    if k == 1 {
        f.set_len(0)?;
        writeln!(f, "{CSV_HEADER}")?;
    }
    writeln!(f, "{}", data.record.csv_row())?;
    f.flush()?;
    Ok(())
}

/// Full benchmark: reference solve, coarsening loop, and all output files
/// when `output_dir` is set.
pub fn run(spec: &BenchmarkSpec) -> Result<RunOutput> {
    let started = Instant::now();
    let (_, bvp, material) = build_benchmark(spec)?;
    let reference = benchmark_reference(spec, &bvp, &material)?;
    let Some(dir) = spec.output_dir.clone() else {
        return run_with(spec, &bvp, &material, &reference, |_| Ok(()));
    };
    std::fs::create_dir_all(&dir)?;
    let out = run_with(spec, &bvp, &material, &reference, |d| write_step(&dir, d, &material, spec))?;
    std::fs::write(dir.join("uniform.csv"), uniform_csv(&out.uniform))?;
    std::fs::write(dir.join("error_curve.csv"), curve_csv(&out))?;
    std::fs::write(dir.join("error_curve.svg"), curve_svg(&out))?;
    std::fs::write(dir.join("run_meta.json"), run_meta(spec, &material, &out, started.elapsed().as_secs_f64()))?;
    Ok(out)
}

fn uniform_csv(points: &[UniformPoint]) -> String {
    let mut s = String::from("density,n_v,n_el,h1_error\n");
    for p in points {
        writeln!(s, "{},{},{},{:.12e}", p.density, p.n_v, p.n_el, p.h1_error).unwrap();
    }
    s
}

fn curve_csv(out: &RunOutput) -> String {
    let mut s = String::from("series,n_v,h1_error\n");
    for st in &out.steps {
        writeln!(s, "coarsened,{},{:.12e}", st.record.n_v, st.record.h1_error).unwrap();
    }
    for p in &out.uniform {
        writeln!(s, "uniform,{},{:.12e}", p.n_v, p.h1_error).unwrap();
    }
    s
}

/// Log-log plot of H1 error against node count.
fn curve_svg(out: &RunOutput) -> String {
    let series: [(&str, &str, Vec<(f64, f64)>); 2] = [
        ("coarsened", "#c0392b", out.steps.iter().map(|s| (s.record.n_v as f64, s.record.h1_error)).collect()),
        ("uniform", "#2c3e50", out.uniform.iter().map(|p| (p.n_v as f64, p.h1_error)).collect()),
    ];
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.2.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let (w, h, m) = (640.0, 440.0, 60.0);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if all.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let lo_x = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor();
    let hi_x = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().max(lo_x + 1.0);
    let lo_y = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor();
    let hi_y = all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().max(lo_y + 1.0);
    let sx = |x: f64| m + (x - lo_x) / (hi_x - lo_x) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - lo_y) / (hi_y - lo_y) * (h - 2.0 * m);
    writeln!(
        s,
        "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - 2.0 * m,
        h - 2.0 * m
    )
    .unwrap();
    for e in lo_x as i32..=hi_x as i32 {
        let x = sx(e as f64);
        writeln!(s, "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">1e{e}</text>", h - m + 18.0)
            .unwrap();
    }
    for e in lo_y as i32..=hi_y as i32 {
        let y = sy(e as f64);
        writeln!(s, "<text x=\"{:.1}\" y=\"{y:.1}\" font-size=\"12\" text-anchor=\"end\">1e{e}</text>", m - 6.0).unwrap();
    }
    writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">n_v</text>", w / 2.0, h - 12.0)
        .unwrap();
    writeln!(s, "<text x=\"14\" y=\"{:.1}\" font-size=\"13\">H1</text>", h / 2.0).unwrap();
    for (k, (name, colour, pts)) in series.iter().enumerate() {
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|(x, y)| format!("{:.2},{:.2}", sx(x.log10()), sy(y.log10())))
            .collect();
        if path.is_empty() {
            continue;
        }
        writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>", path.join(" "))
            .unwrap();
        for p in &path {
            let (x, y) = p.split_once(',').unwrap();
            writeln!(s, "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{colour}\"/>").unwrap();
        }
        let ly = m + 18.0 + 18.0 * k as f64;
        writeln!(s, "<text x=\"{:.1}\" y=\"{ly:.1}\" font-size=\"12\" fill=\"{colour}\">{name}</text>", w - m - 90.0)
            .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn run_meta(spec: &BenchmarkSpec, material: &Material, out: &RunOutput, seconds: f64) -> String {
    let meta = serde_json::json!({
        "problem": spec.problem.to_string(),
        "mesh": match spec.mesh_kind { MeshKind::Structured => "structured", MeshKind::Voronoi => "voronoi" },
        "density": spec.density,
        "indicator": match spec.indicator { IndicatorKind::Displacement => "db", IndicatorKind::Energy => "eb" },
        "threshold": spec.threshold,
        "max_steps": spec.max_steps,
        "rng_seed": spec.rng_seed,
        "reference_density": spec.reference_density,
        "hole_side": spec.hole_side,
        "material": {
            "E": material.e,
            "nu": material.nu,
            "lambda": material.lambda,
            "mu": material.mu,
            "plane": match material.plane { PlaneCondition::Strain => "strain", PlaneCondition::Stress => "stress" },
        },
        "steps": out.steps.len(),
        "stop": match out.stop {
            StopReason::MaxSteps => "max_steps",
            StopReason::NoEligiblePatches => "no_eligible_patches",
            StopReason::RecoveryFailure => "recovery_failure",
        },
        "step_seconds": out.steps.iter().map(|s| s.record.wall_time).collect::<Vec<_>>(),
        "total_seconds": seconds,
    });
    serde_json::to_string_pretty(&meta).expect("json value serialises") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::AnalyticField;
    use nalgebra::Matrix2;

    #[test]
    fn punch_load_total() {
        let (_, bvp, _) = build_benchmark(&BenchmarkSpec::new(Problem::Punch)).unwrap();
        let mesh = generate(&bvp.domain, MeshKind::Structured, 10, 0).unwrap();
        let f = crate::vem::load_vector(&mesh, &bvp).unwrap();
        let fy: f64 = f.iter().skip(1).step_by(2).sum();
        assert!((fy + 0.135).abs() < 1e-14);
    }

    #[test]
    fn l_domain_area() {
        let (d, _, _) = build_benchmark(&BenchmarkSpec::new(Problem::LDomain)).unwrap();
        assert!((d.area() - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn plate_hole_corners() {
        let (d, _, _) = build_benchmark(&BenchmarkSpec::new(Problem::PlateHole)).unwrap();
        for c in [pt(0.35, 0.35), pt(0.65, 0.35), pt(0.65, 0.65), pt(0.35, 0.65)] {
            assert!(d.corner_points.iter().any(|p| (p - c).norm() < 1e-15));
        }
    }

    #[test]
    fn problem_names() {
        for p in Problem::ALL {
            assert_eq!(p.to_string().parse::<Problem>().unwrap(), p);
        }
        assert!(matches!("beam".parse::<Problem>(), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn loop_counts_records() {
        let spec = BenchmarkSpec { max_steps: 3, density: 8, uniform_curve: false, ..Default::default() };
        let (_, bvp, m) = build_benchmark(&spec).unwrap();
        let zero = AnalyticField { u: |_: &crate::mesh::Point| Vector2::zeros(), grad: |_: &crate::mesh::Point| Matrix2::zeros() };
        let out = run_with(&spec, &bvp, &m, &zero, |_| Ok(())).unwrap();
        assert_eq!(out.steps.len(), 4);
        assert_eq!(out.stop, StopReason::MaxSteps);
        assert!(out.steps.windows(2).all(|w| w[1].record.n_v < w[0].record.n_v));
        assert_eq!(out.csv().lines().count(), 5);
    }
}

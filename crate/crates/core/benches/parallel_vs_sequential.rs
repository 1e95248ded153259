use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{Matrix2, Vector2};
use polyvem::benchmark::{build_benchmark, BenchmarkSpec, Problem};
use polyvem::coarsening::{coarsen_step, CoarseningConfig};
use polyvem::indicators::{h1_contributions, patch_indicators, AnalyticField, GradientPart, IndicatorKind};
use polyvem::mesh::Point;
use polyvem::meshgen::{bounded_voronoi_with, generate, random_seeds, MeshKind};
use polyvem::vem::{assemble_with, solve_bvp, BvpSpec};
use polyvem::Execution;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn kernels(c: &mut Criterion) {
    let (_, bvp, material) = build_benchmark(&BenchmarkSpec::new(Problem::PlateHole)).unwrap();
    for seeds in [500usize, 2000] {
        let mesh = generate(&bvp.domain, MeshKind::Voronoi, seeds, 1).unwrap();
        let sol = solve_bvp(&mesh, &material, &bvp).unwrap();
        let field = AnalyticField {
            u: |p: &Point| Vector2::new(p.x.sin(), p.y.cos()),
            grad: |p: &Point| Matrix2::new(p.x.cos(), 0.0, 0.0, -p.y.sin()),
        };
        let config = CoarseningConfig::new(IndicatorKind::Energy, 20.0, 1).unwrap();
        let sites = random_seeds(&bvp.domain, seeds, 7).unwrap();

        let mut g = c.benchmark_group(format!("plate_hole_{seeds}"));
        g.sample_size(10);
        for (name, exec) in MODES {
            g.bench_function(BenchmarkId::new("voronoi", name), |b| {
                b.iter(|| bounded_voronoi_with(&sites, &bvp.domain, exec).unwrap())
            });
            g.bench_function(BenchmarkId::new("assemble", name), |b| {
                b.iter(|| assemble_with(&mesh, &material, &bvp, exec).unwrap())
            });
            g.bench_function(BenchmarkId::new("energy_indicators", name), |b| {
                b.iter(|| patch_indicators(&mesh, &sol, &material, IndicatorKind::Energy, exec).unwrap())
            });
            g.bench_function(BenchmarkId::new("h1_contributions", name), |b| {
                b.iter(|| h1_contributions(&mesh, &sol, &field, GradientPart::Full, exec).unwrap())
            });
            g.bench_function(BenchmarkId::new("coarsen_step", name), |b| {
                b.iter(|| coarsen_step(&mesh, &sol, &material, &config, exec).unwrap())
            });
        }
        g.finish();
    }
}

fn patch_test_solve(c: &mut Criterion) {
    let (domain, _, material) = build_benchmark(&BenchmarkSpec::new(Problem::LDomain)).unwrap();
    let mesh = generate(&domain, MeshKind::Structured, 60, 0).unwrap();
    let bvp = BvpSpec::fully_clamped(domain, Arc::new(|p: &Point| Vector2::new(p.x, -p.y)));
    let mut g = c.benchmark_group("l_domain_structured_60");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("assemble_and_solve", name), |b| {
            b.iter(|| {
                let sys = assemble_with(&mesh, &material, &bvp, exec).unwrap();
                sys.k.solve_spd(&sys.f).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, kernels, patch_test_solve);
criterion_main!(benches);

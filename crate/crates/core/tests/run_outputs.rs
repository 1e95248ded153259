use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use polyvem::benchmark::{run, BenchmarkSpec, Problem, StopReason};
use polyvem::mesh::io::read_text;

fn out_dir(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("runs").join(name);
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn spec(problem: Problem, dir: &Path) -> BenchmarkSpec {
    BenchmarkSpec {
        problem,
        reference_density: 64,
        output_dir: Some(dir.to_path_buf()),
        reference_cache: Some(PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("reference-cache")),
        ..Default::default()
    }
}

#[test]
fn punch_run_writes_one_file_per_mesh() {
    let dir = out_dir("punch_counts");
    let out = run(&spec(Problem::Punch, &dir)).unwrap();
    assert_eq!(out.stop, StopReason::MaxSteps);
    for k in 1..=11 {
        assert!(dir.join(format!("mesh_step{k}.txt")).is_file());
        let vtk = std::fs::read_to_string(dir.join(format!("mesh_step{k}.vtk"))).unwrap();
        for field in ["VECTORS u", "SCALARS indicator", "SCALARS h1_error", "SCALARS log10_h1_error"] {
            assert!(vtk.contains(field), "{field} missing from step {k}");
        }
    }
    assert!(!dir.join("mesh_step12.txt").exists());
    let csv = std::fs::read_to_string(dir.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert_eq!(csv, out.csv());
    let nv: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(nv.windows(2).all(|w| w[1] <= w[0]));
    for f in ["uniform.csv", "error_curve.csv", "error_curve.svg", "run_meta.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["problem"], "punch");
    assert_eq!(meta["steps"], 11);
}

#[test]
fn repeated_runs_are_identical() {
    let (a, b) = (out_dir("repeat_a"), out_dir("repeat_b"));
    for d in [&a, &b] {
        run(&BenchmarkSpec { max_steps: 4, ..spec(Problem::PlateHole, d) }).unwrap();
    }
    for f in ["convergence.csv", "uniform.csv", "mesh_step5.txt", "mesh_step5.vtk", "error_curve.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn l_domain_outline_hash_is_constant() {
    let dir = out_dir("l_outline");
    let out = run(&BenchmarkSpec { max_steps: 15, uniform_curve: false, ..spec(Problem::LDomain, &dir) }).unwrap();
    let hashes: Vec<u64> = (1..=out.steps.len())
        .map(|k| {
            let m = read_text(dir.join(format!("mesh_step{k}.txt"))).unwrap();
            let mut h = DefaultHasher::new();
            for lp in m.boundary_outline(m.geo_tol()) {
                for p in lp {
                    ((p.x * 1e8).round() as i64, (p.y * 1e8).round() as i64).hash(&mut h);
                }
            }
            h.finish()
        })
        .collect();
    assert!(hashes.len() > 2);
    assert!(hashes.iter().all(|&h| h == hashes[0]));
}

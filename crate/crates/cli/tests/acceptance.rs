//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::process::Command;
use std::time::Instant;

use ggrqr_core::counting::{alpha_ratio, cgr_count_formula, gr_count_formula, OpCounter};
use ggrqr_core::ggr::{cgr_column_step, cgr_factorize, ggr_factorize};
use ggrqr_core::matcore::metrics;
use ggrqr_core::rotations::{apply_givens_rows, givens_coeffs, gr_factorize};
use ggrqr_core::tilepar::{cost_model_run, parallel_ggr, partition, TileGrid};
use ggrqr_core::{factorize, Algorithm, DenseMatrix, FactorizeOptions};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const EPS: f64 = f64::EPSILON;
const SEED: u64 = 42;

fn seeded(n: usize) -> DenseMatrix {
    DenseMatrix::random_uniform(n, n, SEED.wrapping_add(n as u64))
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// The seven routines compared throughout, with the panel clipped to `n`.
fn seven(n: usize) -> Vec<(Algorithm, FactorizeOptions)> {
    let plain = FactorizeOptions::default();
    let blocked = FactorizeOptions {
        panel: Some(8.min(n)),
        ..plain
    };
    vec![
        (Algorithm::Gr, plain),
        (Algorithm::Cgr, plain),
        (Algorithm::Ggr, plain),
        (Algorithm::GgrBlocked, blocked),
        (Algorithm::Hqr2, plain),
        (Algorithm::Hqrf, blocked),
        (Algorithm::Mht, plain),
    ]
}

fn correctness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in [4usize, 8, 16, 32, 64, 128, 256] {
        let a = seeded(n);
        let norm_a = a.frobenius_norm();
        let gate = 50.0 * n as f64 * EPS;
        for (alg, opts) in seven(n) {
            let res = factorize(alg, &a, opts, None).map_err(|e| format!("{alg} n={n}: {e}"))?;
            let m = metrics(&a, res.q.as_ref().unwrap(), &res.r).map_err(|e| e.to_string())?;
            check(m.reconstruction_residual <= gate, || {
                format!("{alg} n={n}: residual {:.3e} > {gate:.3e}", m.reconstruction_residual)
            })?;
            check(m.orthogonality_defect <= gate, || {
                format!("{alg} n={n}: orthogonality {:.3e} > {gate:.3e}", m.orthogonality_defect)
            })?;
            check(m.max_lower_triangle <= 1e-12 * norm_a, || {
                format!("{alg} n={n}: lower {:.3e}", m.max_lower_triangle)
            })?;
            worst = worst.max(m.reconstruction_residual / gate).max(m.orthogonality_defect / gate);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("7 routines x 7 sizes, worst metric at {:.1}% of gate, {secs:.1}s", 100.0 * worst))
}

fn uniqueness() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [4usize, 8, 16, 32] {
        let a = seeded(n);
        let rs: Vec<(Algorithm, DenseMatrix)> = seven(n)
            .into_iter()
            .map(|(alg, opts)| {
                let opts = FactorizeOptions {
                    accumulate_q: false,
                    ..opts
                };
                factorize(alg, &a, opts, None).map(|r| (alg, r.r)).map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        for (i, (ai, ri)) in rs.iter().enumerate() {
            for (aj, rj) in &rs[i + 1..] {
                let scale = ri.max_abs().max(rj.max_abs());
                let diff = ri
                    .data()
                    .iter()
                    .zip(rj.data())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                check(diff <= 1e-11 * scale, || format!("{ai} vs {aj} n={n}: {diff:.3e}"))?;
                worst = worst.max(diff / scale);
            }
        }
    }
    Ok(format!("21 pairs x 4 sizes, worst relative difference {worst:.2e}"))
}

fn gr_exact() -> Outcome {
    let mut seen = Vec::new();
    for (n, want) in [(2u64, 8u64), (4, 80), (8, 672), (16, 5440)] {
        let formula = gr_count_formula(n).map_err(|e| e.to_string())?;
        check(formula == want, || format!("formula({n}) = {formula}"))?;
        let mut c = OpCounter::default();
        gr_factorize(&seeded(n as usize), false, Some(&mut c)).map_err(|e| e.to_string())?;
        check(c.muldiv() == want, || format!("n={n}: measured {} != {want}", c.muldiv()))?;
        seen.push(c.muldiv().to_string());
    }
    Ok(format!("measured {}", seen.join(", ")))
}

fn cgr_counts() -> Outcome {
    let mut prev_ratio = f64::INFINITY;
    let mut notes = Vec::new();
    for n in [8u64, 16, 32, 64] {
        let a = seeded(n as usize);
        let count = |f: fn(&DenseMatrix, bool, Option<&mut OpCounter>) -> ggrqr_core::Result<_>| {
            let mut c = OpCounter::default();
            f(&a, false, Some(&mut c)).map(|_| c.muldiv()).map_err(|e| e.to_string())
        };
        let (gr, cgr, ggr) = (count(gr_factorize)?, count(cgr_factorize)?, count(ggr_factorize)?);
        let formula = cgr_count_formula(n).map_err(|e| e.to_string())?;
        let rel = (cgr as f64 / formula as f64 - 1.0).abs();
        check(rel <= 0.10, || format!("n={n}: cgr {cgr} vs formula {formula}"))?;
        let ratio = cgr as f64 / gr as f64;
        let alpha = alpha_ratio(n).map_err(|e| e.to_string())?;
        check((ratio - alpha).abs() <= 0.05, || format!("n={n}: ratio {ratio:.4} vs alpha {alpha:.4}"))?;
        check(ratio < prev_ratio && ratio > 0.75, || format!("n={n}: ratio {ratio:.4} not decreasing toward 0.75"))?;
        check(ggr <= cgr, || format!("n={n}: ggr {ggr} > cgr {cgr}"))?;
        prev_ratio = ratio;
        notes.push(format!("n={n} ratio={ratio:.4}"));
    }
    Ok(notes.join(" "))
}

fn two_row_blocks() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (1usize..6).prop_flat_map(|w| proptest::collection::vec(-1.0f64..1.0, 2 * w));
    runner
        .run(&strategy, |data| {
            let w = data.len() / 2;
            let mut a = DenseMatrix::from_col_major(2, w, data).unwrap();
            let mut b = a.clone();
            cgr_column_step(&mut a, 0, 0, None).unwrap();
            let g = givens_coeffs(b[(0, 0)], b[(1, 0)]);
            apply_givens_rows(&mut b, 0, 1, g, 0).unwrap();
            let scale = b.max_abs().max(1.0);
            for j in 0..w {
                for i in 0..2 {
                    // The annihilated entry is set to an exact zero by the step.
                    let want = if (i, j) == (1, 0) { 0.0 } else { b[(i, j)] };
                    prop_assert!((a[(i, j)] - want).abs() <= 1e-14 * scale, "({}, {})", i, j);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random 2-row blocks match the classical rotation".into())
}

fn closed_form_4x4() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let x = DenseMatrix::random_uniform(4, 4, 1000 + seed);
        let mut a = x.clone();
        cgr_column_step(&mut a, 0, 0, None).map_err(|e| e.to_string())?;
        let c = |i: usize, j: usize| x[(i, j)];
        let p3 = (c(0, 0) * c(0, 0) + c(1, 0) * c(1, 0) + c(2, 0) * c(2, 0) + c(3, 0) * c(3, 0)).sqrt();
        let p2 = (c(1, 0) * c(1, 0) + c(2, 0) * c(2, 0) + c(3, 0) * c(3, 0)).sqrt();
        let p1 = (c(2, 0) * c(2, 0) + c(3, 0) * c(3, 0)).sqrt();
        let scale = x.max_abs();
        let mut expect = [[0.0; 4]; 4];
        expect[0][0] = p3;
        #[allow(clippy::needless_range_loop)]
        for j in 1..4 {
            let s1 = c(1, 0) * c(1, j) + c(2, 0) * c(2, j) + c(3, 0) * c(3, j);
            let s2 = c(2, 0) * c(2, j) + c(3, 0) * c(3, j);
            expect[0][j] = (c(0, 0) * c(0, j) + s1) / p3;
            expect[1][j] = c(0, 0) / (p3 * p2) * s1 - p2 / p3 * c(0, j);
            expect[2][j] = c(1, 0) / (p2 * p1) * s2 - p1 / p2 * c(1, j);
            expect[3][j] = (c(2, 0) * c(3, j) - c(3, 0) * c(2, j)) / p1;
        }
        for (i, row) in expect.iter().enumerate() {
            for (j, &want) in row.iter().enumerate() {
                let err = (a[(i, j)] - want).abs() / want.abs().max(scale);
                check(err <= 1e-13, || format!("seed {seed} ({i},{j}): {} vs {want}", a[(i, j)]))?;
                worst = worst.max(err);
            }
        }
    }
    Ok(format!("100 matrices, worst relative error {worst:.2e}"))
}

fn parallel() -> Outcome {
    for n in [64usize, 128, 256] {
        let a = seeded(n);
        let seq = ggr_factorize(&a, false, None).map_err(|e| e.to_string())?.r;
        let grid = TileGrid::with_default_block(n, 2).map_err(|e| e.to_string())?;
        for g in [grid, partition(n, 2, 2).map_err(|e| e.to_string())?] {
            let par = parallel_ggr(&a, &g).map_err(|e| e.to_string())?.r;
            let diff: f64 = par
                .data()
                .iter()
                .zip(seq.data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            check(diff <= 1e-12 * a.frobenius_norm(), || {
                format!("n={n} block={}: ‖ΔR‖ = {diff:.3e}", g.block)
            })?;
        }
    }

    let a = seeded(64);
    let seq = ggr_factorize(&a, false, None).map_err(|e| e.to_string())?.r;
    let one = parallel_ggr(&a, &partition(64, 1, 16).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check(one.r == seq, || "k=1 differs from sequential".into())?;

    // Fine-grained tiles (edge k) keep all k×k workers busy to the end.
    let mut prev = 0.0;
    let mut speedups = Vec::new();
    for n in [64usize, 128, 256, 512] {
        let rep = cost_model_run(n, 2, 2, 0.1).map_err(|e| e.to_string())?;
        check(rep.speedup >= prev, || format!("speedup fell at n={n}: {:.3} < {prev:.3}", rep.speedup))?;
        prev = rep.speedup;
        speedups.push(format!("{:.3}", rep.speedup));
    }
    check(prev >= 3.0, || format!("speedup at n=512 is {prev:.3}"))?;

    for k in 1..=4usize {
        for block in [1usize, 2, 4, 8, 16] {
            for n in [32usize, 64, 128] {
                if n % block != 0 {
                    continue;
                }
                let rep = cost_model_run(n, k, block, 0.1).map_err(|e| e.to_string())?;
                check(rep.speedup <= (k * k) as f64 && rep.speedup >= 1.0, || {
                    format!("n={n} k={k} block={block}: speedup {:.3}", rep.speedup)
                })?;
                if k == 1 {
                    check(rep.speedup == 1.0, || format!("k=1 n={n} speedup {}", rep.speedup))?;
                }
            }
        }
    }
    Ok(format!("k=2 speedups {} over n=64..512", speedups.join(", ")))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ggrqr"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let runs: [&[&str]; 3] = [
        &["bench", "--size", "8,16,32", "--repeat", "3", "--seed", "11"],
        &["bench", "--parallel", "--size", "16,32,64", "--grid", "2", "--block", "2"],
        &["opcount", "--algo", "gr,cgr,ggr", "--size", "4,8,16", "--seed", "11"],
    ];
    for args in runs {
        let first = run_cli(args)?;
        let second = run_cli(args)?;
        check(!first.is_empty() && first == second, || format!("{args:?} output differs"))?;
    }
    Ok("bench, bench --parallel and opcount byte-identical across runs".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("correctness suite", correctness),
        ("cross-algorithm uniqueness", uniqueness),
        ("classical Givens count exact", gr_exact),
        ("column-wise counts and ratio", cgr_counts),
        ("two-row blocks equal classical rotation", two_row_blocks),
        ("4x4 closed form", closed_form_4x4),
        ("parallel equivalence and scaling", parallel),
        ("CSV determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

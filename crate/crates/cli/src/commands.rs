//! Experiment drivers behind each subcommand.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sinkdiv::{
    asymptotic_law, bootstrap_test_one, bootstrap_test_two, euclidean_barycenter, kde,
    linear_trend_measure, make_grid, rho, sample_empirical, sample_limit, silverman_bandwidth,
    sinkhorn_divergence, sinkhorn_solve, sinkhorn_solve_warm, squared_euclidean_cost,
    uniform_measure, AsymptoticLaw, CostMatrix, DiscreteMeasure, EmpiricalMeasure, PowerConfig,
    SolverConfig, TestConfig, TestReport,
};

use crate::ingest::{ingest_points, BinnedDataset, GridSpec};
use crate::spec::{
    BarycenterArgs, CltMode, IngestArgs, PowerArgs, RefChoice, SimulateArgs, TestOneArgs,
    TestTwoArgs,
};

fn seeded_rng(seed: u64) -> impl rand::Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn write_manifest(
    out: &Path,
    command: &str,
    params: &impl Serialize,
    extra: serde_json::Value,
) -> anyhow::Result<()> {
    let mut manifest = json!({
        "tool": "sinkdiv",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "params": params,
    });
    if let serde_json::Value::Object(map) = extra {
        manifest.as_object_mut().unwrap().extend(map);
    }
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn write_stats_csv(path: &Path, values: &[f64]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

fn write_xy_csv(
    path: &Path,
    x_name: &str,
    y_name: &str,
    rows: &[(f64, f64)],
) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{x_name},{y_name}")?;
    for (x, y) in rows {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn load_measure(path: &Path, expected_len: usize) -> anyhow::Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read measure {}", path.display()))?;
    let measure = if let Ok(emp) = serde_json::from_str::<EmpiricalMeasure>(&text) {
        emp.as_measure().clone()
    } else {
        serde_json::from_str::<DiscreteMeasure>(&text).with_context(|| {
            format!(
                "{} is neither an empirical nor a discrete measure",
                path.display()
            )
        })?
    };
    if measure.len() != expected_len {
        bail!(
            "measure {} has {} points, expected {expected_len}",
            path.display(),
            measure.len()
        );
    }
    Ok(measure)
}

fn load_empirical(path: &Path, expected_len: usize) -> anyhow::Result<EmpiricalMeasure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read measure {}", path.display()))?;
    let emp: EmpiricalMeasure = serde_json::from_str(&text).with_context(|| {
        format!(
            "{} is not an empirical measure (counts are required)",
            path.display()
        )
    })?;
    if emp.len() != expected_len {
        bail!(
            "measure {} has {} points, expected {expected_len}",
            path.display(),
            emp.len()
        );
    }
    Ok(emp)
}

/// Uniform weights over the support of `m`, zero elsewhere.
fn uniform_over_support(m: &DiscreteMeasure) -> anyhow::Result<DiscreteMeasure> {
    let support = m.support();
    if support.is_empty() {
        bail!("measure has empty support");
    }
    let mut weights = vec![0.0; m.len()];
    let w = 1.0 / support.len() as f64;
    for i in support {
        weights[i] = w;
    }
    Ok(DiscreteMeasure::new(weights)?)
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + step * i as f64).collect()
}

/// KDE of `samples` on a grid padded by three bandwidths, as (x, density).
fn kde_curve(samples: &[f64], grid_hint: Option<(f64, f64)>) -> Option<Vec<(f64, f64)>> {
    let h = silverman_bandwidth(samples).ok()?;
    let (mut lo, mut hi) = grid_hint.unwrap_or((f64::INFINITY, f64::NEG_INFINITY));
    for &s in samples {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let xs = linspace(lo - 3.0 * h, hi + 3.0 * h, 256);
    let dens = kde(samples, &xs).ok()?;
    Some(xs.into_iter().zip(dens).collect())
}

pub fn simulate_clt(args: SimulateArgs) -> anyhow::Result<()> {
    let r = args.resolve()?;
    std::fs::create_dir_all(&r.out)?;
    let space = make_grid(r.grid, 2);
    let n_points = space.len();
    let cost = squared_euclidean_cost(&space);
    let a = uniform_measure(n_points);
    let b = linear_trend_measure(n_points, r.theta);
    let two_sample = matches!(r.mode, CltMode::H0Two | CltMode::H1Two);
    let reference: &DiscreteMeasure = match r.mode {
        CltMode::H0One | CltMode::H0Two => &a,
        CltMode::H1One | CltMode::H1Two => &b,
    };

    let mut master = seeded_rng(r.seed);
    let mut cells = Vec::new();
    for &lambda in &r.lambda {
        let cfg = SolverConfig::new(lambda)
            .with_tol(r.tol)
            .with_max_iter(r.max_iter);
        let base = sinkhorn_solve(&a, reference, &cost, &cfg)?;
        if !base.converged {
            bail!("base solve did not converge at lambda = {lambda}");
        }
        let center = base.dual;
        for (&n, &m) in r.n.iter().zip(&r.m) {
            let cell_seed: u64 = rand::Rng::random(&mut master);
            let limit_seed: u64 = rand::Rng::random(&mut master);
            let law: AsymptoticLaw = match r.mode {
                CltMode::H1Two => {
                    let gamma = m as f64 / (n as f64 + m as f64);
                    asymptotic_law(&base, &a, Some((&b, gamma)))?
                }
                _ => asymptotic_law(&base, &a, None)?,
            };
            let scale = if two_sample {
                rho(n, m)
            } else {
                (n as f64).sqrt()
            };
            let stats: Vec<Option<f64>> = (0..r.reps)
                .into_par_iter()
                .map(|j| {
                    let mut rng = sinkdiv_rng(cell_seed, j as u64);
                    let ahat = sample_with(&a, n, &mut rng);
                    let sol = if two_sample {
                        let from_b = if matches!(r.mode, CltMode::H1Two) {
                            &b
                        } else {
                            &a
                        };
                        let bhat = sample_with(from_b, m, &mut rng);
                        sinkhorn_solve_warm(
                            ahat.as_measure(),
                            bhat.as_measure(),
                            &cost,
                            &cfg,
                            Some((&base.alpha, &base.beta)),
                        )
                    } else {
                        sinkhorn_solve_warm(
                            ahat.as_measure(),
                            reference,
                            &cost,
                            &cfg,
                            Some((&base.alpha, &base.beta)),
                        )
                    }
                    .ok()?;
                    if sol.converged {
                        Some(scale * (sol.dual - center))
                    } else {
                        None
                    }
                })
                .collect();
            let kept: Vec<f64> = stats.into_iter().flatten().collect();
            let limit = sample_limit(&law, r.reps, limit_seed);

            let tag = if two_sample {
                format!("l{lambda}_n{n}_m{m}")
            } else {
                format!("l{lambda}_n{n}")
            };
            let stats_file = format!("stats_{tag}.csv");
            let limit_file = format!("limit_{tag}.csv");
            write_stats_csv(&r.out.join(&stats_file), &kept)?;
            write_stats_csv(&r.out.join(&limit_file), &limit)?;
            let mut files = vec![stats_file, limit_file];

            let hint = kept
                .iter()
                .chain(&limit)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            if let Some(curve) = kde_curve(&kept, Some(hint)) {
                let name = format!("kde_stats_{tag}.csv");
                write_xy_csv(&r.out.join(&name), "x", "density", &curve)?;
                files.push(name);
            }
            if let Some(curve) = kde_curve(&limit, Some(hint)) {
                let name = format!("kde_limit_{tag}.csv");
                write_xy_csv(&r.out.join(&name), "x", "density", &curve)?;
                files.push(name);
            }
            cells.push(json!({
                "lambda": lambda,
                "n": n,
                "m": if two_sample { Some(m) } else { None },
                "center": center,
                "law_variance": law.variance,
                "requested": r.reps,
                "kept": kept.len(),
                "files": files,
            }));
        }
    }
    write_manifest(&r.out, "simulate-clt", &r, json!({ "cells": cells }))?;
    Ok(())
}

fn sinkdiv_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_with(a: &DiscreteMeasure, n: u64, rng: &mut rand_chacha::ChaCha8Rng) -> EmpiricalMeasure {
    // Draw a fresh sub-seed so core sampling stays decoupled from the CLI's
    // stream layout.
    let seed: u64 = rand::Rng::random(rng);
    sample_empirical(a, n, seed)
}

struct TestInputs {
    cost: CostMatrix,
    sample: EmpiricalMeasure,
    reference: DiscreteMeasure,
    center: f64,
    centering: &'static str,
}

pub fn test_one(args: TestOneArgs) -> anyhow::Result<()> {
    let r = args.resolve()?;
    std::fs::create_dir_all(&r.out)?;
    let cfg = SolverConfig::new(r.lambda)
        .with_tol(r.tol)
        .with_max_iter(r.max_iter);
    let mut master = seeded_rng(r.seed);
    let sample_seed: u64 = rand::Rng::random(&mut master);
    let tc_seed: u64 = rand::Rng::random(&mut master);

    let inputs = if let Some(data_path) = &r.data {
        let ds = BinnedDataset::load(data_path)?;
        let space = ds.grid.space();
        let cost = squared_euclidean_cost(&space);
        let sample = if let Some(group) = &r.sample {
            ds.group(group)?.clone()
        } else {
            load_empirical(r.sample_file.as_ref().unwrap(), space.len())?
        };
        let reference = match r.reference.as_ref().unwrap() {
            RefChoice::Group(g) => ds.group(g)?.as_measure().clone(),
            RefChoice::File(p) => load_measure(p, space.len())?,
            RefChoice::UniformSupport => uniform_over_support(sample.as_measure())?,
        };
        let center = sinkhorn_divergence(&reference, &reference, &cost, &cfg)?;
        TestInputs {
            cost,
            sample,
            reference,
            center,
            centering: "self: d(ref, ref)",
        }
    } else {
        let space = make_grid(r.grid, 2);
        let cost = squared_euclidean_cost(&space);
        let a = uniform_measure(space.len());
        let reference = linear_trend_measure(space.len(), r.theta);
        let sample = sample_empirical(&a, r.n, sample_seed);
        let center = sinkhorn_divergence(&a, &reference, &cost, &cfg)?;
        TestInputs {
            cost,
            sample,
            reference,
            center,
            centering: "population: d(a, ref)",
        }
    };

    let tc = TestConfig {
        solver: cfg,
        replicates: r.reps,
        level: r.level,
        seed: tc_seed,
    };
    let report = bootstrap_test_one(
        &inputs.sample,
        &inputs.reference,
        inputs.center,
        &inputs.cost,
        &tc,
    )?;
    finish_test(
        &r.out,
        "test-one",
        &r,
        &report,
        &inputs,
        r.plan_out.as_deref(),
        &cfg,
    )
}

pub fn test_two(args: TestTwoArgs) -> anyhow::Result<()> {
    let r = args.resolve()?;
    std::fs::create_dir_all(&r.out)?;
    let cfg = SolverConfig::new(r.lambda)
        .with_tol(r.tol)
        .with_max_iter(r.max_iter);
    let mut master = seeded_rng(r.seed);
    let seed_a: u64 = rand::Rng::random(&mut master);
    let seed_b: u64 = rand::Rng::random(&mut master);
    let tc_seed: u64 = rand::Rng::random(&mut master);

    let (cost, sample_a, sample_b, center, centering) = if let Some(data_path) = &r.data {
        let ds = BinnedDataset::load(data_path)?;
        let space = ds.grid.space();
        let cost = squared_euclidean_cost(&space);
        let sample_a = ds.group(r.sample_a.as_ref().unwrap())?.clone();
        let sample_b = ds.group(r.sample_b.as_ref().unwrap())?.clone();
        let reference = match r.reference.as_ref().unwrap() {
            RefChoice::Group(g) => ds.group(g)?.as_measure().clone(),
            RefChoice::File(p) => load_measure(p, space.len())?,
            RefChoice::UniformSupport => bail!("two-sample data mode needs an explicit reference"),
        };
        let center = sinkhorn_divergence(&reference, &reference, &cost, &cfg)?;
        (cost, sample_a, sample_b, center, "self: d(ref, ref)")
    } else {
        let space = make_grid(r.grid, 2);
        let cost = squared_euclidean_cost(&space);
        let a = uniform_measure(space.len());
        let b = linear_trend_measure(space.len(), r.theta);
        let sample_a = sample_empirical(&a, r.n, seed_a);
        let sample_b = sample_empirical(&b, r.m, seed_b);
        let center = sinkhorn_divergence(&a, &b, &cost, &cfg)?;
        (cost, sample_a, sample_b, center, "population: d(a, b)")
    };

    let tc = TestConfig {
        solver: cfg,
        replicates: r.reps,
        level: r.level,
        seed: tc_seed,
    };
    let report = bootstrap_test_two(&sample_a, &sample_b, center, &cost, &tc)?;

    write_json(&r.out.join("report.json"), &report)?;
    write_stats_csv(&r.out.join("replicates.csv"), &report.bootstrap_stats)?;
    if let Some(plan_path) = &r.plan_out {
        let sol = sinkhorn_solve(sample_a.as_measure(), sample_b.as_measure(), &cost, &cfg)?;
        let mut w = BufWriter::new(File::create(plan_path)?);
        sol.write_plan_csv(&mut w)?;
    }
    write_manifest(
        &r.out,
        "test-two",
        &r,
        json!({ "derived": { "center": center, "centering": centering } }),
    )?;
    println!(
        "test-two: statistic {:.6}, p-value {:.4}, CI [{:.6}, {:.6}]",
        report.statistic, report.p_value, report.ci_low, report.ci_high
    );
    Ok(())
}

fn finish_test(
    out: &Path,
    command: &str,
    params: &impl Serialize,
    report: &TestReport,
    inputs: &TestInputs,
    plan_out: Option<&Path>,
    cfg: &SolverConfig,
) -> anyhow::Result<()> {
    write_json(&out.join("report.json"), report)?;
    write_stats_csv(&out.join("replicates.csv"), &report.bootstrap_stats)?;
    if let Some(plan_path) = plan_out {
        let sol = sinkhorn_solve(
            inputs.sample.as_measure(),
            &inputs.reference,
            &inputs.cost,
            cfg,
        )?;
        let mut w = BufWriter::new(File::create(plan_path)?);
        sol.write_plan_csv(&mut w)?;
    }
    write_manifest(
        out,
        command,
        params,
        json!({ "derived": { "center": inputs.center, "centering": inputs.centering } }),
    )?;
    println!(
        "{command}: statistic {:.6}, p-value {:.4}, CI [{:.6}, {:.6}]",
        report.statistic, report.p_value, report.ci_low, report.ci_high
    );
    Ok(())
}

pub fn power(args: PowerArgs) -> anyhow::Result<()> {
    let r = args.resolve()?;
    std::fs::create_dir_all(&r.out)?;
    let space = make_grid(r.grid, 2);
    let cost = squared_euclidean_cost(&space);
    let a = uniform_measure(space.len());
    let pc = PowerConfig {
        sample_size: r.n,
        replicates: r.reps,
        repeats: r.repeats,
        level: r.level,
        seed: r.seed,
        solver: SolverConfig::new(1.0)
            .with_tol(r.tol)
            .with_max_iter(r.max_iter),
    };
    let points = sinkdiv::power_curve(&a, &cost, &r.theta, &r.lambda, &pc)?;
    let path = r.out.join("power.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "theta,lambda,power")?;
    for p in &points {
        writeln!(w, "{},{},{}", p.theta, p.lambda, p.power)?;
    }
    drop(w);
    write_manifest(&r.out, "power", &r, json!({}))?;
    for p in &points {
        println!(
            "theta {:>6}, lambda {:>6}: power {:.3}",
            p.theta, p.lambda, p.power
        );
    }
    Ok(())
}

pub fn ingest(args: IngestArgs) -> anyhow::Result<()> {
    let r = args.resolve()?;
    std::fs::create_dir_all(&r.out)?;
    let grid = GridSpec::new(r.nx, r.ny, r.bbox)?;
    let ds = ingest_points(&r.input, grid, &r.group_col, &r.x_col, &r.y_col)?;
    write_json(&r.out.join("dataset.json"), &ds)?;
    write_manifest(
        &r.out,
        "ingest",
        &r,
        json!({
            "derived": {
                "groups": ds.groups.keys().collect::<Vec<_>>(),
                "group_sizes": ds.groups.values().map(|m| m.sample_size()).collect::<Vec<_>>(),
                "total_observations": ds.total_observations(),
                "skipped_rows": ds.skipped_rows,
            }
        }),
    )?;
    println!(
        "ingested {} observations into {} groups ({} rows skipped)",
        ds.total_observations(),
        ds.groups.len(),
        ds.skipped_rows
    );
    Ok(())
}

pub fn barycenter(args: BarycenterArgs) -> anyhow::Result<()> {
    let r = args.resolve()?;
    if let Some(parent) = r.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let ds = BinnedDataset::load(&r.data)?;
    let labels: Vec<String> = match &r.groups {
        Some(list) => list.clone(),
        None => ds.groups.keys().cloned().collect(),
    };
    if labels.is_empty() {
        bail!("no groups selected");
    }
    let mut measures = Vec::with_capacity(labels.len());
    for label in &labels {
        measures.push(ds.group(label)?.as_measure().clone());
    }
    let bary = euclidean_barycenter(&measures)?;
    write_json(&r.out, &bary)?;

    if let Some(path) = &r.pooled_out {
        let mut counts = vec![0u64; ds.grid.len()];
        for label in &labels {
            for (acc, &c) in counts.iter_mut().zip(ds.group(label)?.counts()) {
                *acc += c;
            }
        }
        let pooled = EmpiricalMeasure::from_counts(counts)?;
        write_json(path, &pooled)?;
    }
    if let Some(path) = &r.uniform_support_out {
        write_json(path, &uniform_over_support(&bary)?)?;
    }
    let manifest_dir: PathBuf = r
        .out
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    write_manifest(&manifest_dir, "barycenter", &r, json!({}))?;
    println!(
        "barycenter over {} groups written to {}",
        labels.len(),
        r.out.display()
    );
    Ok(())
}

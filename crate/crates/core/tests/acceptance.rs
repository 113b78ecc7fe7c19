//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use chainlab_core::center_lift::reorder_chain;
use chainlab_core::center_shadowing::{center_shadow_periodic, measure_lipschitz_L};
use chainlab_core::chain_engine::{BoxGrid, ChainGraph, PseudoOrbit};
use chainlab_core::closing_solver::{
    displacement_profile, find_closing_tau, min_center_push, perturbed_map, CenterVectorField, PerturbationFamily,
};
use chainlab_core::lab::{run_batch, Scenario};
use chainlab_core::models::{PresetLibrary, TorusPoint};
use common::{fiber_chain, mixed_chain, ordered_chain, preset, reorder_oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRESETS: [&str; 4] = ["product", "nonlinear", "two-circle", "tilted"];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn family(id: &str) -> PerturbationFamily {
    let tilt = PresetLibrary::builtin().get(id).unwrap().field_tilt;
    PerturbationFamily::new(preset(id), CenterVectorField { tilt })
}

fn closed_form() -> Outcome {
    let f = family("product");
    let l = fiber_chain(&f.system, 0.0, &[-0.05; 10], 0.06);
    let r = find_closing_tau(&f, &l, 10).map_err(|e| e.to_string())?;
    let end = r.end.distance(&TorusPoint::new(0.0, 0.0, 0.5));
    ensure((r.tau - 0.05).abs() < 1e-10, || format!("tau = {}", r.tau))?;
    ensure(end < 1e-10, || format!("endpoint off by {end:e}"))?;
    Ok(format!("tau = {:.12}, endpoint error {end:.1e}", r.tau))
}

fn periodic() -> Outcome {
    let f = family("product");
    let l = fiber_chain(&f.system, 0.0, &[-0.05; 20], 0.06);
    let r = find_closing_tau(&f, &l, 10).map_err(|e| e.to_string())?;
    let mut p = r.start;
    for _ in 0..20 {
        p = perturbed_map(&f, r.tau, &p);
    }
    let gap = p.distance(&r.start);
    ensure((r.tau - 0.05).abs() < 1e-10, || format!("tau = {}", r.tau))?;
    ensure(gap < 1e-10, || format!("|f^20(p) - p| = {gap:e}"))?;
    Ok(format!("tau = {:.12}, return gap {gap:.1e}", r.tau))
}

fn closing_bound() -> Outcome {
    let ks = vec![10, 20, 40, 80];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let scenarios: Vec<Scenario> = (0..20)
        .map(|i| {
            let x = [rng.gen(), rng.gen(), rng.gen()];
            Scenario::walk(&format!("walk-{i}"), "nonlinear", x, ks.clone(), 1000 + i)
        })
        .collect();
    let mut max_tau = vec![0.0f64; ks.len()];
    let mut worst = f64::INFINITY;
    for rec in run_batch(&PresetLibrary::builtin(), &scenarios) {
        let rec = rec.map_err(|e| e.to_string())?;
        ensure(rec.passed(), || format!("{}: {:?}", rec.scenario.id, rec.failures))?;
        ensure(rec.results.len() == ks.len(), || format!("{}: missing k", rec.scenario.id))?;
        for (j, r) in rec.results.iter().enumerate() {
            let bound = (rec.section_lipschitz + 1.0) / r.k as f64;
            ensure(r.start_distance < bound && r.end_distance < bound, || {
                format!("{} k={}: {} / {} vs {bound}", rec.scenario.id, r.k, r.start_distance, r.end_distance)
            })?;
            ensure((r.epsilon - 1.0 / (2.0 * r.k as f64)).abs() < 1e-15, || format!("eps = {}", r.epsilon))?;
            max_tau[j] = max_tau[j].max(r.tau.abs());
            worst = worst.min(bound - r.start_distance.max(r.end_distance));
        }
    }
    ensure(max_tau.windows(2).all(|w| w[1] < w[0]), || format!("max tau by k: {max_tau:?}"))?;
    let taus: Vec<String> = max_tau.iter().map(|t| format!("{t:.2e}")).collect();
    Ok(format!("max tau by k [{}], smallest margin {worst:.2e}", taus.join(", ")))
}

fn rewriting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let eps = 0.05;
    for trial in 0..500 {
        let sys = preset(PRESETS[trial % 4]);
        let n = rng.gen_range(2..=50);
        let lifted = mixed_chain(&mut rng, &sys, n, eps);
        let (out, report) = reorder_chain(&lifted).map_err(|e| format!("chain {trial}: {e}"))?;
        let t = out.jump_times();
        ensure(t.iter().all(|t| *t <= 0.0) || t.iter().all(|t| *t >= 0.0), || format!("chain {trial} mixed"))?;
        ensure(t.iter().all(|t| t.abs() < eps), || format!("chain {trial} exceeds eps"))?;
        ensure(
            out.offsets[0].to_bits() == lifted.offsets[0].to_bits()
                && out.offsets[n].to_bits() == lifted.offsets[n].to_bits(),
            || format!("chain {trial} moved an endpoint"),
        )?;
        let (oracle, steps) = reorder_oracle(&lifted);
        ensure(steps == report.steps.len(), || format!("chain {trial}: step count differs"))?;
        ensure(out.offsets.iter().zip(&oracle).all(|(a, b)| a.to_bits() == b.to_bits()), || {
            format!("chain {trial}: differs from oracle")
        })?;
    }
    Ok("500 chains byte-identical".into())
}

fn lipschitz() -> Outcome {
    let mut notes = Vec::new();
    for id in PRESETS {
        let sys = preset(id);
        let lb = sys.eigen().shadowing_constant();
        let table = measure_lipschitz_L(&sys, 100, &[0.1, 0.05, 0.025], 1.0, 5).map_err(|e| e.to_string())?;
        let sup = table.summary.iter().map(|s| s.max_ratio).fold(0.0, f64::max);
        ensure(sup <= lb + 1.0, || format!("{id}: sup ratio {sup} > {}", lb + 1.0))?;
        notes.push(format!("{id} {sup:.3}"));

        // noisy copies of the fixed point (0, 0, 1/2), closed up exactly
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pts: Vec<TorusPoint> = (0..16)
            .map(|_| TorusPoint::new(0.0, 0.0, 0.5).shifted([0; 3].map(|_| rng.gen_range(-0.004..0.004))))
            .collect();
        pts.push(pts[0]);
        let orbit = PseudoOrbit::new(&sys, pts, 0.05).map_err(|e| e.to_string())?;
        let shadow = center_shadow_periodic(&sys, &orbit).map_err(|e| format!("{id}: {e}"))?;
        let x = shadow.chain.points();
        ensure(x[0].same_bits(&x[x.len() - 1]), || format!("{id}: periodic shadow does not close"))?;
    }
    Ok(format!("sup ratio {}", notes.join(", ")))
}

fn monotone_displacement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for id in PRESETS {
        let f = family(id);
        for s in 0..50 {
            let n = rng.gen_range(2..=40);
            let l = ordered_chain(&mut rng, &f.system, n, 0.04);
            let prof = displacement_profile(&f, &l, 0.05, 50).map_err(|e| e.to_string())?;
            ensure(prof.len() == 50, || format!("{id}: {} grid points", prof.len()))?;
            ensure(prof.windows(2).all(|w| w[1].1 > w[0].1), || format!("{id} scenario {s}: not increasing"))?;
        }
    }
    let push = min_center_push(&family("nonlinear"), 0.01, 4096).map_err(|e| e.to_string())?;
    ensure(push.delta >= 0.008, || format!("push {}", push.delta))?;
    Ok(format!("200 profiles increasing, push(0.01) = {:.6}", push.delta))
}

fn chain_engine() -> Outcome {
    let product = ChainGraph::build(&preset("product"), 64, 0.05).map_err(|e| e.to_string())?;
    let comps = product.components().count;
    ensure(comps == 1, || format!("product has {comps} components"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut found = 0;
    for _ in 0..10 {
        let x = TorusPoint::new(rng.gen(), rng.gen(), rng.gen());
        let y = TorusPoint::new(rng.gen(), rng.gen(), rng.gen());
        let o = product.chain_attainable(&x, &y).ok_or("product pair not attainable")?;
        let jump = o.max_jump(product.system());
        ensure(jump < product.witness_bound(), || format!("jump {jump} >= {}", product.witness_bound()))?;
        found += 1;
    }

    let sys = preset("two-circle");
    let eps = 1.1 * BoxGrid::new(64).map_err(|e| e.to_string())?.diameter();
    let two = ChainGraph::build(&sys, 64, eps).map_err(|e| e.to_string())?;
    let classes = two.chain_recurrent_classes().len();
    ensure(classes == 2, || format!("two-circle has {classes} classes"))?;
    let attractor = TorusPoint::new(0.3, 0.6, 0.5);
    let repeller = TorusPoint::new(0.7, 0.2, 0.0);
    ensure(two.chain_attainable(&attractor, &repeller).is_none(), || "attractor reaches repeller".into())?;
    let o = two
        .chain_attainable(&TorusPoint::new(0.3, 0.6, 0.1), &attractor)
        .ok_or("0.1 does not reach the attractor")?;
    ensure(o.max_jump(&sys) < two.witness_bound(), || "two-circle witness too large".into())?;
    Ok(format!("1 component, {classes} classes, {} witnesses sound", found + 1))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 closed-form closing", closed_form, Duration::from_secs(1)),
        ("2 periodic closing", periodic, Duration::from_secs(1)),
        ("3 closing bound campaign", closing_bound, Duration::from_secs(300)),
        ("4 sign rewriting vs oracle", rewriting, Duration::from_secs(30)),
        ("5 shadowing Lipschitz", lipschitz, Duration::from_secs(60)),
        ("6 monotone displacement", monotone_displacement, Duration::from_secs(60)),
        ("7 chain engine soundness", chain_engine, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let t0 = Instant::now();
        let outcome = run();
        let took = t0.elapsed();
        let outcome = match outcome {
            Ok(s) if took > limit => Err(format!("{s}; took {took:.2?} > {limit:?}")),
            o => o,
        };
        match outcome {
            Ok(s) => println!("PASS  {name} ({took:.2?}): {s}"),
            Err(s) => {
                failed += 1;
                println!("FAIL  {name} ({took:.2?}): {s}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

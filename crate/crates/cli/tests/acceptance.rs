//! One pass/fail line per acceptance criterion; exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::{
    brute_force, crc16_bitwise, degraded_topics, fabric_hyperperiod, fabric_task_count, random_manifest,
    random_task_set, relay_registry, slot_topics, task_set_hyperperiod, ManifestOptions, TaskDef,
};
use fabricmigrate_core::fabric::deadline_report;
use fabricmigrate_core::link::{crc16_ccitt_false, decode_stream, encode_frame, Frame, FrameKind, MAX_PAYLOAD};
use fabricmigrate_core::manifest::{
    assign_topic_addresses, check_migration, compile_plan, parse_manifest, response_time_analysis, Manifest,
    MigrationError, ResponseTime, RtaTask,
};
use fabricmigrate_core::model::{slot_layout, Subject};
use fabricmigrate_core::runtime::{JitterModel, System, SystemConfig};
use fabricmigrate_core::scenario::{fig2_manifest, fig3_manifest, rk4_step, robot_scenario, run_scenario, PlantParams, PlantState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIG2: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/src/scenario/data/fig2.manifest");
const FIG3: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/src/scenario/data/fig3.manifest");

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rta_tasks(tasks: &[TaskDef]) -> Vec<RtaTask> {
    tasks.iter().map(|t| RtaTask::new(t.c, t.t, t.prio)).collect()
}

fn rta_matches_brute_force() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
    let mut schedulable = 0;
    for i in 0..200 {
        let tasks = random_task_set(&mut rng, 1.1);
        let r = response_time_analysis(&rta_tasks(&tasks)).map_err(|e| e.to_string())?;
        let obs = brute_force(&tasks, task_set_hyperperiod(&tasks));
        check(r.schedulable() == obs.iter().all(|o| !o.missed), || format!("set {i}: {tasks:?}"))?;
        for (resp, o) in r.responses.iter().zip(&obs) {
            let agrees = match *resp {
                ResponseTime::Bounded(b) => !o.missed && o.worst_response == b,
                ResponseTime::Unschedulable { .. } => o.missed,
            };
            check(agrees, || format!("set {i}: {resp:?} vs {o:?}"))?;
        }
        schedulable += r.schedulable() as usize;
    }
    let elapsed = start.elapsed();
    check(schedulable > 0 && schedulable < 200, || format!("only one verdict exercised ({schedulable}/200)"))?;
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("200 sets ({schedulable} schedulable) in {:.2}s", elapsed.as_secs_f64()))
}

fn worked_fixpoints() -> Outcome {
    let a = [
        TaskDef { c: 1, t: 4, d: 4, prio: 3 },
        TaskDef { c: 2, t: 6, d: 6, prio: 2 },
        TaskDef { c: 3, t: 12, d: 12, prio: 1 },
    ];
    let ra = response_time_analysis(&rta_tasks(&a)).map_err(|e| e.to_string())?;
    let want = vec![ResponseTime::Bounded(1), ResponseTime::Bounded(3), ResponseTime::Bounded(10)];
    check(ra.responses == want, || format!("{:?}", ra.responses))?;
    let b = [TaskDef { c: 3, t: 4, d: 4, prio: 2 }, TaskDef { c: 2, t: 5, d: 5, prio: 1 }];
    let rb = response_time_analysis(&rta_tasks(&b)).map_err(|e| e.to_string())?;
    check(matches!(rb.responses[1], ResponseTime::Unschedulable { exceeded_at: 8 }), || {
        format!("{:?}", rb.responses)
    })?;
    check(brute_force(&b, 5)[1].missed, || "brute force shows no miss".into())?;
    Ok("R = 1, 3, 10; second set unschedulable at 8".into())
}

fn zero_fabric_misses() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
    let opts = ManifestOptions::default();
    let registry = relay_registry();
    let (mut checked, mut attempts) = (0, 0);
    while checked < 50 {
        attempts += 1;
        check(attempts < 1000, || "generator rarely yields schedulable manifests".into())?;
        let text = random_manifest(&mut rng, &opts);
        let m = parse_manifest(&text).map_err(|e| e.to_string())?;
        let Ok(plan) = compile_plan(&m) else { continue };
        if fabric_task_count(&plan) == 0 {
            continue;
        }
        checked += 1;
        let config = SystemConfig {
            seed: rng.random(),
            jitter: Some(JitterModel::spikes(0.3, 3000).with_seed(rng.random())),
            ..SystemConfig::default()
        };
        let mut sys = System::new(&m, &plan, &registry, config).map_err(|e| e.to_string())?;
        sys.run_until(2 * fabric_hyperperiod(&m)).map_err(|e| e.to_string())?;
        let misses = deadline_report(sys.trace()).fabric_misses();
        check(misses == 0, || format!("{misses} fabric misses in\n{text}"))?;
    }
    Ok(format!("50 manifests over 2 hyperperiods ({attempts} generated)"))
}

fn link_codec() -> Outcome {
    check(crc16_ccitt_false(b"123456789") == 0x29B1, || "CRC check value".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0004);
    for i in 0..10_000 {
        let len = rng.random_range(0..=MAX_PAYLOAD);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let kind = FrameKind::ALL[rng.random_range(0..FrameKind::ALL.len())];
        let f = Frame::new(rng.random(), kind, rng.random(), payload);
        check(crc16_ccitt_false(&f.payload) == crc16_bitwise(&f.payload), || format!("crc {i}"))?;
        let d = decode_stream(&encode_frame(&f).map_err(|e| e.to_string())?);
        check(d.frames == [f] && d.errors.is_empty(), || format!("frame {i} did not round-trip"))?;
    }
    let f = Frame::new(0x7E7D, FrameKind::ServiceRequest, 0x7E, vec![0x01, 0x7E, 0x42, 0x7D, 0x5E, 0xFF]);
    let good = encode_frame(&f).map_err(|e| e.to_string())?;
    let mut flips = 0;
    for byte in 1..good.len() {
        for bit in 0..8 {
            let mut bad = good.clone();
            bad[byte] ^= 1 << bit;
            let d = decode_stream(&bad);
            check(d.frames.is_empty() && (!d.errors.is_empty() || !d.remainder.is_empty()), || {
                format!("flip {byte}.{bit} not rejected")
            })?;
            flips += 1;
        }
    }
    Ok(format!("10000 round-trips, {flips} bit flips rejected, CRC 0x29B1"))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_fabricmigrate"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(o.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn deterministic_runs(dir: &Path) -> Outcome {
    for (name, m) in [("fig2", FIG2), ("fig3", FIG3)] {
        let a = dir.join(format!("{name}_a.csv"));
        let b = dir.join(format!("{name}_b.csv"));
        for p in [&a, &b] {
            cli(&["run", "--manifest", m, "--seed", "7", "--duration-us", "3000000", "--trace", p.to_str().unwrap()])?;
        }
        check(read(&a)? == read(&b)?, || format!("{name} traces differ"))?;
    }
    Ok("CLI traces byte-identical for both deployments".into())
}

fn migration_narrative() -> Outcome {
    let config = robot_scenario();
    let start = Instant::now();
    let mut before_failures = 0;
    for seed in 0..10 {
        let before = run_scenario(&fig2_manifest(), &config, seed, config.duration_us).map_err(|e| e.to_string())?;
        before_failures += before.summary.failed as usize;
        let after = run_scenario(&fig3_manifest(), &config, seed, config.duration_us).map_err(|e| e.to_string())?;
        check(!after.summary.failed, || format!("after migration fell on seed {seed}"))?;
        check(after.summary.fabric_misses() == 0, || format!("fabric misses on seed {seed}"))?;
    }
    let elapsed = start.elapsed();
    check(before_failures >= 8, || format!("only {before_failures}/10 failed before migration"))?;
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "before {before_failures}/10 fell, after 0/10 with zero fabric misses, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn without_component(mut m: Manifest, name: &str) -> Manifest {
    m.components.retain(|c| c.name != name);
    m.placements.retain(|p| p.component != name);
    m
}

fn migration_checker() -> Outcome {
    let before = compile_plan(&fig2_manifest()).map_err(|e| format!("{e:?}"))?;
    let after = compile_plan(&fig3_manifest()).map_err(|e| format!("{e:?}"))?;
    let report = check_migration(&before, &after).map_err(|e| e.to_string())?;
    check(report.topology_equal, || "topology not equal".into())?;
    let flagged: BTreeSet<String> = report
        .warnings()
        .filter_map(|d| match &d.subject {
            Some(Subject::Topic(t)) => Some(t.clone()),
            _ => None,
        })
        .collect();
    let expected = degraded_topics(&fig2_manifest(), &fig3_manifest());
    check(flagged == expected, || format!("flagged {flagged:?}, expected {expected:?}"))?;
    let removed = without_component(fig3_manifest(), "maintain_position");
    let removed = compile_plan(&removed).map_err(|e| format!("{e:?}"))?;
    match check_migration(&before, &removed) {
        Err(MigrationError::TopologyMismatch { only_before, .. }) if only_before == ["maintain_position"] => {}
        other => return Err(format!("removed component gave {other:?}")),
    }
    Ok(format!("topology equal, {} degraded topics flagged, removal mismatched", flagged.len()))
}

fn plant_cosh() -> Outcome {
    let p = PlantParams {
        gyro_sigma: 0.0,
        ..robot_scenario().plant
    };
    let h = p.step_us as f64 * 1e-6;
    let mut s = PlantState {
        theta: 0.01,
        ..PlantState::default()
    };
    for _ in 0..(500_000 / p.step_us) {
        s = rk4_step(&p, s, 0.0, h);
    }
    let exact = 0.01 * (19.62f64.sqrt() * 0.5).cosh();
    let rel = (s.theta - exact).abs() / exact;
    check(rel < 1e-6, || format!("relative error {rel:e}"))?;
    Ok(format!("relative error {rel:.2e} at 0.5 s"))
}

fn plans_and_memory_maps(dir: &Path) -> Outcome {
    for (name, m) in [("fig2", FIG2), ("fig3", FIG3)] {
        let a = dir.join(format!("{name}_a.plan"));
        let b = dir.join(format!("{name}_b.plan"));
        for p in [&a, &b] {
            cli(&["plan", "--manifest", m, "--out", p.to_str().unwrap()])?;
        }
        check(read(&a)? == read(&b)?, || format!("{name} plans differ"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0009);
    let opts = ManifestOptions {
        shm_words: 4..=48,
        ..ManifestOptions::default()
    };
    let (mut fitted, mut over) = (0, 0);
    for i in 0..500 {
        let text = random_manifest(&mut rng, &opts);
        let m = parse_manifest(&text).map_err(|e| e.to_string())?;
        let size = |t: &str| slot_layout(t, &m.topic(t).unwrap().ty).size_words as u32;
        let need: u32 = slot_topics(&m).iter().map(|t| size(t)).sum();
        match assign_topic_addresses(&m) {
            Ok(map) => {
                let mut words = BTreeSet::new();
                for e in map.entries.values() {
                    for w in e.base..e.base + e.size_words {
                        check(w < map.capacity && words.insert(w), || format!("map {i}: word {w}"))?;
                    }
                }
                fitted += 1;
            }
            Err(_) => {
                check(need > m.fabric.shm_words_total, || format!("map {i}: rejected but fits"))?;
                over += 1;
            }
        }
    }
    Ok(format!("plans byte-identical; 500 maps ({fitted} placed, {over} over capacity)"))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: [Criterion; 9] = [
        ("response-time analysis agrees with brute force", Box::new(rta_matches_brute_force)),
        ("worked fixpoints", Box::new(worked_fixpoints)),
        ("zero fabric deadline misses", Box::new(zero_fabric_misses)),
        ("link codec", Box::new(link_codec)),
        ("deterministic runs", Box::new(|| deterministic_runs(dir.path()))),
        ("migration narrative", Box::new(migration_narrative)),
        ("migration checker", Box::new(migration_checker)),
        ("plant matches cosh", Box::new(plant_cosh)),
        ("plan determinism and memory maps", Box::new(|| plans_and_memory_maps(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

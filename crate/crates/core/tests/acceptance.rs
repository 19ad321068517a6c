//! One line per acceptance criterion. Run with
//! `cargo test -p guided-mha --test acceptance -- --nocapture`.

mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use guided_mha::detectors::kappa;
use guided_mha::domains::{GridCell, GridMap, HeuristicFn, Problem, StateId};
use guided_mha::events::{read_log, EventWriter};
use guided_mha::scenario::{two_cups_guidance, u_trap_guidance};
use guided_mha::{
    replay, run_session, AdversarialProvider, GuidanceAnswer, HeuristicDetector, Outcome, Planner, PlannerConfig,
    QueueStatus, Scenario, ScriptedProvider, SearchError, Session, SessionSettings, VacillationDetector, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn planner_run(problem: Problem, config: PlannerConfig) -> Result<(Planner, Vec<u64>), String> {
    let mut planner = Planner::new(problem, config).map_err(|e| e.to_string())?;
    let mut delays = Vec::new();
    while !planner.is_solved() {
        match planner.expand_next() {
            Ok(r) => delays.push(r.delta_e),
            Err(SearchError::SpaceExhausted) => break,
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok((planner, delays))
}

fn suboptimality() -> Result<String, String> {
    let grids = common::solvable_grids(100, 20, 20, 0.2);
    let mut worst: f64 = 0.0;
    for (w1, w2) in [(1.0, 1.0), (5.0, 2.0), (10.0, 2.0)] {
        for (i, (map, optimal)) in grids.iter().enumerate() {
            let config = PlannerConfig {
                w1,
                w2,
                ..PlannerConfig::default()
            };
            let (planner, _) = planner_run(map.problem(), config)?;
            let cost = planner.solution().ok_or(format!("grid {i} unsolved"))?.cost;
            ensure(cost <= w1 * w2 * optimal, || {
                format!("grid {i} (w1={w1}, w2={w2}): {cost} > {}", w1 * w2 * optimal)
            })?;
            worst = worst.max(cost / optimal);
        }
    }
    Ok(format!("300 runs on 100 maps, worst ratio {worst:.3}"))
}

fn perfect_delay() -> Result<String, String> {
    let map = Arc::new(GridMap::empty(30, 30, GridCell::new(0, 0), GridCell::new(29, 29)).unwrap());
    let goal = map.state_of(map.goal());
    let to_go: Arc<HashMap<StateId, f64>> = Arc::new(common::distances(map.as_ref(), goal));
    let h: HeuristicFn = Arc::new(move |s| to_go[&s]);
    let problem = Problem {
        domain: map.clone(),
        start: map.state_of(map.start()),
        goal: Arc::new(move |s| s == goal),
        anchor: h.clone(),
        baseline: h,
    };
    let config = PlannerConfig {
        w1: 100.0,
        ..PlannerConfig::default()
    };
    let (planner, delays) = planner_run(problem, config)?;
    ensure(planner.is_solved(), || "not solved".into())?;
    let bad: Vec<_> = delays.iter().enumerate().skip(1).filter(|(_, d)| **d != 1).collect();
    ensure(bad.is_empty(), || format!("delays != 1 at {bad:?}"))?;
    Ok(format!("{} expansions, all later delays 1", delays.len()))
}

fn detector_conformance() -> Result<String, String> {
    // Three minima: descent, a minimum with a climb, a short bump,
    // descent, then a slope gentler than ε per ω2
    let mut h = Vec::new();
    let mut v = 3000.0;
    let mut segments = vec![(300, -3.0), (150, 2.0), (300, -3.0)];
    let r2_start = 750;
    segments.extend([(12, 1.0), (12, -1.0), (200, -3.0), (400, -0.5)]);
    for (n, step) in segments {
        for _ in 0..n {
            v += step;
            h.push(v);
        }
    }
    let r2 = r2_start..r2_start + 24;
    let (omega1, omega2, eps) = (200, 50, 50.0);
    let mut d = HeuristicDetector::new(omega1, omega2, eps);
    let mut entries = Vec::new();
    for (idx, &x) in h.iter().enumerate() {
        let verdict = d.observe(x).map_err(|e| e.to_string())?;
        let i = idx + 1;
        let expected = i > omega1
            && kappa(&h, i, omega1).unwrap() >= kappa(&h, i - omega2, omega1 - omega2).unwrap() - eps;
        ensure(d.in_stagnation() == expected, || format!("heuristic detector differs at {i}"))?;
        if verdict == Verdict::Entered {
            entries.push(idx);
        }
    }
    ensure(entries.len() == 2, || format!("expected r1 and r3 only, entries at {entries:?}"))?;
    ensure(!entries.iter().any(|e| r2.contains(e)), || "r2 detected".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let delays: Vec<u64> = (0..2000)
        .map(|i| if (i / 100) % 2 == 0 { 1 } else { rng.gen_range(1..80) })
        .collect();
    let (omega, tau) = (10, 30.0);
    let mut d = VacillationDetector::new(omega, tau);
    let mut inside = false;
    for i in 1..=delays.len() {
        d.observe(delays[i - 1]).map_err(|e| e.to_string())?;
        let w = &delays[i.saturating_sub(omega)..i];
        let mean = w.iter().sum::<u64>() as f64 / w.len() as f64;
        if !inside && w.len() == omega && mean >= tau {
            inside = true;
        } else if inside && w.iter().all(|&x| x == 1) {
            inside = false;
        }
        ensure(d.in_stagnation() == inside, || format!("vacillation detector differs at {i}"))?;
    }
    Ok(format!("{} + {} indices match; r2 not detected", h.len(), delays.len()))
}

fn u_trap_escape() -> Result<String, String> {
    let scenario = Scenario::builtin("u_trap").unwrap();
    let mut session = Session::from_scenario(&scenario, SessionSettings::default()).map_err(|e| e.to_string())?;
    let guided = run_session(&mut session, &mut ScriptedProvider::new(vec![u_trap_guidance()]));
    ensure(guided.outcome == Outcome::Solved, || format!("guided run: {:?}", guided.outcome))?;
    let kinds: Vec<String> = common::lifecycle(&guided.events)
        .into_iter()
        .filter(|k| k.starts_with("guidance") || k.starts_with("queue"))
        .collect();
    let expected = ["guidance_requested q1", "guidance_added q2", "queue_discarded q2 passed_through"];
    ensure(kinds == expected, || format!("lifecycle {kinds:?}"))?;

    let mut scenario = scenario;
    scenario.config.expansion_budget = 5000;
    let settings = SessionSettings {
        guidance: false,
        ..SessionSettings::default()
    };
    let mut session = Session::from_scenario(&scenario, settings).map_err(|e| e.to_string())?;
    let blind = run_session(&mut session, &mut ScriptedProvider::default());
    ensure(blind.outcome == Outcome::BudgetExhausted, || format!("no-guidance run: {:?}", blind.outcome))?;
    Ok(format!(
        "guided solved in {} expansions; unguided exhausted 5000",
        guided.totals.expansions
    ))
}

fn guidance_state_machine() -> Result<String, String> {
    let cases: [(&str, Vec<Vec<f64>>, &[&str]); 3] = [
        (
            "u_trap",
            vec![vec![60.0, 30.0], u_trap_guidance()],
            &[
                "stagnation_entered q1",
                "guidance_requested q1",
                "guidance_added q2",
                "stagnation_entered q2",
                "queue_discarded q2 not_useful",
                "guidance_requested q1",
                "guidance_added q3",
                "stagnation_exited q1",
                "queue_discarded q3 passed_through",
                "solution",
                "terminated solved",
            ],
        ),
        (
            "two_cups",
            vec![two_cups_guidance()],
            &[
                "stagnation_entered q1",
                "guidance_requested q1",
                "guidance_added q2",
                "stagnation_exited q1",
                "queue_suspended q2",
                "stagnation_entered q1",
                "queue_resumed q2",
                "stagnation_exited q1",
                "queue_discarded q2 passed_through",
                "solution",
                "terminated solved",
            ],
        ),
        (
            "u_trap",
            vec![u_trap_guidance()],
            &[
                "stagnation_entered q1",
                "guidance_requested q1",
                "guidance_added q2",
                "stagnation_exited q1",
                "queue_discarded q2 passed_through",
                "solution",
                "terminated solved",
            ],
        ),
    ];
    for (label, (name, script, golden)) in ["a", "b", "c"].iter().zip(cases) {
        let scenario = Scenario::builtin(name).unwrap();
        let mut session = Session::from_scenario(&scenario, SessionSettings::default()).map_err(|e| e.to_string())?;
        let mut provider = ScriptedProvider::new(script.clone());
        let result = run_session(&mut session, &mut provider);
        let got = common::lifecycle(&result.events);
        ensure(got == golden, || format!("({label}) {got:?}"))?;
        ensure(provider.consumed() == script.len(), || format!("({label}) provider calls"))?;
        common::request_economy(&result.events).map_err(|e| format!("({label}) {e}"))?;
    }
    Ok("(a) not_useful, (b) suspend/resume with one call, (c) passed_through".into())
}

fn soft_constraints() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut discards = 0;
    let mut checks = 0;
    for seed in 0..200 {
        let map = Arc::new(common::random_grid(seed, 10, 10, 0.2));
        let mut planner = Planner::new(map.problem(), PlannerConfig::default()).map_err(|e| e.to_string())?;
        for _ in 0..30 {
            match rng.gen_range(0..6) {
                0 | 1 | 2 => {
                    for _ in 0..rng.gen_range(1..8) {
                        if planner.expand_next().is_err() {
                            break;
                        }
                    }
                }
                3 => {
                    let raw = [rng.gen_range(0..10) as f64, rng.gen_range(0..10) as f64];
                    if let Ok(g) = planner.snap(&raw) {
                        let h = planner.dynamic_heuristic(g);
                        let _ = planner.add_dynamic_queue(h);
                    }
                }
                4 => {
                    if let Some(q) = planner.live_dynamic().map(|q| q.id) {
                        let status = if planner.queues()[q].status == QueueStatus::Active {
                            QueueStatus::Suspended
                        } else {
                            QueueStatus::Active
                        };
                        planner.set_queue_status(q, status).map_err(|e| e.to_string())?;
                    }
                }
                _ => {
                    if let Some(q) = planner.live_dynamic().map(|q| q.id) {
                        let before: Vec<(StateId, f64)> = planner.states().map(|(id, s)| (id, s.g)).collect();
                        planner
                            .set_queue_status(q, QueueStatus::Discarded)
                            .map_err(|e| e.to_string())?;
                        let after: Vec<(StateId, f64)> = planner.states().map(|(id, s)| (id, s.g)).collect();
                        ensure(before == after, || format!("map {seed}: g changed on discard"))?;
                        discards += 1;
                    }
                }
            }
            let target = planner.guidance_target();
            for (id, s) in planner.states() {
                let mut cur = Some(id);
                let mut via = false;
                while let Some(c) = cur {
                    if Some(c) == target {
                        via = true;
                        break;
                    }
                    cur = planner.state(c).unwrap().parent;
                }
                ensure(s.via_guidance == via, || format!("map {seed}: flag mismatch at {id}"))?;
                checks += 1;
            }
        }
    }
    Ok(format!("{discards} discards, {checks} flag checks"))
}

fn adversarial() -> Result<String, String> {
    let mut solved = 0;
    for name in ["u_trap", "two_cups"] {
        let scenario = Scenario::builtin(name).unwrap();
        let mut session = Session::from_scenario(&scenario, SessionSettings::default()).map_err(|e| e.to_string())?;
        let r = run_session(&mut session, &mut AdversarialProvider);
        ensure(r.outcome == Outcome::Solved, || format!("{name}: {:?}", r.outcome))?;
        solved += 1;
    }
    for (map, _) in common::solvable_grids(50, 20, 20, 0.3) {
        let config = guided_mha::scenario::u_trap_config(guided_mha::DetectorKind::HeuristicBased);
        let planner = Planner::new(map.problem(), config).map_err(|e| e.to_string())?;
        let mut session = Session::new(planner, None, SessionSettings::default());
        let r = run_session(&mut session, &mut AdversarialProvider);
        ensure(r.outcome == Outcome::Solved, || format!("random map: {:?}", r.outcome))?;
        solved += 1;
    }
    Ok(format!("{solved}/{solved} solvable instances solved"))
}

fn replay_determinism() -> Result<String, String> {
    let scenario = Scenario::builtin("u_trap").unwrap();
    let mut session = Session::from_scenario(&scenario, SessionSettings::default()).map_err(|e| e.to_string())?;
    while session.pending_request().is_none() {
        session.step().map_err(|e| e.to_string())?;
    }
    session.submit(GuidanceAnswer::Configuration(vec![9.0, 9.0])).map_err(|e| e.to_string())?;
    let mut provider = ScriptedProvider::new(vec![vec![60.0, 30.0], u_trap_guidance()]);
    let original = run_session(&mut session, &mut provider);
    let mut w = EventWriter::new(Vec::new());
    w.write_all(&original.events).map_err(|e| e.to_string())?;
    let bytes = w.into_inner();
    let parsed = read_log(bytes.as_slice()).map_err(|e| e.to_string())?;
    let again = replay(&parsed).map_err(|e| e.to_string())?;
    let mut w = EventWriter::new(Vec::new());
    w.write_all(&again).map_err(|e| e.to_string())?;
    ensure(w.into_inner() == bytes, || "replayed log differs".into())?;
    Ok(format!("{} events, {} bytes identical", original.events.len(), bytes.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, Check, Option<Duration>); 8] = [
        ("suboptimality bound", suboptimality, Some(Duration::from_secs(30))),
        ("perfect-heuristic delay", perfect_delay, Some(Duration::from_secs(1))),
        ("detector conformance", detector_conformance, Some(Duration::from_secs(1))),
        ("U-trap escape", u_trap_escape, Some(Duration::from_secs(5))),
        ("guidance state machine", guidance_state_machine, Some(Duration::from_secs(5))),
        ("soft constraints and flags", soft_constraints, Some(Duration::from_secs(5))),
        ("adversarial guidance", adversarial, Some(Duration::from_secs(10))),
        ("replay determinism", replay_determinism, None),
    ];
    let mut failed = Vec::new();
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (r, _) => r,
        };
        match &result {
            Ok(detail) => println!("PASS  {name:<28} {elapsed:>9.2?}  {detail}"),
            Err(why) => {
                println!("FAIL  {name:<28} {elapsed:>9.2?}  {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}

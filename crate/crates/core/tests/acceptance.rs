//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines show up in
//! plain `cargo test` output.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use sgcr_core::ied::IedAction;
use sgcr_core::merger::{merge_model, merge_ssd, CablePolicy};
use sgcr_core::net::{build_cyber_topology, NodeKind};
use sgcr_core::power::solve_power_flow;
use sgcr_core::sample::{
    sample_bundle, sample_fci, SampleVariant, INTERLOCK_IED, INTERLOCK_PARTNER_CB, INTERLOCK_SOURCE_CB, TIE_APP_ID,
};
use sgcr_core::scenario::{check_trips, compile_range, first_divergence, run_range, Range, RangeSpec, TickRecord};
use sgcr_core::scl::{parse_scl, SclKind};
use sgcr_core::store::{Actor, Value};

use common::{merge as m, power as pw, protection as pr};

/// Voltage tolerance against the two-bus closed form, pu.
const V_TOL: f64 = 1e-6;
/// Largest nodal power mismatch accepted on any tick, pu.
const BALANCE_TOL: f64 = 1e-6;
const RANDOM_MODELS: u32 = 128;
const MERGE_BUDGET: Duration = Duration::from_secs(1);
const ATTACK_BUDGET: Duration = Duration::from_secs(10);
const EXPECTED_IEDS: usize = 45;
const MIRROR_TICKS: u64 = 11;
const SPOOF: u32 = 1000;
const ATTACK_AT: u64 = 20;
const SCALE_STEPS: usize = 100;
const TICK_BUDGET: Duration = Duration::from_millis(100);
const SCALE_RATIO: f64 = 6.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn three(steps: usize) -> RangeSpec {
    compile_range(&sample_bundle(SampleVariant::ThreeSubstations, steps)).expect("sample compiles")
}

fn merge_fidelity() -> Outcome {
    let bundle = sample_bundle(SampleVariant::ThreeSubstations, 1);
    ensure(bundle.ssds.len() == 3 && bundle.scds.len() == 3 && !bundle.seds.is_empty(), || {
        format!("sample has {} SSDs, {} SEDs, {} SCDs", bundle.ssds.len(), bundle.seds.len(), bundle.scds.len())
    })?;
    let t = Instant::now();
    let merged = merge_model(&bundle.ssds, &bundle.seds, &bundle.scds, CablePolicy::Namespace).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    let (p, b, e) = m::counts(&bundle.ssds);
    let (_, sb, se) = m::counts(&bundle.seds);
    let got = m::counts(std::slice::from_ref(&merged.ssd));
    ensure(got == (p, b + sb, e + se), || format!("merged (processes, bays, equipment) {got:?}, inputs {:?}", (p, b + sb, e + se)))?;
    let ieds: usize = bundle.scds.iter().map(|d| d.ieds.len()).sum();
    ensure(merged.scd.ieds.len() == ieds, || format!("{} IEDs merged from {ieds}", merged.scd.ieds.len()))?;
    ensure(took < MERGE_BUDGET, || format!("merge took {took:?}"))?;

    let cfg = Config {
        cases: RANDOM_MODELS,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(cfg.clone(), TestRng::deterministic_rng(cfg.rng_algorithm));
    runner
        .run(&(m::model(), 0..5usize, proptest::bool::ANY), |(model, rot, rev)| {
            let (mut a, mut s, mut c) = (m::ssds(&model), m::seds(&model), m::scds(&model));
            let ssd = merge_ssd(&a, &s).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let scd = m::merge_scd(&c).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let n = a.len();
            a.rotate_left(rot % n);
            c.rotate_left(rot % n);
            if rev {
                a.reverse();
                s.reverse();
                c.reverse();
            }
            let ssd2 = merge_ssd(&a, &s).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let scd2 = m::merge_scd(&c).map_err(|e| TestCaseError::fail(e.to_string()))?;
            if m::canonical(ssd2) != m::canonical(ssd.clone()) || m::canonical(scd2) != m::canonical(scd.clone()) {
                return Err(TestCaseError::fail("result depends on input order"));
            }
            let again = merge_ssd(std::slice::from_ref(&ssd), &[]).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let reparsed = parse_scl(&ssd.to_xml(), SclKind::Ssd).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let again_scd = m::merge_scd(std::slice::from_ref(&scd)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            if again != ssd || m::canonical(reparsed) != m::canonical(ssd) || again_scd != scd {
                return Err(TestCaseError::fail("merging a merged model changed it"));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("counts {got:?}, {ieds} IEDs, {took:?}; {RANDOM_MODELS} random models permutation/idempotent"))
}

fn power_flow() -> Outcome {
    let (p, q, r, x) = (2.0, 0.8, 0.3, 0.6);
    let sol = solve_power_flow(&pw::two_bus(p, q, r, x)).map_err(|e| e.to_string())?;
    let expect = pw::two_bus_oracle(p / 100.0, q / 100.0, r, x);
    let dv = (sol.buses[1].vm_pu - expect).abs();
    ensure(sol.converged && dv < V_TOL, || format!("two-bus |dV| = {dv:e}"))?;

    let no_load = solve_power_flow(&pw::two_bus(0.0, 0.0, r, x)).map_err(|e| e.to_string())?;
    ensure(no_load.buses.iter().all(|b| b.vm_pu == 1.0 && b.va_deg == 0.0), || "no-load solution is not flat".into())?;

    let spec = three(100);
    let mut range = Range::with_attack(&spec, &sample_fci(ATTACK_AT, SPOOF)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    while !range.finished() {
        range.step().map_err(|e| e.to_string())?;
        let sol = range.last_solution().ok_or("no solution")?;
        ensure(sol.converged, || format!("tick {} did not converge", range.ticks().len()))?;
        worst = worst.max(sol.max_balance_error()).max(pw::kcl_mismatch(range.power(), sol));
    }
    ensure(worst < BALANCE_TOL, || format!("balance error {worst:e}"))?;
    Ok(format!("two-bus |dV| {dv:.1e}, worst balance {worst:.1e} over {} ticks, no-load exact", spec.n_steps))
}

fn cyber_topology() -> Outcome {
    let bundle = sample_bundle(SampleVariant::ThreeSubstations, 1);
    let merged = merge_model(&bundle.ssds, &bundle.seds, &bundle.scds, CablePolicy::Namespace).map_err(|e| e.to_string())?;
    let before = merged.scd.clone();
    let topo = build_cyber_topology(&merged.scd).map_err(|e| e.to_string())?;
    let again = build_cyber_topology(&merged.scd).map_err(|e| e.to_string())?;
    ensure(topo == again && merged.scd == before, || "derivation is not pure".into())?;
    let n = topo.count(NodeKind::Ied);
    ensure(n == EXPECTED_IEDS, || format!("{n} IED nodes"))?;

    let mut ends: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, ap) in merged.scd.connected_aps() {
        for pc in &ap.phys_conns {
            *ends.entry(pc.cable.as_str()).or_default() += 1;
        }
    }
    ensure(ends.values().all(|&k| k == 2), || {
        format!("cables without two endpoints: {:?}", ends.iter().filter(|(_, &k)| k != 2).collect::<Vec<_>>())
    })?;
    ensure(topo.links.len() == ends.len(), || format!("{} links for {} cables", topo.links.len(), ends.len()))?;
    for l in &topo.links {
        ensure(l.a.node != l.b.node && topo.node(&l.a.node).is_some() && topo.node(&l.b.node).is_some(), || {
            format!("cable {} has a dangling endpoint", l.cable)
        })?;
    }
    Ok(format!("{n} IED nodes, {} cables with 2 endpoints, pure", ends.len()))
}

fn protection() -> Outcome {
    let spec = pr::spec();
    let base = pr::nominal(&spec);
    for (ied, ln, from, to) in pr::CASES {
        let xs: Vec<f64> = (0..=40).map(|k| from + (to - from) * (k as f64 + 0.37) / 40.0).collect();
        pr::check_case(&spec, &base, ied, ln, &xs)?;
    }
    let mut trips = 0;
    for variant in [SampleVariant::ThreeSubstations, SampleVariant::SingleSubstation] {
        let spec = compile_range(&sample_bundle(variant, 100)).map_err(|e| e.to_string())?;
        let initial = Range::new(&spec).map_err(|e| e.to_string())?.store().initial().clone();
        let (_, log) = run_range(&spec, None, None).map_err(|e| e.to_string())?;
        trips += log.ied_actions(|a| matches!(a, IedAction::Trip { .. })).count();
        ensure(check_trips(&spec, &initial, &log).iter().all(|v| v.justified), || "unjustified trip".into())?;
    }
    ensure(trips == 0, || format!("{trips} spurious trip(s) on nominal runs"))?;
    let lns: Vec<&str> = pr::CASES.iter().map(|c| c.1).collect();
    Ok(format!("{lns:?}: 1 alarm + 1 trip each; nominal runs trip-free"))
}

fn is_open(rec: &TickRecord, cb: &str) -> bool {
    rec.solver.as_ref().is_some_and(|s| s.open_switches.iter().any(|x| x == cb))
}

fn interlock() -> Outcome {
    let spec = three(120);
    let mut range = Range::new(&spec).map_err(|e| e.to_string())?;
    let control = format!("{INTERLOCK_SOURCE_CB}.Pos");
    let schedule = [(5u64, false), (30, true), (31, false), (33, true), (60, false), (90, true)];
    let mut history = Vec::new();
    for tick in 0..spec.n_steps as u64 {
        if let Some(&(_, closed)) = schedule.iter().find(|(t, _)| *t == tick) {
            range.operate(&control, Value::Bool(closed), Actor::Scada).map_err(|e| e.to_string())?;
        }
        let rec = range.step().map_err(|e| e.to_string())?;
        history.push((is_open(rec, INTERLOCK_SOURCE_CB), is_open(rec, INTERLOCK_PARTNER_CB)));
    }
    let k = MIRROR_TICKS as usize;
    let mut worst = 0;
    for t in k..history.len() {
        let source = history[t].0;
        if history[t - k..=t].iter().all(|(s, _)| *s == source) {
            ensure(history[t].1 == source, || format!("tick {t}: partner does not follow source"))?;
        }
        if t > 0 && history[t].0 != history[t - 1].0 {
            let lag = history[t..].iter().position(|(s, p)| s == p).unwrap_or(usize::MAX);
            worst = worst.max(lag);
        }
    }
    ensure(worst <= k, || format!("worst lag {worst} ticks"))?;
    Ok(format!("partner follows within {worst} ticks (limit {MIRROR_TICKS}); random toggles in goose_interlock"))
}

fn fci_attack() -> Outcome {
    let t = Instant::now();
    let spec = three(60);
    let script = sample_fci(ATTACK_AT, SPOOF);
    let (_, base) = run_range(&spec, None, None).map_err(|e| e.to_string())?;
    let (_, att) = run_range(&spec, Some(&script), None).map_err(|e| e.to_string())?;
    let took = t.elapsed();

    let at_victim = |log: &sgcr_core::scenario::RunLog| {
        log.ticks
            .iter()
            .flat_map(|r| r.ied_actions.iter().map(move |a| (r.tick, a)))
            .filter(|(_, a)| a.device == INTERLOCK_IED)
            .map(|(t, a)| (t, a.action.clone()))
            .collect::<Vec<_>>()
    };
    let events = at_victim(&att);
    let forged = events.iter().find_map(|(t, a)| match a {
        IedAction::GooseAccepted { app_id, stnum } if *app_id == TIE_APP_ID && *stnum >= SPOOF => Some(*t),
        _ => None,
    });
    let forged = forged.ok_or("forged message never accepted")?;
    let legit_after: Vec<_> = events
        .iter()
        .filter(|(t, _)| *t > forged)
        .filter_map(|(t, a)| match a {
            IedAction::GooseAccepted { app_id, stnum } if *app_id == TIE_APP_ID && *stnum < SPOOF => Some((*t, "accepted")),
            IedAction::RejectedStale { app_id, stnum, .. } if *app_id == TIE_APP_ID && *stnum < SPOOF => Some((*t, "stale")),
            _ => None,
        })
        .collect();
    ensure(!legit_after.is_empty() && legit_after.iter().all(|(_, k)| *k == "stale"), || {
        format!("legitimate messages after the forgery: {legit_after:?}")
    })?;
    let opened = att.ticks.last().is_some_and(|r| is_open(r, INTERLOCK_PARTNER_CB));
    let opened_base = base.ticks.last().is_some_and(|r| is_open(r, INTERLOCK_PARTNER_CB));
    ensure(opened && !opened_base, || format!("victim open: attack {opened}, baseline {opened_base}"))?;
    let div = first_divergence(&base, &att);
    ensure(div.is_some() && div == script.first_tick(), || format!("divergence {div:?}, attack starts {:?}", script.first_tick()))?;
    ensure(took < ATTACK_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "forged stNum {SPOOF} accepted at tick {forged}, {} legitimate message(s) rejected as stale, {INTERLOCK_PARTNER_CB} opened, divergence at tick {}, {took:?}",
        legit_after.len(),
        div.unwrap()
    ))
}

/// Repetitions per size; the fastest total is kept, since scheduler noise
/// only ever adds time.
const SCALE_REPS: usize = 5;

fn timed_steps(spec: &RangeSpec) -> Result<Duration, String> {
    let mut range = Range::new(spec).map_err(|e| e.to_string())?;
    let t = Instant::now();
    for _ in 0..SCALE_STEPS {
        range.step().map_err(|e| e.to_string())?;
    }
    Ok(t.elapsed())
}

fn scalability() -> Outcome {
    let big_spec = three(SCALE_STEPS);
    let small_spec = compile_range(&sample_bundle(SampleVariant::SingleSubstation, SCALE_STEPS)).map_err(|e| e.to_string())?;
    let (n_big, n_small) = (big_spec.ieds.len(), small_spec.ieds.len());
    ensure(n_big == EXPECTED_IEDS && n_small == 9, || format!("{n_big} and {n_small} IEDs"))?;
    timed_steps(&big_spec)?;
    timed_steps(&small_spec)?;
    let (mut big, mut small) = (Duration::MAX, Duration::MAX);
    for _ in 0..SCALE_REPS {
        big = big.min(timed_steps(&big_spec)?);
        small = small.min(timed_steps(&small_spec)?);
    }
    let mean = big / SCALE_STEPS as u32;
    let ratio = big.as_secs_f64() / small.as_secs_f64();
    ensure(mean < TICK_BUDGET, || format!("mean tick {mean:?}"))?;
    ensure(ratio <= SCALE_RATIO, || format!("{n_big}/{n_small} IED time ratio {ratio:.2}"))?;
    Ok(format!(
        "{n_big} IEDs: mean tick {mean:?}; {n_small} IEDs: {:?}; ratio {ratio:.2} (best of {SCALE_REPS})",
        small / SCALE_STEPS as u32
    ))
}

fn determinism() -> Outcome {
    let spec = three(60);
    let script = sample_fci(ATTACK_AT, SPOOF);
    for attack in [None, Some(&script)] {
        let a = run_range(&spec, attack, None).map_err(|e| e.to_string())?.1.to_ndjson();
        let b = run_range(&spec, attack, None).map_err(|e| e.to_string())?.1.to_ndjson();
        ensure(a == b, || format!("run logs differ (attack: {})", attack.is_some()))?;
    }
    Ok("baseline and attack run logs byte-identical across runs".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("merge fidelity", merge_fidelity),
        ("power flow", power_flow),
        ("cyber topology", cyber_topology),
        ("protection", protection),
        ("interlock", interlock),
        ("FCI stNum attack", fci_attack),
        ("scalability", scalability),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

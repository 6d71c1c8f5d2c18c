//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; the process exits non-zero
//! if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pco::checker::{build_serialization, check_all, check_pco_legal, check_serialization, corrected_history};
use pco::objects::wsd::invalid_result;
use pco::objects::{
    CappedMoney, MoneyParams, MoneySpec, MultisetParams, MultisetSpec, ObjectConfig, PetriNetDef, PetriSpec,
    RefusingMultiset, SpecVisitor, TokenRing, WsdParams, WsdSpec,
};
use pco::replica::GateClause;
use pco::sim::{
    run_scenario, ByzantineSpec, ByzantineStrategy, CrashSpec, CrashTrigger, Event, ExecutionRecord, FaultModel,
    Scenario, Workload,
};
use pco::spec::{
    check_cstar_closure, check_idiamond_closure, check_initial_emptiness, equivalence_vs_predicate,
    oracle_word_reachable, step_reachable, step_word, PcoSpec, Value,
};
use pco::trace::{word_to_trace, OpKind, Operation, ProcessId, Trace};
use pco::ws::{check_work_stealing, task_outcomes};

const SEED: u64 = 2024;

fn p(i: u32) -> ProcessId {
    ProcessId::new(i)
}

type Outcome = Result<String, String>;
type Enumerator = Box<dyn Fn(&[Operation]) -> Result<usize, String>>;
type Criterion = (&'static str, fn() -> Outcome);

/// The five objects at their acceptance sizes.
fn objects() -> Vec<(ObjectConfig, usize)> {
    vec![
        (ObjectConfig::Multiset(MultisetParams::default()), 3),
        (ObjectConfig::Petrinet(None), 3),
        (ObjectConfig::Money(MoneyParams::default()), 3),
        (ObjectConfig::Wsd(WsdParams::default()), 3),
        (ObjectConfig::Tokenring, 2),
    ]
}

struct Closure;

impl SpecVisitor for Closure {
    type Output = Result<(), String>;

    fn visit<S: PcoSpec + 'static>(self, spec: S) -> Result<(), String> {
        for v in [
            check_initial_emptiness(&spec),
            check_cstar_closure(&spec, SEED, 1000),
            check_idiamond_closure(&spec, SEED, 1000),
        ] {
            if !v.passed() || (v.property != "initial-emptiness" && v.trials != Some(1000)) {
                return Err(format!("{}: {v}", spec.name()));
            }
        }
        Ok(())
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    for (obj, n) in objects() {
        obj.visit(n, Closure).map_err(|e| e.to_string())??;
    }
    let took = start.elapsed();
    if took > Duration::from_secs(30) {
        return Err(format!("closure suite took {took:.1?}, limit 30 s"));
    }
    Ok(format!("5 objects x 1000 trials in {took:.1?}"))
}

struct Equivalence;

impl SpecVisitor for Equivalence {
    type Output = Result<(), String>;

    fn visit<S: PcoSpec + 'static>(self, spec: S) -> Result<(), String> {
        let v = equivalence_vs_predicate(&spec, SEED, 6, 2000);
        if v.passed() && v.trials == Some(2000) {
            Ok(())
        } else {
            Err(format!("{}: {v}", spec.name()))
        }
    }
}

/// Finite 2-process update palettes for exhaustive enumeration.
fn palettes() -> Vec<(&'static str, Enumerator, Vec<Operation>)> {
    let multiset = MultisetSpec::from_params(2, &MultisetParams::default()).unwrap();
    let multiset_ops = vec![MultisetSpec::add(0), MultisetSpec::add(1), multiset.delete(0), multiset.delete(1)];
    let petri = PetriSpec::new(2, PetriNetDef::example(2)).unwrap();
    let petri_ops: Vec<Operation> = PetriNetDef::example(2)
        .transitions
        .iter()
        .map(|t| petri.fire(&t.name).unwrap())
        .collect();
    let money = MoneySpec::new(vec![1, 0]).unwrap();
    let money_ops = vec![
        MoneySpec::mint(p(2), 1),
        MoneySpec::transfer(p(1), p(2), 1),
        MoneySpec::transfer(p(2), p(1), 1),
        MoneySpec::transfer(p(1), p(1), 2),
        MoneySpec::transfer(p(2), p(1), 2),
    ];
    let wsd = WsdSpec::from_params(2, &WsdParams {
        tasks: [(1, vec![10, 11]), (2, vec![20])].into(),
    })
    .unwrap();
    let wsd_ops = vec![
        WsdSpec::push_bottom(p(1), 10),
        WsdSpec::push_bottom(p(1), 11),
        WsdSpec::pop_bottom(p(1)),
        WsdSpec::remove(p(1), 10),
        WsdSpec::push_bottom(p(2), 20),
        WsdSpec::pop_bottom(p(2)),
        WsdSpec::add_result(10, pco::objects::wsd::reference_result(10)),
    ];
    let tokenring_ops = vec![TokenRing::t_ab(), TokenRing::t_ba()];
    fn runner<S: PcoSpec + 'static>(spec: S) -> Enumerator {
        Box::new(move |palette| exhaustive(&spec, palette, 5))
    }
    vec![
        ("multiset", runner(multiset), multiset_ops),
        ("petrinet", runner(petri), petri_ops),
        ("money", runner(money), money_ops),
        ("wsd", runner(wsd), wsd_ops),
        ("tokenring", runner(TokenRing), tokenring_ops),
    ]
}

/// Enumerates every trace of size `<= max` over `palette` and compares
/// greedy step reachability with the all-representatives oracle.
fn exhaustive<S: PcoSpec>(spec: &S, palette: &[Operation], max: usize) -> Result<usize, String> {
    let mut seen: BTreeSet<Trace> = BTreeSet::new();
    let mut frontier = vec![Trace::empty(spec.n())];
    seen.insert(Trace::empty(spec.n()));
    for _ in 0..max {
        let mut next = Vec::new();
        for t in &frontier {
            for op in palette {
                let u = t.concat(op).map_err(|e| e.to_string())?;
                if seen.insert(u.clone()) {
                    next.push(u);
                }
            }
        }
        frontier = next;
    }
    for t in &seen {
        let greedy = step_reachable(spec, t).is_some();
        let oracle = oracle_word_reachable(spec, t, 1 << 16).map_err(|e| e.to_string())?;
        if greedy != oracle {
            return Err(format!(
                "{}: trace {:?} greedy {greedy} oracle {oracle}",
                spec.name(),
                t.to_word().iter().map(|o| o.to_string()).collect::<Vec<_>>()
            ));
        }
    }
    Ok(seen.len())
}

fn criterion_2() -> Outcome {
    for (obj, n) in objects() {
        obj.visit(n, Equivalence).map_err(|e| e.to_string())??;
    }
    let mut total = 0;
    for (name, run, palette) in palettes() {
        let count = run(&palette)?;
        if count < 2 {
            return Err(format!("{name}: enumeration produced {count} traces"));
        }
        total += count;
    }
    Ok(format!("2000 words per object, {total} enumerated traces agree"))
}

fn criterion_3() -> Outcome {
    let (ab, ba) = (TokenRing::t_ab(), TokenRing::t_ba());
    let u5 = word_to_trace(&TokenRing, &[ab.clone(), ba.clone(), ab.clone(), ba.clone(), ab.clone()]).unwrap();
    let v = word_to_trace(&TokenRing, &[ba.clone(), ba.clone()]).unwrap();
    if TokenRing.trace_predicate(&u5) != Some(true) {
        return Err("u_5 should be legal".into());
    }
    if TokenRing.trace_predicate(&v) != Some(false) {
        return Err("two t_BA should be illegal".into());
    }
    let bad = [ba.clone(), ba.clone(), ab.clone(), ab.clone(), ab.clone()];
    if step_word(&TokenRing, &bad[..1]).is_some() {
        return Err("t_BA first should be undefined at step 1".into());
    }
    if word_to_trace(&TokenRing, &bad).unwrap() != u5 {
        return Err("the rejected word should belong to u_5".into());
    }
    let alternating = [ab.clone(), ba.clone(), ab.clone(), ba, ab];
    for k in 1..=alternating.len() {
        if step_word(&TokenRing, &alternating[..k]).is_none() {
            return Err(format!("alternating word rejected at step {k}"));
        }
    }
    Ok("u_5 legal, v illegal, t_BA-first rejected at step 1, alternating word accepted".into())
}

fn failures(record: &ExecutionRecord) -> Vec<String> {
    let report = check_all(record);
    report
        .verdicts
        .iter()
        .filter(|v| !v.passed() && v.status != pco::spec::Status::Skipped)
        .map(|v| v.to_string())
        .collect()
}

fn crash_scenario(k: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ k);
    let object = if k.is_multiple_of(2) {
        ObjectConfig::Money(MoneyParams::default())
    } else {
        ObjectConfig::Multiset(MultisetParams::default())
    };
    let crashes = (k % 4) as usize;
    let mut victims: Vec<u32> = (1..=4).collect();
    let mut specs = Vec::new();
    for c in 0..crashes {
        let process = victims.remove(rng.gen_range(0..victims.len()));
        let trigger = if c % 2 == 0 {
            CrashTrigger::Update {
                sn: rng.gen_range(1..=20),
                deliver_to: None,
            }
        } else {
            CrashTrigger::Time {
                time: rng.gen_range(50..2000),
            }
        };
        specs.push(CrashSpec { process, trigger });
    }
    Scenario {
        n: 4,
        t: 3,
        fault_model: FaultModel::Crash,
        object,
        seed: k,
        workload: Workload::Random {
            updates: 20,
            query_ratio: 0.3,
            common_ratio: 0.3,
        },
        crashes: specs,
        byzantine: vec![],
        max_steps: 1_000_000,
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut mid_broadcast = 0;
    for k in 0..100 {
        let s = crash_scenario(k);
        let r = run_scenario(&s).map_err(|e| format!("scenario {k}: {e}"))?;
        if r.truncated() {
            return Err(format!("scenario {k} did not reach quiescence"));
        }
        let f = failures(&r);
        if !f.is_empty() {
            return Err(format!("scenario {k}: {}", f.join("; ")));
        }
        mid_broadcast += s
            .crashes
            .iter()
            .filter(|c| matches!(c.trigger, CrashTrigger::Update { .. }) && r.crashed().contains(&p(c.process)))
            .count();
    }
    let took = start.elapsed();
    if took > Duration::from_secs(60) {
        return Err(format!("crash suite took {took:.1?}, limit 60 s"));
    }
    if mid_broadcast == 0 {
        return Err("no mid-broadcast crash happened".into());
    }
    Ok(format!("100 runs, {mid_broadcast} crashes during an update broadcast, {took:.1?}"))
}

#[derive(Clone, Copy, Debug)]
enum Attack {
    Equivocate,
    EquivocateLate,
    DoubleSpendSameSn,
    DoubleSpendNextSn,
    SkipSn,
    Forge,
    Inject,
    Silent,
    Duplicate,
}

const ATTACKS: [Attack; 9] = [
    Attack::Equivocate,
    Attack::EquivocateLate,
    Attack::DoubleSpendSameSn,
    Attack::DoubleSpendNextSn,
    Attack::SkipSn,
    Attack::Forge,
    Attack::Inject,
    Attack::Silent,
    Attack::Duplicate,
];

/// Explicit workload with no transfers towards `b`.
fn honest_ops(b: u32) -> BTreeMap<u32, Vec<Operation>> {
    let others: Vec<u32> = (1..=4).filter(|&i| i != b).collect();
    others
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let to = others[(k + 1) % others.len()];
            (
                i,
                vec![
                    MoneySpec::balance(p(b)),
                    MoneySpec::transfer(p(i), p(to), 3),
                    MoneySpec::mint(p(i), 1),
                    MoneySpec::balance(p(b)),
                ],
            )
        })
        .collect()
}

fn byzantine_scenario(k: u64) -> (Scenario, Attack) {
    let attack = ATTACKS[k as usize % ATTACKS.len()];
    let b = (k % 4) as u32 + 1;
    let others: Vec<u32> = (1..=4).filter(|&i| i != b).collect();
    let to_a = others[0];
    let to_b = others[1];
    let transfer = |to: u32, x: i64| MoneySpec::transfer(p(b), p(to), x);
    let strategy = match attack {
        Attack::Equivocate | Attack::DoubleSpendSameSn => ByzantineStrategy::Equivocate {
            payload_a: transfer(to_a, 10),
            payload_b: transfer(to_b, 10),
            recipients_a: vec![to_a, others[2]],
            prefix: vec![],
        },
        Attack::EquivocateLate => ByzantineStrategy::Equivocate {
            payload_a: transfer(to_a, 4),
            payload_b: transfer(to_b, 5),
            recipients_a: vec![to_a],
            prefix: vec![transfer(to_b, 1), MoneySpec::mint(p(b), 2)],
        },
        Attack::DoubleSpendNextSn => ByzantineStrategy::SkipSn {
            first: transfer(to_a, 10),
            second: transfer(to_b, 10),
            gap: 1,
        },
        Attack::SkipSn => ByzantineStrategy::SkipSn {
            first: transfer(to_a, 1),
            second: transfer(to_b, 1),
            gap: 3,
        },
        Attack::Forge => ByzantineStrategy::ForgeUnauthorized {
            ops: vec![MoneySpec::transfer(p(to_a), p(b), 5), MoneySpec::transfer(p(to_b), p(b), 1)],
        },
        Attack::Inject => ByzantineStrategy::InjectIllegal {
            ops: vec![transfer(to_a, 1_000_000)],
        },
        Attack::Silent => ByzantineStrategy::Silent,
        Attack::Duplicate => ByzantineStrategy::Duplicate {
            payload: transfer(to_a, 2),
            sn: 1,
        },
    };
    let double_spend = matches!(attack, Attack::DoubleSpendSameSn | Attack::DoubleSpendNextSn);
    let workload = if double_spend || k.is_multiple_of(2) {
        Workload::Explicit { ops: honest_ops(b) }
    } else {
        Workload::Random {
            updates: 10,
            query_ratio: 0.3,
            common_ratio: 0.3,
        }
    };
    let scenario = Scenario {
        n: 4,
        t: 1,
        fault_model: FaultModel::Byzantine,
        object: ObjectConfig::Money(MoneyParams { init: vec![10; 4] }),
        seed: k,
        workload,
        crashes: vec![],
        byzantine: vec![ByzantineSpec {
            process: b,
            strategy,
        }],
        max_steps: 1_000_000,
    };
    (scenario, attack)
}

fn processed_from(record: &ExecutionRecord, b: ProcessId) -> BTreeMap<ProcessId, Vec<(u64, Operation)>> {
    let correct: BTreeSet<ProcessId> = record.correct().into_iter().collect();
    let mut out: BTreeMap<ProcessId, Vec<(u64, Operation)>> = BTreeMap::new();
    for e in &record.events {
        if let Event::Process {
            process,
            sender,
            sn,
            op,
            ..
        } = e
        {
            if *sender == b && correct.contains(process) {
                out.entry(*process).or_default().push((*sn, op.clone()));
            }
        }
    }
    out
}

fn criterion_5() -> Outcome {
    let mut per_attack: BTreeMap<String, usize> = BTreeMap::new();
    for k in 0..100 {
        let (s, attack) = byzantine_scenario(k);
        let b = p(s.byzantine[0].process);
        let r = run_scenario(&s).map_err(|e| format!("scenario {k}: {e}"))?;
        let fail = |m: String| Err(format!("scenario {k} ({attack:?}): {m}"));
        let f = failures(&r);
        if !f.is_empty() {
            return fail(f.join("; "));
        }
        if r.truncated() {
            return fail("not quiescent".into());
        }
        let seen = processed_from(&r, b);
        let views: BTreeSet<&Vec<(u64, Operation)>> = seen.values().collect();
        if views.len() > 1 {
            return fail("correct processes processed different updates from the Byzantine sender".into());
        }
        let processed: Vec<(u64, Operation)> = seen.values().next().cloned().unwrap_or_default();
        let stuck_from_b: Vec<_> = r.footer.stuck.iter().filter(|e| e.sender == b).collect();
        let big_transfers = processed
            .iter()
            .filter(|(_, op)| op.name == "transfer" && op.args.get(2) == Some(&10))
            .count();
        match attack {
            Attack::Equivocate | Attack::EquivocateLate => {
                let sn = match &s.byzantine[0].strategy {
                    ByzantineStrategy::Equivocate { prefix, .. } => prefix.len() as u64 + 1,
                    _ => unreachable!(),
                };
                if processed.iter().filter(|(x, _)| *x == sn).count() > 1 {
                    return fail("two payloads processed at the equivocated sn".into());
                }
            }
            Attack::DoubleSpendSameSn | Attack::DoubleSpendNextSn => {
                if big_transfers > 1 {
                    return fail("both transfers of 10 processed".into());
                }
            }
            Attack::Forge | Attack::Inject => {
                if !processed.is_empty() {
                    return fail(format!("processed {processed:?}"));
                }
                let want = match attack {
                    Attack::Forge => GateClause::Authorization,
                    _ => GateClause::Legality,
                };
                for c in r.correct() {
                    if !stuck_from_b.iter().any(|e| e.process == c && e.clause == want) {
                        return fail(format!("{c} does not report the {want} block"));
                    }
                }
            }
            Attack::SkipSn => {
                if processed.iter().any(|(sn, _)| *sn != 1) {
                    return fail("update after the gap was processed".into());
                }
                if stuck_from_b.iter().all(|e| e.clause != GateClause::Fifo) {
                    return fail("gap not reported stuck".into());
                }
            }
            Attack::Duplicate => {
                if processed.len() > 1 {
                    return fail("duplicate processed twice".into());
                }
            }
            Attack::Silent => {}
        }
        // mock history and PCO-legality for every correct observer
        let h = corrected_history(&r).map_err(|e| format!("scenario {k}: {e}"))?;
        let spec = MoneySpec::new(vec![10; 4]).unwrap();
        for i in r.correct() {
            let ser = build_serialization(&r, &h, i);
            let v = check_pco_legal(&ser, &spec);
            let w = check_serialization(&ser, &h, i);
            if !v.passed() || !w.passed() {
                return fail(format!("{v}; {w}"));
            }
        }
        *per_attack.entry(format!("{attack:?}")).or_default() += 1;
    }
    Ok(format!("100 runs over {} strategies, zero violations", per_attack.len()))
}

fn ws_scenario(seed: u64, mode: u32) -> Scenario {
    let tasks: Vec<i64> = (100..110).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31) + mode as u64);
    let thief = rng.gen_range(2..=4u32);
    let mut s = Scenario {
        n: 4,
        t: 1,
        fault_model: FaultModel::Crash,
        object: ObjectConfig::Wsd(WsdParams {
            tasks: [(1, tasks.clone())].into(),
        }),
        seed,
        workload: Workload::WorkStealing {
            tasks: [(1, tasks.clone())].into(),
            relaxed: seed % 2 == 1,
            execute_time: 20,
        },
        crashes: vec![],
        byzantine: vec![],
        max_steps: 1_000_000,
    };
    match mode {
        0 => {}
        1 => {
            s.crashes = vec![CrashSpec {
                process: thief,
                trigger: CrashTrigger::Time {
                    time: rng.gen_range(20..400),
                },
            }]
        }
        _ => {
            s.fault_model = FaultModel::Byzantine;
            s.byzantine = vec![ByzantineSpec {
                process: thief,
                strategy: ByzantineStrategy::ForgeUnauthorized {
                    ops: tasks.iter().map(|&t| WsdSpec::add_result(t, invalid_result(t))).collect(),
                },
            }];
        }
    }
    s
}

fn criterion_6() -> Outcome {
    let mut runs = 0;
    let mut stolen = 0;
    for seed in 0..50 {
        for mode in 0..3 {
            let s = ws_scenario(seed, mode);
            let r = run_scenario(&s).map_err(|e| format!("seed {seed} mode {mode}: {e}"))?;
            let v = check_work_stealing(&r);
            if !v.passed() {
                return Err(format!("seed {seed} mode {mode}: {v}"));
            }
            let f = failures(&r);
            if !f.is_empty() {
                return Err(format!("seed {seed} mode {mode}: {}", f.join("; ")));
            }
            let outcomes = task_outcomes(&r);
            if outcomes.len() != 10 {
                return Err(format!("seed {seed} mode {mode}: {} task outcomes", outcomes.len()));
            }
            let spec = WsdSpec::from_params(4, &WsdParams {
                tasks: [(1, (100..110).collect())].into(),
            })
            .unwrap();
            for o in &outcomes {
                if o.executed_by.is_empty() || o.published.len() != 1 {
                    return Err(format!("seed {seed} mode {mode}: task {} {o:?}", o.task));
                }
                if !spec.is_valid_result(o.task, o.published[0].0) {
                    return Err(format!("seed {seed} mode {mode}: task {} invalid result", o.task));
                }
                stolen += o.executed_by.iter().any(|&q| q != o.owner) as usize;
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} runs, 500 tasks per mode, {stolen} task executions by thieves"))
}

fn criterion_7() -> Outcome {
    let mut scenarios: Vec<Scenario> = (0..8).map(crash_scenario).collect();
    scenarios.extend((0..9).map(|k| byzantine_scenario(k).0));
    scenarios.extend((0..3).map(|m| ws_scenario(5, m)));
    for (k, s) in scenarios.iter().enumerate() {
        let a = run_scenario(s).map_err(|e| e.to_string())?.to_jsonl();
        let b = run_scenario(s).map_err(|e| e.to_string())?.to_jsonl();
        if a != b {
            return Err(format!("scenario {k} produced two different logs"));
        }
        let parsed = ExecutionRecord::from_jsonl(&a).map_err(|e| e.to_string())?;
        if parsed.to_jsonl() != a {
            return Err(format!("scenario {k} log does not round-trip"));
        }
    }
    Ok(format!("{} scenarios byte-identical on rerun", scenarios.len()))
}

fn closure_fails<S: PcoSpec>(spec: &S) -> bool {
    [
        check_initial_emptiness(spec),
        check_cstar_closure(spec, SEED, 1000),
        check_idiamond_closure(spec, SEED, 1000),
    ]
    .iter()
    .any(|v| v.failed())
}

fn criterion_8() -> Outcome {
    let refusing = RefusingMultiset::new(MultisetSpec::from_params(3, &MultisetParams::default()).unwrap());
    if !closure_fails(&refusing) {
        return Err("refusable common op not detected".into());
    }
    let capped = CappedMoney::new(MoneySpec::new(vec![10; 3]).unwrap());
    if !closure_fails(&capped) {
        return Err("mint disabling a transfer not detected".into());
    }
    let r = run_scenario(&crash_scenario(0)).map_err(|e| e.to_string())?;
    let spec = MoneySpec::new(vec![10; 4]).unwrap();
    let h = corrected_history(&r)?;
    let s = build_serialization(&r, &h, p(1));
    if !check_pco_legal(&s, &spec).passed() {
        return Err("untampered serialization rejected".into());
    }
    let transfer_at = s
        .iter()
        .position(|e| matches!(e.op.kind, OpKind::Owned(_)))
        .ok_or("no transfer in the run")?;
    let query_at = s.iter().position(|e| e.op.kind == OpKind::Query).ok_or("no query in the run")?;
    let mut tampered = Vec::new();
    let mut forged = s.clone();
    forged[transfer_at].process = p(forged[transfer_at].process.index() % 4 + 1);
    tampered.push(("authorization", forged));
    let mut lied = s.clone();
    lied[query_at].value = match &lied[query_at].value {
        Value::Int(x) => Value::Int(x + 1),
        _ => Value::Int(-1),
    };
    tampered.push(("output", lied));
    let mut illegal = s.clone();
    let from = illegal[transfer_at].process;
    illegal[transfer_at].op = MoneySpec::transfer(from, p(from.index() % 4 + 1), 1_000_000);
    tampered.push(("legality", illegal));
    let mut reordered = s;
    let mine: Vec<usize> = (0..reordered.len())
        .filter(|&k| reordered[k].op.is_update() && reordered[k].process == p(1))
        .take(2)
        .collect();
    reordered.swap(mine[0], mine[1]);
    for (what, ser) in &tampered {
        if check_pco_legal(ser, &spec).passed() {
            return Err(format!("{what} tampering not detected"));
        }
    }
    if check_serialization(&reordered, &h, p(1)).passed() {
        return Err("reordered local updates not detected".into());
    }
    Ok("2 mutant specs and 4 tampered serializations detected".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("closure properties", criterion_1),
        ("oracle equivalence", criterion_2),
        ("token ring example", criterion_3),
        ("crash-model convergence", criterion_4),
        ("Byzantine-model suite", criterion_5),
        ("work stealing", criterion_6),
        ("determinism", criterion_7),
        ("negative controls", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail})", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

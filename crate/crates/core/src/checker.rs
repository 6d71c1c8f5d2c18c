//! Offline checks over an [`ExecutionRecord`]: corrected histories,
//! per-observer serializations, PCO-legality, convergence and pipeline
//! order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::objects::SpecVisitor;
use crate::sim::{fairness_audit, quiescence, Event, ExecutionRecord, FaultModel};
use crate::spec::{PcoSpec, Status, Value, Verdict};
use crate::trace::{OpKind, Operation, ProcessId, Trace};
use crate::ws::check_work_stealing;

/// One invocation in a local history. `sn` identifies updates; `value`
/// is `None` while the call has not returned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub process: ProcessId,
    pub op: Operation,
    pub sn: Option<u64>,
    pub value: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LocalHistory {
    Events(Vec<Invocation>),
    /// Byzantine process: no meaningful local history.
    Opaque,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History {
    pub local: BTreeMap<ProcessId, LocalHistory>,
}

impl History {
    pub fn events(&self, p: ProcessId) -> &[Invocation] {
        match self.local.get(&p) {
            Some(LocalHistory::Events(e)) => e,
            _ => &[],
        }
    }

    /// `(process, sn)` of every update in the history.
    pub fn update_ids(&self) -> BTreeSet<(ProcessId, u64)> {
        self.local
            .values()
            .filter_map(|h| match h {
                LocalHistory::Events(e) => Some(e),
                LocalHistory::Opaque => None,
            })
            .flatten()
            .filter_map(|inv| inv.sn.map(|sn| (inv.process, sn)))
            .collect()
    }
}

/// Per-process invocation sequences; Byzantine processes are opaque.
pub fn extract_history(record: &ExecutionRecord) -> History {
    let byz = record.byzantine();
    let mut local: BTreeMap<ProcessId, LocalHistory> = ProcessId::all(record.scenario.n)
        .map(|p| {
            let h = if byz.contains(&p) {
                LocalHistory::Opaque
            } else {
                LocalHistory::Events(Vec::new())
            };
            (p, h)
        })
        .collect();
    let mut push = |p: ProcessId, inv: Invocation| {
        if let Some(LocalHistory::Events(e)) = local.get_mut(&p) {
            e.push(inv);
        }
    };
    let mut returns: BTreeMap<(ProcessId, u64), Value> = BTreeMap::new();
    for e in &record.events {
        match e {
            Event::Query {
                process, op, value, ..
            } => push(
                *process,
                Invocation {
                    process: *process,
                    op: op.clone(),
                    sn: None,
                    value: Some(value.clone()),
                },
            ),
            Event::Invoke {
                process, sn, op, ..
            } => push(
                *process,
                Invocation {
                    process: *process,
                    op: op.clone(),
                    sn: Some(*sn),
                    value: None,
                },
            ),
            Event::Return {
                process, sn, value, ..
            } => {
                returns.insert((*process, *sn), value.clone());
            }
            _ => {}
        }
    }
    for h in local.values_mut() {
        if let LocalHistory::Events(e) = h {
            for inv in e.iter_mut() {
                if let Some(sn) = inv.sn {
                    inv.value = returns.get(&(inv.process, sn)).cloned();
                }
            }
        }
    }
    History { local }
}

/// Updates processed by at least one correct process.
pub fn successful_updates(record: &ExecutionRecord) -> BTreeSet<(ProcessId, u64)> {
    let correct: BTreeSet<ProcessId> = record.correct().into_iter().collect();
    record
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Process {
                process,
                sender,
                sn,
                ..
            } if correct.contains(process) => Some((*sender, *sn)),
            _ => None,
        })
        .collect()
}

/// Drops the last update of a crashed process if no correct process
/// processed it. Any other unsuccessful update is an error.
pub fn crash_correct(record: &ExecutionRecord, h: &History) -> Result<History, String> {
    let ok = successful_updates(record);
    let mut out = h.clone();
    for c in record.crashed() {
        let Some(LocalHistory::Events(events)) = out.local.get_mut(&c) else { continue };
        let updates: Vec<usize> = (0..events.len()).filter(|&k| events[k].sn.is_some()).collect();
        let failed: Vec<usize> = updates
            .iter()
            .copied()
            .filter(|&k| !ok.contains(&(c, events[k].sn.expect("update"))))
            .collect();
        match failed.as_slice() {
            [] => {}
            [k] if Some(k) == updates.last() => {
                events.remove(*k);
            }
            _ => {
                return Err(format!(
                    "{c} has {} unsuccessful updates, only its last may be",
                    failed.len()
                ))
            }
        }
    }
    Ok(out)
}

/// Rebuilds each Byzantine local history from the updates correct
/// processes processed from it, ordered by sequence number. Fails if two
/// correct processes processed different payloads for one key.
pub fn mock_history(record: &ExecutionRecord, h: &History) -> Result<History, String> {
    let correct: BTreeSet<ProcessId> = record.correct().into_iter().collect();
    let byz = record.byzantine();
    let mut seen: BTreeMap<(ProcessId, u64), Operation> = BTreeMap::new();
    for e in &record.events {
        if let Event::Process {
            process,
            sender,
            sn,
            op,
            ..
        } = e
        {
            if !correct.contains(process) || !byz.contains(sender) {
                continue;
            }
            match seen.get(&(*sender, *sn)) {
                Some(prev) if prev != op => {
                    return Err(format!(
                        "{sender}#{sn} processed as {prev} and as {op} by correct processes"
                    ))
                }
                Some(_) => {}
                None => {
                    seen.insert((*sender, *sn), op.clone());
                }
            }
        }
    }
    let mut out = h.clone();
    for b in byz {
        let events = seen
            .iter()
            .filter(|((s, _), _)| *s == b)
            .map(|(&(process, sn), op)| Invocation {
                process,
                op: op.clone(),
                sn: Some(sn),
                value: None,
            })
            .collect();
        out.local.insert(b, LocalHistory::Events(events));
    }
    Ok(out)
}

/// Crash-corrected and, under the Byzantine model, mock history.
pub fn corrected_history(record: &ExecutionRecord) -> Result<History, String> {
    let h = crash_correct(record, &extract_history(record))?;
    match record.scenario.fault_model {
        FaultModel::Crash => Ok(h),
        FaultModel::Byzantine => mock_history(record, &h),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerialEntry {
    pub process: ProcessId,
    pub op: Operation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sn: Option<u64>,
    /// [`Value::Masked`] for outputs the observer does not see.
    pub value: Value,
}

impl fmt::Display for SerialEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.op, self.value, self.process)
    }
}

pub type Serialization = Vec<SerialEntry>;

fn processing_order(record: &ExecutionRecord, p: ProcessId) -> Vec<(ProcessId, u64, Operation)> {
    record
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Process {
                process,
                sender,
                sn,
                op,
                ..
            } if *process == p => Some((*sender, *sn, op.clone())),
            _ => None,
        })
        .collect()
}

/// `S_i`: the observer's queries and its processing order of updates,
/// foreign outputs masked. For a crashed observer, the successful updates
/// it never processed follow in the processing order of a correct process.
pub fn build_serialization(record: &ExecutionRecord, h: &History, i: ProcessId) -> Serialization {
    let own: BTreeMap<u64, Option<Value>> = h
        .events(i)
        .iter()
        .filter_map(|inv| inv.sn.map(|sn| (sn, inv.value.clone())))
        .collect();
    let mut s = Serialization::new();
    let mut done = BTreeSet::new();
    for e in &record.events {
        match e {
            Event::Query {
                process, op, value, ..
            } if *process == i => s.push(SerialEntry {
                process: i,
                op: op.clone(),
                sn: None,
                value: value.clone(),
            }),
            Event::Process {
                process,
                sender,
                sn,
                op,
                ..
            } if *process == i => {
                let value = if *sender == i {
                    own.get(sn).cloned().flatten().unwrap_or(Value::Masked)
                } else {
                    Value::Masked
                };
                done.insert((*sender, *sn));
                s.push(SerialEntry {
                    process: *sender,
                    op: op.clone(),
                    sn: Some(*sn),
                    value,
                });
            }
            _ => {}
        }
    }
    if record.crashed().contains(&i) {
        let wanted = h.update_ids();
        let mut reference: Vec<(ProcessId, u64, Operation)> = record
            .correct()
            .first()
            .map(|&r| processing_order(record, r))
            .unwrap_or_default();
        // Anything the reference never processed goes last, by key.
        let covered: BTreeSet<(ProcessId, u64)> = reference.iter().map(|(p, sn, _)| (*p, *sn)).collect();
        for &(p, sn) in wanted.difference(&covered) {
            if let Some(inv) = h.events(p).iter().find(|inv| inv.sn == Some(sn)) {
                reference.push((p, sn, inv.op.clone()));
            }
        }
        for (p, sn, op) in reference {
            if wanted.contains(&(p, sn)) && !done.contains(&(p, sn)) {
                s.push(SerialEntry {
                    process: p,
                    op,
                    sn: Some(sn),
                    value: Value::Masked,
                });
            }
        }
    }
    s
}

/// `S_i` contains every update of the history and exactly the observer's
/// invocations, each once, respecting every local order.
pub fn check_serialization(s: &Serialization, h: &History, i: ProcessId) -> Verdict {
    const PROPERTY: &str = "serialization";
    let mut seen = BTreeSet::new();
    let mut last_sn: BTreeMap<ProcessId, u64> = BTreeMap::new();
    for e in s.iter().filter(|e| e.op.is_update()) {
        let Some(sn) = e.sn else {
            return Verdict::fail(PROPERTY, format!("update {e} without sequence number"));
        };
        if !seen.insert((e.process, sn)) {
            return Verdict::fail(PROPERTY, format!("{}#{sn} appears twice", e.process));
        }
        if last_sn.get(&e.process).is_some_and(|&prev| prev >= sn) {
            return Verdict::fail(PROPERTY, format!("{}#{sn} out of local order", e.process));
        }
        last_sn.insert(e.process, sn);
    }
    let wanted = h.update_ids();
    if let Some((p, sn)) = wanted.difference(&seen).next() {
        return Verdict::fail(PROPERTY, format!("{p}#{sn} of the history is missing"));
    }
    if let Some((p, sn)) = seen.difference(&wanted).next() {
        return Verdict::fail(PROPERTY, format!("{p}#{sn} is not in the history"));
    }
    let mine: Vec<(Operation, Option<u64>)> = s
        .iter()
        .filter(|e| e.process == i)
        .map(|e| (e.op.clone(), e.sn))
        .collect();
    let expected: Vec<(Operation, Option<u64>)> =
        h.events(i).iter().map(|inv| (inv.op.clone(), inv.sn)).collect();
    if mine != expected {
        return Verdict::fail(PROPERTY, format!("invocations of {i} differ from its local history"));
    }
    Verdict::pass(PROPERTY)
}

/// Process authorization, update legality, and output/query validity.
pub fn check_pco_legal<S: PcoSpec + ?Sized>(s: &Serialization, spec: &S) -> Verdict {
    const PROPERTY: &str = "pco-legal";
    let mut state = spec.initial_state();
    for (k, e) in s.iter().enumerate() {
        let authorized = match e.op.kind {
            OpKind::Query => spec.contains(&e.op),
            _ => spec.authorizes(e.process, &e.op),
        };
        if !authorized {
            return Verdict::fail(PROPERTY, format!("process authorization at index {k}: {e}"));
        }
        let expected = if e.op.kind == OpKind::Query {
            spec.query(&state, &e.op)
        } else {
            let out = spec.output(&e.op, &state);
            match spec.transition(&state, &e.op) {
                Some(next) => state = next,
                None => return Verdict::fail(PROPERTY, format!("update legality at index {k}: {e}")),
            }
            out
        };
        if e.value.is_visible() && e.value != expected {
            return Verdict::fail(
                PROPERTY,
                format!("output and query validity at index {k}: {e}, expected {expected}"),
            );
        }
    }
    Verdict::pass(PROPERTY)
}

/// Final trace and state of `p`, replayed from its processing events.
pub fn replay<S: PcoSpec + ?Sized>(
    record: &ExecutionRecord,
    spec: &S,
    p: ProcessId,
) -> Result<(Trace, S::State), String> {
    let mut trace = Trace::empty(spec.n());
    let mut state = spec.initial_state();
    for (sender, sn, op) in processing_order(record, p) {
        state = spec
            .transition(&state, &op)
            .ok_or_else(|| format!("{p} processed {sender}#{sn} = {op} in a state where it is undefined"))?;
        trace.push(op).map_err(|e| e.to_string())?;
    }
    Ok((trace, state))
}

/// Correct replicas end with equal traces, states and query answers.
pub fn check_convergence<S: PcoSpec + ?Sized>(record: &ExecutionRecord, spec: &S) -> Verdict {
    const PROPERTY: &str = "convergence";
    if record.truncated() {
        return Verdict::inconclusive(PROPERTY, "run truncated by max_steps");
    }
    let correct = record.correct();
    let mut finals = Vec::new();
    for &p in &correct {
        match replay(record, spec, p) {
            Ok(f) => finals.push((p, f)),
            Err(e) => return Verdict::fail(PROPERTY, e),
        }
    }
    let Some((first, (trace0, state0))) = finals.first() else {
        return Verdict::skipped(PROPERTY, "no correct process");
    };
    for (p, (trace, state)) in &finals[1..] {
        if trace != trace0 {
            return Verdict::fail(PROPERTY, format!("{first} and {p} end with different traces"));
        }
        if state != state0 {
            return Verdict::fail(PROPERTY, format!("{first} and {p} end in different states"));
        }
        for q in spec.queries() {
            let (a, b) = (spec.query(state0, &q), spec.query(state, &q));
            if a != b {
                return Verdict::fail(PROPERTY, format!("{q} reads {a} at {first} but {b} at {p}"));
            }
        }
    }
    Verdict::pass(PROPERTY).with_note(format!("{} correct replicas, {} updates", finals.len(), trace0.len()))
}

/// Each non-Byzantine observer processes every sender's updates in
/// sequence-number order without gaps.
pub fn check_pipeline_order(record: &ExecutionRecord) -> Verdict {
    const PROPERTY: &str = "pipeline-order";
    for i in record.non_byzantine() {
        let mut next: BTreeMap<ProcessId, u64> = BTreeMap::new();
        for (sender, sn, _) in processing_order(record, i) {
            let want = next.entry(sender).or_insert(1);
            if sn != *want {
                return Verdict::fail(
                    PROPERTY,
                    format!("{i} processed {sender}#{sn} while expecting {sender}#{want}"),
                );
            }
            *want += 1;
        }
    }
    let stuck = record.footer.stuck.len();
    let v = Verdict::pass(PROPERTY);
    if stuck > 0 {
        v.with_note(format!("{stuck} buffered messages stuck at the end"))
    } else {
        v
    }
}

/// Every update invoked by a correct process returned.
pub fn check_termination(record: &ExecutionRecord) -> Verdict {
    const PROPERTY: &str = "termination";
    if record.truncated() {
        return Verdict::inconclusive(PROPERTY, "run truncated by max_steps");
    }
    let correct: BTreeSet<ProcessId> = record.correct().into_iter().collect();
    let mut open: BTreeSet<(ProcessId, u64)> = BTreeSet::new();
    for e in &record.events {
        match e {
            Event::Invoke { process, sn, .. } if correct.contains(process) => {
                open.insert((*process, *sn));
            }
            Event::Return { process, sn, .. } => {
                open.remove(&(*process, *sn));
            }
            _ => {}
        }
    }
    match open.first() {
        None => Verdict::pass(PROPERTY),
        Some((p, sn)) => Verdict::fail(PROPERTY, format!("update {p}#{sn} never returned")),
    }
}

/// All verdicts for one run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn failed(&self) -> bool {
        self.verdicts.iter().any(Verdict::failed)
    }

    pub fn get(&self, property: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.property == property)
    }

    pub fn inconclusive(&self) -> bool {
        self.verdicts.iter().any(|v| v.status == Status::Inconclusive)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.verdicts {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Runs every record-level check against `spec`.
pub fn check_record<S: PcoSpec + ?Sized>(record: &ExecutionRecord, spec: &S) -> Report {
    let mut verdicts = vec![
        quiescence(record),
        fairness_audit(record),
        check_termination(record),
        check_pipeline_order(record),
        check_convergence(record, spec),
    ];
    match corrected_history(record) {
        Err(e) => verdicts.push(Verdict::fail("corrected-history", e)),
        Ok(h) => {
            verdicts.push(Verdict::pass("corrected-history"));
            for i in record.non_byzantine() {
                let s = build_serialization(record, &h, i);
                let mut v = check_serialization(&s, &h, i);
                // completeness needs every update to have reached everyone
                if record.truncated() && v.failed() {
                    let why = v.witness.unwrap_or_default();
                    v = Verdict::inconclusive("serialization", format!("run truncated by max_steps: {why}"));
                }
                v.property = format!("serialization[{i}]");
                verdicts.push(v);
                let mut v = check_pco_legal(&s, spec);
                v.property = format!("pco-legal[{i}]");
                verdicts.push(v);
            }
        }
    }
    let ws = check_work_stealing(record);
    if ws.status != Status::Skipped {
        verdicts.push(ws);
    }
    Report { verdicts }
}

struct CheckVisitor<'a> {
    record: &'a ExecutionRecord,
}

impl SpecVisitor for CheckVisitor<'_> {
    type Output = Report;

    fn visit<S: PcoSpec + 'static>(self, spec: S) -> Report {
        check_record(self.record, &spec)
    }
}

/// Builds the scenario's object and runs [`check_record`].
pub fn check_all(record: &ExecutionRecord) -> Report {
    let scenario = &record.scenario;
    match scenario.object.visit(scenario.n, CheckVisitor { record }) {
        Ok(report) => report,
        Err(e) => Report {
            verdicts: vec![Verdict::fail("object", e.to_string())],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::{MoneyParams, MoneySpec, ObjectConfig};
    use crate::sim::{run_scenario, CrashSpec, CrashTrigger, Scenario, Workload};

    fn p(i: u32) -> ProcessId {
        ProcessId::new(i)
    }

    fn scenario(seed: u64) -> Scenario {
        Scenario {
            n: 4,
            t: 1,
            fault_model: FaultModel::Crash,
            object: ObjectConfig::Money(MoneyParams::default()),
            seed,
            workload: Workload::Random {
                updates: 6,
                query_ratio: 0.4,
                common_ratio: 0.3,
            },
            crashes: vec![],
            byzantine: vec![],
            max_steps: 200_000,
        }
    }

    #[test]
    fn honest_run_passes_everything() {
        let r = run_scenario(&scenario(5)).unwrap();
        let report = check_all(&r);
        assert!(!report.failed(), "{report}");
        assert!(!report.inconclusive(), "{report}");
    }

    #[test]
    fn crash_mid_broadcast_drops_last_update() {
        let mut s = scenario(8);
        s.crashes = vec![CrashSpec {
            process: 2,
            trigger: CrashTrigger::Update {
                sn: 3,
                deliver_to: Some(vec![]),
            },
        }];
        let r = run_scenario(&s).unwrap();
        let h = extract_history(&r);
        let updates = |h: &History| h.events(p(2)).iter().filter(|i| i.sn.is_some()).count();
        let hc = crash_correct(&r, &h).unwrap();
        assert_eq!(updates(&h), 3);
        assert_eq!(updates(&hc), 2);
        let report = check_all(&r);
        assert!(!report.failed(), "{report}");
    }

    #[test]
    fn tampered_serializations_are_caught() {
        let r = run_scenario(&scenario(6)).unwrap();
        let spec = MoneySpec::from_params(4, &MoneyParams::default()).unwrap();
        let h = corrected_history(&r).unwrap();
        let s = build_serialization(&r, &h, p(1));
        assert!(check_pco_legal(&s, &spec).passed());

        let mut forged = s.clone();
        let k = forged
            .iter()
            .position(|e| matches!(e.op.kind, OpKind::Owned(_)))
            .expect("some transfer");
        forged[k].process = ProcessId::new(forged[k].process.index() % 4 + 1);
        let v = check_pco_legal(&forged, &spec);
        assert!(v.witness.unwrap().contains("process authorization"));

        let mut lied = s.clone();
        let k = lied.iter().position(|e| e.op.kind == OpKind::Query).expect("some query");
        lied[k].value = Value::Int(-1);
        let v = check_pco_legal(&lied, &spec);
        assert!(v.witness.unwrap().contains("output and query validity"));

        let mut illegal = s;
        illegal.insert(0, SerialEntry {
            process: p(1),
            op: MoneySpec::transfer(p(1), p(2), 1_000),
            sn: Some(99),
            value: Value::Masked,
        });
        let v = check_pco_legal(&illegal, &spec);
        assert!(v.witness.unwrap().contains("update legality"));
    }

    #[test]
    fn out_of_order_processing_is_caught() {
        let mut r = run_scenario(&scenario(9)).unwrap();
        let idx: Vec<usize> = r
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, Event::Process { process, sender, .. } if process.index() == 1 && sender.index() == 2))
            .map(|(k, _)| k)
            .take(2)
            .collect();
        r.events.swap(idx[0], idx[1]);
        assert!(check_pipeline_order(&r).failed());
    }
}

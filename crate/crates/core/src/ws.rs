//! Work stealing on top of the `wsd` object: `submit_task` plus the three
//! event handlers (local execution, stealing, harvesting remote results),
//! run in one monitor with round-robin activation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::objects::wsd::{reference_result, WsdSpec, ADD_RESULT, POP_BOTTOM, REMOVE};
use crate::sim::{Action, Driver, DriverCtx, Event, ExecutionRecord, Workload};
use crate::spec::{PcoSpec, Value, Verdict};
use crate::trace::{Operation, ProcessId};

/// `execute(t)`: deterministic in simulation.
pub fn execute(t: i64) -> i64 {
    reference_result(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Handler {
    Submit,
    Local,
    Steal,
    Harvest,
}

const HANDLERS: [Handler; 4] = [Handler::Submit, Handler::Local, Handler::Steal, Handler::Harvest];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Awaiting {
    Push,
    Pop,
    AddResult,
    Remove(i64),
}

#[derive(Clone, Copy, Debug)]
struct Running {
    task: i64,
    stolen: bool,
    until: u64,
}

pub struct WsDriver {
    me: ProcessId,
    to_submit: VecDeque<i64>,
    relaxed: bool,
    execute_time: u64,
    next: usize,
    running: Option<Running>,
    awaiting: Option<Awaiting>,
}

impl WsDriver {
    pub fn new(me: ProcessId, tasks: Vec<i64>, relaxed: bool, execute_time: u64) -> Self {
        WsDriver {
            me,
            to_submit: tasks.into(),
            relaxed,
            execute_time,
            next: 0,
            running: None,
            awaiting: None,
        }
    }

    fn start(&mut self, task: i64, stolen: bool, ctx: &mut DriverCtx<'_, impl PcoSpec>) {
        ctx.emit(Event::Execute {
            time: ctx.time,
            process: self.me,
            task,
        });
        self.running = Some(Running {
            task,
            stolen,
            until: ctx.time + self.execute_time,
        });
    }

    fn publish(&self, task: i64, result: i64, ctx: &mut DriverCtx<'_, impl PcoSpec>) {
        ctx.emit(Event::Publish {
            time: ctx.time,
            process: self.me,
            task,
            result,
        });
    }

    /// Evaluates the guard of `h` and, if it holds, runs the handler up to
    /// its next blocking point.
    fn try_handler<S: PcoSpec>(&mut self, h: Handler, ctx: &mut DriverCtx<'_, S>) -> Option<Action> {
        let me = self.me;
        match h {
            Handler::Submit => {
                let t = self.to_submit.pop_front()?;
                self.awaiting = Some(Awaiting::Push);
                Some(Action::Update(WsdSpec::push_bottom(me, t)))
            }
            Handler::Local => {
                if ctx.query(&WsdSpec::get_bottom(me)) == Value::Bottom {
                    return None;
                }
                self.awaiting = Some(Awaiting::Pop);
                Some(Action::Update(WsdSpec::pop_bottom(me)))
            }
            Handler::Steal => {
                if ctx.query(&WsdSpec::get_bottom(me)) != Value::Bottom {
                    return None;
                }
                let mut victims = Vec::new();
                for j in ProcessId::all(ctx.spec().n()).filter(|&j| j != me) {
                    if let Value::Int(t) = ctx.query(&WsdSpec::get_top(j)) {
                        // Skip tasks whose result is already known.
                        if ctx.query(&WsdSpec::get_results(t)) == Value::Set(BTreeSet::new()) {
                            victims.push(t);
                        }
                    }
                }
                if victims.is_empty() {
                    return None;
                }
                let t = victims[ctx.rng.gen_range(0..victims.len())];
                self.start(t, true, ctx);
                Some(self.continue_running(ctx))
            }
            Handler::Harvest => {
                let Value::Set(pending) = ctx.query(&WsdSpec::get_pending(me)) else { return None };
                for t in pending {
                    if let Value::Set(rs) = ctx.query(&WsdSpec::get_results(t)) {
                        if !rs.is_empty() {
                            self.awaiting = Some(Awaiting::Remove(t));
                            return Some(Action::Update(WsdSpec::remove(me, t)));
                        }
                    }
                }
                None
            }
        }
    }

    /// Sleeps until the running task is done, or wraps it up.
    fn continue_running<S: PcoSpec>(&mut self, ctx: &mut DriverCtx<'_, S>) -> Action {
        let run = self.running.expect("a task is running");
        if ctx.time < run.until {
            return Action::Sleep(run.until - ctx.time);
        }
        self.running = None;
        let r = execute(run.task);
        if run.stolen {
            self.awaiting = Some(Awaiting::AddResult);
            Action::Update(WsdSpec::add_result(run.task, r))
        } else {
            self.publish(run.task, r, ctx);
            self.schedule(ctx)
        }
    }

    /// Round-robin over the activated handlers. While a task runs in
    /// relaxed mode only `submit` and harvesting may interleave.
    fn schedule<S: PcoSpec>(&mut self, ctx: &mut DriverCtx<'_, S>) -> Action {
        for k in 0..HANDLERS.len() {
            let idx = (self.next + k) % HANDLERS.len();
            let h = HANDLERS[idx];
            if self.running.is_some() && matches!(h, Handler::Local | Handler::Steal) {
                continue;
            }
            if let Some(action) = self.try_handler(h, ctx) {
                self.next = (idx + 1) % HANDLERS.len();
                return action;
            }
        }
        match self.running {
            Some(run) => Action::Sleep(run.until.saturating_sub(ctx.time).max(1)),
            None => Action::Idle,
        }
    }
}

impl<S: PcoSpec> Driver<S> for WsDriver {
    fn next_action(&mut self, ctx: &mut DriverCtx<'_, S>) -> Action {
        match self.running {
            Some(run) if ctx.time >= run.until => self.continue_running(ctx),
            Some(_) if !self.relaxed => self.continue_running(ctx),
            _ => self.schedule(ctx),
        }
    }

    fn on_return(&mut self, _op: &Operation, value: &Value, ctx: &mut DriverCtx<'_, S>) {
        match self.awaiting.take() {
            Some(Awaiting::Pop) => {
                if let Value::Int(t) = value {
                    self.start(*t, false, ctx);
                }
            }
            Some(Awaiting::Remove(t)) => {
                if let Value::Set(rs) = ctx.query(&WsdSpec::get_results(t)) {
                    if let Some(&r) = rs.iter().next() {
                        self.publish(t, r, ctx);
                    }
                }
            }
            Some(Awaiting::Push) | Some(Awaiting::AddResult) | None => {}
        }
    }

    fn on_abort(&mut self, _op: &Operation, _reason: &str, _ctx: &mut DriverCtx<'_, S>) {
        self.awaiting = None;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task: i64,
    pub owner: ProcessId,
    pub executed_by: BTreeSet<ProcessId>,
    /// `(result, time)` of every `publish_result` at the owner.
    pub published: Vec<(i64, u64)>,
    pub accepted_result: Option<i64>,
    /// The owner processed a pop returning the task or its removal.
    pub left_deque: bool,
}

/// Per-task outcomes for every task submitted by a correct process.
pub fn task_outcomes(record: &ExecutionRecord) -> Vec<TaskOutcome> {
    let Workload::WorkStealing { tasks, .. } = &record.scenario.workload else {
        return Vec::new();
    };
    let byz = record.byzantine();
    let correct: BTreeSet<ProcessId> = record.correct().into_iter().collect();
    let mut out: BTreeMap<i64, TaskOutcome> = BTreeMap::new();
    for (&i, ts) in tasks {
        let owner = ProcessId::new(i);
        if !correct.contains(&owner) {
            continue;
        }
        for &t in ts {
            out.insert(
                t,
                TaskOutcome {
                    task: t,
                    owner,
                    executed_by: BTreeSet::new(),
                    published: Vec::new(),
                    accepted_result: None,
                    left_deque: false,
                },
            );
        }
    }
    for e in &record.events {
        match e {
            Event::Execute { process, task, .. } if !byz.contains(process) => {
                if let Some(o) = out.get_mut(task) {
                    o.executed_by.insert(*process);
                }
            }
            Event::Publish {
                process,
                task,
                result,
                time,
            } => {
                if let Some(o) = out.get_mut(task).filter(|o| o.owner == *process) {
                    o.published.push((*result, *time));
                    o.accepted_result.get_or_insert(*result);
                }
            }
            Event::Process {
                process,
                op,
                output,
                ..
            } => {
                let task = match (op.name.as_str(), op.args.as_slice(), output) {
                    (POP_BOTTOM, [], Value::Int(t)) => Some(*t),
                    (REMOVE, [t], _) => Some(*t),
                    _ => None,
                };
                if let Some(o) = task.and_then(|t| out.get_mut(&t)).filter(|o| o.owner == *process) {
                    o.left_deque = true;
                }
            }
            _ => {}
        }
    }
    out.into_values().collect()
}

/// Every task of a correct submitter is executed at least once and its
/// owner publishes exactly one valid result.
pub fn check_work_stealing(record: &ExecutionRecord) -> Verdict {
    const PROPERTY: &str = "work-stealing";
    if !matches!(record.scenario.workload, Workload::WorkStealing { .. }) {
        return Verdict::skipped(PROPERTY, "not a work-stealing run");
    }
    if record.truncated() {
        return Verdict::inconclusive(PROPERTY, "run truncated by max_steps");
    }
    let byz = record.byzantine();
    for e in &record.events {
        if let Event::Process { process, op, .. } = e {
            if op.name == ADD_RESULT && !byz.contains(process) {
                if let [t, r] = op.args.as_slice() {
                    if *r != reference_result(*t) {
                        return Verdict::fail(
                            PROPERTY,
                            format!("{process} processed invalid result {r} for task {t}"),
                        );
                    }
                }
            }
        }
    }
    let outcomes = task_outcomes(record);
    for o in &outcomes {
        let problem = if o.executed_by.is_empty() {
            Some("never executed".to_string())
        } else if o.published.len() != 1 {
            Some(format!("published {} times", o.published.len()))
        } else if o.published[0].0 != reference_result(o.task) {
            Some(format!("published invalid result {}", o.published[0].0))
        } else if !o.left_deque {
            Some("never left the owner's deque".to_string())
        } else {
            None
        };
        if let Some(problem) = problem {
            return Verdict::fail(PROPERTY, format!("task {} of {}: {problem}", o.task, o.owner));
        }
    }
    Verdict::pass(PROPERTY).with_note(format!("{} tasks", outcomes.len()))
}

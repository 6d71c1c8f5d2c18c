//! Subcommand bodies behind the `pco` binary. Each returns a process exit
//! code: 0 pass, 1 property violation, 2 configuration or usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::checker::{check_all, replay, Report};
use crate::objects::{ObjectConfig, SpecVisitor};
use crate::sim::{run_scenario, ExecutionRecord, LogError, Scenario, Workload};
use crate::spec::{
    check_cstar_closure, check_idiamond_closure, check_initial_emptiness, equivalence_vs_predicate, PcoSpec,
    Status, Verdict,
};
use crate::ws::task_outcomes;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Longest random word used by the predicate cross-check.
pub const EQUIVALENCE_LEN: usize = 6;

fn exit_code(verdicts: &[Verdict]) -> i32 {
    if verdicts.iter().any(Verdict::failed) {
        EXIT_VIOLATION
    } else {
        EXIT_PASS
    }
}

fn print_verdicts(out: &mut dyn Write, verdicts: &[Verdict]) {
    for v in verdicts {
        let _ = writeln!(out, "{v}");
    }
    if verdicts.iter().any(|v| v.status == Status::Inconclusive) {
        let _ = writeln!(out, "warning: some properties are inconclusive");
    }
}

struct ClosureSuite {
    seed: u64,
    trials: u64,
}

impl SpecVisitor for ClosureSuite {
    type Output = Vec<Verdict>;

    fn visit<S: PcoSpec + 'static>(self, spec: S) -> Vec<Verdict> {
        vec![
            check_initial_emptiness(&spec),
            check_cstar_closure(&spec, self.seed, self.trials),
            check_idiamond_closure(&spec, self.seed, self.trials),
            equivalence_vs_predicate(&spec, self.seed, EQUIVALENCE_LEN, self.trials),
        ]
    }
}

/// Closure checks plus the predicate cross-check for one object.
pub fn closure_suite(object: &ObjectConfig, n: usize, seed: u64, trials: u64) -> Vec<Verdict> {
    match object.visit(n, ClosureSuite { seed, trials }) {
        Ok(v) => v,
        Err(e) => vec![Verdict::fail("object", e.to_string())],
    }
}

struct Summary<'a> {
    record: &'a ExecutionRecord,
}

impl SpecVisitor for Summary<'_> {
    type Output = serde_json::Value;

    fn visit<S: PcoSpec + 'static>(self, spec: S) -> serde_json::Value {
        let mut replicas = serde_json::Map::new();
        for p in self.record.correct() {
            let entry = match replay(self.record, &spec, p) {
                Ok((trace, state)) => {
                    let queries: serde_json::Map<_, _> = spec
                        .queries()
                        .into_iter()
                        .map(|q| (q.to_string(), json!(spec.query(&state, &q))))
                        .collect();
                    json!({"updates": trace.len(), "queries": queries})
                }
                Err(e) => json!({"error": e}),
            };
            replicas.insert(p.to_string(), entry);
        }
        json!({
            "object": spec.name(),
            "status": self.record.footer.status,
            "steps": self.record.footer.steps,
            "final_time": self.record.footer.final_time,
            "events": self.record.footer.event_count,
            "stuck": self.record.footer.stuck,
            "replicas": replicas,
        })
    }
}

/// Final-state summary of every correct replica.
pub fn final_summary(record: &ExecutionRecord) -> serde_json::Value {
    let s = &record.scenario;
    s.object
        .visit(s.n, Summary { record })
        .unwrap_or_else(|e| json!({"error": e.to_string()}))
}

fn load_scenario(path: &Path, out: &mut dyn Write) -> Option<Scenario> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(out, "error: cannot read {}: {e}", path.display());
            return None;
        }
    };
    match Scenario::from_json(&text).and_then(|s| s.validate().map(|_| s)) {
        Ok(s) => Some(s),
        Err(e) => {
            let _ = writeln!(out, "error: {}: {e}", path.display());
            None
        }
    }
}

fn execute(scenario: &Scenario, out: &mut dyn Write) -> Option<ExecutionRecord> {
    match run_scenario(scenario) {
        Ok(r) => Some(r),
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            None
        }
    }
}

/// `run <file> [--out dir] [--seed s]`: simulate, write the log and a
/// summary, then check the run and the object's closure properties.
pub fn cmd_run(path: &Path, out_dir: Option<&Path>, seed: Option<u64>, out: &mut dyn Write) -> i32 {
    let Some(mut scenario) = load_scenario(path, out) else { return EXIT_CONFIG };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let Some(record) = execute(&scenario, out) else { return EXIT_CONFIG };
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let log_path = dir.join(format!("{stem}.jsonl"));
    let summary_path = dir.join(format!("{stem}.summary.json"));
    let report = check_all(&record);
    let mut verdicts = report.verdicts.clone();
    verdicts.extend(closure_suite(&scenario.object, scenario.n, scenario.seed, crate::spec::DEFAULT_TRIALS));
    let mut summary = final_summary(&record);
    summary["verdicts"] = json!(verdicts);
    let written = fs::create_dir_all(&dir)
        .and_then(|_| fs::write(&log_path, record.to_jsonl()))
        .and_then(|_| fs::write(&summary_path, serde_json::to_string_pretty(&summary).expect("json")));
    if let Err(e) = written {
        let _ = writeln!(out, "error: cannot write to {}: {e}", dir.display());
        return EXIT_CONFIG;
    }
    log::info!("wrote {} and {}", log_path.display(), summary_path.display());
    let _ = writeln!(
        out,
        "{}: {:?} after {} steps, {} events, log {}",
        scenario.object.name(),
        record.footer.status,
        record.footer.steps,
        record.footer.event_count,
        log_path.display()
    );
    print_verdicts(out, &verdicts);
    exit_code(&verdicts)
}

/// Parses a JSONL log; integrity failures count as violations.
pub fn load_log(path: &Path) -> Result<ExecutionRecord, (i32, String)> {
    let text =
        fs::read_to_string(path).map_err(|e| (EXIT_CONFIG, format!("cannot read {}: {e}", path.display())))?;
    ExecutionRecord::from_jsonl(&text).map_err(|e| match e {
        LogError::Integrity { .. } => (EXIT_VIOLATION, e.to_string()),
        _ => (EXIT_CONFIG, e.to_string()),
    })
}

/// `check <log>`: re-runs every checker on a stored log.
pub fn cmd_check(path: &Path, out: &mut dyn Write) -> i32 {
    let record = match load_log(path) {
        Ok(r) => r,
        Err((code, msg)) => {
            let _ = writeln!(out, "error: {msg}");
            return code;
        }
    };
    let Report { verdicts } = check_all(&record);
    print_verdicts(out, &verdicts);
    exit_code(&verdicts)
}

/// `validate-spec <object>`: closure checks on a registered object.
pub fn cmd_validate_spec(
    object: &str,
    params: Option<&str>,
    n: Option<usize>,
    trials: u64,
    seed: u64,
    out: &mut dyn Write,
) -> i32 {
    let params = match params.map(serde_json::from_str).transpose() {
        Ok(p) => p.unwrap_or(serde_json::Value::Null),
        Err(e) => {
            let _ = writeln!(out, "error: params are not JSON: {e}");
            return EXIT_CONFIG;
        }
    };
    let config = match ObjectConfig::from_name_and_params(object, params) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    let n = n.unwrap_or(if matches!(config, ObjectConfig::Tokenring) { 2 } else { 3 });
    let verdicts = closure_suite(&config, n, seed, trials);
    print_verdicts(out, &verdicts);
    exit_code(&verdicts)
}

/// `demo-ws <file>`: runs a work-stealing scenario and reports per-task
/// outcomes next to the usual verdicts.
pub fn cmd_demo_ws(path: &Path, out: &mut dyn Write) -> i32 {
    let Some(scenario) = load_scenario(path, out) else { return EXIT_CONFIG };
    if !matches!(scenario.workload, Workload::WorkStealing { .. }) {
        let _ = writeln!(out, "error: {} has no work-stealing workload", path.display());
        return EXIT_CONFIG;
    }
    let Some(record) = execute(&scenario, out) else { return EXIT_CONFIG };
    let _ = writeln!(out, "task  owner  executed_by      published  left_deque");
    for o in task_outcomes(&record) {
        let by: Vec<String> = o.executed_by.iter().map(|p| p.to_string()).collect();
        let published: Vec<String> = o.published.iter().map(|(r, t)| format!("{r}@{t}")).collect();
        let _ = writeln!(
            out,
            "{:<5} {:<6} {:<16} {:<10} {}",
            o.task,
            o.owner.to_string(),
            by.join(","),
            published.join(","),
            o.left_deque
        );
    }
    let Report { verdicts } = check_all(&record);
    print_verdicts(out, &verdicts);
    exit_code(&verdicts)
}

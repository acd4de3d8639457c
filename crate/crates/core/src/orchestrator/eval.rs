use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use super::{CodebaseAction, Engine, HumanInput, TaskReport, WriteBack, REPORT_SCHEMA_VERSION};
use crate::analysis::error_count;
use crate::codebase::CodebaseStore;
use crate::runtime::{load_scene, Scene, SceneError, Value};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("tasks line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("task {task}: scene: {source}")]
    Scene { task: String, source: SceneError },
    #[error("duplicate task id {0}")]
    DuplicateId(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    id: String,
    query: String,
    scene: Json,
    expected_answer: String,
}

/// One benchmark task with its scene resolved.
#[derive(Debug, Clone)]
pub struct EvalTask {
    pub id: String,
    pub query: String,
    pub scene: Scene,
    pub expected_answer: String,
}

/// Read a JSONL task file. `scene` is either an inline scene object or a
/// path relative to the task file.
pub fn load_tasks(path: impl AsRef<Path>) -> Result<Vec<EvalTask>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut tasks: Vec<EvalTask> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawTask = serde_json::from_str(line).map_err(|e| EvalError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        let scene = match &raw.scene {
            Json::String(rel) => load_scene(base.join(rel)),
            inline => Scene::from_json(inline),
        }
        .map_err(|source| EvalError::Scene {
            task: raw.id.clone(),
            source,
        })?;
        if tasks.iter().any(|t| t.id == raw.id) {
            return Err(EvalError::DuplicateId(raw.id));
        }
        tasks.push(EvalTask {
            id: raw.id,
            query: raw.query,
            scene,
            expected_answer: raw.expected_answer,
        });
    }
    Ok(tasks)
}

fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Compare a produced answer with the expected string: trimmed and
/// case-folded, numbers by value.
pub fn answers_match(expected: &str, got: Option<&Value>) -> bool {
    let Some(got) = got else { return false };
    let got = normalize_answer(&got.to_answer());
    let expected = normalize_answer(expected);
    match (expected.parse::<Decimal>(), got.parse::<Decimal>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => expected == got,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub expected: String,
    pub answer: Option<String>,
    pub correct: bool,
    pub iterations: usize,
    /// Whether the answer after iteration j (1-based, padded with the last
    /// iteration) was correct.
    pub correct_by_iteration: Vec<bool>,
    pub lint_score_draft: f64,
    pub lint_score_final: f64,
    pub codebase_action: CodebaseAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub tasks: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Entry j-1 scores every task by its answer after iteration j; tasks
    /// that stopped earlier keep their final answer.
    pub accuracy_by_iteration: Vec<f64>,
    pub avg_iterations: f64,
    /// Share of tasks whose final program has no error diagnostics and ran
    /// without a runtime error.
    pub compile_success_rate: f64,
    pub mean_lint_score_draft: f64,
    pub mean_lint_score_final: f64,
    pub failures: Vec<EvalFailure>,
    pub per_task: Vec<TaskSummary>,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn summarize(task: &EvalTask, report: &TaskReport, max_iterations: usize) -> TaskSummary {
    let iters = &report.iterations;
    let correct_by_iteration = (0..max_iterations)
        .map(|j| {
            let rec = &iters[j.min(iters.len() - 1)];
            answers_match(&task.expected_answer, rec.execution.result.as_ref())
        })
        .collect();
    TaskSummary {
        task_id: task.id.clone(),
        expected: task.expected_answer.clone(),
        answer: report.final_result.as_ref().map(Value::to_answer),
        correct: answers_match(&task.expected_answer, report.final_result.as_ref()),
        iterations: iters.len(),
        correct_by_iteration,
        lint_score_draft: iters[0].lint_score,
        lint_score_final: iters[iters.len() - 1].lint_score,
        codebase_action: report.codebase_action,
    }
}

/// Assemble the aggregate report from per-task reports in task order.
pub fn build_report(
    tasks: &[EvalTask],
    reports: &[TaskReport],
    max_iterations: usize,
) -> EvalReport {
    let per_task: Vec<TaskSummary> = tasks
        .iter()
        .zip(reports)
        .map(|(t, r)| summarize(t, r, max_iterations))
        .collect();
    let n = per_task.len();
    let correct = per_task.iter().filter(|s| s.correct).count();
    let accuracy_by_iteration = (0..max_iterations)
        .map(|j| {
            ratio(
                per_task
                    .iter()
                    .filter(|s| s.correct_by_iteration[j])
                    .count(),
                n,
            )
        })
        .collect();
    let compiled = reports
        .iter()
        .filter(|r| {
            r.failure.is_none()
                && r.iterations
                    .last()
                    .is_some_and(|l| l.execution.is_ok() && error_count(&l.diagnostics) == 0)
        })
        .count();
    let failures = reports
        .iter()
        .filter_map(|r| {
            let reason = r.failure.clone().or_else(|| {
                r.iterations
                    .last()
                    .and_then(|l| l.execution.runtime_error.as_ref())
                    .map(|e| format!("runtime error: {}", e.message))
            })?;
            Some(EvalFailure {
                task_id: r.task_id.clone(),
                reason,
            })
        })
        .collect();
    EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tasks: n,
        correct,
        accuracy: ratio(correct, n),
        accuracy_by_iteration,
        avg_iterations: mean(per_task.iter().map(|s| s.iterations as f64)),
        compile_success_rate: ratio(compiled, n),
        mean_lint_score_draft: mean(per_task.iter().map(|s| s.lint_score_draft)),
        mean_lint_score_final: mean(per_task.iter().map(|s| s.lint_score_final)),
        failures,
        per_task,
    }
}

/// Write `iteration,accuracy` rows.
pub fn write_accuracy_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "accuracy"])?;
    for (i, acc) in report.accuracy_by_iteration.iter().enumerate() {
        w.write_record([(i + 1).to_string(), acc.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

struct NoHuman;

impl HumanInput for NoHuman {
    fn lines(&mut self, _: usize, _: &crate::feedback::FeedbackBundle) -> Vec<String> {
        Vec::new()
    }
}

impl Engine<'_> {
    /// Run every task and score the answers.
    ///
    /// With `jobs <= 1` tasks run in order and each write-back is visible to
    /// later tasks. With more jobs, every task retrieves from the codebase as
    /// it was at the start and write-backs are applied afterwards in task
    /// order, so the outcome does not depend on scheduling.
    pub fn evaluate(
        &self,
        tasks: &[EvalTask],
        store: &CodebaseStore,
        jobs: usize,
    ) -> (EvalReport, Vec<TaskReport>) {
        let reports = if jobs <= 1 {
            tasks
                .iter()
                .map(|t| {
                    log::info!("task {}: {}", t.id, t.query);
                    self.run_task(&t.id, &t.query, &t.scene, store, Some(&mut NoHuman))
                })
                .collect()
        } else {
            self.evaluate_parallel(tasks, store, jobs)
        };
        let report = build_report(tasks, &reports, self.config.max_iterations);
        (report, reports)
    }

    fn evaluate_parallel(
        &self,
        tasks: &[EvalTask],
        store: &CodebaseStore,
        jobs: usize,
    ) -> Vec<TaskReport> {
        let frozen = CodebaseStore::in_memory(store.snapshot());
        let next = std::sync::atomic::AtomicUsize::new(0);
        let mut slots: Vec<Option<(TaskReport, Option<WriteBack>)>> =
            (0..tasks.len()).map(|_| None).collect();
        let done = std::sync::Mutex::new(&mut slots);
        std::thread::scope(|s| {
            for _ in 0..jobs.min(tasks.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(t) = tasks.get(i) else { break };
                    log::info!("task {}: {}", t.id, t.query);
                    let out = self.run_loop(&t.id, &t.query, &t.scene, &frozen, None);
                    done.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(out);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| {
                let (mut report, offer) = slot.expect("every task ran");
                if let Some(offer) = offer {
                    report.codebase_action = self.write_back(store, &offer);
                }
                report
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rust_decimal::Decimal;

    #[test]
    fn normalization() {
        let three = Value::Number(Decimal::from(3));
        assert!(answers_match("3", Some(&three)));
        assert!(answers_match(" 3.0 ", Some(&three)));
        assert!(answers_match("Yes", Some(&Value::Bool(true))));
        assert!(answers_match("red", Some(&Value::Text(" RED ".into()))));
        assert!(!answers_match("4", Some(&three)));
        assert!(!answers_match("3", None));
    }
}

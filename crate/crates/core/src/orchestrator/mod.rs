//! The refine loop and batch evaluation.
//!
//! [`Engine::run_task`] decomposes a query, prompts with retrieved abstract
//! code, then alternates execute → feedback → refine until the feedback has
//! no errors or warnings or the iteration budget is spent. The final
//! program is offered back to the codebase.

mod eval;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{analyze, error_count, lint_score, Diagnostic};
use crate::codebase::{
    choose, retrieve, select_survivor_with_model, Candidate, CodebaseEntry, CodebaseError,
    CodebaseStore, EntryStats, EntryStatus, Survivor,
};
use crate::dsl::{parse, print_program, Origin, SourceProgram};
use crate::feedback::{
    aggregate, collect, human_feedback, FeedbackBundle, FeedbackChannels, FeedbackInput,
    FeedbackModel,
};
use crate::prompting::{
    build_al_prompt, generate_logical_steps, generate_program, request_program, GeneratedProgram,
    ModelClient, PromptError, TemplateName, Templates,
};
use crate::runtime::{execute, ExecutionResult, Limits, PerceptionBackend, Scene, Value};

pub use eval::{
    answers_match, build_report, load_tasks, write_accuracy_csv, EvalError, EvalFailure,
    EvalReport, EvalTask, TaskSummary,
};

/// Version of the report JSON layouts.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Synthetic backend, scripted model, rule-based feedback.
    #[default]
    Hermetic,
    /// Model-backed feedback and selection.
    Live,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error("bootstrap_fraction {0} outside [0, 1]")]
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub max_iterations: usize,
    pub retrieval_k: usize,
    pub bootstrap_fraction: f64,
    pub seed: u64,
    pub mode: Mode,
    pub step_limit: u64,
    pub human_feedback_enabled: bool,
    pub channels: FeedbackChannels,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_iterations: 3,
            retrieval_k: 2,
            bootstrap_fraction: 0.2,
            seed: 0,
            mode: Mode::Hermetic,
            step_limit: crate::runtime::DEFAULT_STEP_LIMIT,
            human_feedback_enabled: false,
            channels: FeedbackChannels::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations < 1 {
            return Err(ConfigError::NoIterations);
        }
        if !(0.0..=1.0).contains(&self.bootstrap_fraction) {
            return Err(ConfigError::Fraction(self.bootstrap_fraction));
        }
        Ok(())
    }

    pub fn limits(&self) -> Limits {
        Limits {
            max_steps: self.step_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub program: SourceProgram,
    pub diagnostics: Vec<Diagnostic>,
    pub lint_score: f64,
    pub execution: ExecutionResult,
    pub feedback: FeedbackBundle,
    pub stopped_early: bool,
    /// Generation problems and model failures met while producing or
    /// refining this program.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebaseAction {
    Inserted,
    ReplacedDraft,
    KeptDraft,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub schema_version: u32,
    pub task_id: String,
    pub query: String,
    pub steps: Vec<String>,
    pub final_result: Option<Value>,
    pub iterations: Vec<IterationRecord>,
    pub codebase_action: CodebaseAction,
    /// Set when a model failure aborted the task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub wall_time_ms: u64,
}

/// Source of operator notes between iterations.
pub trait HumanInput {
    /// Called after each iteration's feedback is assembled; returned lines
    /// join that feedback before the next refinement.
    fn lines(&mut self, iteration: usize, feedback: &FeedbackBundle) -> Vec<String>;
}

/// Refine `program` against `feedback`: render REFINE and validate the reply
/// like a generated program, with one corrective re-ask.
pub fn refine(
    query: &str,
    program: &SourceProgram,
    feedback: &FeedbackBundle,
    n_steps: usize,
    client: &dyn ModelClient,
    templates: &Templates,
) -> Result<GeneratedProgram, PromptError> {
    let canonical = match parse(&program.text) {
        Ok(ast) => print_program(&ast),
        Err(_) => program.text.clone(),
    };
    let prompt = templates.render(
        TemplateName::Refine,
        &[
            ("QUERY", query),
            ("PROGRAM", &canonical),
            ("FEEDBACK", &feedback.render()),
        ],
    )?;
    request_program(prompt, n_steps, Origin::Refined, client)
}

/// A finished task's offer to the codebase, applied by [`Engine::write_back`].
#[derive(Debug, Clone)]
pub struct WriteBack {
    pub query: String,
    pub steps: Vec<String>,
    pub program: SourceProgram,
    pub feedback: FeedbackBundle,
    pub scene: Scene,
}

/// Everything the loop needs besides the task itself.
pub struct Engine<'a> {
    pub config: EngineConfig,
    pub client: &'a dyn ModelClient,
    pub templates: &'a Templates,
    pub backend: &'a dyn PerceptionBackend,
}

struct Evaluated {
    diagnostics: Vec<Diagnostic>,
    lint: f64,
    execution: ExecutionResult,
    feedback: FeedbackBundle,
}

impl<'a> Engine<'a> {
    pub fn new(
        config: EngineConfig,
        client: &'a dyn ModelClient,
        templates: &'a Templates,
        backend: &'a dyn PerceptionBackend,
    ) -> Self {
        Engine {
            config,
            client,
            templates,
            backend,
        }
    }

    fn feedback_model(&self) -> Option<FeedbackModel<'a>> {
        (self.config.mode == Mode::Live).then_some(FeedbackModel {
            client: self.client,
            templates: self.templates,
        })
    }

    fn evaluate_program(&self, query: &str, program: &SourceProgram, scene: &Scene) -> Evaluated {
        match program.parse() {
            Ok(ast) => {
                let diagnostics = analyze(&ast);
                let lint = lint_score(&ast, &diagnostics);
                let execution = execute(&ast, scene, self.backend, self.config.limits());
                let input = FeedbackInput {
                    query,
                    program: &ast,
                    diagnostics: &diagnostics,
                    execution: &execution,
                    scene,
                    backend: self.backend,
                };
                let channels = FeedbackChannels {
                    human: false,
                    ..self.config.channels
                };
                let feedback = collect(&input, channels, &[], self.feedback_model());
                Evaluated {
                    diagnostics,
                    lint,
                    execution,
                    feedback,
                }
            }
            Err(errs) => {
                let execution =
                    ExecutionResult::failed(format!("program does not parse: {}", errs[0]));
                let feedback = aggregate(
                    vec![],
                    vec![],
                    crate::feedback::compile_feedback(&[], &execution),
                    vec![],
                );
                Evaluated {
                    diagnostics: Vec::new(),
                    lint: 0.0,
                    execution,
                    feedback,
                }
            }
        }
    }

    fn failed_record(&self, index: usize, program: SourceProgram, reason: &str) -> IterationRecord {
        let execution = ExecutionResult::failed(reason.to_string());
        let feedback = aggregate(
            vec![],
            vec![],
            crate::feedback::compile_feedback(&[], &execution),
            vec![],
        );
        // Keep the static view of the program that was current when the
        // model failed, so lint means stay comparable.
        let (diagnostics, lint) = match program.parse() {
            Ok(ast) => {
                let d = analyze(&ast);
                let l = lint_score(&ast, &d);
                (d, l)
            }
            Err(_) => (Vec::new(), 0.0),
        };
        IterationRecord {
            index,
            program,
            diagnostics,
            lint_score: lint,
            execution,
            feedback,
            stopped_early: false,
            notes: vec![reason.to_string()],
        }
    }

    /// Run the loop and apply the codebase write-back immediately.
    pub fn run_task(
        &self,
        task_id: &str,
        query: &str,
        scene: &Scene,
        store: &CodebaseStore,
        human: Option<&mut dyn HumanInput>,
    ) -> TaskReport {
        let (mut report, offer) = self.run_loop(task_id, query, scene, store, human);
        if let Some(offer) = offer {
            report.codebase_action = self.write_back(store, &offer);
        }
        report
    }

    /// The loop without write-back; returns what would be offered to the
    /// codebase, if anything.
    pub fn run_loop(
        &self,
        task_id: &str,
        query: &str,
        scene: &Scene,
        store: &CodebaseStore,
        mut human: Option<&mut dyn HumanInput>,
    ) -> (TaskReport, Option<WriteBack>) {
        let start = Instant::now();
        let mut report = TaskReport {
            schema_version: REPORT_SCHEMA_VERSION,
            task_id: task_id.to_string(),
            query: query.to_string(),
            steps: Vec::new(),
            final_result: None,
            iterations: Vec::new(),
            codebase_action: CodebaseAction::None,
            failure: None,
            wall_time_ms: 0,
        };
        let abort = |mut report: TaskReport, record: IterationRecord, reason: String| {
            log::warn!("task {task_id} aborted: {reason}");
            report.iterations.push(record);
            report.failure = Some(reason);
            report.final_result = None;
            report.wall_time_ms = start.elapsed().as_millis() as u64;
            (report, None)
        };
        let empty = SourceProgram::new("", Origin::Generated);

        let steps = match generate_logical_steps(query, self.client, self.templates) {
            Ok(s) => s,
            Err(e) => {
                let reason = format!("decomposition failed: {e}");
                let rec = self.failed_record(1, empty, &reason);
                return abort(report, rec, reason);
            }
        };
        report.steps = steps.clone();
        let al = {
            let cb = store.read();
            let retrieved = retrieve(&cb, query, self.config.retrieval_k);
            build_al_prompt(
                query,
                &steps,
                &retrieved,
                self.config.retrieval_k,
                self.templates,
            )
        };
        let generated = match al.and_then(|al| generate_program(&al, self.client)) {
            Ok(g) => g,
            Err(e) => {
                let reason = format!("generation failed: {e}");
                let rec = self.failed_record(1, empty, &reason);
                return abort(report, rec, reason);
            }
        };
        let mut program = generated.program;
        let mut notes = generated.notes;

        for index in 1..=self.config.max_iterations {
            let ev = self.evaluate_program(query, &program, scene);
            let mut feedback = ev.feedback;
            if self.config.human_feedback_enabled && self.config.channels.human {
                if let Some(h) = human.as_deref_mut() {
                    let lines = h.lines(index, &feedback);
                    let items = human_feedback(&lines);
                    if !items.is_empty() {
                        let mut all = feedback.items.clone();
                        all.extend(items);
                        feedback = aggregate(all, vec![], vec![], vec![]);
                    }
                }
            }
            let done = !feedback.needs_refinement();
            report.iterations.push(IterationRecord {
                index,
                program: program.clone(),
                diagnostics: ev.diagnostics,
                lint_score: ev.lint,
                execution: ev.execution,
                feedback: feedback.clone(),
                stopped_early: done,
                notes: std::mem::take(&mut notes),
            });
            if done || index == self.config.max_iterations {
                break;
            }
            match refine(
                query,
                &program,
                &feedback,
                steps.len(),
                self.client,
                self.templates,
            ) {
                Ok(g) => {
                    program = g.program;
                    notes = g.notes;
                }
                Err(PromptError::MalformedModelReply(m)) => {
                    notes = vec![format!("refinement failed, kept previous program: {m}")];
                }
                Err(e) => {
                    let reason = format!("refinement failed: {e}");
                    let rec = self.failed_record(index + 1, program.clone(), &reason);
                    return abort(report, rec, reason);
                }
            }
        }

        let last = report.iterations.last().expect("at least one iteration");
        report.final_result = last.execution.result.clone();
        let offer =
            (last.execution.is_ok() && error_count(&last.diagnostics) == 0).then(|| WriteBack {
                query: query.to_string(),
                steps: steps.clone(),
                program: SourceProgram::new(last.program.text.clone(), Origin::Refined),
                feedback: last.feedback.clone(),
                scene: scene.clone(),
            });
        report.wall_time_ms = start.elapsed().as_millis() as u64;
        (report, offer)
    }

    /// Insert the program, or compare it against the stored entry for the
    /// same query and keep the better one.
    pub fn write_back(&self, store: &CodebaseStore, offer: &WriteBack) -> CodebaseAction {
        let result: Result<CodebaseAction, CodebaseError> = store.update(|cb| {
            let mut entry = CodebaseEntry::new(
                &offer.query,
                offer.steps.clone(),
                offer.program.clone(),
                EntryStatus::Refined,
            )?;
            entry.stats = EntryStats {
                runs: 1,
                error_free_runs: 1,
            };
            let Some(stored) = cb.find_by_query(&offer.query).cloned() else {
                cb.upsert(entry)?;
                return Ok(CodebaseAction::Inserted);
            };
            let draft_eval = self.evaluate_program(&offer.query, &stored.code, &offer.scene);
            let draft = Candidate {
                code: &stored.code,
                feedback: &draft_eval.feedback,
            };
            let refined = Candidate {
                code: &entry.code,
                feedback: &offer.feedback,
            };
            let survivor = match self.config.mode {
                Mode::Live => select_survivor_with_model(
                    &offer.query,
                    draft,
                    refined,
                    self.client,
                    self.templates,
                ),
                Mode::Hermetic => choose(draft, refined),
            };
            match survivor {
                Survivor::Refined => {
                    cb.upsert(entry)?;
                    Ok(CodebaseAction::ReplacedDraft)
                }
                Survivor::Draft => {
                    let ok = draft_eval.execution.is_ok();
                    if let Some(e) = cb.get_mut(&stored.id) {
                        e.stats.runs += 1;
                        e.stats.error_free_runs += u64::from(ok);
                    }
                    Ok(CodebaseAction::KeptDraft)
                }
            }
        });
        result.unwrap_or_else(|e| {
            log::warn!("codebase write-back skipped: {e}");
            CodebaseAction::None
        })
    }
}

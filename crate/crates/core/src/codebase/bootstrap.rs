use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{Codebase, CodebaseEntry, CodebaseError, EntryStatus};
use crate::analysis::{analyze, error_count};
use crate::dsl::Origin;
use crate::prompting::{
    build_al_prompt, generate_logical_steps, generate_program, ModelClient, Templates,
};
use crate::runtime::{execute, Limits, PerceptionBackend, Scene};

/// An unlabeled query and the scene it is asked about.
#[derive(Debug, Clone)]
pub struct BootstrapTask {
    pub query: String,
    pub scene: Scene,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub fraction: f64,
    pub seed: u64,
    pub limits: Limits,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            fraction: 0.2,
            seed: 0,
            limits: Limits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub query: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// Queries picked by the seeded shuffle, in processing order.
    pub selected: Vec<String>,
    /// Ids of entries added.
    pub inserted: Vec<String>,
    pub skipped: Vec<Skip>,
}

/// `floor(fraction * n)`, computed in decimal so that e.g. 0.7 * 10 is 7.
pub fn selection_size(n: usize, fraction: f64) -> Result<usize, CodebaseError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CodebaseError::Fraction(fraction));
    }
    let f =
        Decimal::from_str(&fraction.to_string()).map_err(|_| CodebaseError::Fraction(fraction))?;
    Ok((Decimal::from(n) * f).floor().to_usize().unwrap_or(0))
}

/// Seed the codebase from a random `fraction` of the queries. Each selected
/// query gets a program generated without examples; it is kept as a draft
/// only if it analyzes without errors and runs without a runtime error.
pub fn bootstrap(
    cb: &mut Codebase,
    tasks: &[BootstrapTask],
    opts: BootstrapOptions,
    client: &dyn ModelClient,
    templates: &Templates,
    backend: &dyn PerceptionBackend,
) -> Result<BootstrapReport, CodebaseError> {
    let n = selection_size(tasks.len(), opts.fraction)?;
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let mut report = BootstrapReport::default();
    for &i in &order[..n] {
        let task = &tasks[i];
        report.selected.push(task.query.clone());
        let skip = |reason: String| Skip {
            query: task.query.clone(),
            reason,
        };
        if cb.find_by_query(&task.query).is_some() {
            report
                .skipped
                .push(skip("query already in codebase".into()));
            continue;
        }
        match attempt(task, opts.limits, client, templates, backend) {
            Ok(entry) => {
                report.inserted.push(entry.id.clone());
                cb.upsert(entry)?;
            }
            Err(reason) => {
                log::info!("bootstrap skipped {:?}: {reason}", task.query);
                report.skipped.push(skip(reason));
            }
        }
    }
    Ok(report)
}

fn attempt(
    task: &BootstrapTask,
    limits: Limits,
    client: &dyn ModelClient,
    templates: &Templates,
    backend: &dyn PerceptionBackend,
) -> Result<CodebaseEntry, String> {
    let steps =
        generate_logical_steps(&task.query, client, templates).map_err(|e| e.to_string())?;
    let al = build_al_prompt(&task.query, &steps, &[], 0, templates).map_err(|e| e.to_string())?;
    let generated = generate_program(&al, client).map_err(|e| e.to_string())?;
    let ast = generated
        .program
        .parse()
        .map_err(|e| format!("program does not parse: {}", e[0]))?;
    let errors = error_count(&analyze(&ast));
    if errors > 0 {
        return Err(format!("{errors} error diagnostic(s)"));
    }
    let exec = execute(&ast, &task.scene, backend, limits);
    if let Some(e) = exec.runtime_error {
        return Err(format!("runtime error at line {}: {}", e.line, e.message));
    }
    let mut program = generated.program;
    program.origin = Origin::Generated;
    CodebaseEntry::new(&task.query, steps, program, EntryStatus::Draft).map_err(|e| e.to_string())
}

//! Task schema: per-task metadata for the label matrix.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// How a label column is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Fed continuously by an automated system; present at every record.
    Automated,
    /// Provided by a human scorer on an intermittent cadence.
    Expert,
    /// Forward finite-difference rate of a source expert task (per day).
    GradientForward,
    /// Backward finite-difference rate of a source expert task (per day).
    GradientBackward,
}

impl TaskKind {
    pub fn is_gradient(self) -> bool {
        matches!(self, TaskKind::GradientForward | TaskKind::GradientBackward)
    }
}

/// Metadata for one label-matrix slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSchema {
    pub name: String,
    pub kind: TaskKind,
    /// Match tolerance ε: two present labels agree when |a − b| ≤ ε.
    pub resolution: f64,
    /// Index of the expert task a gradient column differentiates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_task: Option<usize>,
    /// Whether the slot participates in the n-of-T match rule.
    #[serde(default = "default_true")]
    pub include_in_match: bool,
}

fn default_true() -> bool {
    true
}

impl TaskSchema {
    pub fn new(name: &str, kind: TaskKind, resolution: f64) -> Self {
        TaskSchema {
            name: String::from(name),
            kind,
            resolution,
            source_task: None,
            include_in_match: true,
        }
    }

    pub fn gradient(name: &str, kind: TaskKind, resolution: f64, source: usize) -> Self {
        TaskSchema {
            name: String::from(name),
            kind,
            resolution,
            source_task: Some(source),
            include_in_match: true,
        }
    }
}

/// An ordered task list; slot `t` of every label matrix follows `tasks[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    tasks: Vec<TaskSchema>,
}

impl Schema {
    pub fn new(tasks: Vec<TaskSchema>) -> Result<Self, CoreError> {
        let schema = Schema { tasks };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<(), CoreError> {
        for (t, task) in self.tasks.iter().enumerate() {
            if !(task.resolution >= 0.0) || !task.resolution.is_finite() {
                return Err(CoreError::InvalidConfig(format!(
                    "task {t} ({}) has invalid resolution {}",
                    task.name, task.resolution
                )));
            }
            match (task.kind.is_gradient(), task.source_task) {
                (true, Some(src)) => {
                    let source = self.tasks.get(src).ok_or_else(|| {
                        CoreError::InvalidConfig(format!(
                            "task {t} ({}) references missing source task {src}",
                            task.name
                        ))
                    })?;
                    if source.kind != TaskKind::Expert {
                        return Err(CoreError::InvalidConfig(format!(
                            "task {t} ({}) must reference an expert task, {src} is {:?}",
                            task.name, source.kind
                        )));
                    }
                }
                (true, None) => {
                    return Err(CoreError::InvalidConfig(format!(
                        "gradient task {t} ({}) is missing source_task",
                        task.name
                    )));
                }
                (false, Some(_)) => {
                    return Err(CoreError::InvalidConfig(format!(
                        "non-gradient task {t} ({}) must not set source_task",
                        task.name
                    )));
                }
                (false, None) => {}
            }
        }
        Ok(())
    }

    /// Number of tasks T.
    #[inline]
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    #[inline]
    pub fn task(&self, t: usize) -> &TaskSchema {
        &self.tasks[t]
    }

    pub fn tasks(&self) -> &[TaskSchema] {
        &self.tasks
    }

    pub fn task_indices(&self, kind: TaskKind) -> Vec<usize> {
        self.tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn expert_tasks(&self) -> Vec<usize> {
        self.task_indices(TaskKind::Expert)
    }

    pub fn automated_tasks(&self) -> Vec<usize> {
        self.task_indices(TaskKind::Automated)
    }

    /// Gradient tasks as (gradient index, source expert index, is_forward).
    pub fn gradient_tasks(&self) -> Vec<(usize, usize, bool)> {
        self.tasks
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t.kind {
                TaskKind::GradientForward => Some((i, t.source_task.unwrap(), true)),
                TaskKind::GradientBackward => Some((i, t.source_task.unwrap(), false)),
                _ => None,
            })
            .collect()
    }

    /// Tasks eligible for MSE heads, experts first, then gradients.
    pub fn head_tasks(&self) -> Vec<usize> {
        let mut out = self.expert_tasks();
        out.extend(self.gradient_tasks().into_iter().map(|(i, _, _)| i));
        out
    }

    /// Sets the match-participation flag of gradient columns.
    pub fn set_gradients_in_match(&mut self, include: bool) {
        for task in &mut self.tasks {
            if task.kind.is_gradient() {
                task.include_in_match = include;
            }
        }
    }
}

/// The nine-slot layout used throughout: 3 automated readouts, 2 expert
/// scores, and a forward/backward gradient pair per expert score.
pub fn default_schema9() -> Schema {
    let auto_res = 0.1;
    let expert_res = 0.25;
    let grad_res = expert_res / 21.0;
    Schema::new(alloc::vec![
        TaskSchema::new("auto_0", TaskKind::Automated, auto_res),
        TaskSchema::new("auto_1", TaskKind::Automated, auto_res),
        TaskSchema::new("auto_2", TaskKind::Automated, auto_res),
        TaskSchema::new("score_0", TaskKind::Expert, expert_res),
        TaskSchema::new("score_1", TaskKind::Expert, expert_res),
        TaskSchema::gradient("score_0_fwd", TaskKind::GradientForward, grad_res, 3),
        TaskSchema::gradient("score_0_bwd", TaskKind::GradientBackward, grad_res, 3),
        TaskSchema::gradient("score_1_fwd", TaskKind::GradientForward, grad_res, 4),
        TaskSchema::gradient("score_1_bwd", TaskKind::GradientBackward, grad_res, 4),
    ])
    .expect("default schema is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_shape() {
        let s = default_schema9();
        assert_eq!(s.len(), 9);
        assert_eq!(s.automated_tasks(), vec![0, 1, 2]);
        assert_eq!(s.expert_tasks(), vec![3, 4]);
        assert_eq!(s.gradient_tasks().len(), 4);
        assert_eq!(s.head_tasks(), vec![3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn gradient_must_point_at_expert() {
        let bad = Schema::new(alloc::vec![
            TaskSchema::new("a", TaskKind::Automated, 0.1),
            TaskSchema::gradient("g", TaskKind::GradientForward, 0.1, 0),
        ]);
        assert!(matches!(bad, Err(CoreError::InvalidConfig(_))));
    }

    #[test]
    fn non_gradient_rejects_source() {
        let mut t = TaskSchema::new("a", TaskKind::Expert, 0.1);
        t.source_task = Some(0);
        assert!(Schema::new(alloc::vec![t]).is_err());
    }
}

//! Replayable text serialization of generated tasks (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{QuadraticTask, TaskKind, TaskMeta};
use crate::error::{Error, Result};

pub const TASK_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TaskFile {
    format_version: u32,
    kind: String,
    n: usize,
    d: usize,
    lambda: f64,
    s: f64,
    seed: u64,
    /// Common identity shift of every matrix.
    shift: f64,
    x0: Vec<f64>,
    component: Vec<ComponentRecord>,
}

#[derive(Serialize, Deserialize)]
struct ComponentRecord {
    /// Multiplier of `tridiag(-1, 2, -1) / 4`.
    scale: f64,
    linear: Vec<f64>,
}

pub fn task_to_string(task: &QuadraticTask) -> Result<String> {
    let file = TaskFile {
        format_version: TASK_FORMAT_VERSION,
        kind: task.meta.kind.name().to_string(),
        n: task.meta.n,
        d: task.meta.d,
        lambda: task.meta.lambda,
        s: task.meta.s,
        seed: task.meta.seed,
        shift: task.shift,
        x0: task.x0.clone(),
        component: task
            .scales
            .iter()
            .zip(&task.linear)
            .map(|(&scale, b)| ComponentRecord {
                scale,
                linear: b.clone(),
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))
}

pub fn task_from_str(text: &str) -> Result<QuadraticTask> {
    let file: TaskFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if file.format_version != TASK_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported task format_version {} (expected {TASK_FORMAT_VERSION})",
            file.format_version
        )));
    }
    if file.component.len() != file.n || file.x0.len() != file.d {
        return Err(Error::Config("task file sizes do not match its header".into()));
    }
    if file.component.iter().any(|c| c.linear.len() != file.d) {
        return Err(Error::Config("linear term with wrong dimension".into()));
    }
    let (scales, linear) = file.component.into_iter().map(|c| (c.scale, c.linear)).unzip();
    Ok(QuadraticTask {
        meta: TaskMeta {
            kind: TaskKind::parse(&file.kind)?,
            n: file.n,
            d: file.d,
            lambda: file.lambda,
            s: file.s,
            seed: file.seed,
        },
        scales,
        shift: file.shift,
        linear,
        x0: file.x0,
    })
}

pub fn write_task(task: &QuadraticTask, path: &Path) -> Result<()> {
    std::fs::write(path, task_to_string(task)?)?;
    Ok(())
}

pub fn read_task(path: &Path) -> Result<QuadraticTask> {
    task_from_str(&std::fs::read_to_string(path)?)
}

//! Task files: a demonstration, a test scene and the hidden goal.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{generate_demonstration, Trajectory};
use crate::error::{GemError, Result};
use crate::relations::{goal_satisfied, GoalSpec};
use crate::rng::{substream, TAG_DEMO};
use crate::scene::Scene;

/// Everything needed to generate a task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub name: String,
    pub initial_demo_scene: Scene,
    pub test_scene: Scene,
    pub goal: GoalSpec,
    pub demo_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub initial_demo_scene: Scene,
    pub demonstration: Trajectory,
    pub test_scene: Scene,
    pub goal: GoalSpec,
}

impl Task {
    pub fn n_objects(&self) -> usize {
        self.initial_demo_scene.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GemError::InvalidScene(format!("task {}: {m}", self.name)));
        self.initial_demo_scene.validate()?;
        self.test_scene.validate()?;
        self.demonstration.validate()?;
        for s in &self.demonstration.states {
            s.validate()?;
        }
        self.goal.validate_for(self.n_objects())?;
        if self.demonstration.initial() != &self.initial_demo_scene {
            return bad("demonstration does not start at the initial scene".into());
        }
        if !goal_satisfied(&self.goal, self.demonstration.final_state())? {
            return bad("demonstration does not reach the goal".into());
        }
        if self.test_scene == self.initial_demo_scene {
            return bad("test scene equals the demonstration scene".into());
        }
        if self.test_scene.len() != self.n_objects() {
            return bad("test scene has a different object count".into());
        }
        for (a, b) in self.test_scene.objects.iter().zip(&self.initial_demo_scene.objects) {
            if (a.shape, a.color) != (b.shape, b.color) {
                return bad(format!("object {} differs between scenes", a.id));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let task: Task = serde_json::from_str(&std::fs::read_to_string(resolve_task_path(path))?)?;
        task.validate()?;
        Ok(task)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

impl TaskTemplate {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Accepts `tasks/task1` as shorthand for `tasks/task1.json`.
pub fn resolve_task_path(path: &Path) -> PathBuf {
    if path.is_file() {
        return path.to_path_buf();
    }
    let with_ext = path.with_extension("json");
    if with_ext.is_file() {
        with_ext
    } else {
        path.to_path_buf()
    }
}

/// Plans the demonstration for a template and bundles the task.
pub fn make_task(template: &TaskTemplate) -> Result<Task> {
    let mut rng = substream(template.demo_seed, &[TAG_DEMO]);
    let demonstration = generate_demonstration(&template.goal, &template.initial_demo_scene, &mut rng)?;
    let task = Task {
        name: template.name.clone(),
        initial_demo_scene: template.initial_demo_scene.clone(),
        demonstration,
        test_scene: template.test_scene.clone(),
        goal: template.goal.clone(),
    };
    task.validate()?;
    Ok(task)
}

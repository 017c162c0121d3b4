//! Task dataset generation: five splits with unseen splits drawn from
//! held-out environments.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{goal_set, shortest_hops, Pose, SimConfig, Task};
use crate::training::World;
use crate::{Error, Result};

/// Shortest paths to requested objects must span this many hops.
pub const MIN_TASK_HOPS: usize = 5;
pub const MAX_TASK_HOPS: usize = 15;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TaskDataset {
    pub train: Vec<Task>,
    pub val_seen: Vec<Task>,
    pub val_unseen: Vec<Task>,
    pub test_seen: Vec<Task>,
    pub test_unseen: Vec<Task>,
}

impl TaskDataset {
    pub fn split(&self, name: &str) -> Option<&[Task]> {
        match name {
            "train" => Some(&self.train),
            "val_seen" => Some(&self.val_seen),
            "val_unseen" => Some(&self.val_unseen),
            "test_seen" => Some(&self.test_seen),
            "test_unseen" => Some(&self.test_unseen),
            _ => None,
        }
    }

    pub const SPLITS: [&'static str; 5] =
        ["train", "val_seen", "val_unseen", "test_seen", "test_unseen"];
}

/// Deterministic seen/unseen partition of sorted environment ids: the
/// trailing quarter (at least one when two or more exist) is held out.
pub fn split_env_ids(ids: &[String]) -> (Vec<String>, Vec<String>) {
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    if sorted.len() < 2 {
        return (sorted, Vec::new());
    }
    let unseen = (sorted.len() / 4).max(1);
    let seen = sorted.len() - unseen;
    let tail = sorted.split_off(seen);
    (sorted, tail)
}

const ATTEMPTS_PER_TASK: usize = 2000;

fn sample_tasks(
    worlds: &[&World],
    n: usize,
    budget: usize,
    sim: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Task>> {
    if worlds.is_empty() {
        return Ok(Vec::new());
    }
    // Cache goal sets and hop fields per (world, object type).
    let mut goal_cache: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut tasks = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while tasks.len() < n {
        attempts += 1;
        if attempts > ATTEMPTS_PER_TASK * n.max(1) {
            return Err(Error::GenerationExhausted {
                attempts,
                reason: format!(
                    "could not find {n} tasks with {MIN_TASK_HOPS}..={MAX_TASK_HOPS} hop paths"
                ),
            });
        }
        let wi = rng.gen_range(0..worlds.len());
        let world = worlds[wi];
        let n_types = world
            .env
            .objects
            .iter()
            .map(|&(ty, _)| ty + 1)
            .max()
            .unwrap_or(0);
        if n_types == 0 {
            return Err(Error::contract(format!(
                "environment '{}' has no objects",
                world.env_id
            )));
        }
        let ty = rng.gen_range(0..n_types);
        let start = rng.gen_range(0..world.env.len());
        let heading = rng.gen_range(1..=12u8);
        let goals = goal_cache
            .entry((wi, ty))
            .or_insert_with(|| goal_set(&world.env, ty, sim.eps_success))
            .clone();
        if goals.is_empty() {
            continue;
        }
        let hops = shortest_hops(&world.env, start);
        let min_hops = goals.iter().map(|&g| hops[g]).min().unwrap();
        if !(MIN_TASK_HOPS..=MAX_TASK_HOPS).contains(&min_hops) {
            continue;
        }
        tasks.push(Task {
            env_id: world.env_id.clone(),
            object_type: ty,
            start: Pose::new(start, heading, 0).expect("grid slots"),
            goals,
            budget,
        });
    }
    Ok(tasks)
}

/// Generates all five splits: seen splits sample from `seen` worlds with
/// the training step budget on `train` and the evaluation budget
/// elsewhere; unseen splits sample from the held-out worlds.
pub fn generate_tasks(
    seen: &[&World],
    unseen: &[&World],
    per_split: usize,
    seed: u64,
    sim: &SimConfig,
) -> Result<TaskDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = sample_tasks(seen, per_split, sim.t_train, sim, &mut rng)?;
    let val_seen = sample_tasks(seen, per_split, sim.t_eval, sim, &mut rng)?;
    let val_unseen = sample_tasks(unseen, per_split, sim.t_eval, sim, &mut rng)?;
    let test_seen = sample_tasks(seen, per_split, sim.t_eval, sim, &mut rng)?;
    let test_unseen = sample_tasks(unseen, per_split, sim.t_eval, sim, &mut rng)?;
    Ok(TaskDataset {
        train,
        val_seen,
        val_unseen,
        test_seen,
        test_unseen,
    })
}

pub fn save_tasks(dataset: &TaskDataset, path: &std::path::Path) -> Result<()> {
    let text = serde_json::to_string(dataset).expect("tasks serialize");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_tasks(path: &std::path::Path) -> Result<TaskDataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anna::build_route_system;
    use crate::env::generate_environment;

    fn world(id: &str, seed: u64, sim: &SimConfig) -> World {
        let env = generate_environment(40, 2.6, 4, seed).unwrap();
        let routes = build_route_system(&env, 0, sim).unwrap();
        World {
            env_id: id.to_string(),
            env,
            routes,
        }
    }

    #[test]
    fn tasks_are_feasible_and_hop_bounded() {
        let sim = SimConfig::default();
        let w = world("a", 100, &sim);
        let ds = generate_tasks(&[&w], &[], 12, 9, &sim).unwrap();
        for task in ds.train.iter().chain(&ds.test_seen) {
            // Independent BFS oracle for the hop constraint.
            let hops = shortest_hops(&w.env, task.start.node);
            let min_hops = task.goals.iter().map(|&g| hops[g]).min().unwrap();
            assert!((MIN_TASK_HOPS..=MAX_TASK_HOPS).contains(&min_hops));
            assert!(!task.goals.is_empty());
        }
        assert_eq!(ds.train.len(), 12);
        assert!(ds.val_unseen.is_empty(), "no unseen worlds were given");
    }

    #[test]
    fn generation_is_deterministic() {
        let sim = SimConfig::default();
        let w1 = world("a", 100, &sim);
        let w2 = world("b", 101, &sim);
        let a = generate_tasks(&[&w1], &[&w2], 6, 3, &sim).unwrap();
        let b = generate_tasks(&[&w1], &[&w2], 6, 3, &sim).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn unseen_splits_use_disjoint_environments() {
        let sim = SimConfig::default();
        let w1 = world("a", 100, &sim);
        let w2 = world("b", 101, &sim);
        let ds = generate_tasks(&[&w1], &[&w2], 5, 4, &sim).unwrap();
        for t in ds.val_unseen.iter().chain(&ds.test_unseen) {
            assert_eq!(t.env_id, "b");
        }
        for t in ds.train.iter().chain(&ds.val_seen).chain(&ds.test_seen) {
            assert_eq!(t.env_id, "a");
        }
    }

    #[test]
    fn env_id_split_is_deterministic_with_bounds() {
        let ids: Vec<String> = (0..7).map(|i| format!("env_{i}")).collect();
        let (seen, unseen) = split_env_ids(&ids);
        assert_eq!(seen.len(), 6);
        assert_eq!(unseen.len(), 1);
        assert_eq!(unseen[0], "env_6");
        let single = split_env_ids(&["only".to_string()]);
        assert_eq!(single.1.len(), 0);
    }

    #[test]
    fn dataset_round_trips() {
        let sim = SimConfig::default();
        let w = world("a", 102, &sim);
        let ds = generate_tasks(&[&w], &[], 3, 5, &sim).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.json");
        save_tasks(&ds, &path).unwrap();
        let loaded = load_tasks(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&ds).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::io::{write_bytes, write_ppm};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::metrics::{fold_lower_triangular, render_error_map, ConfusionMatrix, ScoreReport};
use crate::network::TreeSegNet;
use crate::nn::Checkpoint;
use crate::treecut::{graph_from_fold, serialize_tree, tree_cutting, ClassTree};

use super::{evaluate_pass, train_pass, TrainConfig, TrainStats};

const CHECKPOINT_FILE: &str = "checkpoint.tsn";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: usize,
    /// `None` for the plain network of pass 0.
    pub tree: Option<ClassTree>,
    pub confusion: ConfusionMatrix,
    pub report: ScoreReport,
    pub train: TrainStats,
    /// Relative to the run directory.
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: TrainConfig,
    pub passes: Vec<PassRecord>,
    /// The tree rebuilt from the last pass's confusion equals the tree that pass used.
    pub converged: bool,
    /// Tree cut from the last pass's confusion.
    pub next_tree: ClassTree,
}

/// Fold, build the confusion graph, cut.
pub fn tree_from_confusion(m: &ConfusionMatrix) -> Result<ClassTree> {
    tree_cutting(&graph_from_fold(&fold_lower_triangular(m))?)
}

fn pass_dir(run_dir: &Path, pass: usize) -> PathBuf {
    run_dir.join(format!("pass{pass}"))
}

pub fn save_checkpoint(path: &Path, net: &mut TreeSegNet<f32>, config: &TrainConfig, history: &[PassRecord]) -> Result<()> {
    let extra = serde_json::json!({
        "config": serde_json::to_value(config)?,
        "history": serde_json::to_value(history)?,
    });
    net.to_checkpoint(extra)?.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(TreeSegNet<f32>, TrainConfig, Vec<PassRecord>)> {
    let ckpt = Checkpoint::load(path)?;
    let field = |key: &str| {
        ckpt.metadata
            .get(key)
            .cloned()
            .ok_or_else(|| Error::format(path, format!("checkpoint metadata lacks \"{key}\"")))
    };
    let config: TrainConfig = serde_json::from_value(field("config")?)?;
    let history: Vec<PassRecord> = serde_json::from_value(field("history")?)?;
    let net = TreeSegNet::from_checkpoint(&ckpt)?;
    if history.iter().enumerate().any(|(k, r)| r.pass != k) {
        return Err(Error::format(path, "pass indices in the history are not contiguous from 0"));
    }
    Ok((net, config, history))
}

fn write_pass_artifacts(run_dir: &Path, record: &PassRecord, eval_preds: &[crate::raster::LabelMap], val: &[Sample]) -> Result<()> {
    let dir = pass_dir(run_dir, record.pass);
    write_bytes(&dir.join("confusion.txt"), record.confusion.to_text().as_bytes())?;
    let tree = record.tree.as_ref().map_or_else(|| "none".to_string(), serialize_tree);
    write_bytes(&dir.join("tree.txt"), format!("{tree}\n").as_bytes())?;
    write_bytes(&dir.join("scores.txt"), record.report.to_table().as_bytes())?;
    write_bytes(&dir.join("scores.json"), record.report.to_json()?.as_bytes())?;
    for (k, (pred, s)) in eval_preds.iter().zip(val).enumerate() {
        write_ppm(&dir.join(format!("error_map_{k}.ppm")), &render_error_map(&s.labels, pred)?)?;
    }
    Ok(())
}

fn write_transcript(run_dir: &Path, t: &Transcript) -> Result<()> {
    write_bytes(&run_dir.join("transcript.json"), serde_json::to_string_pretty(t)?.as_bytes())
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    train: &'a [Sample],
    val: &'a [Sample],
    run_dir: Option<&'a Path>,
}

impl Run<'_> {
    fn pass(&self, net: &mut TreeSegNet<f32>, history: &mut Vec<PassRecord>) -> Result<()> {
        let pass = history.len();
        log::info!(
            "pass {pass}: tree {}",
            net.class_tree().map_or_else(|| "none".to_string(), serialize_tree)
        );
        let train = train_pass(net, self.train, self.cfg, pass)?;
        let eval = evaluate_pass(net, self.val, self.cfg)?;
        log::info!("pass {pass}: OA {:.4}, mean F1 {:.4}", eval.report.oa, eval.report.mean_f1);
        let checkpoint = self
            .run_dir
            .map(|_| format!("pass{pass}/{CHECKPOINT_FILE}"));
        history.push(PassRecord {
            pass,
            tree: net.class_tree().cloned(),
            confusion: eval.confusion,
            report: eval.report,
            train,
            checkpoint: checkpoint.clone(),
        });
        if let (Some(dir), Some(rel)) = (self.run_dir, checkpoint) {
            write_pass_artifacts(dir, history.last().expect("just pushed"), &eval.predictions, self.val)?;
            save_checkpoint(&dir.join(rel), net, self.cfg, history)?;
        }
        Ok(())
    }

    /// Keeps cutting and training until the tree repeats or the pass budget is spent.
    fn iterate(&self, mut net: TreeSegNet<f32>, mut history: Vec<PassRecord>) -> Result<(Transcript, TreeSegNet<f32>)> {
        if history.is_empty() {
            self.pass(&mut net, &mut history)?;
        }
        let (converged, next_tree) = loop {
            let last = history.last().expect("at least one pass");
            let candidate = tree_from_confusion(&last.confusion)?;
            if last.tree.as_ref() == Some(&candidate) {
                log::info!("tree unchanged after pass {}: converged", last.pass);
                break (true, candidate);
            }
            if history.len() >= self.cfg.max_passes {
                log::info!("pass budget of {} spent without convergence", self.cfg.max_passes);
                break (false, candidate);
            }
            net = net.with_tree(Some(candidate))?;
            self.pass(&mut net, &mut history)?;
        };
        let transcript = Transcript {
            config: self.cfg.clone(),
            passes: history,
            converged,
            next_tree,
        };
        if let Some(dir) = self.run_dir {
            write_transcript(dir, &transcript)?;
        }
        Ok((transcript, net))
    }
}

/// Pass 0 trains the plain network; every later pass rebuilds the tree from the
/// previous validation confusion, carries the segmentation weights over and trains
/// again. With `run_dir`, per-pass artifacts and checkpoints are written there.
pub fn run_structure_iteration(
    cfg: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    run_dir: Option<&Path>,
) -> Result<(Transcript, TreeSegNet<f32>)> {
    cfg.validate()?;
    if let Some(dir) = run_dir {
        write_bytes(&dir.join("config.json"), serde_json::to_string_pretty(cfg)?.as_bytes())?;
    }
    let spec = cfg.network.clone().with_tree(None);
    let net = TreeSegNet::new(&spec, cfg.seed)?;
    Run { cfg, train, val, run_dir }.iterate(net, Vec::new())
}

/// Continues an interrupted run from its latest checkpoint. `cfg` must match the
/// stored configuration except for `max_passes` and `workers`.
pub fn resume_structure_iteration(
    run_dir: &Path,
    cfg: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
) -> Result<(Transcript, TreeSegNet<f32>)> {
    cfg.validate()?;
    let mut latest = None;
    for k in 0.. {
        let path = pass_dir(run_dir, k).join(CHECKPOINT_FILE);
        if !path.is_file() {
            break;
        }
        latest = Some(path);
    }
    let path = latest.ok_or_else(|| Error::format(run_dir, "no pass checkpoint to resume from"))?;
    let (net, stored, history) = load_checkpoint(&path)?;
    let comparable = TrainConfig {
        max_passes: stored.max_passes,
        workers: stored.workers,
        ..cfg.clone()
    };
    if comparable != stored {
        return Err(Error::InvalidArgument(format!(
            "configuration differs from the one stored in {}",
            path.display()
        )));
    }
    log::info!("resuming after pass {}", history.len() - 1);
    Run { cfg, train, val, run_dir: Some(run_dir) }.iterate(net, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::score;
    use crate::network::is_segmentation_param;
    use crate::trainer::tests::{tiny_config, tiny_data};

    #[test]
    fn transcript_invariants() {
        let cfg = tiny_config(7);
        let (train, val) = tiny_data(7);
        let (t, _) = run_structure_iteration(&cfg, &train, &val, None).unwrap();
        assert!(!t.passes.is_empty() && t.passes.len() <= cfg.max_passes);
        assert!(t.passes[0].tree.is_none());
        for (k, p) in t.passes.iter().enumerate() {
            assert_eq!(p.pass, k);
            assert_eq!(p.report, score(&p.confusion).unwrap());
            assert!(p.checkpoint.is_none());
            if k > 0 {
                assert_eq!(p.tree.as_ref(), Some(&tree_from_confusion(&t.passes[k - 1].confusion).unwrap()));
            }
        }
        let last = t.passes.last().unwrap();
        assert_eq!(t.next_tree, tree_from_confusion(&last.confusion).unwrap());
        assert_eq!(t.converged, last.tree.as_ref() == Some(&t.next_tree));
        if !t.converged {
            assert_eq!(t.passes.len(), cfg.max_passes);
        }
    }

    #[test]
    fn single_pass_budget_stops_unconverged() {
        let cfg = TrainConfig { max_passes: 1, ..tiny_config(8) };
        let (train, val) = tiny_data(8);
        let (t, _) = run_structure_iteration(&cfg, &train, &val, None).unwrap();
        assert_eq!(t.passes.len(), 1);
        assert!(!t.converged);
    }

    #[test]
    fn repeated_tree_halts_with_converged_flag() {
        let cfg = tiny_config(9);
        let (train, val) = tiny_data(9);
        let (t, net) = run_structure_iteration(&TrainConfig { max_passes: 2, ..cfg.clone() }, &train, &val, None).unwrap();
        // Pretend the last pass already used the tree its confusion produces.
        let mut history = t.passes.clone();
        history.last_mut().unwrap().tree = Some(t.next_tree.clone());
        let run = Run { cfg: &cfg, train: &train, val: &val, run_dir: None };
        let (again, _) = run.iterate(net, history.clone()).unwrap();
        assert!(again.converged);
        assert_eq!(again.passes, history);
    }

    #[test]
    fn segmentation_weights_carry_over_bit_exact() {
        let cfg = tiny_config(10);
        let (train, _) = tiny_data(10);
        let mut net = TreeSegNet::new(&cfg.network, 10).unwrap();
        train_pass(&mut net, &train, &cfg, 0).unwrap();
        let before = net.state();
        let mut next = net.with_tree(Some(ClassTree::chain(6))).unwrap();
        let after = next.state();
        let seg = |s: &[crate::nn::NamedTensor]| -> Vec<crate::nn::NamedTensor> {
            s.iter().filter(|t| is_segmentation_param(&t.name)).cloned().collect()
        };
        assert_eq!(seg(&before), seg(&after));
        let fresh = TreeSegNet::<f32>::new(&cfg.network.clone().with_tree(Some(ClassTree::chain(6))), 10)
            .unwrap()
            .state();
        for t in after.iter().filter(|t| t.name.starts_with("tree.")) {
            assert_eq!(Some(t), fresh.iter().find(|f| f.name == t.name));
        }
    }

    #[test]
    fn checkpoint_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { max_passes: 2, ..tiny_config(11) };
        let (train, val) = tiny_data(11);
        let (t, mut net) = run_structure_iteration(&cfg, &train, &val, Some(dir.path())).unwrap();
        let last = t.passes.last().unwrap();
        let path = dir.path().join(last.checkpoint.as_ref().unwrap());
        let (loaded, stored_cfg, history) = load_checkpoint(&path).unwrap();
        assert_eq!(stored_cfg, cfg);
        assert_eq!(history, t.passes);
        let mut loaded = loaded;
        assert_eq!(loaded.state(), net.state());
        let a = evaluate_pass(&net, &val, &cfg).unwrap();
        let b = evaluate_pass(&loaded, &val, &cfg).unwrap();
        assert_eq!(a.confusion, b.confusion);
        assert_eq!(a.confusion, last.confusion);

        for name in ["confusion.txt", "tree.txt", "scores.txt", "scores.json", "error_map_0.ppm", "error_map_1.ppm"] {
            assert!(dir.path().join(format!("pass{}", last.pass)).join(name).is_file(), "{name}");
        }
        assert!(dir.path().join("transcript.json").is_file());
        assert!(dir.path().join("config.json").is_file());

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9;
        let bad = dir.path().join("bad.tsn");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&bad), Err(Error::Version { found: 9, expected: 1 })));
    }

    #[test]
    fn resumed_run_matches_uninterrupted_run() {
        let (train, val) = tiny_data(12);
        let cfg = tiny_config(12);
        let straight = tempfile::tempdir().unwrap();
        let (full, mut full_net) = run_structure_iteration(&cfg, &train, &val, Some(straight.path())).unwrap();

        let split = tempfile::tempdir().unwrap();
        let (head, _) =
            run_structure_iteration(&TrainConfig { max_passes: 1, ..cfg.clone() }, &train, &val, Some(split.path()))
                .unwrap();
        assert_eq!(head.passes.len(), 1);
        let (resumed, mut resumed_net) = resume_structure_iteration(split.path(), &cfg, &train, &val).unwrap();
        assert_eq!(resumed.passes, full.passes);
        assert_eq!(resumed.converged, full.converged);
        assert_eq!(resumed_net.state(), full_net.state());

        let other = TrainConfig { epochs: 3, ..cfg };
        assert!(resume_structure_iteration(split.path(), &other, &train, &val).is_err());
        let empty = tempfile::tempdir().unwrap();
        assert!(resume_structure_iteration(empty.path(), &tiny_config(12), &train, &val).is_err());
    }
}

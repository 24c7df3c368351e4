use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cell::AgingParameterSet;
use crate::datagen::{
    generate_corpus, hex, perturb_parameters, read_dataset, stream_rng, synth_fade_trajectory, write_dataset,
    CorpusConfig, Dataset, FadeKind, ParamSet, PerturbationConfig, SegmentRecord, SourceId,
};
use crate::error::{Error, Result};
use crate::identify::AgingTrajectory;
use crate::net::{predict, train, transfer_snapshots, EpochStats, Network, TrainSet};

use super::config::{PipelineConfig, Resolved, Scenario};
use super::oracle::{oracle_cells, simulate_oracle, OracleData};
use super::report::{build_report, emit_report, ExperimentReport, Format, StageRecord};

const DONE: &str = "done";
const LOCK: &str = "pipeline.lock";

/// Named per-stage seed streams under the master seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum SeedTag {
    Trajectories = 1,
    Perturb = 2,
    Corpus = 4,
    Training = 5,
    Oracle = 6,
    Selection = 7,
    Transfer = 8,
}

fn sub_seed(master: u64, tag: SeedTag) -> u64 {
    stream_rng(master, tag as u64).next_u64()
}

/// One pipeline instance per output directory. The lock file holds the
/// owner's pid; a lock left by a process that no longer exists is taken over.
/// Where liveness can't be checked (no /proc, empty file) it is respected.
struct Lock(PathBuf);

impl Lock {
    fn acquire(out: &Path) -> Result<Self> {
        let path = out.join(LOCK);
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    use std::io::Write;
                    write!(f, "{}", std::process::id()).map_err(|e| Error::io(&path, e))?;
                    return Ok(Lock(path));
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if !Self::stale(&path) {
                        break;
                    }
                    log::warn!("removing stale lock {}", path.display());
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(Error::io(path, e)),
            }
        }
        Err(Error::Validation(format!(
            "{} exists; another pipeline is using this output directory",
            path.display()
        )))
    }

    fn stale(path: &Path) -> bool {
        let pid = fs::read_to_string(path).ok().and_then(|t| t.trim().parse::<u32>().ok());
        match pid {
            Some(pid) => Path::new("/proc/self").exists() && !Path::new(&format!("/proc/{pid}")).exists(),
            None => false,
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format("json artifact", format!("{}: {e}", path.display())))
}

fn stage_key(name: &str, parents: &[&StageRecord], payload: &impl Serialize) -> String {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    for p in parents {
        h.update(p.key.as_bytes());
    }
    h.update(serde_json::to_vec(payload).expect("payload serializes"));
    hex(&h.finalize())
}

struct Ctx<'a> {
    out: &'a Path,
    cached_only: bool,
    stages: Vec<StageRecord>,
    dirs: Vec<PathBuf>,
}

impl Ctx<'_> {
    /// Loads the stage from `out/cache/<name>-<key>/` when complete,
    /// otherwise computes it there and marks it done.
    fn run<T>(
        &mut self,
        name: &'static str,
        key: String,
        load: impl FnOnce(&Path) -> Result<T>,
        compute: impl FnOnce(&Path) -> Result<T>,
    ) -> Result<(T, StageRecord)> {
        let rec = StageRecord {
            name: name.into(),
            key: key.clone(),
        };
        let dir = self.out.join("cache").join(format!("{name}-{}", &key[..16]));
        let wrap = |e: Error| Error::Stage {
            stage: name,
            source: Box::new(e),
        };
        let value = if dir.join(DONE).is_file() {
            log::info!("stage {name}: cached at {}", dir.display());
            load(&dir).map_err(wrap)?
        } else if self.cached_only {
            return Err(wrap(Error::Validation(format!(
                "no cached `{name}` artifacts under {}; run the pipeline first",
                self.out.display()
            ))));
        } else {
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| wrap(Error::io(&dir, e)))?;
            }
            fs::create_dir_all(&dir).map_err(|e| wrap(Error::io(&dir, e)))?;
            let t = Instant::now();
            let v = compute(&dir).map_err(wrap)?;
            fs::write(dir.join(DONE), &key).map_err(|e| wrap(Error::io(dir.join(DONE), e)))?;
            log::info!("stage {name}: computed in {:.1} s", t.elapsed().as_secs_f64());
            v
        };
        self.stages.push(rec.clone());
        self.dirs.push(dir);
        Ok((value, rec))
    }
}

/// Artifacts of steps 1 to 6, shared by every transfer scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: PipelineConfig,
    pub resolved: Resolved,
    pub corpus: Dataset,
    pub net: Network<f32>,
    pub pretrain_history: Vec<EpochStats>,
    pub targets: OracleData,
    pub stages: Vec<StageRecord>,
}

#[derive(Serialize, Deserialize)]
struct SetEntry {
    source: SourceId,
    aging: AgingParameterSet,
}

fn params_fingerprint(r: &Resolved) -> String {
    let p = &r.params;
    let text = format!("{}{}{}", p.to_toml(None, None), p.ocp.n.to_csv(), p.ocp.p.to_csv());
    hex(&Sha256::digest(text.as_bytes()))
}

/// Pipeline steps in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Trajectories,
    Perturb,
    Protocol,
    Corpus,
    Pretrain,
    Targets,
}

/// A stage that ran or was found in the cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub record: StageRecord,
    pub dir: PathBuf,
}

enum Reached {
    Partial,
    Full(Box<Prepared>),
}

fn prepare_in(config: &PipelineConfig, resolved: Resolved, out: &Path, cached_only: bool) -> Result<Prepared> {
    let mut ctx = Ctx {
        out,
        cached_only,
        stages: Vec::new(),
        dirs: Vec::new(),
    };
    match stages_in(config, resolved, &mut ctx, Step::Targets)? {
        Reached::Full(p) => Ok(*p),
        Reached::Partial => unreachable!("ran through the last step"),
    }
}

fn stages_in(config: &PipelineConfig, resolved: Resolved, ctx: &mut Ctx, through: Step) -> Result<Reached> {
    let seed = config.seed;
    let scale = &config.scale;
    let base = Arc::new(resolved.params.clone());
    let fp = params_fingerprint(&resolved);

    // 1. synthetic aging trajectories
    let traj_seed = sub_seed(seed, SeedTag::Trajectories);
    let key = stage_key("trajectories", &[], &(&fp, scale.trajectories, scale.cycles, traj_seed, &config.sim));
    let (trajectories, s1) = ctx.run(
        "trajectories",
        key,
        |d| read_json::<Vec<AgingTrajectory>>(&d.join("trajectories.json")),
        |d| {
            const KINDS: [FadeKind; 3] = [FadeKind::Mild, FadeKind::Moderate, FadeKind::Severe];
            let t: Vec<AgingTrajectory> = (0..scale.trajectories)
                .map(|i| synth_fade_trajectory(KINDS[i % 3], scale.cycles, &base, stream_rng(traj_seed, i as u64).next_u64(), config.sim))
                .collect::<Result<_>>()?;
            write_json(&d.join("trajectories.json"), &t)?;
            Ok(t)
        },
    )?;

    if through == Step::Trajectories {
        return Ok(Reached::Partial);
    }

    // 2. parameter-space expansion
    let pc = PerturbationConfig {
        draws_per_mean: scale.draws_per_mean,
        seed: sub_seed(seed, SeedTag::Perturb),
        ..PerturbationConfig::default()
    };
    let key = stage_key("perturb", &[&s1], &(pc.draws_per_mean, pc.seed));
    let (sets, s2) = ctx.run(
        "perturb",
        key,
        |d| read_json::<Vec<SetEntry>>(&d.join("sets.json")),
        |d| {
            let mut sets = Vec::new();
            for (ti, t) in trajectories.iter().enumerate() {
                for (ei, e) in t.entries.iter().enumerate() {
                    let cfg = PerturbationConfig {
                        seed: stream_rng(pc.seed, (ti * 100_000 + ei) as u64).next_u64(),
                        ..pc.clone()
                    };
                    for aging in perturb_parameters(&e.aging, &cfg)? {
                        let source = SourceId {
                            cell: ti as u32,
                            cycle: e.cycle,
                            set: sets.len() as u32,
                        };
                        sets.push(SetEntry { source, aging });
                    }
                }
            }
            write_json(&d.join("sets.json"), &sets)?;
            Ok(sets)
        },
    )?;

    if through == Step::Perturb {
        return Ok(Reached::Partial);
    }

    // 3. protocol injection
    let key = stage_key("protocol", &[], &resolved.protocol);
    let (protocol, s3) = ctx.run(
        "protocol",
        key,
        |d| read_json(&d.join("protocol.json")),
        |d| {
            write_json(&d.join("protocol.json"), &resolved.protocol)?;
            Ok(resolved.protocol.clone())
        },
    )?;

    if through == Step::Protocol {
        return Ok(Reached::Partial);
    }

    // 4. corpus generation
    let cc = CorpusConfig {
        master_seed: sub_seed(seed, SeedTag::Corpus),
        stride_q: scale.stride_q,
        max_segments_per_set: Some(scale.corpus_cap.div_ceil(sets.len().max(1))),
        norm: config.norm,
        ..CorpusConfig::default()
    };
    let key = stage_key("corpus", &[&s2, &s3], &(&cc, scale.corpus_cap, &config.sim));
    let (corpus, s4) = ctx.run(
        "corpus",
        key,
        |d| read_dataset(&d.join("corpus.bin")),
        |d| {
            let ps: Vec<ParamSet> = sets
                .iter()
                .map(|s| ParamSet {
                    source: s.source,
                    base: base.clone(),
                    aging: s.aging,
                })
                .collect();
            let c = generate_corpus(&ps, &protocol, config.sim, &cc)?;
            let mut ds = c.dataset;
            if ds.len() > scale.corpus_cap {
                let mut rng = stream_rng(cc.master_seed, u64::MAX);
                let mut keep = index::sample(&mut rng, ds.len(), scale.corpus_cap).into_vec();
                keep.sort_unstable();
                ds.records = keep.into_iter().map(|i| ds.records[i]).collect();
            }
            if ds.is_empty() {
                return Err(Error::Validation("corpus is empty".into()));
            }
            write_dataset(&ds, &d.join("corpus.bin"))?;
            write_json(
                &d.join("corpus.json"),
                &serde_json::json!({
                    "sets": ps.len(), "simulated": c.simulated, "skipped": c.skipped,
                    "segments": ds.len(), "digest": ds.digest(),
                }),
            )?;
            Ok(ds)
        },
    )?;

    if through == Step::Corpus {
        return Ok(Reached::Partial);
    }

    // 5. pre-training
    let mut tc = config.training.clone();
    tc.seed = sub_seed(seed, SeedTag::Training);
    let key = stage_key("pretrain", &[&s4], &tc);
    let ((net, pretrain_history), _) = ctx.run(
        "pretrain",
        key,
        |d| Ok((Network::<f32>::load(&d.join("weights.bin"))?, read_json(&d.join("history.json"))?)),
        |d| {
            let data = TrainSet::<f32>::from_records(&corpus.records, config.norm.nominal_ah);
            let mut net = Network::<f32>::new(Default::default(), tc.seed)?;
            let h = train(&mut net, &data, &tc, |s| {
                log::info!("pretrain epoch {} rmse {:.3}%", s.epoch, s.rmse_pct)
            })?;
            net.save(&d.join("weights.bin"))?;
            write_json(&d.join("history.json"), &h)?;
            Ok((net, h))
        },
    )?;

    if through == Step::Pretrain {
        return Ok(Reached::Partial);
    }

    // 6. target cells
    let mut oc = config.oracle;
    oc.seed = sub_seed(seed, SeedTag::Oracle);
    let key = stage_key("targets", &[&s3], &(&fp, &oc, scale.target_cells, &config.norm));
    let (targets, _) = ctx.run(
        "targets",
        key,
        |d| {
            Ok(OracleData {
                records: read_dataset(&d.join("targets.bin"))?.records,
                trajectories: read_json(&d.join("trajectories.json"))?,
            })
        },
        |d| {
            let cells = oracle_cells(&resolved.params, scale.target_cells);
            let o = simulate_oracle(&cells, &protocol, &oc, &config.norm)?;
            let ds = Dataset {
                norm: config.norm,
                records: o.records.clone(),
            };
            write_dataset(&ds, &d.join("targets.bin"))?;
            write_json(&d.join("trajectories.json"), &o.trajectories)?;
            Ok(o)
        },
    )?;

    Ok(Reached::Full(Box::new(Prepared {
        config: config.clone(),
        resolved,
        corpus,
        net,
        pretrain_history,
        targets,
        stages: ctx.stages.clone(),
    })))
}

/// Runs (or finds cached) every step up to and including `through`.
pub fn run_stages(config: &PipelineConfig, through: Step) -> Result<Vec<StageOutput>> {
    let (resolved, _lock) = open_out(config)?;
    let mut ctx = Ctx {
        out: &config.paths.out,
        cached_only: false,
        stages: Vec::new(),
        dirs: Vec::new(),
    };
    stages_in(config, resolved, &mut ctx, through)?;
    Ok(ctx
        .stages
        .into_iter()
        .zip(ctx.dirs)
        .map(|(record, dir)| StageOutput { record, dir })
        .collect())
}

fn open_out(config: &PipelineConfig) -> Result<(Resolved, Lock)> {
    let resolved = config.validate()?;
    let out = &config.paths.out;
    fs::create_dir_all(out).map_err(|e| Error::Validation(format!("output dir {}: {e}", out.display())))?;
    Ok((resolved, Lock::acquire(out)?))
}

/// Steps 1 to 6, computing whatever the cache lacks.
pub fn prepare(config: &PipelineConfig) -> Result<Prepared> {
    let (resolved, _lock) = open_out(config)?;
    prepare_in(config, resolved, &config.paths.out, false)
}

/// Steps 1 to 6 from the cache only.
pub fn load_prepared(config: &PipelineConfig) -> Result<Prepared> {
    let (resolved, _lock) = open_out(config)?;
    prepare_in(config, resolved, &config.paths.out, true)
}

/// Indices of the records used as real transfer data.
pub fn select_real(records: &[SegmentRecord], scenario: &Scenario, seed: u64) -> Result<Vec<usize>> {
    let mut by_cell: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if scenario.early_life_cycles.is_none_or(|c| r.source.cycle < c) {
            by_cell.entry(r.source.cell).or_default().push(i);
        }
    }
    let sources: Vec<u32> = match &scenario.source_cells {
        Some(s) if s.is_empty() => return Err(Error::Validation("source_cells is empty".into())),
        Some(s) => s.clone(),
        None => by_cell.keys().copied().collect(),
    };
    if sources.is_empty() {
        return Err(Error::Validation("no target records to draw from".into()));
    }
    let n = sources.len();
    let mut out = Vec::new();
    for (k, cell) in sources.iter().enumerate() {
        let quota = scenario.segments / n + usize::from(k < scenario.segments % n);
        let pool = by_cell.get(cell).map_or(&[][..], |v| v.as_slice());
        if pool.len() < quota {
            return Err(Error::Validation(format!(
                "cell {cell} offers {} eligible segments, scenario `{}` needs {quota}",
                pool.len(),
                scenario.id
            )));
        }
        let mut rng = stream_rng(seed, *cell as u64);
        out.extend(index::sample(&mut rng, pool.len(), quota).into_iter().map(|j| pool[j]));
    }
    out.sort_unstable();
    Ok(out)
}

/// Step 7: fuse the scenario's real segments, fine-tune, evaluate on every
/// target record not used for transfer.
pub fn run_scenario(prep: &Prepared, scenario: &Scenario) -> Result<ExperimentReport> {
    let epochs = scenario.epochs.unwrap_or(prep.config.transfer.training.max_epochs);
    let mut v = run_epoch_points(prep, scenario, &[epochs])?;
    Ok(v.remove(0))
}

/// [`run_scenario`] at several transfer lengths from one fine-tuning run.
/// Report ids become `epochs-<n>` when more than one point is asked, as in
/// [`Sweep::scenarios`].
fn run_epoch_points(prep: &Prepared, scenario: &Scenario, epochs: &[usize]) -> Result<Vec<ExperimentReport>> {
    let config = &prep.config;
    let records = &prep.targets.records;
    let picked = select_real(records, scenario, sub_seed(config.seed, SeedTag::Selection))?;
    let real: Vec<SegmentRecord> = picked.iter().map(|&i| records[i]).collect();
    let mut used = vec![false; records.len()];
    for &i in &picked {
        used[i] = true;
    }
    let eval: Vec<SegmentRecord> = records.iter().zip(&used).filter(|(_, u)| !**u).map(|(r, _)| *r).collect();
    if eval.is_empty() {
        return Err(Error::Validation("no target records left for evaluation".into()));
    }
    let mut tc = config.transfer.clone();
    tc.training.seed = sub_seed(config.seed, SeedTag::Transfer);
    let nominal = config.norm.nominal_ah;
    let t = Instant::now();
    let snaps = transfer_snapshots(&prep.net, &real, &prep.corpus.records, &tc, epochs).map_err(|e| Error::Stage {
        stage: "transfer",
        source: Box::new(e),
    })?;
    log::info!("scenario {}: transfer in {:.1} s", scenario.id, t.elapsed().as_secs_f64());
    let data = TrainSet::<f32>::from_records(&eval, nominal);
    let before = predict(&prep.net, &data)?;
    let mut out = Vec::new();
    for (&e, (tuned, history)) in epochs.iter().zip(snaps) {
        let mut sc = scenario.clone();
        sc.epochs = Some(e);
        if epochs.len() > 1 {
            sc.id = format!("epochs-{e}");
        }
        let after = predict(&tuned, &data)?;
        let mut report = build_report(&sc, &eval, &before, &after, nominal, history);
        report.provenance.master_seed = config.seed;
        report.provenance.config_digest = config.digest();
        report.provenance.stages = prep.stages.clone();
        report.provenance.real_segments = real.iter().map(|r| r.source).collect();
        out.push(report);
    }
    Ok(out)
}

fn persist(config: &PipelineConfig, report: &ExperimentReport) -> Result<PathBuf> {
    let dir = config.paths.out.join("reports").join(&report.scenario.id);
    emit_report(report, &dir, &[Format::Json, Format::Csv, Format::Svg])?;
    Ok(dir)
}

/// Runs all seven steps for the config's scenario and writes its report
/// under `out/reports/<scenario>/`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<ExperimentReport> {
    let (resolved, _lock) = open_out(config)?;
    let prep = prepare_in(config, resolved, &config.paths.out, false)?;
    let report = run_scenario(&prep, &config.scenario)?;
    persist(config, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Segments(Vec<usize>),
    TransferEpochs(Vec<usize>),
    /// Leave one target cell out of the transfer data, for each cell.
    SourceCells,
    /// 15 segments from the first 10 cycles.
    EarlyLife,
}

impl Sweep {
    pub fn segments_default() -> Self {
        Sweep::Segments(vec![15, 30, 45, 60, 75, 90])
    }

    pub fn epochs_default() -> Self {
        Sweep::TransferEpochs((5..=55).step_by(10).collect())
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "segments" => Ok(Self::segments_default()),
            "transfer-epochs" | "epochs" => Ok(Self::epochs_default()),
            "source-cells" => Ok(Sweep::SourceCells),
            "early-life" => Ok(Sweep::EarlyLife),
            _ => Err(Error::Validation(format!(
                "unknown sweep `{name}` (segments, transfer-epochs, source-cells, early-life)"
            ))),
        }
    }

    pub fn scenarios(&self, base: &Scenario, cells: &[u32]) -> Vec<Scenario> {
        match self {
            Sweep::Segments(v) => v
                .iter()
                .map(|&n| Scenario {
                    id: format!("segments-{n}"),
                    segments: n,
                    ..base.clone()
                })
                .collect(),
            Sweep::TransferEpochs(v) => v
                .iter()
                .map(|&e| Scenario {
                    id: format!("epochs-{e}"),
                    epochs: Some(e),
                    ..base.clone()
                })
                .collect(),
            Sweep::SourceCells => cells
                .iter()
                .map(|&c| Scenario {
                    id: format!("without-cell-{c}"),
                    source_cells: Some(cells.iter().copied().filter(|&o| o != c).collect()),
                    ..base.clone()
                })
                .collect(),
            Sweep::EarlyLife => vec![Scenario {
                id: "early-life".into(),
                segments: 15,
                early_life_cycles: Some(10),
                ..base.clone()
            }],
        }
    }
}

/// One transfer run per sweep point on shared, already cached pre-training.
pub fn run_experiment_sweep(config: &PipelineConfig, sweep: &Sweep) -> Result<Vec<ExperimentReport>> {
    let (resolved, _lock) = open_out(config)?;
    let prep = prepare_in(config, resolved, &config.paths.out, true)?;
    let mut cells: Vec<u32> = prep.targets.records.iter().map(|r| r.source.cell).collect();
    cells.dedup();
    cells.sort_unstable();
    cells.dedup();
    let out = match sweep {
        Sweep::TransferEpochs(v) if v.len() > 1 => run_epoch_points(&prep, &config.scenario, v)?,
        _ => sweep
            .scenarios(&config.scenario, &cells)
            .iter()
            .map(|sc| run_scenario(&prep, sc))
            .collect::<Result<_>>()?,
    };
    for r in &out {
        persist(config, r)?;
    }
    Ok(out)
}

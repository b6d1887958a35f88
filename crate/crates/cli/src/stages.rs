// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::config::{require_dir, RunConfig};
use crate::Invalid;
use affectgroups::digest::{file_sha256, files_sha256};
use affectgroups::evaluation::{
    evaluate, make_folds, sample_size_analysis, write_plotdata, write_report, write_sample_sizes, write_summary,
    EvalReport,
};
use affectgroups::features::{
    cohort_features, cohort_profiles, read_features, read_profiles, write_features, write_profiles,
};
use affectgroups::ingest::{load_cohort, Channel, IngestError, RawCohort};
use affectgroups::mobility::{default_tag_map, process_cohort, read_timelines, write_stays, write_timelines, TagMap};
use affectgroups::profiling::{read_groupings, strategy_groups, write_groupings, Grouping, ProfilingInput};
use affectgroups::synthgen::{bundle_files, generate, write_bundle};
use anyhow::{Context, Result};
use serde_json::json;
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Mobility,
    Features,
    Profile,
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Mobility => "mobility",
            Stage::Features => "features",
            Stage::Profile => "profile",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Synth => &[],
            Stage::Ingest => &["ingest.json"],
            Stage::Mobility => &["timelines.csv", "stays.csv"],
            Stage::Features => &["features.csv", "profiles.csv"],
            Stage::Profile => &["groups.csv"],
            Stage::Evaluate => &["eval.json", "summary.csv", "report.csv"],
            Stage::Report => &["plotdata.csv", "sample_size.csv"],
        }
    }
}

struct Done {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    detail: String,
}

pub struct Runner {
    pub cfg: RunConfig,
    pub json_logs: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> anyhow::Error {
    Invalid(format!("{}: {e}", path.display())).into()
}

impl Runner {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    /// Run `stage`, record it in the manifest and log one event.
    pub fn run(&self, stage: Stage) -> Result<()> {
        let t = Instant::now();
        if stage != Stage::Synth {
            require_dir("data_dir", self.cfg.data_dir())?;
        }
        fs::create_dir_all(&self.cfg.out_dir)
            .with_context(|| format!("creating out_dir {}", self.cfg.out_dir.display()))?;
        let done = match stage {
            Stage::Synth => self.synth()?,
            Stage::Ingest => self.ingest()?,
            Stage::Mobility => self.mobility()?,
            Stage::Features => self.features()?,
            Stage::Profile => self.profile()?,
            Stage::Evaluate => self.evaluate()?,
            Stage::Report => self.report()?,
        };
        let outputs = self.record(stage, &done)?;
        self.log(stage, &done.detail, &outputs, t.elapsed().as_millis());
        Ok(())
    }

    /// Run `stage` only if one of its outputs is missing.
    fn ensure(&self, stage: Stage) -> Result<()> {
        if stage.outputs().iter().any(|f| !self.out(f).is_file()) {
            self.run(stage)?;
        }
        Ok(())
    }

    fn record(&self, stage: Stage, done: &Done) -> Result<BTreeMap<String, String>> {
        let digests = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths
                .iter()
                .map(|p| {
                    let name = p
                        .file_name()
                        .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
                    let h = file_sha256(p).with_context(|| format!("hashing {}", p.display()))?;
                    Ok((name, h))
                })
                .collect()
        };
        let inputs = digests(&done.inputs)?;
        let outputs = digests(&done.outputs)?;
        let inputs_digest =
            files_sha256(&done.inputs).map_err(|(p, e)| anyhow::anyhow!("hashing {}: {e}", p.display()))?;
        let line = json!({
            "stage": stage.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.cfg.seed,
            "config_digest": self.cfg.digest(),
            "inputs_digest": inputs_digest,
            "inputs": inputs,
            "outputs": outputs,
        });
        let path = self.out(MANIFEST);
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        writeln!(f, "{line}").with_context(|| format!("writing {}", path.display()))?;
        Ok(outputs)
    }

    fn log(&self, stage: Stage, detail: &str, outputs: &BTreeMap<String, String>, ms: u128) {
        if self.json_logs {
            let event = json!({
                "event": "stage",
                "stage": stage.name(),
                "status": "ok",
                "elapsed_ms": ms,
                "detail": detail,
                "outputs": outputs.keys().collect::<Vec<_>>(),
            });
            eprintln!("{event}");
        } else {
            eprintln!("{}: {detail} ({:.1} s)", stage.name(), ms as f64 / 1000.0);
        }
    }

    fn raw_inputs(&self) -> Vec<PathBuf> {
        Channel::ALL
            .iter()
            .map(|c| self.cfg.data_dir().join(c.file_name()))
            .filter(|p| p.is_file())
            .collect()
    }

    fn cohort(&self) -> Result<RawCohort> {
        let dir = self.cfg.data_dir();
        match load_cohort(dir, self.cfg.utc_offset_s) {
            Ok((c, _)) => Ok(c),
            Err(e @ IngestError::Io { .. }) => Err(anyhow::Error::new(e).context(format!("loading {}", dir.display()))),
            Err(e) => Err(invalid(dir, e)),
        }
    }

    fn tag_map(&self) -> Result<TagMap> {
        let Some(path) = &self.cfg.tag_map else {
            return Ok(default_tag_map());
        };
        let text = fs::read_to_string(path).map_err(|e| invalid(path, e))?;
        let (map, _) = TagMap::parse(&text).map_err(|e| invalid(path, e))?;
        map.validate().map_err(|e| invalid(path, e))?;
        Ok(map)
    }

    fn synth(&self) -> Result<Done> {
        let spec = self.cfg.cohort_spec();
        let bundle = generate(&spec).map_err(|e| Invalid(format!("synth: {e}")))?;
        let digest = write_bundle(&bundle, &self.cfg.out_dir)?;
        Ok(Done {
            inputs: Vec::new(),
            outputs: bundle_files().iter().map(|f| self.cfg.out_dir.join(f)).collect(),
            detail: format!(
                "{} participants, {} EMA, bundle {}",
                bundle.cohort.len(),
                bundle.cohort.ema_count(),
                &digest[..12]
            ),
        })
    }

    fn ingest(&self) -> Result<Done> {
        let dir = self.cfg.data_dir();
        let (cohort, reports) = match load_cohort(dir, self.cfg.utc_offset_s) {
            Ok(v) => v,
            Err(e @ IngestError::Io { .. }) => {
                return Err(anyhow::Error::new(e).context(format!("loading {}", dir.display())))
            }
            Err(e) => return Err(invalid(dir, e)),
        };
        let path = self.out("ingest.json");
        let summary = json!({
            "participants": cohort.len(),
            "ema": cohort.ema_count(),
            "sias": cohort.sias.len(),
            "poi": cohort.poi.len(),
            "channels": reports,
        });
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &summary)?;
        writeln!(w)?;
        w.flush()?;
        Ok(Done {
            inputs: self.raw_inputs(),
            outputs: vec![path],
            detail: format!("{} participants, {} EMA", cohort.len(), cohort.ema_count()),
        })
    }

    fn mobility(&self) -> Result<Done> {
        let cohort = self.cohort()?;
        let tags = self.tag_map()?;
        let mob = process_cohort(&cohort, &tags, &self.cfg.mobility);
        let (tl_path, stay_path) = (self.out("timelines.csv"), self.out("stays.csv"));
        let mut w = create(&tl_path)?;
        write_timelines(&mut w, mob.values().map(|m| &m.timeline))?;
        w.flush()?;
        let mut w = create(&stay_path)?;
        write_stays(&mut w, &mob)?;
        w.flush()?;
        let stays: usize = mob.values().map(|m| m.stays.len()).sum();
        let homes = mob.values().filter(|m| m.home.is_some()).count();
        let mut inputs = self.raw_inputs();
        inputs.extend(self.cfg.tag_map.clone());
        Ok(Done {
            inputs,
            outputs: vec![tl_path, stay_path],
            detail: format!("{stays} stays, home found for {homes}/{}", mob.len()),
        })
    }

    fn features(&self) -> Result<Done> {
        self.ensure(Stage::Mobility)?;
        let cohort = self.cohort()?;
        let tl_path = self.out("timelines.csv");
        let timelines = read_timelines(open(&tl_path)?).map_err(|e| invalid(&tl_path, e))?;
        let rows = cohort_features(&cohort, &timelines, &self.cfg.features);
        let profiles = cohort_profiles(&cohort, &timelines);
        let (f_path, p_path) = (self.out("features.csv"), self.out("profiles.csv"));
        let mut w = create(&f_path)?;
        write_features(&mut w, &rows)?;
        w.flush()?;
        let mut w = create(&p_path)?;
        write_profiles(&mut w, &profiles, &cohort.sias)?;
        w.flush()?;
        let mut inputs = self.raw_inputs();
        inputs.push(tl_path);
        Ok(Done {
            inputs,
            outputs: vec![f_path, p_path],
            detail: format!("{} feature rows, {} profiles", rows.len(), profiles.len()),
        })
    }

    fn profile(&self) -> Result<Done> {
        self.ensure(Stage::Features)?;
        let p_path = self.out("profiles.csv");
        let (profiles, sias) = read_profiles(open(&p_path)?).map_err(|e| invalid(&p_path, e))?;
        let participants: Vec<_> = profiles.keys().cloned().collect();
        let input = ProfilingInput {
            participants: &participants,
            profiles: &profiles,
            sias: &sias,
        };
        let mut groupings = Vec::new();
        for s in self.cfg.strategies()? {
            let g = strategy_groups(s, &input, &self.cfg.profiling).with_context(|| format!("strategy {s}"))?;
            groupings.push(g);
        }
        let path = self.out("groups.csv");
        let mut w = create(&path)?;
        write_groupings(&groupings, &mut w)?;
        w.flush()?;
        let detail = groupings
            .iter()
            .map(|g| format!("{} k={}", g.strategy_name, g.k()))
            .collect::<Vec<_>>()
            .join(", ");
        Ok(Done {
            inputs: vec![p_path],
            outputs: vec![path],
            detail,
        })
    }

    fn groupings(&self) -> Result<Vec<Grouping>> {
        let path = self.out("groups.csv");
        let read = || -> Result<Vec<Grouping>> { read_groupings(open(&path)?).map_err(|e| invalid(&path, e)) };
        let wanted = self.cfg.strategies()?;
        let have = if path.is_file() { read()? } else { Vec::new() };
        let complete = wanted.iter().all(|s| have.iter().any(|g| g.strategy_name == s.name()));
        let all = if complete {
            have
        } else {
            self.run(Stage::Profile)?;
            read()?
        };
        wanted
            .iter()
            .map(|s| {
                all.iter()
                    .find(|g| g.strategy_name == s.name())
                    .cloned()
                    .ok_or_else(|| invalid(&path, format!("no grouping for strategy {s}")))
            })
            .collect()
    }

    fn evaluate(&self) -> Result<Done> {
        self.ensure(Stage::Features)?;
        let groupings = self.groupings()?;
        let f_path = self.out("features.csv");
        let rows = read_features(open(&f_path)?).map_err(|e| invalid(&f_path, e))?;
        let cfg = self.cfg.eval_config();
        let seed = self.cfg.seed;
        let mut reports: Vec<EvalReport> = Vec::new();
        for g in &groupings {
            let plan = make_folds(g, cfg.folds, seed);
            for kind in self.cfg.models()? {
                let r = evaluate(&rows, g, kind, &plan, &cfg, seed)
                    .with_context(|| format!("evaluating {} with {kind}", g.strategy_name))?;
                reports.push(r);
            }
        }
        let json_path = self.out("eval.json");
        let mut w = create(&json_path)?;
        serde_json::to_writer_pretty(&mut w, &reports)?;
        writeln!(w)?;
        w.flush()?;
        let (s_path, r_path) = (self.out("summary.csv"), self.out("report.csv"));
        let mut w = create(&s_path)?;
        write_summary(&reports, &mut w)?;
        w.flush()?;
        let mut w = create(&r_path)?;
        write_report(&reports, &mut w)?;
        w.flush()?;
        let detail = reports
            .iter()
            .map(|r| {
                format!(
                    "{}/{} wrmse {:.3} vs {:.3}",
                    r.strategy, r.model, r.wrmse, r.generalized_rmse
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        Ok(Done {
            inputs: vec![f_path, self.out("groups.csv")],
            outputs: vec![json_path, s_path, r_path],
            detail,
        })
    }

    fn report(&self) -> Result<Done> {
        self.ensure(Stage::Evaluate)?;
        let json_path = self.out("eval.json");
        let reports: Vec<EvalReport> =
            serde_json::from_reader(open(&json_path)?).map_err(|e| invalid(&json_path, e))?;
        let (plot_path, size_path) = (self.out("plotdata.csv"), self.out("sample_size.csv"));
        let mut w = create(&plot_path)?;
        write_plotdata(&reports, &mut w)?;
        w.flush()?;
        let mut w = create(&size_path)?;
        write_sample_sizes(&reports, &mut w)?;
        w.flush()?;

        let mut stdout = std::io::stdout().lock();
        writeln!(
            stdout,
            "{:<24} {:<6} {:>9} {:>9} {:>8} {:>4} {:>10} {:>10}",
            "strategy", "model", "wrmse", "general", "delta", "k", "var_small", "var_large"
        )?;
        for r in &reports {
            let t = sample_size_analysis(r);
            writeln!(
                stdout,
                "{:<24} {:<6} {:>9.3} {:>9.3} {:>8.3} {:>4} {:>10.3} {:>10.3}",
                r.strategy,
                r.model.name(),
                r.wrmse,
                r.generalized_rmse,
                r.delta(),
                r.groups.len(),
                t.small_tertile_var,
                t.large_tertile_var
            )?;
        }
        Ok(Done {
            inputs: vec![json_path],
            outputs: vec![plot_path, size_path],
            detail: format!("{} reports", reports.len()),
        })
    }
}

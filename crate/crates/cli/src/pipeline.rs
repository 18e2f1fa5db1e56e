use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use lifelog_core::analysis::{
    accuracy_table, aggregate_by_user, cluster_report, fit_frozen_classifier, read_embeddings, scatter_svg,
    tsne_project, write_embeddings, write_projection, AccuracyReport, AnalysisError, LabeledEmbedding,
    ProjectedPoint, Task, TsneConfig,
};
use lifelog_core::export::{manifest_line, to_dot, NodeLinkDoc};
use lifelog_core::graph::{build_day_graph, GraphSchema, GraphTensors, SemanticGraph};
use lifelog_core::ingest::{
    partition_by_day, read_event_file, scan_dataset, user_sort_key, write_event_file, write_reject_log, DayBucket,
    Gender, IngestError, LifelogEvent,
};
use lifelog_core::model::{
    embed_dataset, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, EpochLog, TrainError, Trainer,
};
use lifelog_core::synth::generate_synthetic;
use lifelog_core::tensor_store::{read_store, write_store, StoreError};
use log::{info, warn};

use crate::config::{ClusterSpace, PipelineConfig};
use crate::error::CliError;

pub const EVENTS: &str = "events.tsv";
pub const USERS: &str = "users.tsv";
pub const REJECTS: &str = "rejects.txt";
pub const GRAPH_MANIFEST: &str = "graphs/manifest.tsv";
pub const GRAPH_DOCS: &str = "graphs/graphs.jsonl";
pub const GRAPH_FEATURES: &str = "graphs/features.manifest";
pub const FEATURE_FORMAT: &str = "lifelog-features";
const USERS_COLUMNS: &str = "user_id\tgender\tday_count\tarchetype";
const GRAPH_COLUMNS: &str = "user_id\tdate\tnodes\tdropped_sources";

/// `(tag, table label, baseline_mode)` for the two trainable models.
pub const MODELS: [(&str, &str, bool); 2] = [("ae", "AE", true), ("ccm-aae", "CCM-AAE", false)];

pub fn checkpoint_path(tag: &str) -> String {
    format!("checkpoints/{tag}.ckpt")
}

pub fn training_log_path(tag: &str) -> String {
    format!("checkpoints/{tag}.log.tsv")
}

pub fn embedding_path(tag: &str) -> String {
    format!("embeddings/{tag}.tsv")
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRow {
    pub user_id: String,
    pub gender: Gender,
    pub day_count: usize,
    pub archetype: Option<String>,
}

pub struct Run {
    pub cfg: PipelineConfig,
    seed: u64,
    hash: String,
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn ingest_err(e: IngestError) -> CliError {
    match e {
        IngestError::Io { path, source } => CliError::Io { path, source },
        other => CliError::Input(other.to_string()),
    }
}

fn store_err(e: StoreError) -> CliError {
    match e {
        StoreError::Io { path, source } => CliError::Io { path, source },
        other => CliError::Input(other.to_string()),
    }
}

fn analysis_err(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::Usage(m) => CliError::Usage(m),
        other => CliError::Input(other.to_string()),
    }
}

impl Run {
    pub fn new(cfg: PipelineConfig) -> Result<Self, CliError> {
        let cfg = cfg.finalize()?;
        Ok(Self {
            seed: cfg.seed()?,
            hash: cfg.hash(),
            cfg,
        })
    }

    pub fn header(&self, command: &str) -> Vec<String> {
        vec![format!("lifelog {command} config_sha256={} seed={}", self.hash, self.seed)]
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.out.join(rel)
    }

    fn require(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::PipelineOrder(p))
        }
    }

    fn create(&self, rel: &str) -> Result<(PathBuf, fs::File), CliError> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let f = fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
        Ok((p, f))
    }

    fn write_text(&self, rel: &str, text: &str) -> Result<PathBuf, CliError> {
        let (p, mut f) = self.create(rel)?;
        f.write_all(text.as_bytes()).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    fn write_with(
        &self,
        rel: &str,
        body: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let (p, f) = self.create(rel)?;
        let mut w = std::io::BufWriter::new(f);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    fn write_users(&self, command: &str, users: &[UserRow]) -> Result<(), CliError> {
        let mut text = String::new();
        for h in self.header(command) {
            text.push_str(&format!("# {h}\n"));
        }
        text.push_str(USERS_COLUMNS);
        text.push('\n');
        for u in users {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                u.user_id,
                u.gender,
                u.day_count,
                u.archetype.as_deref().unwrap_or("")
            ));
        }
        self.write_text(USERS, &text)?;
        Ok(())
    }

    pub fn read_users(&self) -> Result<Vec<UserRow>, CliError> {
        let path = self.require(USERS)?;
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        parse_users(&text).map_err(|e| input_err(&path, e))
    }

    fn write_events(&self, command: &str, events: &[LifelogEvent]) -> Result<(), CliError> {
        let header = self.header(command);
        self.write_with(EVENTS, |w| write_event_file(w, &header, events))?;
        Ok(())
    }

    pub fn ingest(&self) -> Result<(), CliError> {
        let root = self
            .cfg
            .ingest
            .dataset
            .clone()
            .ok_or_else(|| CliError::Usage("ingest needs a dataset root (--dataset or ingest.dataset)".into()))?;
        if !root.is_dir() {
            return Err(CliError::Usage(format!("dataset root {} is not a directory", root.display())));
        }
        let scan = scan_dataset(&root, &self.cfg.ingest.scan_config()).map_err(ingest_err)?;
        for w in &scan.warnings {
            warn!("{w}");
        }
        self.write_events("ingest", &scan.events)?;
        let users: Vec<UserRow> = scan
            .users
            .iter()
            .map(|u| UserRow {
                user_id: u.user_id.clone(),
                gender: u.gender,
                day_count: u.day_count,
                archetype: None,
            })
            .collect();
        self.write_users("ingest", &users)?;
        let header = self.header("ingest");
        self.write_with(REJECTS, |w| write_reject_log(w, &header, &scan.rejects))?;
        info!(
            "ingest: {} users, {} events, {} rejected lines",
            users.len(),
            scan.events.len(),
            scan.rejects.len()
        );
        Ok(())
    }

    pub fn synth(&self) -> Result<(), CliError> {
        let s = &self.cfg.synth;
        let out = generate_synthetic(&s.archetypes, s.users_per_archetype, s.days, self.seed)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.write_events("synth", &out.events)?;
        let users: Vec<UserRow> = out
            .users
            .iter()
            .zip(&out.archetype_of)
            .map(|(u, &a)| UserRow {
                user_id: u.user_id.clone(),
                gender: u.gender,
                day_count: u.day_count,
                archetype: Some(s.archetypes[a].name.clone()),
            })
            .collect();
        self.write_users("synth", &users)?;
        info!("synth: {} users, {} events", users.len(), out.events.len());
        Ok(())
    }

    pub fn build(&self) -> Result<(), CliError> {
        let events_path = self.require(EVENTS)?;
        let users: BTreeSet<String> = self.read_users()?.into_iter().map(|u| u.user_id).collect();
        let events = read_event_file(&events_path).map_err(ingest_err)?;
        let schema = self.cfg.graph;
        let graphs: Vec<SemanticGraph> = partition_by_day(events)
            .iter()
            .filter(|b| users.contains(&b.user_id))
            .map(|b| build_day_graph(b, &schema))
            .collect();
        if graphs.is_empty() {
            return Err(CliError::Input(format!("{}: no events for known users", events_path.display())));
        }
        let header = self.header("build");

        let mut manifest = String::new();
        for h in &header {
            manifest.push_str(&format!("# {h}\n"));
        }
        manifest.push_str(&format!("schema\t{}\n{GRAPH_COLUMNS}\n", self.cfg.schema_fingerprint()));
        let mut docs = String::new();
        let meta: BTreeMap<String, String> = [
            ("config_sha256".to_string(), self.hash.clone()),
            ("seed".to_string(), self.seed.to_string()),
        ]
        .into();
        for g in &graphs {
            manifest.push_str(&manifest_line(g));
            manifest.push('\n');
            let doc = NodeLinkDoc::from_graph(g).with_meta(meta.clone());
            docs.push_str(&serde_json::to_string(&doc).expect("node-link serializes"));
            docs.push('\n');
        }
        self.write_text(GRAPH_MANIFEST, &manifest)?;
        self.write_text(GRAPH_DOCS, &docs)?;
        let blocks: Vec<(String, _)> = graphs
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("g{i}"), g.features.view()))
            .collect();
        let features = self.path(GRAPH_FEATURES);
        let meta = [("schema".to_string(), self.cfg.schema_fingerprint())];
        write_store(&features, FEATURE_FORMAT, &header, &meta, &blocks).map_err(store_err)?;
        let dropped: usize = graphs.iter().map(|g| g.dropped_sources).sum();
        if dropped > 0 {
            warn!("build: {dropped} source nodes dropped by the n_max cap");
        }
        info!("build: {} graphs", graphs.len());
        Ok(())
    }

    /// Graphs in manifest order, checked against the configured schema.
    pub fn load_graphs(&self) -> Result<Vec<(String, NaiveDate, GraphTensors)>, CliError> {
        let manifest_path = self.require(GRAPH_MANIFEST)?;
        let docs_path = self.require(GRAPH_DOCS)?;
        let features_path = self.require(GRAPH_FEATURES)?;
        let manifest = fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
        let stored = manifest
            .lines()
            .find_map(|l| l.strip_prefix("schema\t"))
            .ok_or_else(|| input_err(&manifest_path, "missing schema line"))?;
        let stored: GraphSchema = serde_json::from_str(stored).map_err(|e| input_err(&manifest_path, e))?;
        let schema = self.cfg.graph;
        if stored != schema {
            return Err(CliError::Compatibility(format!(
                "graphs were built with {stored:?} but the config asks for {schema:?}; rerun build"
            )));
        }
        let (_, features) = read_store(&features_path).map_err(store_err)?;
        let text = fs::read_to_string(&docs_path).map_err(|e| CliError::io(&docs_path, e))?;
        let mut out = Vec::new();
        for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let doc: NodeLinkDoc = serde_json::from_str(line).map_err(|e| input_err(&docs_path, format!("graph {i}: {e}")))?;
            let g = doc.to_graph(&schema).map_err(|e| input_err(&docs_path, format!("graph {i}: {e}")))?;
            let f = features
                .get(i)
                .ok_or_else(|| input_err(&features_path, format!("no feature block for graph {i}")))?;
            if f.dim() != (g.node_count(), schema.k) {
                return Err(input_err(&features_path, format!("feature block {i} has shape {:?}", f.dim())));
            }
            out.push((doc.user_id, doc.date, GraphTensors::from_parts(f, &g.adjacency, schema.n_max)));
        }
        if out.len() != features.len() {
            return Err(input_err(&features_path, "feature blocks and graphs differ in count"));
        }
        Ok(out)
    }

    pub fn train(&self) -> Result<(), CliError> {
        let graphs = self.load_graphs()?;
        let tensors: Vec<GraphTensors> = graphs.into_iter().map(|(_, _, g)| g).collect();
        let schema = self.cfg.graph;
        let tcfg = self.cfg.train.clone();
        let (tag, _, _) = MODELS
            .iter()
            .find(|(_, _, b)| *b == tcfg.baseline_mode)
            .expect("both modes listed");
        let dims = tcfg.dims(schema.n_max, schema.k, &self.cfg.ccm);
        let mut trainer = Trainer::new(dims, tcfg.clone(), self.cfg.ccm).map_err(train_err)?;
        let log = trainer
            .fit(&tensors, |row| {
                info!(
                    "train {tag}: epoch {} L_AE={:.4} L_Dis={:.4} L_Enc={:.4} deviation={:.4}",
                    row.epoch, row.l_ae, row.l_dis, row.l_enc, row.mean_deviation
                )
            })
            .map_err(train_err)?;
        let header = self.header("train");
        let ckpt = Checkpoint {
            params: trainer.into_params(),
            config: tcfg,
            spec: self.cfg.ccm,
            schema: self.cfg.schema_fingerprint(),
        };
        let ckpt_path = self.path(&checkpoint_path(tag));
        if let Some(dir) = ckpt_path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        save_checkpoint(&ckpt_path, &ckpt, &header).map_err(checkpoint_err)?;
        let mut text = String::new();
        for h in &header {
            text.push_str(&format!("# {h}\n"));
        }
        text.push_str(EpochLog::HEADER);
        text.push('\n');
        for row in &log {
            text.push_str(&row.to_tsv());
            text.push('\n');
        }
        self.write_text(&training_log_path(tag), &text)?;
        Ok(())
    }

    fn present(&self, rel: impl Fn(&str) -> String, only: Option<&str>) -> Result<Vec<(&'static str, &'static str)>, CliError> {
        if let Some(tag) = only {
            let (t, label, _) = MODELS
                .iter()
                .find(|(t, _, _)| *t == tag)
                .ok_or_else(|| CliError::Usage(format!("unknown model '{tag}' (expected ae or ccm-aae)")))?;
            self.require(&rel(t))?;
            return Ok(vec![(t, label)]);
        }
        let found: Vec<_> = MODELS
            .iter()
            .filter(|(t, _, _)| self.path(&rel(t)).is_file())
            .map(|(t, l, _)| (*t, *l))
            .collect();
        if found.is_empty() {
            return Err(CliError::PipelineOrder(self.path(&rel("ccm-aae"))));
        }
        Ok(found)
    }

    pub fn embed(&self, only: Option<&str>) -> Result<(), CliError> {
        let models = self.present(checkpoint_path, only)?;
        let graphs = self.load_graphs()?;
        let users = self.read_users()?;
        let labels = UserLabels::new(&users);
        let schema = self.cfg.graph;
        let dims = self.cfg.train.dims(schema.n_max, schema.k, &self.cfg.ccm);
        for (tag, _) in models {
            let ckpt = load_checkpoint(&self.path(&checkpoint_path(tag))).map_err(checkpoint_err)?;
            ckpt.check_compatible(&dims, &self.cfg.schema_fingerprint())
                .map_err(checkpoint_err)?;
            if ckpt.spec != self.cfg.ccm {
                return Err(CliError::Compatibility(format!(
                    "checkpoint {tag} was trained with {:?} but the config has {:?}",
                    ckpt.spec, self.cfg.ccm
                )));
            }
            let points = embed_dataset(&graphs, &ckpt.params).map_err(|e| CliError::Compatibility(e.to_string()))?;
            let embs = points
                .into_iter()
                .map(|p| labels.label(p.z, p.user_id, p.date))
                .collect::<Result<Vec<_>, _>>()?;
            let header = self.header("embed");
            self.write_with(&embedding_path(tag), |w| write_embeddings(w, &header, &embs))?;
            info!("embed {tag}: {} points", embs.len());
        }
        Ok(())
    }

    pub fn analyze(&self) -> Result<(), CliError> {
        let models = self.present(embedding_path, None)?;
        let users = self.read_users()?;
        let labels = UserLabels::new(&users);
        let a = &self.cfg.analysis;
        let header = self.header("analyze");
        let mut rows: Vec<(String, Vec<AccuracyReport>)> = Vec::new();
        let mut notes = Vec::new();
        for (tag, label) in models {
            let path = self.path(&embedding_path(tag));
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let mut embs = read_embeddings(&text).map_err(|e| input_err(&path, e))?;
            for e in &mut embs {
                e.group = labels.group(&e.user_id);
            }
            let mut reports = Vec::new();
            for task in [Task::Sex, Task::Index, Task::Archetype] {
                let classes: BTreeSet<usize> = embs.iter().filter_map(|e| task.label(e)).collect();
                if classes.len() < 2 {
                    notes.push(format!("{label}: {} task skipped ({} class)", task.as_str(), classes.len()));
                    continue;
                }
                let r = fit_frozen_classifier(&embs, task, a.runs, self.seed, &a.classifier).map_err(analysis_err)?;
                reports.push(r);
            }
            rows.push((label.to_string(), reports));

            let points = if a.per_user { aggregate_by_user(&embs) } else { embs };
            let latent: Vec<Vec<f64>> = points.iter().map(|e| e.z.clone()).collect();
            let tsne = tsne_project(
                &latent,
                &TsneConfig {
                    perplexity: a.perplexity,
                    iterations: a.tsne_iterations,
                    seed: self.seed,
                    ..Default::default()
                },
            )
            .map_err(analysis_err)?;
            for w in &tsne.warnings {
                warn!("t-SNE {tag}: {w}");
            }
            let projected: Vec<ProjectedPoint> = points
                .iter()
                .zip(&tsne.coords)
                .map(|(e, c)| ProjectedPoint {
                    user_id: e.user_id.clone(),
                    date: e.date,
                    sex: e.sex,
                    x: c[0],
                    y: c[1],
                })
                .collect();
            self.write_with(&format!("projection/{tag}.tsv"), |w| write_projection(w, &header, &projected))?;
            let svg_header = format!("<!-- {} -->\n", header.join(" "));
            let sex: Vec<String> = points.iter().map(|e| e.sex.to_string()).collect();
            let user: Vec<String> = points.iter().map(|e| format!("user {}", e.user_id)).collect();
            self.write_text(
                &format!("projection/{tag}-sex.svg"),
                &(svg_header.clone() + &scatter_svg(&tsne.coords, &sex, &format!("{label} latent space by sex"))),
            )?;
            self.write_text(
                &format!("projection/{tag}-user.svg"),
                &(svg_header + &scatter_svg(&tsne.coords, &user, &format!("{label} latent space by user"))),
            )?;

            let cluster_points: Vec<Vec<f64>> = match a.cluster_space {
                ClusterSpace::Projection => tsne.coords.iter().map(|c| c.to_vec()).collect(),
                ClusterSpace::Latent => latent,
            };
            let report = cluster_report(&cluster_points, &points, &a.cluster).map_err(analysis_err)?;
            let mut text = String::new();
            for h in &header {
                text.push_str(&format!("# {h}\n"));
            }
            text.push_str(&report.to_text());
            self.write_text(&format!("reports/clusters-{tag}.txt"), &text)?;
        }

        let mut table = String::new();
        for h in &header {
            table.push_str(&format!("# {h}\n"));
        }
        for n in &notes {
            table.push_str(&format!("# {n}\n"));
        }
        table.push_str(&accuracy_table(&rows));
        self.write_text("reports/accuracy.txt", &table)?;

        let mut tsv = String::new();
        for h in &header {
            tsv.push_str(&format!("# {h}\n"));
        }
        tsv.push_str("method\ttask\tmean_accuracy\tstd\tn_runs\tn_classes\tmajority_baseline\trun_accuracies\n");
        for (method, reports) in &rows {
            for r in reports {
                let runs: Vec<String> = r.run_accuracies.iter().map(|v| format!("{v:.4}")).collect();
                tsv.push_str(&format!(
                    "{method}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{:.4}\t{}\n",
                    r.task.as_str(),
                    r.mean_accuracy,
                    r.std,
                    r.n_runs,
                    r.n_classes,
                    r.majority_baseline,
                    runs.join(",")
                ));
            }
        }
        self.write_text("reports/accuracy.tsv", &tsv)?;
        Ok(())
    }

    pub fn viz(&self, user: &str, date: NaiveDate, formats: &[&str]) -> Result<Vec<PathBuf>, CliError> {
        let events_path = self.require(EVENTS)?;
        let events: Vec<LifelogEvent> = read_event_file(&events_path)
            .map_err(ingest_err)?
            .into_iter()
            .filter(|e| e.user_id == user)
            .collect();
        let bucket = partition_by_day(events)
            .into_iter()
            .find(|b| b.date == date)
            .unwrap_or_else(|| DayBucket::empty(user, date));
        let graph = build_day_graph(&bucket, &self.cfg.graph);
        let header = self.header("viz");
        let stem = format!("viz/{}_{date}", sanitize(user));
        let mut written = Vec::new();
        for f in formats {
            match *f {
                "dot" => written.push(self.write_text(&format!("{stem}.dot"), &to_dot(&graph, &header))?),
                "nodelink" => {
                    let meta: BTreeMap<String, String> = [
                        ("config_sha256".to_string(), self.hash.clone()),
                        ("seed".to_string(), self.seed.to_string()),
                    ]
                    .into();
                    let doc = NodeLinkDoc::from_graph(&graph).with_meta(meta);
                    let json = serde_json::to_string_pretty(&doc).expect("node-link serializes") + "\n";
                    written.push(self.write_text(&format!("{stem}.json"), &json)?);
                }
                other => return Err(CliError::Usage(format!("unknown viz format '{other}' (expected dot or nodelink)"))),
            }
        }
        Ok(written)
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Config(m) => CliError::Usage(m),
        TrainError::EmptyDataset => CliError::Input(e.to_string()),
        other => CliError::Training(other.to_string()),
    }
}

fn checkpoint_err(e: CheckpointError) -> CliError {
    match e {
        CheckpointError::Store(s) => store_err(s),
        CheckpointError::Compatibility(m) => CliError::Compatibility(m),
    }
}

pub fn parse_users(text: &str) -> Result<Vec<UserRow>, String> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line != USERS_COLUMNS {
                return Err(format!("line {}: expected header '{USERS_COLUMNS}'", i + 1));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(format!("line {}: expected 4 columns", i + 1));
        }
        rows.push(UserRow {
            user_id: cols[0].to_string(),
            gender: cols[1].parse().map_err(|e: String| format!("line {}: {e}", i + 1))?,
            day_count: cols[2].parse().map_err(|e| format!("line {}: day_count: {e}", i + 1))?,
            archetype: (!cols[3].is_empty()).then(|| cols[3].to_string()),
        });
    }
    if !header_seen {
        return Err("missing header row".into());
    }
    Ok(rows)
}

/// Per-user labels: sex, sorted user index, archetype group.
struct UserLabels {
    users: BTreeMap<String, (Gender, usize, Option<usize>)>,
}

impl UserLabels {
    fn new(rows: &[UserRow]) -> Self {
        let archetypes: BTreeSet<&str> = rows.iter().filter_map(|r| r.archetype.as_deref()).collect();
        let archetypes: Vec<&str> = archetypes.into_iter().collect();
        let mut sorted: Vec<&UserRow> = rows.iter().collect();
        sorted.sort_by_key(|r| user_sort_key(&r.user_id));
        let users = sorted
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let group = r
                    .archetype
                    .as_deref()
                    .and_then(|a| archetypes.iter().position(|x| *x == a));
                (r.user_id.clone(), (r.gender, i, group))
            })
            .collect();
        Self { users }
    }

    fn group(&self, user_id: &str) -> Option<usize> {
        self.users.get(user_id).and_then(|u| u.2)
    }

    fn label(&self, z: Vec<f64>, user_id: String, date: NaiveDate) -> Result<LabeledEmbedding, CliError> {
        let &(sex, user_index, group) = self
            .users
            .get(&user_id)
            .ok_or_else(|| CliError::Input(format!("graph for user {user_id} has no row in {USERS}")))?;
        Ok(LabeledEmbedding {
            z,
            sex,
            user_index,
            user_id,
            date,
            group,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn users_file_roundtrip() {
        let text = "# h\nuser_id\tgender\tday_count\tarchetype\n2\tF\t30\tcommuter\n10\tM\t4\t\n";
        let rows = parse_users(text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].archetype.as_deref(), Some("commuter"));
        assert_eq!(rows[1].archetype, None);
        let labels = UserLabels::new(&rows);
        assert_eq!(labels.users["10"].1, 1);
        assert_eq!(labels.group("2"), Some(0));
    }

    #[test]
    fn users_file_needs_header() {
        assert!(parse_users("2\tF\t30\t\n").is_err());
    }
}

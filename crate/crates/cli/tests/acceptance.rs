//! Acceptance run: one PASS/FAIL line per criterion. Built with `harness = false`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use lifelog_core::analysis::{cluster_report, silhouette, tsne_project, ClusterConfig, ClusterTag, LabeledEmbedding, TsneConfig};
use lifelog_core::graph::{build_day_graph, EdgeSemantic, GraphSchema, GraphTensors, NodeKind};
use lifelog_core::ingest::{DayBucket, Gender, LifelogEvent, SensorKind};
use lifelog_core::manifold::{deviation, membership, sample_prior, CcmSpec};
use lifelog_core::model::{grad_check, GradCheckConfig, GradCheckInstance, ModelDims, ModelParams, ReconWeights};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: &str = "0";

type Outcome = Result<String, String>;

fn lifelog(out: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_lifelog"))
        .args(args)
        .args(["--seed", SEED, "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("lifelog {} failed: {}", args.join(" "), String::from_utf8_lossy(&status.stderr).trim()))
    }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let (n_max, k) = (12, 6);
    let n = 12;
    let mut adj = Array2::<u32>::zeros((n, n));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.2) {
                adj[[i, j]] = rng.gen_range(1..3);
            }
        }
    }
    let x = Array2::from_shape_fn((n, k), |_| rng.gen_range(-1.0..1.0));
    let spec = CcmSpec::new(1.0, 2, 1.0).map_err(|e| e.to_string())?;
    let inst = GradCheckInstance {
        graph: GraphTensors::from_parts(&x, &adj, n_max),
        z_prior: sample_prior(&spec, 1, 2).remove(0),
        spec,
        weights: ReconWeights::default(),
    };
    let dims = ModelDims {
        n_max,
        k,
        latent: 3,
        h1: 8,
        h2: 8,
        hd: 8,
    };
    let params = ModelParams::init(dims, 3);
    let cfg = GradCheckConfig {
        samples_per_block: None,
        ..Default::default()
    };
    let report = grad_check(&params, &inst, &cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let checked: usize = report.blocks.iter().map(|b| b.checked).sum();
    let msg = format!(
        "{} loss/block pairs, {checked} entries, max rel error {:.2e}, {secs:.1} s",
        report.blocks.len(),
        report.max_rel_error()
    );
    if secs < 30.0 {
        Ok(msg)
    } else {
        Err(format!("too slow: {msg}"))
    }
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for kappa in [1.0, -1.0] {
        let spec = CcmSpec::new(kappa, 5, 1.0).map_err(|e| e.to_string())?;
        for z in sample_prior(&spec, 10_000, 7) {
            worst = worst.max(deviation(&z, &spec));
            if membership(&z, &spec) != 1.0 && deviation(&z, &spec) == 0.0 {
                return Err("membership below 1 on the manifold".into());
            }
            if (membership(&z, &spec) - 1.0).abs() > 1e-12 {
                return Err(format!("membership {} on-manifold", membership(&z, &spec)));
            }
        }
        let base = sample_prior(&spec, 1, 8).remove(0);
        let mut last = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..100 {
            let z: Vec<f64> = base.iter().map(|v| v * (1.0 + 0.01 * i as f64)).collect();
            let (d, m) = (deviation(&z, &spec), membership(&z, &spec));
            if i > 0 && !(d > last.0 && m < last.1) {
                return Err(format!("kappa {kappa}: sweep not strictly monotone at step {i}"));
            }
            last = (d, m);
        }
    }
    if worst < 1e-9 {
        Ok(format!("2×10⁴ samples, worst |<z,z> - 1/κ| = {worst:.1e}; 100-point sweeps strictly monotone"))
    } else {
        Err(format!("worst deviation {worst:e}"))
    }
}

fn oracle_adjacency(bucket: &DayBucket) -> HashMap<(NodeKind, NodeKind), u32> {
    let midnight = bucket.date.and_hms_opt(0, 0, 0).expect("valid time");
    let slot = |t: chrono::NaiveDateTime| ((t - midnight).num_minutes() / 15).min(95) as u8;
    let mut a = HashMap::new();
    for t in 0..95u8 {
        a.insert((NodeKind::Time(t), NodeKind::Time(t + 1)), 1);
    }
    for e in &bucket.events {
        let src = NodeKind::Source {
            entity_key: e.entity_key.clone(),
            sensor: e.sensor,
        };
        *a.entry((NodeKind::Sensor(e.sensor), src.clone())).or_insert(0) += 1;
        *a.entry((NodeKind::Time(slot(e.start)), src.clone())).or_insert(0) += 1;
        if let Some(end) = e.end {
            *a.entry((src, NodeKind::Time(slot(end)))).or_insert(0) += 1;
        }
    }
    a
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let date = NaiveDate::from_ymd_opt(2014, 3, 1).expect("valid date");
    let midnight = date.and_hms_opt(0, 0, 0).expect("valid time");
    let schema = GraphSchema::default();
    let mut nonzero = 0usize;
    for b in 0..100 {
        let count = rng.gen_range(0..=50);
        let mut events: Vec<LifelogEvent> = (0..count)
            .map(|_| {
                let start = rng.gen_range(0..1440i64);
                let end = rng
                    .gen_bool(0.7)
                    .then(|| midnight + Duration::minutes(rng.gen_range(start..=1440)));
                LifelogEvent {
                    user_id: "1".into(),
                    sensor: SensorKind::ALL[rng.gen_range(0..7)],
                    entity_key: format!("k{}", rng.gen_range(0..8)),
                    start: midnight + Duration::minutes(start),
                    end,
                    attrs: BTreeMap::new(),
                }
            })
            .collect();
        events.sort_by_key(|e| e.start);
        let bucket = DayBucket {
            user_id: "1".into(),
            date,
            events,
        };
        let g = build_day_graph(&bucket, &schema);
        let expected = oracle_adjacency(&bucket);
        let mut total = 0u64;
        for i in 0..g.node_count() {
            for j in 0..g.node_count() {
                let got = g.adjacency[[i, j]];
                let want = expected.get(&(g.nodes[i].clone(), g.nodes[j].clone())).copied().unwrap_or(0);
                if got != want {
                    return Err(format!("bucket {b}: A[{i}][{j}] = {got}, oracle {want}"));
                }
                if got > 0 {
                    nonzero += 1;
                    if EdgeSemantic::between(g.nodes[i].class(), g.nodes[j].class()).is_none() {
                        return Err(format!("bucket {b}: illegal edge {i}->{j}"));
                    }
                }
                total += got as u64;
            }
        }
        if total != expected.values().map(|&v| v as u64).sum::<u64>() {
            return Err(format!("bucket {b}: total weight differs from oracle"));
        }
    }
    Ok(format!("100 buckets match the brute-force oracle exactly; {nonzero} nonzero entries all legal"))
}

fn read_log(path: &Path) -> Result<Vec<(usize, f64)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("epoch"))
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            let epoch = cols[0].parse().map_err(|e| format!("{e}"))?;
            let dev = cols[4].parse().map_err(|e| format!("{e}"))?;
            Ok((epoch, dev))
        })
        .collect()
}

fn criterion_4(run: &Path) -> Outcome {
    lifelog(run, &["synth"])?;
    lifelog(run, &["build", "--n-max", "128"])?;
    let t = Instant::now();
    lifelog(run, &["train", "--n-max", "128", "--epochs", "200"])?;
    let ccm_secs = t.elapsed().as_secs_f64();
    lifelog(run, &["train", "--baseline", "--n-max", "128", "--epochs", "200"])?;
    let ccm = read_log(&run.join("checkpoints/ccm-aae.log.tsv"))?;
    let ae = read_log(&run.join("checkpoints/ae.log.tsv"))?;
    let (c0, c1) = (ccm[0].1, ccm.last().ok_or("empty log")?.1);
    let (a0, a1) = (ae[0].1, ae.last().ok_or("empty log")?.1);
    let msg = format!(
        "CCM-AAE deviation {c0:.4} -> {c1:.4} (ratio {:.3}); AE {a0:.4} -> {a1:.4} (ratio {:.3}); CCM-AAE training {ccm_secs:.0} s",
        c1 / c0,
        a1 / a0
    );
    if c1 < 0.5 * c0 && a1 >= 0.5 * a0 && ccm_secs < 600.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn accuracy_rows(path: &Path) -> Result<Vec<(String, String, f64, f64, f64)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("method"))
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| e.to_string());
            Ok((c[0].to_string(), c[1].to_string(), num(c[2])?, num(c[3])?, num(c[6])?))
        })
        .collect()
}

fn criterion_5(run: &Path) -> Outcome {
    lifelog(run, &["embed", "--n-max", "128"])?;
    lifelog(run, &["analyze", "--n-max", "128", "--runs", "5"])?;
    let rows = accuracy_rows(&run.join("reports/accuracy.tsv"))?;
    let find = |m: &str, t: &str| rows.iter().find(|r| r.0 == m && r.1 == t).cloned();
    let ae = find("AE", "archetype").ok_or("no AE archetype row")?;
    let ccm = find("CCM-AAE", "archetype").ok_or("no CCM-AAE archetype row")?;
    let mut msg = format!(
        "archetype: CCM-AAE {:.2}±{:.2}, AE {:.2}±{:.2}, majority {:.2}",
        ccm.2, ccm.3, ae.2, ae.3, ae.4
    );
    for task in ["sex", "index"] {
        if let (Some(a), Some(c)) = (find("AE", task), find("CCM-AAE", task)) {
            msg.push_str(&format!("; {task}: CCM-AAE {:.2} AE {:.2}", c.2, a.2));
        }
    }
    if ccm.2 >= ae.2 && ae.2 >= ae.4 + 10.0 && ccm.2 >= ccm.4 + 10.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn full_run(dir: &Path) -> Result<(), String> {
    let common = ["--n-max", "128", "--epochs", "3"];
    lifelog(dir, &["synth"])?;
    lifelog(dir, &[&["build"][..], &common].concat())?;
    lifelog(dir, &[&["train"][..], &common].concat())?;
    lifelog(dir, &[&["train", "--baseline"][..], &common].concat())?;
    lifelog(dir, &[&["embed"][..], &common].concat())?;
    lifelog(dir, &[&["analyze"][..], &common].concat())
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).into_iter().flatten().flatten() {
        out.push(entry.path());
    }
    out.sort();
    out
}

fn criterion_6(scratch: &Path) -> Outcome {
    let (a, b) = (scratch.join("det-a"), scratch.join("det-b"));
    full_run(&a)?;
    full_run(&b)?;
    let mut compared = 0;
    for sub in ["embeddings", "reports"] {
        let fa = files_under(&a.join(sub));
        let fb = files_under(&b.join(sub));
        if fa.len() != fb.len() || fa.is_empty() {
            return Err(format!("{sub}: file sets differ"));
        }
        for (x, y) in fa.iter().zip(&fb) {
            let (bx, by) = (fs::read(x).map_err(|e| e.to_string())?, fs::read(y).map_err(|e| e.to_string())?);
            if bx != by {
                return Err(format!("{} differs between runs", x.display()));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} embedding/report files byte-identical across two seeded runs"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.5).expect("valid normal");
    let points: Vec<Vec<f64>> = (0..100)
        .map(|i| {
            let c = if i < 50 { 0.0 } else { 8.0 };
            (0..6).map(|_| c + noise.sample(&mut rng)).collect()
        })
        .collect();
    let labels: Vec<usize> = (0..100).map(|i| i / 50).collect();
    let r = tsne_project(&points, &TsneConfig::default()).map_err(|e| e.to_string())?;
    let mut worst_rise = f64::NEG_INFINITY;
    for t in r.exaggeration_end..r.kl_trace.len() - 50 {
        worst_rise = worst_rise.max(r.kl_trace[t + 50] - r.kl_trace[t]);
    }
    let coords: Vec<Vec<f64>> = r.coords.iter().map(|c| c.to_vec()).collect();
    let s = silhouette(&coords, &labels);
    let msg = format!(
        "largest 50-iteration KL rise {worst_rise:.2e} (tol 1e-3), final KL {:.4}, silhouette {s:.3}",
        r.kl_trace.last().copied().unwrap_or(f64::NAN)
    );
    if worst_rise <= 1e-3 && s >= 0.5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_8() -> Outcome {
    // Five blobs: one user alone, three men, and three mixed groups.
    let groups: [&[(&str, Gender)]; 5] = [
        &[("1", Gender::F)],
        &[("2", Gender::M), ("3", Gender::M), ("4", Gender::M)],
        &[("5", Gender::F), ("6", Gender::M), ("7", Gender::F), ("8", Gender::M)],
        &[("9", Gender::F), ("10", Gender::M), ("11", Gender::F)],
        &[("5", Gender::F), ("10", Gender::M), ("12", Gender::M), ("9", Gender::F)],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 0.3).expect("valid normal");
    let date = NaiveDate::from_ymd_opt(2013, 11, 1).expect("valid date");
    let mut labels = Vec::new();
    let mut points = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        let center = [6.0 * (g as f64).cos(), 6.0 * (g as f64).sin(), g as f64];
        for i in 0..36 {
            let (user, sex) = members[i % members.len()];
            let z: Vec<f64> = center.iter().map(|c| c + noise.sample(&mut rng)).collect();
            points.push(z.clone());
            labels.push(LabeledEmbedding {
                z,
                sex,
                user_index: user.parse::<usize>().expect("numeric id") - 1,
                user_id: user.to_string(),
                date: date + Duration::days(i as i64),
                group: Some(g),
            });
        }
    }
    let report = cluster_report(&points, &labels, &ClusterConfig::default()).map_err(|e| e.to_string())?;
    let tags: Vec<&str> = report.clusters.iter().map(|c| c.tag.as_str()).collect();
    let gender = report.clusters.iter().any(|c| matches!(c.tag, ClusterTag::GenderSpecific(_)));
    let user = report.clusters.iter().any(|c| c.tag == ClusterTag::UserSpecific);
    let msg = format!("k=5 tags {tags:?}, silhouette {:.3}", report.silhouette);
    if gender && user {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let run = scratch.path().join("main");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 gradient correctness", Box::new(criterion_1)),
        ("2 manifold invariants", Box::new(criterion_2)),
        ("3 graph-builder oracle", Box::new(criterion_3)),
        ("4 adversarial pressure", Box::new(|| criterion_4(&run))),
        ("5 frozen-encoder accuracy", Box::new(|| criterion_5(&run))),
        ("6 pipeline determinism", Box::new(|| criterion_6(scratch.path()))),
        ("7 t-SNE sanity", Box::new(criterion_7)),
        ("8 cluster tags", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg} [{secs:.1} s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

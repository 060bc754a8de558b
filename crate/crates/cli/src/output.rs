//! Artifact writers and the trace reader used by `identify`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};
use sparsemix::datasets::StudyResults;
use sparsemix::evidence::EvidenceEstimate;
use sparsemix::postprocess::{IdentifiedModel, IntervalSummary, KplusPosterior};
use sparsemix::sampler::{ComponentDraw, SweepRecord};
use sparsemix::{ChainTrace, Family, Kernel};

use crate::{io_err, CliError};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| io_err(path, e)
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| io_err(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn write_trace<P>(path: &Path, trace: &ChainTrace<P>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["sweep", "kplus", "precision", "loglik"]).map_err(&err)?;
    for r in &trace.records {
        w.write_record([
            r.sweep.to_string(),
            r.kplus.to_string(),
            r.precision.to_string(),
            r.loglik.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One row per (sweep, non-empty component) with the flattened parameters.
pub fn write_params<K: Kernel>(path: &Path, kernel: &K, trace: &ChainTrace<K::Params>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    let mut header = vec!["sweep".to_string(), "component".into(), "weight".into(), "size".into()];
    let width = trace
        .records
        .iter()
        .find_map(|r| r.components.first())
        .map_or(0, |c| kernel.flatten(&c.params).len());
    header.extend((0..width).map(|j| format!("theta{j}")));
    w.write_record(&header).map_err(&err)?;
    for r in &trace.records {
        for c in &r.components {
            let mut row = vec![r.sweep.to_string(), c.component.to_string(), c.weight.to_string(), c.size.to_string()];
            row.extend(kernel.flatten(&c.params).iter().map(f64::to_string));
            w.write_record(&row).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One row per sweep: the component index of every observation.
pub fn write_allocations<P>(path: &Path, trace: &ChainTrace<P>) -> Result<(), CliError> {
    if trace.records.first().is_none_or(|r| r.allocations.is_none()) {
        return Ok(());
    }
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    let mut header = vec!["sweep".to_string()];
    header.extend((1..=trace.n_obs).map(|i| format!("obs{i}")));
    w.write_record(&header).map_err(&err)?;
    for r in &trace.records {
        let mut row = vec![r.sweep.to_string()];
        if let Some(a) = &r.allocations {
            row.extend(a.iter().map(u32::to_string));
        }
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_kplus<P>(path: &Path, post: &KplusPosterior, trace: &ChainTrace<P>) -> Result<(), CliError> {
    let pmf: Vec<Value> = post
        .pmf
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(j, &p)| json!({ "kplus": j + 1, "probability": p }))
        .collect();
    write_json(
        path,
        &json!({
            "mode": post.mode,
            "pmf": pmf,
            "n_draws": trace.len(),
            "mean_precision": trace.mean_precision(),
            "precision_acceptance": trace.precision_acceptance,
        }),
    )
}

fn interval(s: &IntervalSummary) -> Value {
    json!({ "mean": s.mean, "lower": s.lower, "upper": s.upper })
}

pub fn write_identified<K: Kernel>(path: &Path, kernel: &K, id: &IdentifiedModel) -> Result<(), CliError> {
    let names = kernel.summary_names();
    let classes: Vec<Value> = id
        .classes
        .iter()
        .enumerate()
        .map(|(c, cls)| {
            let params: serde_json::Map<String, Value> =
                names.iter().cloned().zip(cls.params.iter().map(interval)).collect();
            json!({ "class": c + 1, "weight": interval(&cls.weight), "params": params })
        })
        .collect();
    write_json(
        path,
        &json!({
            "khat": id.khat,
            "classes": classes,
            "final_partition": id.final_partition,
            "n_draws_used": id.n_draws_used,
            "n_draws_discarded": id.n_draws_discarded,
        }),
    )
}

pub fn write_identification_failure(path: &Path, khat: usize, message: &str) -> Result<(), CliError> {
    write_json(path, &json!({ "khat": khat, "error": message }))
}

pub fn write_evidence(path: &Path, rows: &[(usize, Result<EvidenceEstimate, String>)]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["K", "method", "log_evidence", "std_error", "note"]).map_err(&err)?;
    for (k, r) in rows {
        match r {
            Ok(e) => w.write_record([
                k.to_string(),
                e.method.as_str().to_string(),
                e.log_value.to_string(),
                e.std_error.to_string(),
                String::new(),
            ]),
            Err(m) => w.write_record([k.to_string(), "unsupported".into(), String::new(), String::new(), m.clone()]),
        }
        .map_err(&err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_pmf(path: &Path, pmf: &[f64]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["kplus", "probability"]).map_err(&err)?;
    for (j, p) in pmf.iter().enumerate() {
        w.write_record([(j + 1).to_string(), p.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_replications(path: &Path, res: &StudyResults) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["replication", "cell", "mean_precision", "khat", "ari", "err", "failure"])
        .map_err(&err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &res.replications {
        w.write_record([
            r.replication.to_string(),
            r.cell.to_string(),
            r.mean_precision.to_string(),
            r.khat.to_string(),
            opt(r.ari),
            opt(r.err),
            r.failure.clone().unwrap_or_default(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn parse<T: std::str::FromStr>(path: &Path, v: Option<&str>) -> Result<T, CliError> {
    v.and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| CliError::User(format!("{}: malformed value {v:?}", path.display())))
}

/// Rebuild a trace from the CSV files written by `fit`.
pub fn read_trace<K: Kernel>(dir: &Path, kernel: &K, family: Family) -> Result<ChainTrace<K::Params>, CliError> {
    let tpath = dir.join("trace.csv");
    let mut rdr = csv::Reader::from_path(&tpath).map_err(csv_err(&tpath))?;
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(&tpath))?;
        records.push(SweepRecord {
            sweep: parse(&tpath, rec.get(0))?,
            kplus: parse(&tpath, rec.get(1))?,
            precision: parse(&tpath, rec.get(2))?,
            loglik: parse(&tpath, rec.get(3))?,
            components: Vec::new(),
            allocations: None,
            full: None,
        });
    }
    let sweeps: Vec<usize> = records.iter().map(|r| r.sweep).collect();
    let index = |sweep: usize, path: &Path| -> Result<usize, CliError> {
        sweeps
            .binary_search(&sweep)
            .map_err(|_| CliError::User(format!("{}: sweep {sweep} not in trace.csv", path.display())))
    };

    let ppath = dir.join("params.csv");
    let mut rdr = csv::Reader::from_path(&ppath).map_err(csv_err(&ppath))?;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(&ppath))?;
        let s = index(parse(&ppath, rec.get(0))?, &ppath)?;
        let values = (4..rec.len()).map(|j| parse(&ppath, rec.get(j))).collect::<Result<Vec<f64>, _>>()?;
        records[s].components.push(ComponentDraw {
            component: parse(&ppath, rec.get(1))?,
            weight: parse(&ppath, rec.get(2))?,
            size: parse(&ppath, rec.get(3))?,
            params: kernel.unflatten(&values)?,
        });
    }

    let apath = dir.join("allocations.csv");
    if apath.is_file() {
        let mut rdr = csv::Reader::from_path(&apath).map_err(csv_err(&apath))?;
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err(&apath))?;
            let s = index(parse(&apath, rec.get(0))?, &apath)?;
            let labels = (1..rec.len()).map(|j| parse(&apath, rec.get(j))).collect::<Result<Vec<u32>, _>>()?;
            records[s].allocations = Some(labels);
        }
    }
    if records.iter().any(|r| r.components.len() != r.kplus) {
        return Err(CliError::User(format!("{}: params.csv does not match trace.csv", dir.display())));
    }
    Ok(ChainTrace {
        family,
        n_obs: kernel.n_obs(),
        records,
        precision_acceptance: f64::NAN,
    })
}

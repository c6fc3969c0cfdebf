//! Result files: CSV rows, datapoint truths, metadata and plot data.

use crate::config::EstimatorKind;
use crate::experiment::Datapoint;
use crate::BenchError;
use amci::models::{GroundTruth, TruthMethod};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// One `(estimator, N)` cell, either for a single datapoint or aggregated
/// across datapoints.
///
/// Datapoint rows carry `δ(y, θ)`, its replicate standard error and the
/// replicate quartiles of the squared relative error. Aggregate rows carry
/// the median `δ` with its datapoint quartiles, and the medians of the
/// datapoint rows' replicate quartiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub aggregate: bool,
    pub datapoint: Option<usize>,
    pub delta: f64,
    pub delta_se: Option<f64>,
    pub datapoint_q25: Option<f64>,
    pub datapoint_q75: Option<f64>,
    pub replicate_q25: f64,
    pub replicate_q75: f64,
    pub mse: f64,
    pub truth: Option<f64>,
    /// Fraction of replicates returning exactly zero.
    pub zero_fraction: f64,
    /// Replicates whose weights all vanished.
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub model: String,
    pub seed: u64,
    pub datapoints: usize,
    pub replicates: usize,
    pub truth_method: String,
    pub proposals: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub metadata: Metadata,
    pub datapoints: Vec<Datapoint>,
    /// Per cell: the aggregate row, then one row per datapoint.
    pub rows: Vec<ResultRow>,
}

pub const RESULTS_FILE: &str = "results.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const METADATA_FILE: &str = "metadata.toml";
pub const CONFIG_FILE: &str = "config.resolved.toml";

fn io_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io(format!("{}: {e}", path.display()))
}

impl ErrorReport {
    pub fn aggregates(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.aggregate)
    }

    pub fn aggregate_for(&self, estimator: EstimatorKind, n: usize) -> Option<&ResultRow> {
        self.aggregates().find(|r| r.estimator == estimator && r.n == n)
    }

    pub fn rows_for(&self, estimator: EstimatorKind, n: usize) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| !r.aggregate && r.estimator == estimator && r.n == n)
    }

    /// Writes results, truths and metadata into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), BenchError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(RESULTS_FILE);
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        write_results(file, &self.rows).map_err(|e| io_err(&path, e))?;
        write_truth_csv(&dir.join(TRUTH_FILE), &self.datapoints)?;
        let path = dir.join(METADATA_FILE);
        let text = toml::to_string(&self.metadata).expect("metadata serializes");
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

pub fn write_results<W: Write>(w: W, rows: &[ResultRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, BenchError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    rd.deserialize().collect::<Result<_, _>>().map_err(|e| io_err(path, e))
}

fn method_from_str(s: &str) -> Option<TruthMethod> {
    [TruthMethod::Analytic, TruthMethod::Quadrature, TruthMethod::IsOracle, TruthMethod::SnisOracle].into_iter().find(|m| m.as_str() == s)
}

/// `index, y_0.., theta_0.., truth, std_error, method, samples, abs_dev`.
pub fn write_truth_csv(path: &Path, points: &[Datapoint]) -> Result<(), BenchError> {
    let (yd, td) = points.first().map_or((0, 0), |p| (p.y.len(), p.theta.len()));
    let mut out = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header = vec!["index".to_string()];
    header.extend((0..yd).map(|i| format!("y_{i}")));
    header.extend((0..td).map(|i| format!("theta_{i}")));
    header.extend(["truth", "std_error", "method", "samples", "abs_dev"].map(String::from));
    out.write_record(&header).map_err(|e| io_err(path, e))?;
    for p in points {
        let mut rec = vec![p.index.to_string()];
        rec.extend(p.y.iter().chain(&p.theta).map(|v| v.to_string()));
        rec.push(p.truth.value.to_string());
        rec.push(p.truth.std_error.to_string());
        rec.push(p.truth.method.as_str().to_string());
        rec.push(p.truth.samples.to_string());
        rec.push(p.truth.abs_dev.map_or(String::new(), |v| v.to_string()));
        out.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<Datapoint>, BenchError> {
    let bad = |m: String| BenchError::Config(format!("truth cache {}: {m}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    let yd = header.iter().filter(|h| h.starts_with("y_")).count();
    let td = header.iter().filter(|h| h.starts_with("theta_")).count();
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
    let mut points = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 1 + yd + td + 5 {
            return Err(bad(format!("row has {} fields", rec.len())));
        }
        let index = rec[0].parse().map_err(|_| bad(format!("index `{}`", &rec[0])))?;
        let vals: Vec<f64> = (1..1 + yd + td).map(|i| num(&rec[i])).collect::<Result<_, _>>()?;
        let k = 1 + yd + td;
        let method = method_from_str(&rec[k + 2]).ok_or_else(|| bad(format!("method `{}`", &rec[k + 2])))?;
        let truth = GroundTruth {
            value: num(&rec[k])?,
            std_error: num(&rec[k + 1])?,
            method,
            samples: rec[k + 3].parse().map_err(|_| bad(format!("samples `{}`", &rec[k + 3])))?,
            abs_dev: if rec[k + 4].is_empty() { None } else { Some(num(&rec[k + 4])?) },
        };
        points.push(Datapoint { index, y: vals[..yd].to_vec(), theta: vals[yd..].to_vec(), truth });
    }
    Ok(points)
}

/// Writes `<estimator>.dat` (datapoint quartiles) and
/// `<estimator>.replicate.dat` (replicate quartiles) for each estimator
/// present, plus a gnuplot script. Returns the files written.
pub fn emit_plots(rows: &[ResultRow], dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut estimators: Vec<EstimatorKind> = rows.iter().filter(|r| r.aggregate).map(|r| r.estimator).collect();
    estimators.sort();
    estimators.dedup();
    if estimators.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for &e in &estimators {
        let mut agg: Vec<&ResultRow> = rows.iter().filter(|r| r.aggregate && r.estimator == e).collect();
        agg.sort_by_key(|r| r.n);
        for (suffix, label, pick) in [
            ("dat", "datapoint", (|r: &ResultRow| (r.datapoint_q25.unwrap_or(f64::NAN), r.datapoint_q75.unwrap_or(f64::NAN))) as fn(&ResultRow) -> (f64, f64)),
            ("replicate.dat", "replicate", |r: &ResultRow| (r.replicate_q25, r.replicate_q75)),
        ] {
            let mut text = format!("# {e}: median ReMSE over datapoints; shading = {label} quartiles\n# n median q25 q75\n");
            for r in &agg {
                let (q25, q75) = pick(r);
                text.push_str(&format!("{} {} {} {}\n", r.n, r.delta, q25, q75));
            }
            let path = dir.join(format!("{e}.{suffix}"));
            fs::write(&path, text).map_err(|err| io_err(&path, err))?;
            written.push(path);
        }
    }
    let path = dir.join("plot.gp");
    fs::write(&path, gnuplot_script(&estimators)).map_err(|e| io_err(&path, e))?;
    written.push(path);
    Ok(written)
}

fn gnuplot_script(estimators: &[EstimatorKind]) -> String {
    let mut s = String::from(
        "# gnuplot plot.gp  ->  remse.png, remse_replicate.png\n\
         set terminal pngcairo size 900,600\n\
         set logscale xy\n\
         set format y '10^{%L}'\n\
         set xlabel 'N'\n\
         set ylabel 'ReMSE'\n\
         set key outside right\n",
    );
    for (out, suffix) in [("remse.png", "dat"), ("remse_replicate.png", "replicate.dat")] {
        s.push_str(&format!("set output '{out}'\nplot "));
        let parts: Vec<String> = estimators
            .iter()
            .enumerate()
            .flat_map(|(i, e)| {
                let file = format!("'{e}.{suffix}'");
                let lt = i + 1;
                [
                    format!("{file} using 1:3:4 with filledcurves fs transparent solid 0.2 lt {lt} notitle"),
                    format!("{file} using 1:2 with lines lw 2 lt {lt} title '{e}'"),
                ]
            })
            .collect();
        s.push_str(&parts.join(", \\\n     "));
        s.push('\n');
    }
    s
}

//! Report emission: `report.csv`, its JSON twin, per-rung manifests and a
//! run manifest with content hashes.
//!
//! Nothing time- or host-dependent is written, so identical inputs give
//! identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gradlab_core::experiments::{
    Cell, Check, ConservationReport, EstimateReport, LinfReport, LinfRung, RungStatus, Table,
};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::io::{fmt_float, IoError};

pub const ARTIFACT: &str = "gradlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// JSON number, or `null` for NaN and infinities.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Num(x) => fmt_float(*x),
        Cell::Int(i) => i.to_string(),
        Cell::Text(s) => s.clone(),
    }
}

fn cell_json(c: &Cell) -> Value {
    match c {
        Cell::Num(x) => num(*x),
        Cell::Int(i) => Value::from(*i),
        Cell::Text(s) => Value::from(s.as_str()),
    }
}

/// Header row then one row per table row; an empty table gives the header
/// only.
pub fn table_csv(t: &Table) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.columns).expect("in-memory write");
    for row in &t.rows {
        w.write_record(row.iter().map(cell_text)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 cells")
}

pub fn checks_json(checks: &[Check]) -> Value {
    checks
        .iter()
        .map(|c| json!({ "name": c.name, "passed": c.passed, "asserted": c.asserted, "detail": c.detail }))
        .collect()
}

fn status_json(s: &RungStatus) -> (Value, Value) {
    match s {
        RungStatus::Ok => (json!("ok"), Value::Null),
        RungStatus::Failed(e) => (json!("failed"), json!(e)),
    }
}

/// What the study subcommands emit.
pub trait Report {
    fn study(&self) -> &str;
    fn table(&self) -> Table;
    fn checks(&self) -> &[Check];
    fn flags(&self) -> &[String];
    fn passed(&self) -> bool;
    /// Study-level results beyond the table: fits, trends, stabilization.
    fn summary(&self) -> Value;
    /// One document per independent solve.
    fn rung_manifests(&self) -> Vec<Value>;
}

impl Report for EstimateReport {
    fn study(&self) -> &str {
        &self.study
    }
    fn table(&self) -> Table {
        EstimateReport::table(self)
    }
    fn checks(&self) -> &[Check] {
        &self.checks
    }
    fn flags(&self) -> &[String] {
        &self.flags
    }
    fn passed(&self) -> bool {
        EstimateReport::passed(self)
    }
    fn summary(&self) -> Value {
        let fits: Vec<Value> = self
            .fits
            .iter()
            .map(|f| {
                json!({
                    "gate": f.gate.label,
                    "norm": f.gate.norm.name(),
                    "exponent": num(f.gate.norm.exponent()),
                    "theta": num(f.gate.theta),
                    "slope": num(f.slope),
                    "stderr": num(f.stderr),
                    "implied_constants": f.implied_constants.iter().map(|c| num(*c)).collect::<Vec<_>>(),
                    "c_hat_max": num(f.c_hat_max),
                    "c_hat_median": num(f.c_hat_median),
                    "c_hat_last": num(f.c_hat_last),
                    "c_hat_trend": num(f.c_hat_trend),
                })
            })
            .collect();
        json!({
            "m": num(self.m),
            "coverage": self.coverage,
            "fits": fits,
            "refinement_change": self.refinement_change.map(num),
        })
    }
    fn rung_manifests(&self) -> Vec<Value> {
        self.rungs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (status, error) = status_json(&r.status);
                let values: BTreeMap<String, Value> =
                    self.fits.iter().zip(&r.values).map(|(f, v)| (f.gate.label.clone(), num(*v))).collect();
                json!({
                    "rung": i,
                    "scaling": num(r.scaling),
                    "forcing_norm": num(r.forcing_norm),
                    "values": values,
                    "steps": r.steps,
                    "max_w": num(r.max_w),
                    "status": status,
                    "error": error,
                })
            })
            .collect()
    }
}

impl Report for ConservationReport {
    fn study(&self) -> &str {
        "conservation"
    }
    fn table(&self) -> Table {
        ConservationReport::table(self)
    }
    fn checks(&self) -> &[Check] {
        &self.checks
    }
    fn flags(&self) -> &[String] {
        &self.flags
    }
    fn passed(&self) -> bool {
        ConservationReport::passed(self)
    }
    fn summary(&self) -> Value {
        json!({
            "trend": self.trend.iter().map(|(m, r)| json!({ "m": num(*m), "max_ratio": num(*r) })).collect::<Vec<_>>(),
            "corpus_constant": num(self.corpus_constant),
        })
    }
    fn rung_manifests(&self) -> Vec<Value> {
        // one solve serves every m of a (case, p) pair
        let mut out: Vec<Value> = Vec::new();
        let mut last: Option<(&str, f64)> = None;
        for r in &self.records {
            if last == Some((r.case.as_str(), r.p)) {
                continue;
            }
            last = Some((r.case.as_str(), r.p));
            let (status, error) = status_json(&r.status);
            let ratios: Vec<Value> = self
                .records
                .iter()
                .filter(|x| x.case == r.case && x.p == r.p)
                .map(|x| json!({ "m": num(x.m), "ratio": num(x.ratio), "sup_gradient": num(x.sup_gradient) }))
                .collect();
            out.push(json!({
                "rung": out.len(),
                "case": r.case,
                "p": num(r.p),
                "steps": r.steps,
                "ratios": ratios,
                "status": status,
                "error": error,
            }));
        }
        out
    }
}

fn linf_rung_json(run: &str, r: &LinfRung) -> Value {
    let (status, error) = status_json(&r.status);
    json!({
        "run": run,
        "nodes": r.nodes,
        "h": num(r.h),
        "sigma": num(r.sigma),
        "max_w": num(r.max_w),
        "median": num(r.median),
        "steps": r.steps,
        "status": status,
        "error": error,
    })
}

impl Report for LinfReport {
    fn study(&self) -> &str {
        "linf"
    }
    fn table(&self) -> Table {
        LinfReport::table(self)
    }
    fn checks(&self) -> &[Check] {
        &self.checks
    }
    fn flags(&self) -> &[String] {
        &self.flags
    }
    fn passed(&self) -> bool {
        LinfReport::passed(self)
    }
    fn summary(&self) -> Value {
        json!({
            "relative_change": num(self.relative_change),
            "control_growth": self.control_growth.map(num),
            "inconclusive": self.inconclusive,
        })
    }
    fn rung_manifests(&self) -> Vec<Value> {
        let singular = self.rungs.iter().map(|r| linf_rung_json("singular", r));
        let control = self.control.iter().map(|r| linf_rung_json("control", r));
        singular.chain(control).enumerate().map(|(i, mut v)| {
            v["rung"] = json!(i);
            v
        })
        .collect()
    }
}

/// The JSON twin of `report.csv`, with checks, flags and the summary.
pub fn report_json(report: &impl Report) -> Value {
    let t = report.table();
    json!({
        "study": report.study(),
        "passed": report.passed(),
        "checks": checks_json(report.checks()),
        "flags": report.flags(),
        "summary": report.summary(),
        "columns": t.columns,
        "rows": t.rows.iter().map(|r| r.iter().map(cell_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

/// Identity of an invocation, recorded in every manifest.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub subcommand: String,
    /// Canonical serialization of the validated config.
    pub config: String,
    pub seed: u64,
}

impl RunContext {
    pub fn config_hash(&self) -> String {
        sha256_hex(self.config.as_bytes())
    }

    fn header(&self) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("artifact".into(), json!(ARTIFACT));
        m.insert("version".into(), json!(VERSION));
        m.insert("subcommand".into(), json!(self.subcommand));
        m.insert("config_sha256".into(), json!(self.config_hash()));
        m.insert("seed".into(), json!(self.seed));
        m
    }
}

/// Collects written files and their hashes for the run manifest.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<(), IoError> {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| IoError::io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.insert(name.to_string(), sha256_hex(bytes));
    }

    /// Writes `manifest.json` with `extra` merged into the header.
    pub fn finish(self, dir: &Path, ctx: &RunContext, extra: Value) -> Result<Value, IoError> {
        let mut m = ctx.header();
        if let Value::Object(extra) = extra {
            m.extend(extra);
        }
        m.insert("files".into(), json!(self.files));
        let manifest = Value::Object(m);
        let path = dir.join("manifest.json");
        fs::write(&path, pretty(&manifest)).map_err(|e| IoError::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

/// Writes `report.csv`, `report.json`, `rungs/rung-NNN.json` and
/// `manifest.json` under `out_dir`, returning the manifest.
pub fn emit_report(report: &impl Report, out_dir: &Path, ctx: &RunContext) -> Result<Value, IoError> {
    fs::create_dir_all(out_dir).map_err(|e| IoError::io(out_dir, e))?;
    let mut out = OutputSet::default();
    out.write(out_dir, "report.csv", table_csv(&report.table()).as_bytes())?;
    out.write(out_dir, "report.json", pretty(&report_json(report)).as_bytes())?;
    for (i, rung) in report.rung_manifests().into_iter().enumerate() {
        let mut doc = ctx.header();
        doc.insert("study".into(), json!(report.study()));
        if let Value::Object(fields) = rung {
            doc.extend(fields);
        }
        out.write(out_dir, &format!("rungs/rung-{i:03}.json"), pretty(&Value::Object(doc)).as_bytes())?;
    }
    out.finish(out_dir, ctx, json!({ "study": report.study(), "passed": report.passed() }))
}

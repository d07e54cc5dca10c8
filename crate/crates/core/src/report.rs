//! CSV and JSON writers for moment tables, predictions, quantile series,
//! traces and verdicts.
//!
//! CSV numbers are printed with 17 significant digits, enough to recover
//! every `f64` exactly. JSON documents carry `"schema_version": 1` and use
//! the shortest representation that parses back to the same `f64`.
//! Non-finite values appear as `NaN`/`inf` in CSV and `null` in JSON; an
//! absent optional value is an empty CSV field.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::es_core::{AlgorithmParams, TraceRecord};
use crate::montecarlo::{EnsembleResult, Verdict, VerdictItem};
use crate::order_stats::{MomentRow, OrderStatMoments};
use crate::stats::Estimate;
use crate::theory::{ScalingRow, TheoryPrediction};

pub const SCHEMA_VERSION: u32 = 1;

/// Formats `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn finish<W: Write>(mut wr: csv::Writer<W>) -> io::Result<()> {
    wr.flush()
}

fn to_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn json_out<W: Write, T: Serialize>(mut w: W, doc: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, doc).map_err(io::Error::other)?;
    w.write_all(b"\n")
}

/// Wraps a payload with the schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Document<T> {
    pub fn new(body: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

// Moments ------------------------------------------------------------------

pub const MOMENT_HEADER: [&str; 6] = ["lambda", "rank", "k", "value", "method", "abs_error_bound"];

pub fn write_moments_csv<W: Write>(w: W, tables: &[OrderStatMoments]) -> io::Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(MOMENT_HEADER).map_err(to_io)?;
    for row in tables.iter().flat_map(OrderStatMoments::rows) {
        wr.write_record([
            row.lambda.to_string(),
            row.rank.to_string(),
            row.k.to_string(),
            fmt_f64(row.value),
            row.method.to_string(),
            fmt_f64(row.abs_error_bound),
        ])
        .map_err(to_io)?;
    }
    finish(wr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsBody {
    pub moments: Vec<MomentRow>,
}

pub fn write_moments_json<W: Write>(w: W, tables: &[OrderStatMoments]) -> io::Result<()> {
    let moments = tables.iter().flat_map(OrderStatMoments::rows).collect();
    json_out(w, &Document::new(MomentsBody { moments }))
}

// Predictions --------------------------------------------------------------

/// Flat prediction record: parameters followed by the predicted quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub n: usize,
    pub lambda: u32,
    pub c: f64,
    pub d_sigma: f64,
    pub rule: String,
    pub rate: f64,
    pub e_p1_sq: f64,
    pub e_p1_quad: f64,
    pub k4: f64,
    pub k31: f64,
    pub k22: f64,
    pub k211: f64,
    pub k1111: f64,
    pub variance: f64,
    pub rel_std: Option<f64>,
}

impl From<&TheoryPrediction> for PredictionRecord {
    fn from(p: &TheoryPrediction) -> Self {
        Self {
            n: p.params.n,
            lambda: p.params.lambda,
            c: p.params.c,
            d_sigma: p.params.d_sigma,
            rule: p.params.update_rule.to_string(),
            rate: p.rate,
            e_p1_sq: p.e_p1_sq_limit,
            e_p1_quad: p.e_p1_quad_limit,
            k4: p.k_terms.k4,
            k31: p.k_terms.k31,
            k22: p.k_terms.k22,
            k211: p.k_terms.k211,
            k1111: p.k_terms.k1111,
            variance: p.variance_log_inc,
            rel_std: p.rel_std,
        }
    }
}

pub const PREDICTION_HEADER: [&str; 15] = [
    "n",
    "lambda",
    "c",
    "d_sigma",
    "rule",
    "rate",
    "e_p1_sq",
    "e_p1_quad",
    "k4",
    "k31",
    "k22",
    "k211",
    "k1111",
    "variance",
    "rel_std",
];

pub fn write_predictions_csv<W: Write>(w: W, preds: &[TheoryPrediction]) -> io::Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(PREDICTION_HEADER).map_err(to_io)?;
    for r in preds.iter().map(PredictionRecord::from) {
        let mut fields = vec![
            r.n.to_string(),
            r.lambda.to_string(),
            fmt_f64(r.c),
            fmt_f64(r.d_sigma),
            r.rule,
        ];
        fields.extend(
            [
                r.rate,
                r.e_p1_sq,
                r.e_p1_quad,
                r.k4,
                r.k31,
                r.k22,
                r.k211,
                r.k1111,
                r.variance,
            ]
            .map(fmt_f64),
        );
        fields.push(fmt_opt(r.rel_std));
        wr.write_record(&fields).map_err(to_io)?;
    }
    finish(wr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsBody {
    pub predictions: Vec<PredictionRecord>,
}

pub fn write_predictions_json<W: Write>(w: W, preds: &[TheoryPrediction]) -> io::Result<()> {
    let predictions = preds.iter().map(PredictionRecord::from).collect();
    json_out(w, &Document::new(PredictionsBody { predictions }))
}

// Scaling curves -----------------------------------------------------------

/// One relative-std curve, labelled by its cumulation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub curve: String,
    pub rows: Vec<ScalingRow>,
}

pub const SCALING_HEADER: [&str; 6] = ["curve", "n", "c", "rate", "std", "rel_std"];

pub fn write_scaling_csv<W: Write>(w: W, curves: &[ScalingCurve]) -> io::Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(SCALING_HEADER).map_err(to_io)?;
    for curve in curves {
        for r in &curve.rows {
            wr.write_record([
                curve.curve.clone(),
                r.n.to_string(),
                fmt_f64(r.c),
                fmt_f64(r.rate),
                fmt_f64(r.std),
                fmt_opt(r.rel_std),
            ])
            .map_err(to_io)?;
        }
    }
    finish(wr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingBody {
    pub lambda: u32,
    pub d_sigma: f64,
    pub curves: Vec<ScalingCurve>,
}

pub fn write_scaling_json<W: Write>(w: W, body: ScalingBody) -> io::Result<()> {
    json_out(w, &Document::new(body))
}

// Quantile series ----------------------------------------------------------

pub const QUANTILE_HEADER: [&str; 3] = ["t", "level", "value"];

/// Quantiles of `ln(σ_t/σ_0)`, one row per recorded `t` and level.
pub fn write_quantiles_csv<W: Write>(w: W, result: &EnsembleResult) -> io::Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(QUANTILE_HEADER).map_err(to_io)?;
    quantile_rows(&mut wr, None, result)?;
    finish(wr)
}

/// Quantile series of several ensembles, prefixed by their `c`.
pub fn write_labelled_quantiles_csv<W: Write>(w: W, results: &[EnsembleResult]) -> io::Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(["c", "t", "level", "value"])
        .map_err(to_io)?;
    for r in results {
        quantile_rows(&mut wr, Some(r.params.c), r)?;
    }
    finish(wr)
}

fn quantile_rows<W: Write>(
    wr: &mut csv::Writer<W>,
    c: Option<f64>,
    result: &EnsembleResult,
) -> io::Result<()> {
    for (t, row) in result.recorded_t.iter().zip(&result.quantile_series) {
        for (level, value) in result.quantile_levels.iter().zip(row) {
            let mut fields = Vec::with_capacity(4);
            if let Some(c) = c {
                fields.push(fmt_f64(c));
            }
            fields.extend([t.to_string(), fmt_f64(*level), fmt_f64(*value)]);
            wr.write_record(&fields).map_err(to_io)?;
        }
    }
    Ok(())
}

/// Ensemble summary: estimators and quantile series, without per-run traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub params: AlgorithmParams,
    pub mode: String,
    pub runs: usize,
    pub t_max: u64,
    pub burn_in: u64,
    pub batch_len: u32,
    pub empirical_rate: Estimate,
    pub empirical_inc_mean: Option<Estimate>,
    pub empirical_inc_var: Option<Estimate>,
    pub empirical_x_rate: Option<Estimate>,
    pub excluded_runs: usize,
    pub diagnostics: Vec<String>,
    pub recorded_t: Vec<u64>,
    pub quantile_levels: Vec<f64>,
    pub quantile_series: Vec<Vec<f64>>,
}

impl From<&EnsembleResult> for EnsembleSummary {
    fn from(r: &EnsembleResult) -> Self {
        Self {
            params: r.params.clone(),
            mode: r.mode.to_string(),
            runs: r.runs,
            t_max: r.t_max,
            burn_in: r.burn_in,
            batch_len: r.batch_len,
            empirical_rate: r.empirical_rate,
            empirical_inc_mean: r.empirical_inc_mean,
            empirical_inc_var: r.empirical_inc_var,
            empirical_x_rate: r.empirical_x_rate,
            excluded_runs: r.excluded_runs,
            diagnostics: r.diagnostics.clone(),
            recorded_t: r.recorded_t.clone(),
            quantile_levels: r.quantile_levels.clone(),
            quantile_series: r.quantile_series.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblesBody {
    pub ensembles: Vec<EnsembleSummary>,
}

pub fn write_ensembles_json<W: Write>(w: W, results: &[EnsembleResult]) -> io::Result<()> {
    let ensembles = results.iter().map(EnsembleSummary::from).collect();
    json_out(w, &Document::new(EnsemblesBody { ensembles }))
}

// Traces -------------------------------------------------------------------

pub const TRACE_HEADER: [&str; 5] = ["t", "log_sigma", "log_increment", "p_norm_sq", "x1"];

pub fn write_trace_csv<W: Write>(w: W, records: &[TraceRecord]) -> io::Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(TRACE_HEADER).map_err(to_io)?;
    for r in records {
        wr.write_record([
            r.t.to_string(),
            fmt_f64(r.log_sigma),
            fmt_f64(r.log_increment),
            fmt_f64(r.p_norm_sq),
            fmt_f64(r.x1),
        ])
        .map_err(to_io)?;
    }
    finish(wr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBody {
    pub params: AlgorithmParams,
    pub trace: Vec<TraceRecord>,
}

pub fn write_trace_json<W: Write>(
    w: W,
    params: &AlgorithmParams,
    records: &[TraceRecord],
) -> io::Result<()> {
    json_out(
        w,
        &Document::new(TraceBody {
            params: params.clone(),
            trace: records.to_vec(),
        }),
    )
}

// Verdicts -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictBody {
    pub params: AlgorithmParams,
    pub z_threshold: f64,
    pub pass: bool,
    pub items: Vec<VerdictItem>,
}

pub fn write_verdict_json<W: Write>(w: W, verdict: &Verdict) -> io::Result<()> {
    json_out(
        w,
        &Document::new(VerdictBody {
            params: verdict.params.clone(),
            z_threshold: verdict.z_threshold,
            pass: verdict.pass,
            items: verdict.items.clone(),
        }),
    )
}

pub const VERDICT_HEADER: [&str; 6] = ["quantity", "theory", "empirical", "stderr", "z", "pass"];

pub fn write_verdict_csv<W: Write>(w: W, verdict: &Verdict) -> io::Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(VERDICT_HEADER).map_err(to_io)?;
    for i in &verdict.items {
        wr.write_record([
            i.quantity.clone(),
            fmt_f64(i.theory),
            fmt_f64(i.empirical),
            fmt_f64(i.stderr),
            fmt_f64(i.z),
            i.pass.to_string(),
        ])
        .map_err(to_io)?;
    }
    finish(wr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order_stats::minimum_moments;
    use crate::theory::predict;
    use proptest::prelude::*;

    fn parse_csv(bytes: &[u8]) -> Vec<Vec<String>> {
        csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(bytes)
            .records()
            .map(|r| r.unwrap().iter().map(str::to_string).collect())
            .collect()
    }

    proptest! {
        #[test]
        fn float_format_round_trips(x in any::<f64>()) {
            let back: f64 = fmt_f64(x).parse().unwrap();
            prop_assert!(back.to_bits() == x.to_bits() || (x.is_nan() && back.is_nan()));
        }

        #[test]
        fn trace_csv_round_trips(vals in proptest::collection::vec(
            (any::<u64>(), -1e300f64..1e300, -1e3f64..1e3, 0f64..1e6, any::<f64>()), 1..20)) {
            let records: Vec<TraceRecord> = vals
                .iter()
                .map(|&(t, log_sigma, log_increment, p_norm_sq, x1)| TraceRecord {
                    t, log_sigma, log_increment, p_norm_sq, x1,
                })
                .collect();
            let mut buf = Vec::new();
            write_trace_csv(&mut buf, &records).unwrap();
            let rows = parse_csv(&buf);
            prop_assert_eq!(&rows[0], &TRACE_HEADER.map(String::from).to_vec());
            for (row, r) in rows[1..].iter().zip(&records) {
                prop_assert_eq!(row[0].parse::<u64>().unwrap(), r.t);
                prop_assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), r.log_sigma.to_bits());
                prop_assert_eq!(row[2].parse::<f64>().unwrap().to_bits(), r.log_increment.to_bits());
                prop_assert_eq!(row[3].parse::<f64>().unwrap().to_bits(), r.p_norm_sq.to_bits());
                let x1: f64 = row[4].parse().unwrap();
                prop_assert!(x1.to_bits() == r.x1.to_bits() || (x1.is_nan() && r.x1.is_nan()));
            }
        }
    }

    #[test]
    fn moments_csv_layout() {
        let m = minimum_moments(8).unwrap();
        let mut buf = Vec::new();
        write_moments_csv(&mut buf, std::slice::from_ref(&m)).unwrap();
        let rows = parse_csv(&buf);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0], MOMENT_HEADER.map(String::from));
        for (k, row) in rows[1..].iter().enumerate() {
            assert_eq!(row[..3], ["8", "1", &(k + 1).to_string()]);
            assert_eq!(row[3].parse::<f64>().unwrap(), m.moment(k + 1).unwrap());
            assert_eq!(row[4], "quadrature");
        }
    }

    #[test]
    fn prediction_json_round_trips() {
        let m = minimum_moments(8).unwrap();
        let preds: Vec<_> = [1.0, 0.3, 0.01]
            .iter()
            .map(|&c| predict(&AlgorithmParams::new(20, 8, c).unwrap(), &m).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_predictions_json(&mut buf, &preds).unwrap();
        let doc: Document<PredictionsBody> = serde_json::from_slice(&buf).unwrap();
        assert_eq!(doc.schema_version, 1);
        let expected: Vec<PredictionRecord> = preds.iter().map(PredictionRecord::from).collect();
        assert_eq!(doc.body.predictions, expected);
    }

    #[test]
    fn prediction_csv_round_trips() {
        let m = minimum_moments(2).unwrap();
        let p = predict(&AlgorithmParams::new(20, 2, 1.0).unwrap(), &m).unwrap();
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, std::slice::from_ref(&p)).unwrap();
        let rows = parse_csv(&buf);
        assert_eq!(rows[0], PREDICTION_HEADER.map(String::from));
        let row = &rows[1];
        assert_eq!(row[4], "squared");
        assert_eq!(row[5].parse::<f64>().unwrap(), p.rate);
        assert_eq!(row[13].parse::<f64>().unwrap(), p.variance_log_inc);
        // A zero rate has no relative standard deviation.
        assert_eq!(p.rate, 0.0);
        assert_eq!(row[14], "");
    }

    #[test]
    fn verdict_json_shape() {
        let verdict = Verdict {
            params: AlgorithmParams::new(20, 8, 1.0).unwrap(),
            z_threshold: 4.0,
            items: vec![VerdictItem {
                quantity: "rate".into(),
                theory: 0.1,
                empirical: 0.1,
                stderr: 0.01,
                z: 0.0,
                pass: true,
            }],
            pass: true,
        };
        let mut buf = Vec::new();
        write_verdict_json(&mut buf, &verdict).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["schema_version"], 1);
        let item = &v["items"][0];
        for key in ["quantity", "theory", "empirical", "stderr", "z", "pass"] {
            assert!(item.get(key).is_some(), "{key}");
        }
    }
}

//! The two samples, the finite population used by the simulation lab, and
//! CSV ingestion.

use crate::error::{Error, Result};
use crate::estimand::Estimand;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Design-weighted sample: rows (x, y) with weights d_i = 1/pi_A,i.
/// The covariate matrix always carries a leading intercept column.
#[derive(Debug, Clone)]
pub struct ProbabilitySample {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub weights: DVector<f64>,
}

/// Sample with unknown selection mechanism: rows (x, y) only.
#[derive(Debug, Clone)]
pub struct NonProbabilitySample {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct CombinedData {
    pub prob: ProbabilitySample,
    pub nonprob: NonProbabilitySample,
}

impl CombinedData {
    pub fn new(prob: ProbabilitySample, nonprob: NonProbabilitySample) -> Result<Self> {
        if prob.x.nrows() == 0 || nonprob.x.nrows() == 0 {
            return Err(Error::Domain("both samples must be nonempty".into()));
        }
        if prob.x.ncols() != nonprob.x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "covariate dimension differs: probability {} vs non-probability {}",
                prob.x.ncols(),
                nonprob.x.ncols()
            )));
        }
        if prob.x.nrows() != prob.y.len() || prob.x.nrows() != prob.weights.len() {
            return Err(Error::DimensionMismatch(
                "probability sample rows, outcomes and weights must align".into(),
            ));
        }
        if nonprob.x.nrows() != nonprob.y.len() {
            return Err(Error::DimensionMismatch(
                "non-probability sample rows and outcomes must align".into(),
            ));
        }
        if prob
            .weights
            .iter()
            .any(|&w| !(w.is_finite() && w > 0.0))
        {
            return Err(Error::Domain(
                "design weights must be strictly positive and finite".into(),
            ));
        }
        Ok(Self { prob, nonprob })
    }

    pub fn n_a(&self) -> usize {
        self.prob.x.nrows()
    }

    pub fn n_b(&self) -> usize {
        self.nonprob.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.n_a() + self.n_b()
    }

    pub fn f_b(&self) -> f64 {
        self.n_b() as f64 / self.n() as f64
    }

    pub fn dim(&self) -> usize {
        self.prob.x.ncols()
    }

    /// Hajek population-size estimate sum of design weights over sample A.
    pub fn weight_sum(&self) -> f64 {
        self.prob.weights.sum()
    }

    /// With-replacement resample of n_A rows from A and n_B rows from B,
    /// design weights carried into the replicate unchanged.
    pub fn resample<R: Rng>(&self, rng: &mut R) -> CombinedData {
        let n_a = self.n_a();
        let n_b = self.n_b();
        let p = self.dim();
        let mut px = DMatrix::zeros(n_a, p);
        let mut py = DVector::zeros(n_a);
        let mut pw = DVector::zeros(n_a);
        for i in 0..n_a {
            let j = rng.gen_range(0..n_a);
            px.row_mut(i).copy_from(&self.prob.x.row(j));
            py[i] = self.prob.y[j];
            pw[i] = self.prob.weights[j];
        }
        let mut bx = DMatrix::zeros(n_b, p);
        let mut by = DVector::zeros(n_b);
        for i in 0..n_b {
            let j = rng.gen_range(0..n_b);
            bx.row_mut(i).copy_from(&self.nonprob.x.row(j));
            by[i] = self.nonprob.y[j];
        }
        CombinedData {
            prob: ProbabilitySample {
                x: px,
                y: py,
                weights: pw,
            },
            nonprob: NonProbabilitySample { x: bx, y: by },
        }
    }
}

/// Finite population used by the simulation lab. The latent `u` drives the
/// selection mechanism but is never part of the observed view handed to
/// estimators.
#[derive(Debug, Clone)]
pub struct FinitePopulation {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    latent_u: DVector<f64>,
}

impl FinitePopulation {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, latent_u: DVector<f64>) -> Self {
        Self { x, y, latent_u }
    }

    pub fn size(&self) -> usize {
        self.y.len()
    }

    pub(crate) fn latent(&self) -> &DVector<f64> {
        &self.latent_u
    }

    /// Exact finite-population target: the root of N^{-1} sum S(V_i; mu) = 0.
    pub fn mu_g(&self, estimand: &Estimand) -> DVector<f64> {
        match estimand {
            Estimand::Mean => DVector::from_element(1, self.y.mean()),
            Estimand::ProportionBelow(c) => {
                let frac = self.y.iter().filter(|&&v| v < *c).count() as f64 / self.size() as f64;
                DVector::from_element(1, frac)
            }
            Estimand::RegressionCoef => {
                let xtx = self.x.transpose() * &self.x;
                let xty = self.x.transpose() * &self.y;
                xtx.lu().solve(&xty).expect("population Gram is invertible")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Column layout of the input files. The intercept column is materialized by
/// the loader and must not appear in the files.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CsvSchema {
    pub covariates: Vec<String>,
    pub outcome: String,
    /// Required for the probability file.
    pub weight: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl CsvSchema {
    pub fn new(covariates: Vec<String>, outcome: &str, weight: Option<&str>) -> Self {
        Self {
            covariates,
            outcome: outcome.to_string(),
            weight: weight.map(str::to_string),
            delimiter: ',',
        }
    }
}

struct ParsedTable {
    x: DMatrix<f64>,
    y: DVector<f64>,
    weights: Option<DVector<f64>>,
}

fn parse_table(text: &str, schema: &CsvSchema, label: &str, need_weight: bool) -> Result<ParsedTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: label.into(),
            line: 1,
            column: "<header>".into(),
            message: e.to_string(),
        })?
        .clone();

    let col_index = |name: &str| -> Option<usize> { headers.iter().position(|h| h == name) };

    let mut cov_idx = Vec::with_capacity(schema.covariates.len());
    for c in &schema.covariates {
        cov_idx.push(col_index(c).ok_or_else(|| Error::Parse {
            path: label.into(),
            line: 1,
            column: c.clone(),
            message: "covariate column not found".into(),
        })?);
    }
    let y_idx = col_index(&schema.outcome).ok_or_else(|| Error::Parse {
        path: label.into(),
        line: 1,
        column: schema.outcome.clone(),
        message: "outcome column not found".into(),
    })?;
    let w_idx = if need_weight {
        let name = schema
            .weight
            .as_deref()
            .ok_or_else(|| Error::MissingWeight("<unset>".into()))?;
        Some(
            col_index(name).ok_or_else(|| Error::MissingWeight(name.to_string()))?,
        )
    } else {
        None
    };

    let p = schema.covariates.len() + 1;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();

    for (row_no, record) in reader.records().enumerate() {
        let line = row_no + 2; // header occupies line 1
        let record = record.map_err(|e| Error::Parse {
            path: label.into(),
            line,
            column: "<row>".into(),
            message: e.to_string(),
        })?;
        let get = |idx: usize, column: &str| -> Result<f64> {
            let raw = record.get(idx).ok_or_else(|| Error::Parse {
                path: label.into(),
                line,
                column: column.into(),
                message: "missing field".into(),
            })?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                path: label.into(),
                line,
                column: column.into(),
                message: format!("not a number: '{raw}'"),
            })
        };
        xs.push(1.0);
        for (k, &idx) in cov_idx.iter().enumerate() {
            let v = get(idx, &schema.covariates[k])?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: label.into(),
                    line,
                    column: schema.covariates[k].clone(),
                    message: "non-finite value".into(),
                });
            }
            xs.push(v);
        }
        let yv = get(y_idx, &schema.outcome)?;
        if !yv.is_finite() {
            return Err(Error::Parse {
                path: label.into(),
                line,
                column: schema.outcome.clone(),
                message: "non-finite value".into(),
            });
        }
        ys.push(yv);
        if let Some(idx) = w_idx {
            let wv = get(idx, schema.weight.as_deref().unwrap())?;
            if !(wv.is_finite() && wv > 0.0) {
                return Err(Error::Parse {
                    path: label.into(),
                    line,
                    column: schema.weight.clone().unwrap(),
                    message: format!("design weight must be positive, got {wv}"),
                });
            }
            ws.push(wv);
        }
    }

    if ys.is_empty() {
        return Err(Error::Parse {
            path: label.into(),
            line: 2,
            column: "<row>".into(),
            message: "file has no data rows".into(),
        });
    }

    let n = ys.len();
    Ok(ParsedTable {
        x: DMatrix::from_row_slice(n, p, &xs),
        y: DVector::from_vec(ys),
        weights: if need_weight {
            Some(DVector::from_vec(ws))
        } else {
            None
        },
    })
}

/// Parse the probability-sample CSV from a string (weight column required).
pub fn parse_probability_csv(text: &str, schema: &CsvSchema, label: &str) -> Result<ProbabilitySample> {
    let t = parse_table(text, schema, label, true)?;
    Ok(ProbabilitySample {
        x: t.x,
        y: t.y,
        weights: t.weights.unwrap(),
    })
}

/// Parse the non-probability-sample CSV from a string.
pub fn parse_nonprobability_csv(
    text: &str,
    schema: &CsvSchema,
    label: &str,
) -> Result<NonProbabilitySample> {
    let t = parse_table(text, schema, label, false)?;
    Ok(NonProbabilitySample { x: t.x, y: t.y })
}

/// Load both files and assemble the combined dataset.
pub fn load_samples(
    prob_path: &std::path::Path,
    nonprob_path: &std::path::Path,
    schema: &CsvSchema,
) -> Result<CombinedData> {
    let read = |p: &std::path::Path| {
        std::fs::read_to_string(p).map_err(|source| Error::File {
            path: p.display().to_string(),
            source,
        })
    };
    let prob_text = read(prob_path)?;
    let nonprob_text = read(nonprob_path)?;
    let prob = parse_probability_csv(&prob_text, schema, &prob_path.display().to_string())?;
    let nonprob =
        parse_nonprobability_csv(&nonprob_text, schema, &nonprob_path.display().to_string())?;
    CombinedData::new(prob, nonprob)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema::new(vec!["x1".into(), "x2".into()], "y", Some("w"))
    }

    #[test]
    fn counts_and_fractions() {
        let prob = parse_probability_csv(
            "x1,x2,y,w\n0.1,0.2,1.0,2.0\n0.3,0.4,2.0,2.0\n0.5,0.6,3.0,2.0\n",
            &schema(),
            "prob.csv",
        )
        .unwrap();
        let nonprob = parse_nonprobability_csv(
            "x1,x2,y\n0.1,0.2,1.0\n0.3,0.4,2.0\n0.5,0.6,3.0\n",
            &schema(),
            "nonprob.csv",
        )
        .unwrap();
        let data = CombinedData::new(prob, nonprob).unwrap();
        assert_eq!(data.n(), 6);
        assert!((data.f_b() - 0.5).abs() < 1e-15);
        // intercept column got prepended
        assert_eq!(data.dim(), 3);
        assert_eq!(data.prob.x[(0, 0)], 1.0);
    }

    #[test]
    fn missing_weight_column() {
        let err = parse_probability_csv("x1,x2,y\n0.1,0.2,1.0\n", &schema(), "prob.csv");
        assert!(matches!(err, Err(Error::MissingWeight(_))), "{err:?}");
    }

    #[test]
    fn non_numeric_cell_named() {
        let err = parse_probability_csv(
            "x1,x2,y,w\n0.1,0.2,oops,2.0\n",
            &schema(),
            "prob.csv",
        );
        match err {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "y");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let prob = parse_probability_csv(
            "x1,x2,y,w\n0.1,0.2,1.0,2.0\n",
            &schema(),
            "prob.csv",
        )
        .unwrap();
        let nonprob = parse_nonprobability_csv(
            "x1,y\n0.1,1.0\n",
            &CsvSchema::new(vec!["x1".into()], "y", None),
            "nonprob.csv",
        )
        .unwrap();
        assert!(CombinedData::new(prob, nonprob).is_err());
    }

    #[test]
    fn resample_preserves_shapes() {
        use rand::SeedableRng;
        let prob = parse_probability_csv(
            "x1,x2,y,w\n0.1,0.2,1.0,2.0\n0.3,0.4,2.0,1.0\n0.5,0.6,3.0,4.0\n",
            &schema(),
            "prob.csv",
        )
        .unwrap();
        let nonprob = parse_nonprobability_csv(
            "x1,x2,y\n0.1,0.2,1.0\n0.3,0.4,2.0\n",
            &schema(),
            "nonprob.csv",
        )
        .unwrap();
        let data = CombinedData::new(prob, nonprob).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        let rep = data.resample(&mut rng);
        assert_eq!(rep.n_a(), 3);
        assert_eq!(rep.n_b(), 2);
    }
}

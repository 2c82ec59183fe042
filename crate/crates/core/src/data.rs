//! Dataset representation, CSV ingestion, control augmentation and
//! auxiliary/main sample splitting.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RpivError};
use crate::rng::{Domain, Stream};

/// Which CSV column plays which role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub response: String,
    pub endogenous: Vec<String>,
    pub instruments: Vec<String>,
    #[serde(default)]
    pub controls: Vec<String>,
    #[serde(default)]
    pub cluster: Option<String>,
}

impl ColumnRoles {
    fn all_names(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.response)
            .chain(&self.endogenous)
            .chain(&self.instruments)
            .chain(&self.controls)
            .chain(self.cluster.iter())
    }

    /// Every column may be assigned at most once.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for name in self.all_names() {
            if !seen.insert(name.as_str()) {
                return Err(RpivError::DuplicateRole(name.clone()));
            }
        }
        if self.endogenous.is_empty() {
            return Err(RpivError::InvalidConfig("no endogenous column given".into()));
        }
        if self.instruments.is_empty() {
            return Err(RpivError::InvalidConfig("no instrument column given".into()));
        }
        Ok(())
    }
}

/// Raw observations `(Y_i, X_i, Z_i)` plus optional exogenous controls and
/// cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    /// Endogenous regressors, n × p.
    pub x: DMatrix<f64>,
    /// Excluded instruments, n × d.
    pub z: DMatrix<f64>,
    /// Exogenous controls, n × q.
    pub controls: Option<DMatrix<f64>>,
    /// Dense cluster labels, one per observation.
    pub cluster_ids: Option<Vec<usize>>,
    pub names: ColumnRoles,
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(RpivError::NonFinite(what))
    }
}

fn default_names(prefix: &str, k: usize) -> Vec<String> {
    if k == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=k).map(|j| format!("{prefix}{j}")).collect()
    }
}

impl Dataset {
    /// Validates shapes and finiteness. Column names default to `Y`, `X1..`,
    /// `Z1..`, `C1..` when `names` is `None`.
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        controls: Option<DMatrix<f64>>,
        cluster_ids: Option<Vec<usize>>,
        names: Option<ColumnRoles>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(RpivError::EmptyFile);
        }
        if x.nrows() != n || z.nrows() != n {
            return Err(RpivError::DimensionMismatch(format!(
                "y has {n} rows, x has {}, z has {}",
                x.nrows(),
                z.nrows()
            )));
        }
        if x.ncols() == 0 || z.ncols() == 0 {
            return Err(RpivError::DimensionMismatch(
                "x and z need at least one column".into(),
            ));
        }
        if let Some(c) = &controls {
            if c.nrows() != n {
                return Err(RpivError::DimensionMismatch(format!(
                    "controls have {} rows, expected {n}",
                    c.nrows()
                )));
            }
            check_finite(c.as_slice(), "controls")?;
        }
        if let Some(ids) = &cluster_ids {
            if ids.len() != n {
                return Err(RpivError::DimensionMismatch(format!(
                    "{} cluster labels for {n} observations",
                    ids.len()
                )));
            }
        }
        check_finite(y.as_slice(), "response")?;
        check_finite(x.as_slice(), "endogenous regressors")?;
        check_finite(z.as_slice(), "instruments")?;

        let q = controls.as_ref().map_or(0, |c| c.ncols());
        let names = match names {
            Some(names) => {
                if names.endogenous.len() != x.ncols()
                    || names.instruments.len() != z.ncols()
                    || names.controls.len() != q
                {
                    return Err(RpivError::DimensionMismatch(
                        "column names do not match matrix widths".into(),
                    ));
                }
                names
            }
            None => ColumnRoles {
                response: "Y".into(),
                endogenous: default_names("X", x.ncols()),
                instruments: default_names("Z", z.ncols()),
                controls: default_names("C", q),
                cluster: cluster_ids.as_ref().map(|_| "cluster".into()),
            },
        };
        Ok(Dataset {
            y,
            x,
            z,
            controls,
            cluster_ids,
            names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Reads a headed, comma-separated file and assigns columns per `roles`.
    pub fn load_csv(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, roles)
    }

    pub fn read_csv<R: Read>(reader: R, roles: &ColumnRoles) -> Result<Self> {
        roles.validate()?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(RpivError::EmptyFile);
        }
        let position = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| RpivError::MissingColumn(name.to_string()))
        };
        let y_col = position(&roles.response)?;
        let x_cols = roles
            .endogenous
            .iter()
            .map(|c| position(c))
            .collect::<Result<Vec<_>>>()?;
        let z_cols = roles
            .instruments
            .iter()
            .map(|c| position(c))
            .collect::<Result<Vec<_>>>()?;
        let c_cols = roles
            .controls
            .iter()
            .map(|c| position(c))
            .collect::<Result<Vec<_>>>()?;
        let g_col = roles.cluster.as_deref().map(position).transpose()?;

        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut z = Vec::new();
        let mut c = Vec::new();
        let mut labels: HashMap<String, usize> = HashMap::new();
        let mut ids = Vec::new();

        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let cell = |col: usize| -> Result<f64> {
                let raw = record.get(col).unwrap_or("");
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| RpivError::NonNumeric {
                        column: headers[col].to_string(),
                        row: row + 1,
                        value: raw.to_string(),
                    })
            };
            y.push(cell(y_col)?);
            for &j in &x_cols {
                x.push(cell(j)?);
            }
            for &j in &z_cols {
                z.push(cell(j)?);
            }
            for &j in &c_cols {
                c.push(cell(j)?);
            }
            if let Some(j) = g_col {
                let token = record.get(j).unwrap_or("").to_string();
                let next = labels.len();
                ids.push(*labels.entry(token).or_insert(next));
            }
        }
        let n = y.len();
        if n == 0 {
            return Err(RpivError::EmptyFile);
        }
        let controls = (!c_cols.is_empty())
            .then(|| DMatrix::from_row_slice(n, c_cols.len(), &c));
        Dataset::new(
            DVector::from_vec(y),
            DMatrix::from_row_slice(n, x_cols.len(), &x),
            DMatrix::from_row_slice(n, z_cols.len(), &z),
            controls,
            g_col.map(|_| ids),
            Some(roles.clone()),
        )
    }

    /// Writes all columns with 17 significant digits, which reloads
    /// bit-for-bit. Cluster labels are written as their dense integers.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let roles = &self.names;
        let mut header: Vec<&str> = roles.all_names().map(String::as_str).collect();
        if self.cluster_ids.is_some() && roles.cluster.is_none() {
            header.push("cluster");
        }
        w.write_record(&header)?;
        let fmt = |v: f64| format!("{v:.16e}");
        for i in 0..self.n() {
            let mut rec = vec![fmt(self.y[i])];
            rec.extend(self.x.row(i).iter().map(|&v| fmt(v)));
            rec.extend(self.z.row(i).iter().map(|&v| fmt(v)));
            if let Some(c) = &self.controls {
                rec.extend(c.row(i).iter().map(|&v| fmt(v)));
            }
            if let Some(ids) = &self.cluster_ids {
                rec.push(ids[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Appends the controls and an intercept to both `x` and `z`.
    pub fn augment(&self) -> Result<AugmentedDataset> {
        let n = self.n();
        let (p, d) = (self.x.ncols(), self.z.ncols());
        let q = self.controls.as_ref().map_or(0, |c| c.ncols());
        if let Some(c) = &self.controls {
            for (j, col) in c.column_iter().enumerate() {
                let first = col[0];
                if col.iter().all(|&v| v == first) {
                    return Err(RpivError::ConstantControl(self.names.controls[j].clone()));
                }
            }
        }
        let stack = |m: &DMatrix<f64>| {
            let k = m.ncols();
            let mut out = DMatrix::zeros(n, k + q + 1);
            out.columns_mut(0, k).copy_from(m);
            if let Some(c) = &self.controls {
                out.columns_mut(k, q).copy_from(c);
            }
            out.column_mut(k + q).fill(1.0);
            out
        };
        let tail: Vec<String> = self
            .names
            .controls
            .iter()
            .cloned()
            .chain(std::iter::once("(Intercept)".to_string()))
            .collect();
        let x_names = self.names.endogenous.iter().cloned().chain(tail.clone()).collect();
        let z_names = self.names.instruments.iter().cloned().chain(tail).collect();
        let mut instrument_mask = vec![true; d];
        instrument_mask.extend(std::iter::repeat(false).take(q + 1));
        Ok(AugmentedDataset {
            y: self.y.clone(),
            x: stack(&self.x),
            z: stack(&self.z),
            cluster_ids: self.cluster_ids.clone(),
            x_names,
            z_names,
            instrument_mask,
            num_endogenous: p,
        })
    }
}

/// A dataset with controls and an intercept appended to both `x` and `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub y: DVector<f64>,
    /// n × p', columns `[endogenous | controls | 1]`.
    pub x: DMatrix<f64>,
    /// n × d', columns `[instruments | controls | 1 | appended instruments]`.
    pub z: DMatrix<f64>,
    pub cluster_ids: Option<Vec<usize>>,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    /// `true` for columns of `z` that are excluded instruments (as opposed to
    /// controls or the intercept).
    pub instrument_mask: Vec<bool>,
    pub num_endogenous: usize,
}

impl AugmentedDataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn d(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_just_identified(&self) -> bool {
        self.d() == self.p()
    }

    /// Rows `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> AugmentedDataset {
        AugmentedDataset {
            y: self.y.select_rows(rows),
            x: self.x.select_rows(rows),
            z: self.z.select_rows(rows),
            cluster_ids: self
                .cluster_ids
                .as_ref()
                .map(|ids| rows.iter().map(|&i| ids[i]).collect()),
            x_names: self.x_names.clone(),
            z_names: self.z_names.clone(),
            instrument_mask: self.instrument_mask.clone(),
            num_endogenous: self.num_endogenous,
        }
    }

    /// Builds the split and materializes both halves.
    pub fn split(&self, seed: u64) -> Result<(SplitPlan, AugmentedDataset, AugmentedDataset)> {
        let plan = make_split(self, seed)?;
        let aux = self.subset(&plan.aux_indices);
        let main = self.subset(&plan.main_indices);
        Ok((plan, aux, main))
    }
}

/// Disjoint auxiliary and main index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub aux_indices: Vec<usize>,
    pub main_indices: Vec<usize>,
    pub seed: u64,
}

/// `round(min(n/2, e·n/ln n))`, ties to even.
pub fn aux_target(n: usize) -> usize {
    let nf = n as f64;
    let raw = (nf / 2.0).min(std::f64::consts::E * nf / nf.ln());
    raw.round_ties_even() as usize
}

/// Draws the auxiliary sample uniformly without replacement. With cluster
/// labels, whole clusters (in seeded random order) go to the auxiliary sample
/// until its size first reaches the target.
pub fn make_split(ds: &AugmentedDataset, seed: u64) -> Result<SplitPlan> {
    let n = ds.n();
    let min = ds.p() + 1;
    if n < 2 * min || n < 2 {
        return Err(RpivError::SampleTooSmall {
            n,
            n_aux: 0,
            n_main: n,
            min,
        });
    }
    let target = aux_target(n);
    let mut rng = Stream::new(Domain::Split, seed, n as u64, 0);
    let mut in_aux = vec![false; n];
    match &ds.cluster_ids {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            for &i in &order[..target] {
                in_aux[i] = true;
            }
        }
        Some(ids) => {
            let mut members: Vec<Vec<usize>> = Vec::new();
            let mut slot: HashMap<usize, usize> = HashMap::new();
            for (i, &g) in ids.iter().enumerate() {
                let k = *slot.entry(g).or_insert_with(|| {
                    members.push(Vec::new());
                    members.len() - 1
                });
                members[k].push(i);
            }
            // Order clusters by label so the shuffle input does not depend on row order.
            let mut labelled: Vec<(usize, usize)> = slot.into_iter().collect();
            labelled.sort_unstable();
            let mut order: Vec<usize> = labelled.into_iter().map(|(_, k)| k).collect();
            rng.shuffle(&mut order);
            let mut size = 0;
            for k in order {
                if size >= target {
                    break;
                }
                for &i in &members[k] {
                    in_aux[i] = true;
                }
                size += members[k].len();
            }
        }
    }
    let (aux_indices, main_indices): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| in_aux[i]);
    if aux_indices.len() < min || main_indices.len() < min {
        return Err(RpivError::SampleTooSmall {
            n,
            n_aux: aux_indices.len(),
            n_main: main_indices.len(),
            min,
        });
    }
    Ok(SplitPlan {
        aux_indices,
        main_indices,
        seed,
    })
}

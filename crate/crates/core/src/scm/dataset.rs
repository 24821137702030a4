use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ParentSet, VarLayout};
use crate::error::{Error, Result};
use crate::rng::{self, tags};

/// One sample: parents `x`, targets `y`, ground-truth region and local parent
/// mask per target.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub region: usize,
    pub masks: Vec<ParentSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: u64,
    /// Number of parent variables.
    pub d: usize,
    /// Coordinates per parent variable.
    pub widths: Vec<usize>,
    pub n_targets: usize,
    pub target_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_tag: Option<String>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl DatasetMeta {
    pub fn new(generator: &str, seed: u64, layout: VarLayout, n_targets: usize, target_width: usize) -> Self {
        DatasetMeta {
            generator: generator.to_string(),
            seed,
            d: layout.n_vars(),
            widths: layout.widths().to_vec(),
            n_targets,
            target_width,
            split: None,
            split_tag: None,
            extra: Default::default(),
        }
    }

    pub fn layout(&self) -> VarLayout {
        VarLayout::blocks(self.widths.clone())
    }

    pub fn x_dim(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn y_dim(&self) -> usize {
        self.n_targets * self.target_width
    }

    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.x_dim()).map(|i| format!("x{i}")).collect();
        if self.y_dim() == 1 {
            h.push("y".into());
        } else {
            h.extend((1..=self.y_dim()).map(|i| format!("y{i}")));
        }
        h.push("region".into());
        if self.n_targets == 1 {
            h.push("parent_mask".into());
        } else {
            h.extend((1..=self.n_targets).map(|i| format!("parent_mask_{i}")));
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub meta: DatasetMeta,
    pub rows: Vec<Row>,
}

impl LabeledDataset {
    pub fn new(meta: DatasetMeta, rows: Vec<Row>) -> Self {
        LabeledDataset { meta, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows at `indices`, in that order, tagged as split `tag`.
    pub fn subset(&self, indices: &[usize], tag: &str) -> Self {
        let mut meta = self.meta.clone();
        meta.split_tag = Some(tag.to_string());
        LabeledDataset { meta, rows: indices.iter().map(|&i| self.rows[i].clone()).collect() }
    }

    /// Deterministic shuffle under the dataset seed, then cut into
    /// train/validation/test by `ratios`.
    pub fn split(&self, ratios: [f64; 3]) -> Result<(Self, Self, Self)> {
        if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_config("split", format!("{ratios:?} must be non-negative and sum to 1")));
        }
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::seeded(rng::derive_seed(self.meta.seed, tags::SPLIT)));
        let n_train = ((n as f64) * ratios[0]).round() as usize;
        let n_val = (((n as f64) * ratios[1]).round() as usize).min(n - n_train);
        let sizes = [n_train, n_val, n - n_train - n_val];
        let names = ["train", "val", "test"];
        for i in 0..3 {
            if ratios[i] > 0.0 && sizes[i] == 0 {
                return Err(Error::EmptySplit(names[i]));
            }
        }
        let mut parts = Vec::with_capacity(3);
        let mut start = 0;
        for i in 0..3 {
            let mut part = self.subset(&order[start..start + sizes[i]], names[i]);
            part.meta.split = Some(ratios);
            parts.push(part);
            start += sizes[i];
        }
        let test = parts.pop().unwrap();
        let val = parts.pop().unwrap();
        let train = parts.pop().unwrap();
        Ok((train, val, test))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let csv_err = |e: csv::Error| Error::parse(path, e);
        w.write_record(self.meta.header()).map_err(csv_err)?;
        let mut rec = Vec::new();
        for row in &self.rows {
            rec.clear();
            rec.extend(row.x.iter().chain(&row.y).map(|v| format!("{v:.16e}")));
            rec.push(row.region.to_string());
            rec.extend(row.masks.iter().map(|m| m.bits().to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, meta: DatasetMeta) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(BufReader::new(file));
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::parse(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != meta.header() {
            return Err(Error::parse(path, "header does not match the metadata layout"));
        }
        let (dx, dy) = (meta.x_dim(), meta.y_dim());
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let bad = |what: &str| Error::parse(path, format!("row {}: bad {what}", line + 1));
            let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad("float"));
            let x = (0..dx).map(float).collect::<Result<Vec<_>>>()?;
            let y = (dx..dx + dy).map(float).collect::<Result<Vec<_>>>()?;
            let region = rec[dx + dy].parse().map_err(|_| bad("region"))?;
            let masks = (dx + dy + 1..rec.len())
                .map(|i| rec[i].parse::<u64>().map(ParentSet::from_bits).map_err(|_| bad("mask")))
                .collect::<Result<Vec<_>>>()?;
            rows.push(Row { x, y, region, masks });
        }
        Ok(LabeledDataset { meta, rows })
    }

    pub fn write_meta(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        serde_json::to_writer_pretty(&mut f, &self.meta).map_err(|e| Error::parse(path, e))?;
        writeln!(f).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn read_meta(path: &Path) -> Result<DatasetMeta> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::parse(path, e))
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        self.write_csv(&dir.join(format!("{stem}.csv")))?;
        self.write_meta(&dir.join(format!("{stem}.json")))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta = Self::read_meta(&dir.join(format!("{stem}.json")))?;
        Self::read_csv(&dir.join(format!("{stem}.csv")), meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let meta = DatasetMeta::new("test", 3, VarLayout::scalar(2), 1, 1);
        let rows = (0..10)
            .map(|i| Row {
                x: vec![i as f64 / 3.0, -0.1 * i as f64],
                y: vec![1.0 / (i as f64 + 7.0)],
                region: i % 2,
                masks: vec![ParentSet::from_bits(1 + (i % 2) as u64)],
            })
            .collect();
        LabeledDataset::new(meta, rows)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        ds.save(dir.path(), "all").unwrap();
        assert_eq!(LabeledDataset::load(dir.path(), "all").unwrap(), ds);
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let ds = tiny();
        let (a, b, c) = ds.split([0.8, 0.1, 0.1]).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let mut all: Vec<_> = a.rows.iter().chain(&b.rows).chain(&c.rows).map(|r| r.x[0].to_bits()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10);
        let (a2, _, _) = ds.split([0.8, 0.1, 0.1]).unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn split_all_train_and_empty_split() {
        let ds = tiny();
        let (a, b, c) = ds.split([1.0, 0.0, 0.0]).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (10, 0, 0));
        assert!(matches!(ds.split([0.98, 0.01, 0.01]), Err(Error::EmptySplit("val"))));
        assert!(ds.split([0.5, 0.5, 0.5]).is_err());
    }
}

//! `lut.csv` (`v,delta,a_ss`, NaN for no steady state) plus
//! `lut.meta.json`.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use super::{params_hash, LutError, LutGrid, LutModel, SolverTolerances, SteeringLut};
use crate::vehicle::VehicleParams;

pub const LUT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutMeta {
    pub version: u32,
    pub model: LutModel,
    pub params: VehicleParams,
    pub params_hash: String,
    pub grid: LutGrid,
    pub tolerances: SolverTolerances,
    /// First steering angle without a steady state, per speed row.
    pub boundary: Vec<Option<f64>>,
}

impl LutMeta {
    pub(super) fn new(
        grid: &LutGrid,
        params: &VehicleParams,
        model: &LutModel,
        tol: &SolverTolerances,
        cells: &[Option<f64>],
    ) -> Self {
        let n = grid.delta.len();
        let boundary = cells
            .chunks(n)
            .map(|row| row.iter().position(|c| c.is_none()).map(|k| grid.delta[k]))
            .collect();
        Self {
            version: LUT_FORMAT_VERSION,
            model: *model,
            params: *params,
            params_hash: params_hash(params, model),
            grid: grid.clone(),
            tolerances: *tol,
            boundary,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    v: f64,
    delta: f64,
    a_ss: f64,
}

impl SteeringLut {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), LutError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let n = self.grid.delta.len();
        for (i, cell) in self.cells.iter().enumerate() {
            wtr.serialize(Row {
                v: self.grid.v[i / n],
                delta: self.grid.delta[i % n],
                a_ss: cell.unwrap_or(f64::NAN),
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_meta<W: Write>(&self, writer: W) -> Result<(), LutError> {
        serde_json::to_writer_pretty(writer, &self.meta)?;
        Ok(())
    }

    /// Writes `<dir>/lut.csv` and `<dir>/lut.meta.json`, creating `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), LutError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("lut.csv"))?)?;
        let mut meta = std::fs::File::create(dir.join("lut.meta.json"))?;
        self.write_meta(&mut meta)?;
        meta.write_all(b"\n")?;
        Ok(())
    }

    pub fn read<R1: Read, R2: Read>(csv_reader: R1, meta_reader: R2) -> Result<Self, LutError> {
        let meta: LutMeta = serde_json::from_reader(meta_reader)?;
        if meta.version != LUT_FORMAT_VERSION {
            return Err(LutError::Corrupt(format!("unsupported version {}", meta.version)));
        }
        meta.grid.validate()?;
        if meta.params_hash != params_hash(&meta.params, &meta.model) {
            return Err(LutError::Corrupt("params hash does not match params".into()));
        }
        let mut rdr = csv::Reader::from_reader(csv_reader);
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["v", "delta", "a_ss"] {
            return Err(LutError::Corrupt("expected header `v,delta,a_ss`".into()));
        }
        let n = meta.grid.delta.len();
        let mut cells = Vec::with_capacity(meta.grid.v.len() * n);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let (iv, id) = (i / n, i % n);
            if iv >= meta.grid.v.len() || row.v != meta.grid.v[iv] || row.delta != meta.grid.delta[id] {
                return Err(LutError::Corrupt(format!("row {} is off the grid", i + 1)));
            }
            cells.push((!row.a_ss.is_nan()).then_some(row.a_ss));
        }
        if cells.len() != meta.grid.v.len() * n {
            return Err(LutError::Corrupt(format!("expected {} cells, got {}", meta.grid.v.len() * n, cells.len())));
        }
        Ok(SteeringLut::from_parts(meta.grid.clone(), cells, meta))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, LutError> {
        let dir = dir.as_ref();
        Self::read(
            std::fs::File::open(dir.join("lut.csv"))?,
            std::fs::File::open(dir.join("lut.meta.json"))?,
        )
    }
}

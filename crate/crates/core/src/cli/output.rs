//! Files written by the subcommands. Names are fixed so scripts can rely on
//! them; nothing time- or host-dependent goes into any file.

use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{CliError, Format};
use crate::control::VariantKind;
use crate::lut::SteeringLut;
use crate::raceline::{LapMetrics, TraceSample};
use crate::sim::{write_trace, AblationReport, LapBatch, RunOutcome, SweepResult, TuneResult};
use crate::tire_fit::{write_samples, FitReport, SweepLog};
use crate::vehicle::AxleTireParams;

pub(super) struct OutDir {
    dir: PathBuf,
    format: Format,
}

impl OutDir {
    pub fn create(dir: &Path, format: Format) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
        })
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|source| CliError::Io { path, source })
    }

    fn finish(&self, name: &str, mut w: BufWriter<File>) -> Result<(), CliError> {
        w.flush().map_err(|source| CliError::Io {
            path: self.dir.join(name),
            source,
        })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.file(name)?;
        let text = serde_json::to_string_pretty(value).expect("plain data serializes");
        writeln!(w, "{text}").map_err(|source| CliError::Io {
            path: self.dir.join(name),
            source,
        })?;
        self.finish(name, w)
    }

    fn csv(&self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
        let mut wtr = csv::Writer::from_writer(self.file(name)?);
        wtr.write_record(header)?;
        for r in rows {
            wtr.write_record(&r)?;
        }
        wtr.flush().map_err(|source| CliError::Io {
            path: self.dir.join(name),
            source,
        })
    }

    pub fn fit_report(&self, pacejka: &FitReport<AxleTireParams>, linear: &FitReport<f64>) -> Result<(), CliError> {
        if self.format == Format::Json {
            #[derive(Serialize)]
            struct Both<'a> {
                pacejka: &'a FitReport<AxleTireParams>,
                linear: &'a FitReport<f64>,
            }
            return self.json("fit_report.json", &Both { pacejka, linear });
        }
        let mut params = Vec::new();
        for (axle, p, k, res_p, res_l) in [
            ("front", pacejka.params.front, linear.params.front, pacejka.mean_abs_residual.front, linear.mean_abs_residual.front),
            ("rear", pacejka.params.rear, linear.params.rear, pacejka.mean_abs_residual.rear, linear.mean_abs_residual.rear),
        ] {
            params.push(vec![
                "pacejka".into(),
                axle.into(),
                p.b.to_string(),
                p.c.to_string(),
                p.d.to_string(),
                p.e.to_string(),
                String::new(),
                res_p.to_string(),
            ]);
            let blank = String::new;
            params.push(vec!["linear".into(), axle.into(), blank(), blank(), blank(), blank(), k.to_string(), res_l.to_string()]);
        }
        self.csv("fit_params.csv", &["model", "axle", "B", "C", "D", "E", "stiffness", "mean_abs_residual"], params)?;
        let mut trace = Vec::new();
        for (model, steps) in [("pacejka", &pacejka.trace), ("linear", &linear.trace)] {
            for s in steps.iter() {
                trace.push(vec![
                    model.to_string(),
                    s.k.to_string(),
                    s.threshold.to_string(),
                    s.inliers.front.to_string(),
                    s.inliers.rear.to_string(),
                    s.mean_abs_residual.front.to_string(),
                    s.mean_abs_residual.rear.to_string(),
                ]);
            }
        }
        self.csv(
            "fit_trace.csv",
            &["model", "k", "threshold", "inliers_front", "inliers_rear", "residual_front", "residual_rear"],
            trace,
        )?;
        let masks = pacejka
            .steady
            .iter()
            .zip(&pacejka.inliers)
            .enumerate()
            .map(|(i, (s, k))| vec![i.to_string(), s.to_string(), k.to_string()])
            .collect();
        self.csv("fit_inliers.csv", &["index", "steady", "inlier"], masks)
    }

    pub fn lut(&self, lut: &SteeringLut) -> Result<(), CliError> {
        Ok(lut.save(&self.dir)?)
    }

    pub fn tuning(&self, results: &[TuneResult]) -> Result<(), CliError> {
        if self.format == Format::Json {
            return self.json("tune.json", &results);
        }
        let best = results
            .iter()
            .map(|t| vec![t.variant.name().into(), t.best.m.to_string(), t.best.q.to_string(), t.score.to_string()])
            .collect();
        self.csv("tune.csv", &["variant", "m", "q", "score"], best)?;
        let cells = results
            .iter()
            .flat_map(|t| {
                t.cells
                    .iter()
                    .map(|c| vec![t.variant.name().into(), c.m.to_string(), c.q.to_string(), opt_text(c.score)])
            })
            .collect();
        self.csv("tune_cells.csv", &["variant", "m", "q", "score"], cells)
    }

    pub fn trace(&self, trace: &[TraceSample]) -> Result<(), CliError> {
        let w = self.file("trace.csv")?;
        write_trace(trace, w)?;
        Ok(())
    }

    pub fn run_metrics(&self, variant: VariantKind, scale: f64, batch: &LapBatch) -> Result<(), CliError> {
        if self.format == Format::Json {
            #[derive(Serialize)]
            struct Metrics<'a> {
                variant: VariantKind,
                scale: f64,
                outcome: &'a RunOutcome,
                laps: &'a [LapMetrics],
                partial: &'a Option<LapMetrics>,
                saturated_ticks: usize,
            }
            return self.json(
                "metrics.json",
                &Metrics {
                    variant,
                    scale,
                    outcome: &batch.outcome,
                    laps: &batch.laps,
                    partial: &batch.partial,
                    saturated_ticks: batch.saturated_ticks,
                },
            );
        }
        let lap_row = |i: usize, l: &LapMetrics| {
            vec![
                i.to_string(),
                l.lap_time.to_string(),
                l.rms_d.to_string(),
                l.mean_abs_d.to_string(),
                l.max_abs_d.to_string(),
                l.mean_d.to_string(),
                l.samples.to_string(),
                l.completed.to_string(),
            ]
        };
        let mut rows: Vec<Vec<String>> = batch.laps.iter().enumerate().map(|(i, l)| lap_row(i, l)).collect();
        if let Some(p) = &batch.partial {
            rows.push(lap_row(batch.laps.len(), p));
        }
        self.csv(
            "laps.csv",
            &["lap", "lap_time", "rms_d", "mean_abs_d", "max_abs_d", "mean_d", "samples", "completed"],
            rows,
        )?;
        let blank = String::new;
        let mut row = vec![variant.name().to_string(), scale.to_string()];
        row.extend(match &batch.outcome {
            RunOutcome::Completed => vec!["completed".into(), blank(), blank(), blank(), blank(), blank(), blank(), blank()],
            RunOutcome::TimedOut { t } => {
                vec!["timed_out".into(), blank(), t.to_string(), blank(), blank(), blank(), blank(), blank()]
            }
            RunOutcome::Crashed(c) => vec![
                "crashed".into(),
                c.lap.to_string(),
                c.t.to_string(),
                c.x.to_string(),
                c.y.to_string(),
                c.s.to_string(),
                c.d.to_string(),
                c.spun.to_string(),
            ],
        });
        row.push(batch.saturated_ticks.to_string());
        self.csv(
            "outcome.csv",
            &["variant", "scale", "outcome", "lap", "t", "x", "y", "s", "d", "spun", "saturated_ticks"],
            vec![row],
        )
    }

    pub fn sweep(&self, result: &SweepResult) -> Result<(), CliError> {
        if self.format == Format::Json {
            return self.json("sweep.json", result);
        }
        result.write_csv(self.file("sweep.csv")?)?;
        self.schedules(result.schedules.iter().map(|(k, s)| (*k, s.m, s.q)))?;
        let first = result
            .first_failure
            .iter()
            .map(|(k, s)| vec![k.name().into(), opt_text(*s)])
            .collect();
        self.csv("first_failure.csv", &["variant", "scale"], first)
    }

    pub fn ablation(&self, report: &AblationReport) -> Result<(), CliError> {
        if self.format == Format::Json {
            return self.json("ablation.json", report);
        }
        report.write_csv(self.file("ablation.csv")?)?;
        self.schedules(report.schedules.iter().map(|(k, s)| (*k, s.m, s.q)))
    }

    fn schedules(&self, rows: impl Iterator<Item = (VariantKind, f64, f64)>) -> Result<(), CliError> {
        let rows = rows.map(|(k, m, q)| vec![k.name().into(), m.to_string(), q.to_string()]).collect();
        self.csv("schedules.csv", &["variant", "m", "q"], rows)
    }

    pub fn sweep_log(&self, log: &SweepLog) -> Result<(), CliError> {
        if self.format == Format::Json {
            return self.json("sweep_log.json", log);
        }
        let mut w = self.file("sweep_log.csv")?;
        write_samples(&mut w, &log.samples)?;
        self.finish("sweep_log.csv", w)?;
        let labels = log
            .outliers
            .iter()
            .enumerate()
            .map(|(i, o)| vec![i.to_string(), o.to_string()])
            .collect();
        self.csv("sweep_log_labels.csv", &["index", "outlier"], labels)
    }
}

pub(super) fn opt_text(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(super) fn outcome_text(o: &RunOutcome) -> String {
    match o {
        RunOutcome::Completed => "completed".into(),
        RunOutcome::TimedOut { t } => format!("timed out at t={t:.2} s"),
        RunOutcome::Crashed(c) if c.spun => format!("spun in lap {} at s={:.2} m", c.lap, c.s),
        RunOutcome::Crashed(c) => format!("left the track in lap {} at s={:.2} m (d={:.3})", c.lap, c.s, c.d),
    }
}

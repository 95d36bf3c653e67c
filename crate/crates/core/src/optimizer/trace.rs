use crate::error::{Error, Result};
use crate::io::{format_f64, read_text, write_text};
use std::path::Path;

pub const TRACE_HEADER: &str = "epoch,train_loss,val_loss,support,kappa,lip_bound,seconds";

/// One completed epoch. Optional fields are written as empty CSV cells.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss on the training subsample before the step.
    pub train_loss: f64,
    /// Validation estimate after the step, on validation epochs.
    pub val_loss: Option<f64>,
    /// Size of the gradient support.
    pub support: usize,
    pub kappa: Option<f64>,
    pub lip_bound: Option<f64>,
    /// Wall time since the run started.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    /// Validation estimate on the starting cloud (row `0` of the CSV).
    pub initial_val_loss: f64,
    pub records: Vec<EpochRecord>,
}

impl RunTrace {
    pub fn new(initial_val_loss: f64) -> Self {
        Self {
            initial_val_loss,
            records: Vec::new(),
        }
    }

    pub fn epochs(&self) -> usize {
        self.records.len()
    }

    /// Last validation estimate, falling back to the initial one.
    pub fn final_val_loss(&self) -> f64 {
        self.records
            .iter()
            .rev()
            .find_map(|r| r.val_loss)
            .unwrap_or(self.initial_val_loss)
    }

    /// `(epoch, val_loss)` for every validated epoch, starting with epoch 0.
    pub fn val_series(&self) -> Vec<(usize, f64)> {
        std::iter::once((0, self.initial_val_loss))
            .chain(self.records.iter().filter_map(|r| r.val_loss.map(|v| (r.epoch, v))))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
        let mut out = format!("{TRACE_HEADER}\n0,,{},0,,,0.0\n", format_f64(self.initial_val_loss));
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch,
                format_f64(r.train_loss),
                opt(r.val_loss),
                r.support,
                opt(r.kappa),
                opt(r.lip_bound),
                format_f64(r.seconds)
            ));
        }
        out
    }

    pub fn from_csv(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line: line + 1,
            column: 1,
            message: msg,
        };
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            _ => return Err(bad(0, format!("expected header `{TRACE_HEADER}`"))),
        }
        let mut trace: Option<RunTrace> = None;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(i, format!("expected 7 fields, found {}", f.len())));
            }
            let num = |c: usize| -> Result<f64> {
                f[c].parse()
                    .map_err(|_| bad(i, format!("column {}: `{}` is not a number", c + 1, f[c])))
            };
            let opt = |c: usize| -> Result<Option<f64>> {
                if f[c].is_empty() { Ok(None) } else { num(c).map(Some) }
            };
            let int = |c: usize| -> Result<usize> {
                f[c].parse()
                    .map_err(|_| bad(i, format!("column {}: `{}` is not an integer", c + 1, f[c])))
            };
            let epoch = int(0)?;
            match trace.as_mut() {
                None if epoch == 0 => trace = Some(RunTrace::new(num(2)?)),
                None => return Err(bad(i, "first record must be epoch 0".into())),
                Some(t) => t.records.push(EpochRecord {
                    epoch,
                    train_loss: num(1)?,
                    val_loss: opt(2)?,
                    support: int(3)?,
                    kappa: opt(4)?,
                    lip_bound: opt(5)?,
                    seconds: num(6)?,
                }),
            }
        }
        trace.ok_or_else(|| bad(1, "missing epoch 0 record".into()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&read_text(path)?, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = RunTrace::new(0.75);
        t.records.push(EpochRecord {
            epoch: 1,
            train_loss: 0.7,
            val_loss: None,
            support: 4,
            kappa: Some(1.25),
            lip_bound: Some(3.0e5),
            seconds: 0.01,
        });
        t.records.push(EpochRecord {
            epoch: 2,
            train_loss: 0.1 + 0.2,
            val_loss: Some(1.0 / 3.0),
            support: 0,
            kappa: None,
            lip_bound: None,
            seconds: 0.02,
        });
        let csv = t.to_csv();
        assert!(csv.starts_with("epoch,train_loss,val_loss,support,kappa,lip_bound,seconds\n0,,0.75,0,,,0.0\n1,0.7,,4,1.25,"));
        assert_eq!(RunTrace::from_csv(&csv, "t").unwrap(), t);
        assert_eq!(t.final_val_loss(), 1.0 / 3.0);
        assert_eq!(t.val_series(), vec![(0, 0.75), (2, 1.0 / 3.0)]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(RunTrace::from_csv("a,b\n", "t").is_err());
        assert!(RunTrace::from_csv(&format!("{TRACE_HEADER}\n1,0,0,0,,,0\n"), "t").is_err());
        assert!(RunTrace::from_csv(&format!("{TRACE_HEADER}\n"), "t").is_err());
    }
}

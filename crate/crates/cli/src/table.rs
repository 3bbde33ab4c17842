//! Ablation results and their CSV rendering.
//!
//! Schema: a header `seed,<A>_ate_cm,<A>_rte_cm,<A>_rre_deg,...` with one
//! triple per ablation `<A>` in configuration order, one row per seed, then a
//! `mean` row (over successful cells) and, when `P` is part of the sweep, an
//! `improvement_pct` row of `100 (P - A) / P` computed from the means. Failed
//! cells are written as `nan`. Floats carry 6 significant digits; lines end in LF.

use std::fmt::Write;

use structslam_core::eval::improvement_percent;
use structslam_core::simulator::Ablation;

pub const METRICS: [&str; 3] = ["ate_cm", "rte_cm", "rre_deg"];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub ablations: Vec<Ablation>,
    /// `cells[seed][ablation]` = (ATE cm, RTE cm, RRE deg); NaN marks a failed cell.
    pub cells: Vec<Vec<[f64; 3]>>,
}

impl AblationTable {
    pub fn column(&self, ablation: usize, metric: usize) -> Vec<f64> {
        self.cells.iter().map(|row| row[ablation][metric]).collect()
    }

    /// Mean of each metric over the seeds where the cell succeeded; NaN if none did.
    pub fn means(&self) -> Vec<[f64; 3]> {
        (0..self.ablations.len())
            .map(|a| {
                let mut out = [f64::NAN; 3];
                for (m, slot) in out.iter_mut().enumerate() {
                    let ok: Vec<f64> = self.column(a, m).into_iter().filter(|v| v.is_finite()).collect();
                    if !ok.is_empty() {
                        *slot = ok.iter().sum::<f64>() / ok.len() as f64;
                    }
                }
                out
            })
            .collect()
    }

    /// Improvement of each ablation's means over the `P` means, if `P` was run.
    pub fn improvements(&self) -> Option<Vec<[f64; 3]>> {
        let p = self.ablations.iter().position(|a| *a == Ablation::P)?;
        let means = self.means();
        Some(
            means
                .iter()
                .map(|m| [0, 1, 2].map(|k| improvement_percent(means[p][k], m[k])))
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed");
        for a in &self.ablations {
            for m in METRICS {
                write!(out, ",{}_{m}", a.name()).expect("writing to a String cannot fail");
            }
        }
        out.push('\n');
        let row = |out: &mut String, label: &str, values: &[[f64; 3]]| {
            out.push_str(label);
            for v in values.iter().flatten() {
                out.push(',');
                out.push_str(&format_sig6(*v));
            }
            out.push('\n');
        };
        for (seed, cells) in self.seeds.iter().zip(&self.cells) {
            row(&mut out, &seed.to_string(), cells);
        }
        row(&mut out, "mean", &self.means());
        if let Some(imp) = self.improvements() {
            row(&mut out, "improvement_pct", &imp);
        }
        out
    }
}

/// Fixed-point rendering with 6 significant digits; `nan` for non-finite values.
pub fn format_sig6(v: f64) -> String {
    if !v.is_finite() {
        return "nan".into();
    }
    if v == 0.0 {
        return "0.00000".into();
    }
    // round to 6 significant digits first so the exponent accounts for carries (9.999996 -> 10.0000)
    let sci = format!("{v:.5e}");
    let exponent: i32 = sci[sci.find('e').expect("exponent present") + 1..]
        .parse()
        .expect("valid exponent");
    let rounded: f64 = sci.parse().expect("valid float");
    let decimals = (5 - exponent).max(0) as usize;
    format!("{rounded:.decimals$}")
}

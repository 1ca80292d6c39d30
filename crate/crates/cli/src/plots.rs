//! Figure-data emission: tidy CSV bundles behind each figure of the study,
//! named by tag. No plotting library is invoked — every file is meant to be
//! fed to an external plotting script.
//!
//! Tags and their payloads:
//! - `fig2` — W1 distance of standardized spread mixtures to the normal over
//!   a (q, α) grid.
//! - `fig3` | `fig4` | `fig5` — trajectory panels: generalization error,
//!   student covariance Q, student/teacher overlap R, and second-layer
//!   weights v against normalized time, one series per labeled record
//!   (ODE and each SGD variant).
//! - `fig_m` — dynamic ε_g error at τ against block size m, with the rank
//!   correlation recorded as a comment.
//! - `fig6` | `fig7` | `fig8` — scaling diagnostics against m/D, one file per
//!   (statistic, D) with the log-log fit overlay line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use gelab::io::{format_float, write_diagnostic_csv, DiagnosticRow};
use gelab::lab::ScalingFit;
use gelab::sgd::RunRecord;
use gelab::{Error, Result};

use crate::experiment::Bundle;

/// Which figure a CSV bundle reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureTag {
    /// Spread-mixture W1 table.
    Fig2,
    /// Unstandardized-input dynamics.
    Fig3,
    /// Standardized-input dynamics.
    Fig4,
    /// Scalar-law dynamics.
    Fig5,
    /// Block-size sweep of the dynamic error.
    FigM,
    /// Summed-third-moment scaling.
    Fig6,
    /// KS-distance scaling.
    Fig7,
    /// Covariance-residual scaling.
    Fig8,
}

impl FromStr for FigureTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<FigureTag> {
        match s {
            "fig2" => Ok(FigureTag::Fig2),
            "fig3" => Ok(FigureTag::Fig3),
            "fig4" => Ok(FigureTag::Fig4),
            "fig5" => Ok(FigureTag::Fig5),
            "fig_m" | "figm" => Ok(FigureTag::FigM),
            "fig6" => Ok(FigureTag::Fig6),
            "fig7" => Ok(FigureTag::Fig7),
            "fig8" => Ok(FigureTag::Fig8),
            other => Err(Error::Parameter(format!(
                "unknown figure tag '{other}' (expected fig2..fig8 or fig_m)"
            ))),
        }
    }
}

impl fmt::Display for FigureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FigureTag::Fig2 => "fig2",
            FigureTag::Fig3 => "fig3",
            FigureTag::Fig4 => "fig4",
            FigureTag::Fig5 => "fig5",
            FigureTag::FigM => "fig_m",
            FigureTag::Fig6 => "fig6",
            FigureTag::Fig7 => "fig7",
            FigureTag::Fig8 => "fig8",
        };
        f.write_str(name)
    }
}

/// One series of a scaling figure: a statistic against m/D at fixed D, with
/// its log-log fit.
#[derive(Debug, Clone)]
pub struct ScalingSeries {
    /// Statistic name, used in the file name (`third_moment_sum`, `ks`,
    /// `r1`, `r2`).
    pub statistic: String,
    pub d: usize,
    pub rows: Vec<DiagnosticRow>,
    pub fit: ScalingFit,
}

/// One row of the W1 table.
#[derive(Debug, Clone, Copy)]
pub struct W1Row {
    pub q: usize,
    pub alpha: f64,
    pub w1: f64,
}

/// One row of the block-size sweep.
#[derive(Debug, Clone, Copy)]
pub struct MSweepRow {
    pub m: usize,
    /// Dynamic ε_g error at τ.
    pub e: f64,
}

/// Payload of [`emit_plot_data`]; each variant is compatible with specific
/// tags.
pub enum PlotInput<'a> {
    /// Labeled trajectory records (tags fig3 | fig4 | fig5).
    Dynamics(&'a [(String, &'a RunRecord)]),
    /// Per-(statistic, D) scaling series (tags fig6 | fig7 | fig8).
    Scaling(&'a [ScalingSeries]),
    /// (q, α, W1) table (tag fig2).
    W1(&'a [W1Row]),
    /// Block-size sweep with its rank correlation (tag fig_m).
    MSweep { rows: &'a [MSweepRow], rank_corr: f64 },
}

fn incompatible(tag: FigureTag, what: &str) -> Error {
    Error::Parameter(format!("figure tag {tag} expects {what} input"))
}

/// Write the CSV bundle for `tag` into the bundle directory and return the
/// created paths. Inputs are validated (tag compatibility, non-emptiness)
/// before any file is created, so failures leave no partial bundle.
pub fn emit_plot_data(bundle: &Bundle, tag: FigureTag, input: &PlotInput) -> Result<Vec<PathBuf>> {
    match (tag, input) {
        (FigureTag::Fig3 | FigureTag::Fig4 | FigureTag::Fig5, PlotInput::Dynamics(records)) => {
            emit_dynamics(bundle, tag, records)
        }
        (FigureTag::Fig6 | FigureTag::Fig7 | FigureTag::Fig8, PlotInput::Scaling(series)) => {
            emit_scaling(bundle, tag, series)
        }
        (FigureTag::Fig2, PlotInput::W1(rows)) => emit_w1(bundle, tag, rows),
        (FigureTag::FigM, PlotInput::MSweep { rows, rank_corr }) => {
            emit_msweep(bundle, tag, rows, *rank_corr)
        }
        (tag, PlotInput::Dynamics(_)) => Err(incompatible(tag, "no trajectory")),
        (tag, PlotInput::Scaling(_)) => Err(incompatible(tag, "no scaling-series")),
        (tag, PlotInput::W1(_)) => Err(incompatible(tag, "no W1-table")),
        (tag, PlotInput::MSweep { .. }) => Err(incompatible(tag, "no block-size-sweep")),
    }
}

/// Four tidy panels per dynamics figure: ε_g, Q entries, R entries, and v
/// entries against normalized time, one `series` value per labeled record.
fn emit_dynamics(
    bundle: &Bundle,
    tag: FigureTag,
    records: &[(String, &RunRecord)],
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Parameter(format!(
            "figure {tag} needs at least one trajectory record"
        )));
    }
    for (label, rec) in records {
        if rec.snaps.is_empty() {
            return Err(Error::Parameter(format!(
                "record '{label}' has no snapshots"
            )));
        }
    }
    let paths = [
        bundle.guard(&format!("{tag}_eps_g.csv"))?,
        bundle.guard(&format!("{tag}_q.csv"))?,
        bundle.guard(&format!("{tag}_r.csv"))?,
        bundle.guard(&format!("{tag}_v.csv"))?,
    ];

    let mut eps = String::from("series,t,value\n");
    let mut q = String::from("series,t,row,col,value\n");
    let mut r = String::from("series,t,row,col,value\n");
    let mut v = String::from("series,t,unit,value\n");
    for (label, rec) in records {
        for snap in &rec.snaps {
            let t = format_float(snap.t);
            eps.push_str(&format!("{label},{t},{}\n", format_float(snap.eps_g)));
            for ((i, j), &val) in snap.q.indexed_iter() {
                q.push_str(&format!("{label},{t},{i},{j},{}\n", format_float(val)));
            }
            for ((i, j), &val) in snap.r.indexed_iter() {
                r.push_str(&format!("{label},{t},{i},{j},{}\n", format_float(val)));
            }
            for (k, &val) in snap.v.iter().enumerate() {
                v.push_str(&format!("{label},{t},{k},{}\n", format_float(val)));
            }
        }
    }
    for (path, text) in paths.iter().zip([eps, q, r, v]) {
        std::fs::write(path, text)?;
    }
    Ok(paths.into())
}

/// One `m,D,m_over_D,statistic,stderr` file per (statistic, D) series, each
/// ending in its `# fit …` overlay line.
fn emit_scaling(bundle: &Bundle, tag: FigureTag, series: &[ScalingSeries]) -> Result<Vec<PathBuf>> {
    if series.is_empty() {
        return Err(Error::Parameter(format!(
            "figure {tag} needs at least one scaling series"
        )));
    }
    if series.iter().any(|s| s.rows.is_empty()) {
        return Err(Error::Parameter(format!("figure {tag} has an empty series")));
    }
    let mut paths = Vec::with_capacity(series.len());
    for s in series {
        paths.push(bundle.guard(&format!("{tag}_{}_D{}.csv", s.statistic, s.d))?);
    }
    for (path, s) in paths.iter().zip(series) {
        write_diagnostic_csv(path, &s.rows, Some(&s.fit))?;
    }
    Ok(paths)
}

fn emit_w1(bundle: &Bundle, tag: FigureTag, rows: &[W1Row]) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Parameter(format!("figure {tag} needs at least one row")));
    }
    let path = bundle.guard(&format!("{tag}_w1.csv"))?;
    let mut text = String::from("q,alpha,w1\n");
    for row in rows {
        text.push_str(&format!(
            "{},{},{}\n",
            row.q,
            format_float(row.alpha),
            format_float(row.w1)
        ));
    }
    std::fs::write(&path, text)?;
    Ok(vec![path])
}

fn emit_msweep(
    bundle: &Bundle,
    tag: FigureTag,
    rows: &[MSweepRow],
    rank_corr: f64,
) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Parameter(format!("figure {tag} needs at least one row")));
    }
    let path = bundle.guard(&format!("{tag}_error.csv"))?;
    let mut text = String::from("m,eps_g_error\n");
    for row in rows {
        text.push_str(&format!("{},{}\n", row.m, format_float(row.e)));
    }
    text.push_str(&format!("# spearman={}\n", format_float(rank_corr)));
    std::fs::write(&path, text)?;
    Ok(vec![path])
}

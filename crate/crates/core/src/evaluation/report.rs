use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ModelKind;
use crate::data::{ResourceKind, Scenario};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    NotApplicable(String),
}

impl CellStatus {
    /// CSV form: `ok` or `n/a: <reason>`.
    pub fn label(&self) -> String {
        match self {
            CellStatus::Ok => "ok".into(),
            CellStatus::NotApplicable(r) => format!("n/a: {r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub occupant: String,
    pub resource: ResourceKind,
    pub model: ModelKind,
    pub auc: Option<f64>,
    pub status: CellStatus,
}

/// Test AUC per model (rows) and (resource, occupant) column for one
/// scenario. Cells without an AUC print as `N/A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub scenario: Scenario,
    pub models: Vec<ModelKind>,
    /// Sorted by resource, then occupant.
    pub columns: Vec<(ResourceKind, String)>,
    pub cells: Vec<ReportCell>,
}

pub const RESULTS_HEADER: [&str; 6] = ["occupant", "resource", "scenario", "model", "auc", "status"];

fn fmt_auc(auc: Option<f64>) -> String {
    auc.map_or_else(|| "N/A".to_string(), |a| format!("{a:.2}"))
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl ReportTable {
    pub fn get(&self, model: ModelKind, resource: ResourceKind, occupant: &str) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.resource == resource && c.occupant == occupant)
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["Model".to_string()];
        h.extend(self.columns.iter().map(|(r, o)| format!("{} {o}", r.display_name())));
        h
    }

    fn body(&self) -> Vec<Vec<String>> {
        self.models
            .iter()
            .map(|&m| {
                let mut row = vec![m.display_name().to_string()];
                row.extend(self.columns.iter().map(|(r, o)| fmt_auc(self.get(m, *r, o).and_then(|c| c.auc))));
                row
            })
            .collect()
    }

    /// Machine-readable results, one line per cell; AUC has six decimals and
    /// is empty when absent.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(RESULTS_HEADER)?;
        for c in &self.cells {
            w.write_record([
                c.occupant.clone(),
                c.resource.to_string(),
                self.scenario.to_string(),
                c.model.to_string(),
                c.auc.map_or_else(String::new, |a| format!("{a:.6}")),
                c.status.label(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Space-aligned table with a scenario caption.
    pub fn to_text(&self) -> String {
        let header = self.header();
        let body = self.body();
        let widths: Vec<usize> = (0..header.len())
            .map(|j| {
                std::iter::once(&header[j])
                    .chain(body.iter().map(|r| &r[j]))
                    .map(|s| s.chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, &w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = format!("AUC, {} scenario\n", self.scenario);
        out.push_str(&line(&header));
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)));
        out.push('\n');
        for r in &body {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    /// `<table>` fragment with the same content as [`Self::to_text`].
    pub fn to_html(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "<table class=\"auc-report\" data-scenario=\"{}\">", self.scenario);
        out.push_str("<thead><tr>");
        for h in self.header() {
            let _ = write!(out, "<th>{}</th>", escape_html(&h));
        }
        out.push_str("</tr></thead>\n<tbody>\n");
        for row in self.body() {
            out.push_str("<tr>");
            for (j, c) in row.iter().enumerate() {
                let tag = if j == 0 { "th" } else { "td" };
                let _ = write!(out, "<{tag}>{}</{tag}>", escape_html(c));
            }
            out.push_str("</tr>\n");
        }
        out.push_str("</tbody>\n</table>\n");
        out
    }
}

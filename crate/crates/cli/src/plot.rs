//! Cumulative-regret figures from run CSVs: one SVG per regret objective,
//! one line per policy, shaded by one cross-seed standard deviation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use robust_bandit::experiment::CSV_HEADER;

use crate::config::ConfigError;

/// Per-policy, per-seed cumulative curves `(R, robust, worst)`.
type Curves = BTreeMap<String, BTreeMap<u64, Vec<[f64; 3]>>>;

/// The three panels: file stem, title, column index into the curve triple.
pub const PANELS: [(&str, &str, usize); 3] = [
    ("robust_regret", "Cumulative robust regret", 1),
    ("worst_case_regret", "Cumulative worst-case regret", 2),
    ("true_regret", "Cumulative true regret", 0),
];

/// Reads run CSVs, rejecting anything that does not match the run schema.
pub fn read_curves(paths: &[PathBuf]) -> Result<Curves, ConfigError> {
    let mut curves = Curves::new();
    let col = |name: &str| CSV_HEADER.iter().position(|h| *h == name).expect("schema column");
    let (c_t, c_seed, c_policy) = (col("t"), col("seed"), col("policy"));
    let metric_cols = [col("R_cum"), col("robust_cum"), col("worst_cum")];

    for path in paths {
        let bad = |msg: String| ConfigError(format!("{}: {msg}", path.display()));
        let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(bad(format!(
                "header does not match the run schema (expected {})",
                CSV_HEADER.join(",")
            )));
        }
        let mut rows = 0usize;
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let line = i + 2;
            let num = |c: usize| -> Result<f64, ConfigError> {
                record[c]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("line {line}: column {} is not a number", CSV_HEADER[c])))
            };
            let t: usize = record[c_t].parse().map_err(|_| bad(format!("line {line}: bad t")))?;
            let seed: u64 = record[c_seed].parse().map_err(|_| bad(format!("line {line}: bad seed")))?;
            let values = [num(metric_cols[0])?, num(metric_cols[1])?, num(metric_cols[2])?];
            let series = curves
                .entry(record[c_policy].to_string())
                .or_default()
                .entry(seed)
                .or_default();
            if t != series.len() + 1 {
                return Err(bad(format!("line {line}: rounds of policy/seed are not consecutive from 1")));
            }
            series.push(values);
            rows += 1;
        }
        if rows == 0 {
            return Err(bad("no data rows".to_string()));
        }
    }
    Ok(curves)
}

/// Mean and sample standard deviation across seeds, truncated to the
/// shortest seed.
fn band(seeds: &BTreeMap<u64, Vec<[f64; 3]>>, metric: usize) -> (Vec<f64>, Vec<f64>) {
    let len = seeds.values().map(Vec::len).min().unwrap_or(0);
    let n = seeds.len() as f64;
    (0..len)
        .map(|t| {
            let mean = seeds.values().map(|s| s[t][metric]).sum::<f64>() / n;
            let var = if seeds.len() > 1 {
                seeds.values().map(|s| (s[t][metric] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (mean, var.sqrt())
        })
        .unzip()
}

/// Writes the three panels into `out_dir`, returning their paths.
pub fn write_figures(curves: &Curves, out_dir: &Path) -> Result<Vec<PathBuf>, Box<dyn std::error::Error>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (stem, title, metric) in PANELS {
        let path = out_dir.join(format!("{stem}.svg"));
        let bands: Vec<(&String, Vec<f64>, Vec<f64>, bool)> = curves
            .iter()
            .map(|(policy, seeds)| {
                let (mean, std) = band(seeds, metric);
                (policy, mean, std, seeds.len() > 1)
            })
            .collect();
        let t_max = bands.iter().map(|b| b.1.len()).max().unwrap_or(1).max(1);
        let y_max = bands
            .iter()
            .flat_map(|(_, m, s, _)| m.iter().zip(s).map(|(a, b)| a + b))
            .fold(0.0f64, f64::max);
        let y_min = bands
            .iter()
            .flat_map(|(_, m, s, _)| m.iter().zip(s).map(|(a, b)| a - b))
            .fold(0.0f64, f64::min);
        let y_max = if y_max > y_min { y_max * 1.05 } else { y_min + 1.0 };

        let root = SVGBackend::new(&path, (900, 600)).into_drawing_area();
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 24))
            .margin(15)
            .x_label_area_size(45)
            .y_label_area_size(70)
            .build_cartesian_2d(0f64..t_max as f64, y_min..y_max)?;
        chart.configure_mesh().x_desc("round t").y_desc(title).draw()?;

        for (i, (policy, mean, std, shaded)) in bands.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            if *shaded {
                let upper = mean.iter().zip(std).enumerate().map(|(t, (m, s))| ((t + 1) as f64, m + s));
                let lower = mean.iter().zip(std).enumerate().rev().map(|(t, (m, s))| ((t + 1) as f64, m - s));
                chart.draw_series(std::iter::once(Polygon::new(
                    upper.chain(lower).collect::<Vec<_>>(),
                    color.mix(0.2).filled(),
                )))?;
            }
            chart
                .draw_series(LineSeries::new(
                    mean.iter().enumerate().map(|(t, m)| ((t + 1) as f64, *m)),
                    color.stroke_width(2),
                ))?
                .label(policy.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::UpperLeft)
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()?;
        root.present()?;
        drop(chart);
        drop(root);
        written.push(path);
    }
    Ok(written)
}

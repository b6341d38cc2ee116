//! SVG rendering of the metrics CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: no data rows")]
    Empty { path: PathBuf },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: row {row}, column `{column}`: `{value}` is not a number")]
    BadNumber {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("drawing failed: {0}")]
    Draw(String),
}

fn draw_err<E: std::fmt::Display>(e: E) -> PlotError {
    PlotError::Draw(e.to_string())
}

/// Numeric columns of a CSV, looked up by name.
struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, PlotError> {
        let csv_err = |source| PlotError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let rows = r.records().collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
        if rows.is_empty() {
            return Err(PlotError::Empty { path: path.to_path_buf() });
        }
        Ok(Table {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn has(&self, column: &str) -> bool {
        self.headers.iter().any(|h| h == column)
    }

    /// Column values; empty cells become `None`.
    fn column(&self, column: &str) -> Result<Vec<Option<f64>>, PlotError> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| PlotError::MissingColumn {
                path: self.path.clone(),
                column: column.to_string(),
            })?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let cell = rec.get(idx).unwrap_or("").trim();
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse().map(Some).map_err(|_| PlotError::BadNumber {
                    path: self.path.clone(),
                    row: i + 1,
                    column: column.to_string(),
                    value: cell.to_string(),
                })
            })
            .collect()
    }

    fn required(&self, column: &str) -> Result<Vec<f64>, PlotError> {
        self.column(column)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| PlotError::BadNumber {
                    path: self.path.clone(),
                    row: i + 1,
                    column: column.to_string(),
                    value: String::new(),
                })
            })
            .collect()
    }
}

struct Curve {
    label: String,
    x: Vec<f64>,
    y: Vec<f64>,
    band: Option<Vec<(f64, f64)>>,
}

/// Per-round mean over agents when the file is per-agent, else the rows as is.
fn load_curve(path: &Path) -> Result<Curve, PlotError> {
    let t = Table::read(path)?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let x = t.required("cumulative_delay")?;
    if t.has("mean_error") {
        let y = t.required("mean_error")?;
        let band = if t.has("std_error") {
            let s = t.required("std_error")?;
            Some(y.iter().zip(&s).map(|(m, s)| (m - s, m + s)).collect())
        } else {
            None
        };
        return Ok(Curve { label, x, y, band });
    }
    let round = t.required("round")?;
    let err = t.required("l2_error")?;
    let mut by_round: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for ((r, d), e) in round.iter().zip(&x).zip(&err) {
        let slot = by_round.entry(*r as u64).or_insert((*d, 0.0, 0));
        slot.1 += e;
        slot.2 += 1;
    }
    let (x, y) = by_round.values().map(|&(d, s, k)| (d, s / k as f64)).unzip();
    Ok(Curve { label, x, y, band: None })
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

/// Error against cumulative delay on a log scale, one line per CSV.
pub fn curves(paths: &[PathBuf], output: &Path, title: &str) -> Result<(), PlotError> {
    let curves = paths.iter().map(|p| load_curve(p)).collect::<Result<Vec<_>, _>>()?;
    let floor = 1e-300;
    let positive = |v: f64| v.max(floor);
    let x_max = curves.iter().flat_map(|c| c.x.iter().copied()).fold(0.0, f64::max).max(1.0);
    let ys = curves.iter().flat_map(|c| {
        c.y.iter()
            .copied()
            .chain(c.band.iter().flatten().flat_map(|&(lo, hi)| [lo, hi]))
    });
    let (y_lo, y_hi) = ys
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (y_lo, y_hi) = if y_lo.is_finite() { (y_lo * 0.8, y_hi * 1.25) } else { (1e-3, 1.0) };

    let root = SVGBackend::new(output, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..x_max, (y_lo..y_hi).log_scale())
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("cumulative delay (λ)")
        .y_desc("L2 error")
        .draw()
        .map_err(draw_err)?;

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(band) = &c.band {
            let mut poly: Vec<(f64, f64)> = c.x.iter().zip(band).map(|(x, b)| (*x, positive(b.1))).collect();
            poly.extend(c.x.iter().zip(band).rev().map(|(x, b)| (*x, positive(b.0).max(y_lo))));
            chart
                .draw_series(std::iter::once(Polygon::new(poly, color.mix(0.2).filled())))
                .map_err(draw_err)?;
        }
        chart
            .draw_series(LineSeries::new(
                c.x.iter().zip(&c.y).map(|(x, y)| (*x, positive(*y).max(y_lo))),
                color.stroke_width(2),
            ))
            .map_err(draw_err)?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

/// Agent-mean estimate per round, darker when later, with the truth as a line.
pub fn trajectory(path: &Path, output: &Path, title: &str) -> Result<(), PlotError> {
    let t = Table::read(path)?;
    let round = t.required("round")?;
    let est = [t.required("est_0")?, t.required("est_1")?];
    let truth = [t.required("truth_0")?, t.required("truth_1")?];

    let mut by_round: BTreeMap<u64, ([f64; 2], [f64; 2], usize)> = BTreeMap::new();
    for i in 0..round.len() {
        let slot = by_round.entry(round[i] as u64).or_insert(([0.0; 2], [truth[0][i], truth[1][i]], 0));
        slot.0[0] += est[0][i];
        slot.0[1] += est[1][i];
        slot.2 += 1;
    }
    let points: Vec<((f64, f64), (f64, f64))> = by_round
        .values()
        .map(|(e, w, k)| ((e[0] / *k as f64, e[1] / *k as f64), (w[0], w[1])))
        .collect();

    let all = points.iter().flat_map(|(e, w)| [*e, *w]);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = |lo: f64, hi: f64| {
        let p = ((hi - lo) * 0.05).max(1e-6);
        (lo - p, hi + p)
    };
    let ((x0, x1), (y0, y1)) = (pad(x0, x1), pad(y0, y1));

    let root = SVGBackend::new(output, (700, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(draw_err)?;
    chart.configure_mesh().x_desc("x").y_desc("y").draw().map_err(draw_err)?;

    let n = points.len().max(2) as f64 - 1.0;
    chart
        .draw_series(points.iter().enumerate().map(|(i, (e, _))| {
            let shade = (220.0 * (1.0 - i as f64 / n)) as u8;
            Circle::new(*e, 3, RGBColor(shade, shade, 255).filled())
        }))
        .map_err(draw_err)?
        .label("estimate")
        .legend(|(x, y)| Circle::new((x + 10, y), 4, BLUE.filled()));
    chart
        .draw_series(LineSeries::new(points.iter().map(|(_, w)| *w), RED.stroke_width(2)))
        .map_err(draw_err)?
        .label("truth")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED.stroke_width(2)));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "round,mean_error\n0,1.0\n");
        let err = curves(&[p], &dir.path().join("a.svg"), "t").unwrap_err();
        assert!(matches!(err, PlotError::MissingColumn { ref column, .. } if column == "cumulative_delay"));
    }

    #[test]
    fn per_agent_rows_are_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.csv",
            "round,cumulative_delay,agent,cluster,l2_error\n0,0,0,0,1\n0,0,1,0,3\n1,1,0,0,0.5\n1,1,1,0,1.5\n",
        );
        let c = load_curve(&p).unwrap();
        assert_eq!(c.y, vec![2.0, 1.0]);
        assert_eq!(c.x, vec![0.0, 1.0]);
        assert!(c.band.is_none());
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.csv", "round,cumulative_delay,mean_error\n");
        assert!(matches!(load_curve(&p), Err(PlotError::Empty { .. })));
    }
}

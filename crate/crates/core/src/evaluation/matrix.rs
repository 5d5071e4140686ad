use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::svg::{accuracy_color, Svg, GENERATOR};
use super::EvalError;

pub const SVG_GENERATOR: &str = GENERATOR;

/// Accuracy over a depth x spacing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub metric: String,
    pub depths: Vec<usize>,
    pub spacings: Vec<usize>,
    /// `values[i][j]` for `depths[i]`, `spacings[j]`.
    pub values: Vec<Vec<f64>>,
    pub sentences: Vec<Vec<usize>>,
    pub train_max_depth: Option<usize>,
    pub train_max_spacing: Option<usize>,
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Result<Option<usize>, EvalError> {
    if s == "none" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| EvalError::Format(format!("bad limit `{s}`")))
}

/// Splits leading `# key=value ...` comment lines from the CSV body.
fn split_comments<R: BufRead>(r: R) -> Result<(Vec<(String, String)>, String), EvalError> {
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in r.lines() {
        let line = line?;
        if let Some(c) = line.strip_prefix('#') {
            for kv in c.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    meta.push((k.to_string(), v.to_string()));
                }
            }
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    Ok((meta, body))
}

fn meta<'a>(m: &'a [(String, String)], key: &str) -> Result<&'a str, EvalError> {
    m.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| EvalError::Format(format!("missing `{key}` in header comment")))
}

fn csv_err(e: csv::Error) -> EvalError {
    EvalError::Format(e.to_string())
}

impl AccuracyMatrix {
    pub fn get(&self, d: usize, s: usize) -> Option<f64> {
        let i = self.depths.iter().position(|&x| x == d)?;
        let j = self.spacings.iter().position(|&x| x == s)?;
        Some(self.values[i][j])
    }

    /// Rows `d`, columns `s`. `title` goes into the first comment line.
    pub fn write_csv<W: Write>(&self, mut w: W, title: &str) -> Result<(), EvalError> {
        writeln!(w, "# {title}")?;
        let counts: Vec<usize> = self.sentences.iter().flatten().copied().collect();
        let uniform = counts.windows(2).all(|p| p[0] == p[1]);
        let counts_str = if uniform {
            counts.first().map_or("0".to_string(), usize::to_string)
        } else {
            counts.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        writeln!(
            w,
            "# metric={} train_max_depth={} train_max_spacing={} sentences={}",
            self.metric,
            fmt_opt(self.train_max_depth),
            fmt_opt(self.train_max_spacing),
            counts_str
        )?;
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["d".to_string()];
        header.extend(self.spacings.iter().map(|s| format!("s{s}")));
        wr.write_record(&header).map_err(csv_err)?;
        for (d, row) in self.depths.iter().zip(&self.values) {
            let mut rec = vec![d.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, EvalError> {
        let (m, body) = split_comments(r)?;
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let header = rd.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("d") {
            return Err(EvalError::Format("first column must be `d`".into()));
        }
        let spacings = header
            .iter()
            .skip(1)
            .map(|h| h.strip_prefix('s').and_then(|x| x.parse().ok()))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| EvalError::Format("bad spacing header".into()))?;
        let mut depths = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != spacings.len() + 1 {
                return Err(EvalError::Format("ragged row".into()));
            }
            depths.push(rec[0].parse().map_err(|_| EvalError::Format(format!("bad depth `{}`", &rec[0])))?);
            values.push(
                rec.iter()
                    .skip(1)
                    .map(|v| v.parse::<f64>().map_err(|_| EvalError::Format(format!("bad value `{v}`"))))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        let counts: Vec<usize> = meta(&m, "sentences")?
            .split(',')
            .map(|c| c.parse().map_err(|_| EvalError::Format(format!("bad count `{c}`"))))
            .collect::<Result<_, _>>()?;
        let cells = depths.len() * spacings.len();
        let sentences = match counts.len() {
            1 => vec![vec![counts[0]; spacings.len()]; depths.len()],
            n if n == cells => counts.chunks(spacings.len().max(1)).map(<[usize]>::to_vec).collect(),
            _ => return Err(EvalError::Format("sentence counts do not match grid".into())),
        };
        Ok(AccuracyMatrix {
            metric: meta(&m, "metric")?.to_string(),
            depths,
            spacings,
            values,
            sentences,
            train_max_depth: parse_opt(meta(&m, "train_max_depth")?)?,
            train_max_spacing: parse_opt(meta(&m, "train_max_spacing")?)?,
        })
    }

    /// Heatmap with value-annotated cells and dashed training-limit lines.
    pub fn to_svg(&self, title: &str) -> String {
        let (cw, ch, left, top) = (42.0, 26.0, 50.0, 50.0);
        let w = left + cw * self.spacings.len() as f64 + 20.0;
        let h = top + ch * self.depths.len() as f64 + 50.0;
        let mut svg = Svg::new(w, h);
        svg.text(w / 2.0, 22.0, 14.0, "middle", title);
        for (i, (d, row)) in self.depths.iter().zip(&self.values).enumerate() {
            let y = top + ch * i as f64;
            svg.text(left - 8.0, y + ch * 0.65, 11.0, "end", &d.to_string());
            for (j, v) in row.iter().enumerate() {
                let x = left + cw * j as f64;
                svg.rect(x, y, cw, ch, &accuracy_color(*v));
                svg.text(x + cw / 2.0, y + ch * 0.65, 10.0, "middle", &format!("{v:.2}"));
            }
        }
        let bottom = top + ch * self.depths.len() as f64;
        for (j, s) in self.spacings.iter().enumerate() {
            svg.text(left + cw * (j as f64 + 0.5), bottom + 16.0, 11.0, "middle", &s.to_string());
        }
        svg.text(left + cw * self.spacings.len() as f64 / 2.0, bottom + 36.0, 12.0, "middle", "spacing s");
        svg.text(14.0, top - 10.0, 12.0, "start", "depth d");
        let right = left + cw * self.spacings.len() as f64;
        if let Some(md) = self.train_max_depth {
            let rows = self.depths.iter().filter(|&&d| d <= md).count();
            if rows > 0 && rows < self.depths.len() {
                let y = top + ch * rows as f64;
                svg.line(left, y, right, y, "black", 2.0, true);
            }
        }
        if let Some(ms) = self.train_max_spacing {
            let cols = self.spacings.iter().filter(|&&s| s <= ms).count();
            if cols > 0 && cols < self.spacings.len() {
                let x = left + cw * cols as f64;
                svg.line(x, top, x, bottom, "black", 2.0, true);
            }
        }
        svg.finish()
    }
}

/// Accuracy per verb position (1 = innermost) for each depth at one spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerVerbMatrix {
    pub s: usize,
    pub depths: Vec<usize>,
    /// `rows[i]` has exactly `depths[i]` entries.
    pub rows: Vec<Vec<f64>>,
}

impl PerVerbMatrix {
    pub fn get(&self, d: usize, k: usize) -> Option<f64> {
        let i = self.depths.iter().position(|&x| x == d)?;
        self.rows[i].get(k.checked_sub(1)?).copied()
    }

    fn width(&self) -> usize {
        self.depths.iter().copied().max().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, title: &str) -> Result<(), EvalError> {
        writeln!(w, "# {title}")?;
        writeln!(w, "# s={}", self.s)?;
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["d".to_string()];
        header.extend((1..=self.width()).map(|k| format!("v{k}")));
        wr.write_record(&header).map_err(csv_err)?;
        for (d, row) in self.depths.iter().zip(&self.rows) {
            let mut rec = vec![d.to_string()];
            rec.extend((0..self.width()).map(|k| row.get(k).map_or(String::new(), f64::to_string)));
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, EvalError> {
        let (m, body) = split_comments(r)?;
        let s = meta(&m, "s")?.parse().map_err(|_| EvalError::Format("bad spacing".into()))?;
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let mut depths = Vec::new();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let d: usize = rec[0].parse().map_err(|_| EvalError::Format(format!("bad depth `{}`", &rec[0])))?;
            let row = rec
                .iter()
                .skip(1)
                .filter(|v| !v.is_empty())
                .map(|v| v.parse::<f64>().map_err(|_| EvalError::Format(format!("bad value `{v}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != d {
                return Err(EvalError::Format(format!("row d={d} has {} positions", row.len())));
            }
            depths.push(d);
            rows.push(row);
        }
        Ok(PerVerbMatrix { s, depths, rows })
    }

    pub fn to_svg(&self, title: &str, train_max_depth: Option<usize>) -> String {
        let m = AccuracyMatrix {
            metric: "per_verb".into(),
            depths: self.depths.clone(),
            spacings: (1..=self.width()).collect(),
            values: self.rows.iter().map(|r| (0..self.width()).map(|k| r.get(k).copied().unwrap_or(f64::NAN)).collect()).collect(),
            sentences: vec![vec![0; self.width()]; self.depths.len()],
            train_max_depth,
            train_max_spacing: None,
        };
        m.to_svg(title).replace("spacing s", "verb position (inner to outer)").replace(">NaN<", "><")
    }
}

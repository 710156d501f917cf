use std::io::Write;
use std::path::Path;

use super::{wrap, N_AGENTS};
use crate::error::{Error, Result};

/// Positions of every agent at every frame. Headings and speeds are derived
/// from successive positions so simulated and tracked data are treated alike.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dt: f64,
    positions: Vec<[[f64; 2]; N_AGENTS]>,
    /// Position samples that had to be clamped into the arena on ingestion.
    ingest_clamped: usize,
}

impl Trajectory {
    pub fn new(dt: f64, positions: Vec<[[f64; 2]; N_AGENTS]>) -> Self {
        Trajectory {
            dt,
            positions,
            ingest_clamped: 0,
        }
    }

    pub(crate) fn with_ingest_clamped(mut self, n: usize) -> Self {
        self.ingest_clamped = n;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[[f64; 2]; N_AGENTS]] {
        &self.positions
    }

    pub fn ingest_clamped(&self) -> usize {
        self.ingest_clamped
    }

    /// Per-frame heading of each agent, from the displacement that led into
    /// the frame. Frames without displacement keep the previous heading; the
    /// leading frames take the first defined heading (0 if the agent never
    /// moves).
    #[allow(clippy::needless_range_loop)]
    pub fn headings(&self) -> Vec<[f64; N_AGENTS]> {
        let n = self.positions.len();
        let mut out = vec![[0.0; N_AGENTS]; n];
        for a in 0..N_AGENTS {
            let mut current: Option<f64> = None;
            let mut first_defined = None;
            for t in 1..n {
                let dx = self.positions[t][a][0] - self.positions[t - 1][a][0];
                let dy = self.positions[t][a][1] - self.positions[t - 1][a][1];
                if dx != 0.0 || dy != 0.0 {
                    current = Some(wrap(dy.atan2(dx)));
                    first_defined.get_or_insert(t);
                }
                out[t][a] = current.unwrap_or(0.0);
            }
            if let Some(t0) = first_defined {
                let h = out[t0][a];
                for row in out.iter_mut().take(t0) {
                    row[a] = h;
                }
            }
        }
        out
    }

    /// `|pos[t] - pos[t-1]| / dt` for frames `1..n`.
    pub fn linear_speeds(&self) -> Vec<[f64; N_AGENTS]> {
        self.positions
            .windows(2)
            .map(|w| {
                std::array::from_fn(|a| {
                    let dx = w[1][a][0] - w[0][a][0];
                    let dy = w[1][a][1] - w[0][a][1];
                    dx.hypot(dy) / self.dt
                })
            })
            .collect()
    }

    /// `wrap(heading[t] - heading[t-1]) / dt` for frames `2..n`.
    pub fn angular_speeds(&self) -> Vec<[f64; N_AGENTS]> {
        let h = self.headings();
        if h.len() < 3 {
            return Vec::new();
        }
        h[1..]
            .windows(2)
            .map(|w| std::array::from_fn(|a| wrap(w[1][a] - w[0][a]) / self.dt))
            .collect()
    }

    /// Writes `step, x0, y0, ..., x4, y4` rows with 9 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = String::with_capacity(self.positions.len() * 120);
        buf.push_str("step");
        for a in 0..N_AGENTS {
            buf.push_str(&format!(",x{a},y{a}"));
        }
        buf.push('\n');
        for (t, frame) in self.positions.iter().enumerate() {
            buf.push_str(&t.to_string());
            for p in frame {
                buf.push(',');
                buf.push_str(&format_sig9(p[0]));
                buf.push(',');
                buf.push_str(&format_sig9(p[1]));
            }
            buf.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads the CSV written by [`Trajectory::write_csv`]. Coordinates are
    /// multiplied by `scale` and clamped into `[0, side]²`; clamped samples
    /// are counted.
    pub fn read_csv(path: &Path, dt: f64, scale: f64, side: f64) -> Result<Trajectory> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::parse(path, 0, format!("{other:?}")),
            })?;
        let expected_cols = 1 + 2 * N_AGENTS;
        let header_len = reader
            .headers()
            .map_err(|e| Error::parse(path, 1, e.to_string()))?
            .len();
        if header_len != expected_cols {
            return Err(Error::parse(
                path,
                1,
                format!("header has {header_len} columns, expected {expected_cols}"),
            ));
        }
        let mut positions = Vec::new();
        let mut clamped = 0;
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
            if record.len() != expected_cols {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {expected_cols} columns, found {}", record.len()),
                ));
            }
            let mut frame = [[0.0; 2]; N_AGENTS];
            for (k, field) in record.iter().skip(1).enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(path, line, format!("invalid number {field:?}")))?;
                if !v.is_finite() {
                    return Err(Error::parse(path, line, format!("non-finite value {field:?}")));
                }
                let v = v * scale;
                let c = v.clamp(0.0, side);
                if c != v {
                    clamped += 1;
                }
                frame[k / 2][k % 2] = c;
            }
            positions.push(frame);
        }
        if clamped > 0 {
            log::warn!("{}: clamped {clamped} coordinates into the arena", path.display());
        }
        Ok(Trajectory::new(dt, positions).with_ingest_clamped(clamped))
    }
}

/// Shortest decimal representation of `x` rounded to 9 significant digits.
pub fn format_sig9(x: f64) -> String {
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

//! Per-step simulation record and its CSV form.
//!
//! Floats are written with Rust's shortest round-trip formatting, columns in a
//! fixed order, LF line endings. Parsing a written log gives back the same bits.

use std::io::{self, BufRead, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group_error::{GroupError, SpatialError};
use crate::se2::{normalize_angle, ControlPair, Pose};

pub const CSV_HEADER: &str = "t,theta,px,py,theta_d,pxd,pyd,eL_theta,eL_px,eL_py,eR_theta,eR_px,eR_py,lyap,omega,v,omega_tilde,v_tilde";

const COLUMNS: usize = 18;

#[derive(Debug, Error)]
pub enum LogParseError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("header mismatch: expected `{CSV_HEADER}`, found `{0}`")]
    Header(String),
    #[error("line {line}: expected {COLUMNS} columns, found {found}")]
    Width { line: usize, found: usize },
    #[error("line {line}: cannot parse `{value}` as a float")]
    Float { line: usize, value: String },
    #[error("empty log")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub theta: f64,
    pub px: f64,
    pub py: f64,
    pub theta_d: f64,
    pub pxd: f64,
    pub pyd: f64,
    pub el_theta: f64,
    pub el_px: f64,
    pub el_py: f64,
    pub er_theta: f64,
    pub er_px: f64,
    pub er_py: f64,
    pub lyap: f64,
    pub omega: f64,
    pub v: f64,
    pub omega_tilde: f64,
    pub v_tilde: f64,
}

impl LogRow {
    fn to_array(self) -> [f64; COLUMNS] {
        [
            self.t,
            self.theta,
            self.px,
            self.py,
            self.theta_d,
            self.pxd,
            self.pyd,
            self.el_theta,
            self.el_px,
            self.el_py,
            self.er_theta,
            self.er_px,
            self.er_py,
            self.lyap,
            self.omega,
            self.v,
            self.omega_tilde,
            self.v_tilde,
        ]
    }

    fn from_array(a: [f64; COLUMNS]) -> Self {
        Self {
            t: a[0],
            theta: a[1],
            px: a[2],
            py: a[3],
            theta_d: a[4],
            pxd: a[5],
            pyd: a[6],
            el_theta: a[7],
            el_px: a[8],
            el_py: a[9],
            er_theta: a[10],
            er_px: a[11],
            er_py: a[12],
            lyap: a[13],
            omega: a[14],
            v: a[15],
            omega_tilde: a[16],
            v_tilde: a[17],
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::from_parts(self.theta, self.px, self.py)
    }

    pub fn desired(&self) -> Pose {
        Pose::from_parts(self.theta_d, self.pxd, self.pyd)
    }

    pub fn left_error_pose(&self) -> Pose {
        Pose::from_parts(self.el_theta, self.el_px, self.el_py)
    }

    pub fn spatial_error(&self) -> SpatialError {
        GroupError::from_pose(Pose::from_parts(self.er_theta, self.er_px, self.er_py))
    }

    pub fn input(&self) -> ControlPair {
        ControlPair::new(self.omega, self.v)
    }

    /// `|θ − θ_d|` on the circle.
    pub fn heading_error(&self) -> f64 {
        normalize_angle(self.theta - self.theta_d).abs()
    }

    /// `‖p − p_d‖`.
    pub fn position_error(&self) -> f64 {
        (Vector2::new(self.px, self.py) - Vector2::new(self.pxd, self.pyd)).norm()
    }
}

/// Ordered rows on a uniform time grid, row 0 at `t = 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimLog {
    pub rows: Vec<LogRow>,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.t)
    }

    pub fn lyapunov(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.lyap)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(CSV_HEADER.as_bytes())?;
        w.write_all(b"\n")?;
        let mut line = String::with_capacity(COLUMNS * 24);
        for row in &self.rows {
            line.clear();
            for (i, value) in row.to_array().iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{value}"));
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, LogParseError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(LogParseError::Empty)??;
        if header != CSV_HEADER {
            return Err(LogParseError::Header(header));
        }
        let mut rows = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut values = [0.0; COLUMNS];
            let mut count = 0;
            for field in line.split(',') {
                if count < COLUMNS {
                    values[count] = field.parse().map_err(|_| LogParseError::Float {
                        line: idx + 2,
                        value: field.to_string(),
                    })?;
                }
                count += 1;
            }
            if count != COLUMNS {
                return Err(LogParseError::Width {
                    line: idx + 2,
                    found: count,
                });
            }
            rows.push(LogRow::from_array(values));
        }
        Ok(Self { rows })
    }
}
